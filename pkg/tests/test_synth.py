"""Synthetic session generator: structure, determinism, class signal."""

import numpy as np
import pytest
from scipy import stats

from mi_decode.dsp import extract_trials, window_trials
from mi_decode.errors import BadSpec
from mi_decode.evaluate import FeatureConfig, runwise_cv
from mi_decode.features import WelchSpec, welch_psd
from mi_decode.session import (
    ClassLabel,
    EventKind,
    SessionKind,
    Sensor,
    load_session,
)
from mi_decode.synth import (
    CHANNEL_LABELS,
    LEFT_MOTOR,
    RIGHT_MOTOR,
    SynthSpec,
    generate_session,
    generate_study,
)

ALPHA_BINS = slice(4, 9)  # 8-16 Hz with 2 Hz bins: covers the 11 Hz rhythm


@pytest.fixture(scope="module")
def default_session():
    return generate_session(SynthSpec(seed=7), SessionKind.Offline)


# --- structure --------------------------------------------------------------


def test_default_counts(default_session):
    rec, meta = default_session
    spec = SynthSpec(seed=7)
    assert rec.samples.shape == (80 * 4032 + 512, 13)
    assert len(rec.events) == 3 * 80
    trials = extract_trials(rec)
    assert len(trials) == 80
    assert all(t.n_samples == 2496 for t in trials)
    ws = window_trials(trials)
    assert ws.n_windows == 80 * 63
    assert meta.sensor is Sensor.Synthetic
    assert meta.session_kind is SessionKind.Offline
    assert meta.subject == "synth7"
    assert meta.n_runs == spec.n_runs


def test_marker_grid(default_session):
    rec, _ = default_session
    spec = SynthSpec(seed=7)
    per_trial = [rec.events[i : i + 3] for i in range(0, len(rec.events), 3)]
    for t, (cue, fb_start, fb_end) in enumerate(per_trial):
        base = t * spec.trial_n
        assert cue.kind in (EventKind.CueLeft, EventKind.CueRight)
        assert cue.sample_index == base + spec.rest_n
        assert fb_start.kind is EventKind.FeedbackStart
        assert fb_start.sample_index == cue.sample_index + spec.cue_n
        assert fb_end.kind is EventKind.FeedbackEnd
        assert fb_end.sample_index == base + spec.trial_n
        assert cue.run_index == fb_start.run_index == fb_end.run_index == t // 20
    # the noise-only tail keeps the last marker strictly inside the recording
    assert rec.events[-1].sample_index == rec.samples.shape[0] - 512


def test_runs_are_balanced_in_pairs(default_session):
    rec, _ = default_session
    trials = extract_trials(rec)
    for run in range(4):
        labels = [t.label for t in trials if t.run_index == run]
        assert len(labels) == 20
        assert labels.count(ClassLabel.Left) == 10
        for i in range(0, 20, 2):
            assert {labels[i], labels[i + 1]} == {ClassLabel.Left, ClassLabel.Right}


def test_cue_orders_vary_with_seed():
    orders = set()
    for seed in range(6):
        rec, _ = generate_session(
            SynthSpec(seed=seed, n_runs=1, trials_per_run=8), SessionKind.Offline
        )
        orders.add(tuple(t.label for t in extract_trials(rec)))
    assert len(orders) >= 2


def test_channel_labels():
    assert SynthSpec(seed=0).channel_labels() == CHANNEL_LABELS
    assert CHANNEL_LABELS[LEFT_MOTOR] == "C3"
    assert CHANNEL_LABELS[RIGHT_MOTOR] == "C4"
    labels10 = SynthSpec(seed=0, n_channels=10).channel_labels()
    assert labels10 == tuple(f"ch{i:02d}" for i in range(10))


def test_determinism_same_spec():
    a, _ = generate_session(SynthSpec(seed=3, n_runs=1, trials_per_run=4), SessionKind.Offline)
    b, _ = generate_session(SynthSpec(seed=3, n_runs=1, trials_per_run=4), SessionKind.Offline)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert a.events == b.events

    c, _ = generate_session(SynthSpec(seed=4, n_runs=1, trials_per_run=4), SessionKind.Offline)
    assert a.samples.tobytes() != c.samples.tobytes()


@pytest.mark.parametrize(
    "kw",
    [
        dict(n_runs=0),
        dict(trials_per_run=5),
        dict(trials_per_run=0),
        dict(n_channels=9),
        dict(erd_depth=1.5),
        dict(erd_depth=-0.1),
        dict(noise_sigma=-1.0),
        dict(alpha_amp=-0.5),
        dict(rhythm_hz=300.0),
        dict(beta_hz=0.0),
        dict(rest_s=0.3),
        dict(feedback_s=0.0),
        dict(fs=0.0),
    ],
)
def test_bad_specs(kw):
    with pytest.raises(BadSpec):
        SynthSpec(seed=0, **kw)


# --- class-dependent rhythm structure ---------------------------------------


def _clean_spec(**kw):
    base = dict(
        seed=11,
        n_runs=1,
        trials_per_run=4,
        noise_sigma=0.0,
        alpha_amp=1.0,
        beta_amp=0.0,
        erd_depth=1.0,
        feedback_s=2.0,
    )
    base.update(kw)
    return SynthSpec(**base)


def _trials_by_label(rec):
    by = {ClassLabel.Left: [], ClassLabel.Right: []}
    spec_rest = None
    for t in extract_trials(rec):
        by[t.label].append(t)
    return by


def test_full_depth_silences_contralateral_alpha():
    rec, _ = generate_session(_clean_spec(), SessionKind.Offline)
    by = _trials_by_label(rec)
    for label, damped, boosted in (
        (ClassLabel.Right, LEFT_MOTOR, RIGHT_MOTOR),
        (ClassLabel.Left, RIGHT_MOTOR, LEFT_MOTOR),
    ):
        trial = by[label][0]
        fb = trial.samples
        assert np.max(np.abs(fb[:, damped])) < 1e-12  # gain 1-d = 0, no noise
        assert np.max(np.abs(fb[:, boosted])) == pytest.approx(1.5, abs=0.05)
        assert np.max(np.abs(fb[:, 5])) == pytest.approx(1.0, abs=0.05)  # Cz untouched


def test_rest_phase_alpha_is_undamped():
    rec, _ = generate_session(_clean_spec(), SessionKind.Offline)
    spec = _clean_spec()
    trial0 = extract_trials(rec)[0]
    rest = rec.samples[trial0.start_sample - spec.cue_n - spec.rest_n :
                       trial0.start_sample - spec.cue_n]
    assert np.max(np.abs(rest[:, LEFT_MOTOR])) == pytest.approx(1.0, abs=0.05)
    assert np.max(np.abs(rest[:, RIGHT_MOTOR])) == pytest.approx(1.0, abs=0.05)


def test_damping_spares_the_beta_band():
    rec, _ = generate_session(
        _clean_spec(alpha_amp=0.0, beta_amp=1.0), SessionKind.Offline
    )
    by = _trials_by_label(rec)
    fb = by[ClassLabel.Right][0].samples
    assert np.max(np.abs(fb[:, LEFT_MOTOR])) == pytest.approx(1.0, abs=0.05)


def test_zero_depth_has_no_class_asymmetry():
    rec, _ = generate_session(_clean_spec(erd_depth=0.0, seed=12), SessionKind.Offline)
    for trial in extract_trials(rec):
        fb = trial.samples
        assert np.max(np.abs(fb[:, LEFT_MOTOR])) == pytest.approx(1.0, abs=0.05)
        assert np.max(np.abs(fb[:, RIGHT_MOTOR])) == pytest.approx(1.0, abs=0.05)


def test_tail_carries_no_rhythm():
    spec = _clean_spec()
    rec, _ = generate_session(spec, SessionKind.Offline)
    tail_n = int(round(spec.tail_s * spec.fs))
    # rhythms stop at the last feedback end; the tail is noise only
    assert np.max(np.abs(rec.samples[-tail_n:])) == 0.0


# --- statistical class signal (fixed seeds, noisy sessions) -----------------


def _alpha_power(segment, fs):
    psd = welch_psd(segment, WelchSpec(), fs)
    return float(np.sum(psd[0, ALPHA_BINS]))


def test_full_depth_suppresses_most_alpha_power():
    spec = SynthSpec(seed=5, n_runs=2, trials_per_run=10, erd_depth=1.0)
    rec, _ = generate_session(spec, SessionKind.Offline)
    ratios = []
    for trial in extract_trials(rec):
        if trial.label is not ClassLabel.Right:
            continue
        fb = trial.samples[:512, LEFT_MOTOR : LEFT_MOTOR + 1]
        rest_end = trial.start_sample - spec.cue_n
        rest = rec.samples[rest_end - 512 : rest_end, LEFT_MOTOR : LEFT_MOTOR + 1]
        ratios.append(_alpha_power(fb, spec.fs) / _alpha_power(rest, spec.fs))
    assert len(ratios) == 10
    assert float(np.mean(ratios)) < 0.10


def test_zero_depth_classes_indistinguishable():
    spec = SynthSpec(seed=5, n_runs=2, trials_per_run=10, erd_depth=0.0)
    rec, _ = generate_session(spec, SessionKind.Offline)
    powers = {ClassLabel.Left: [], ClassLabel.Right: []}
    for trial in extract_trials(rec):
        fb = trial.samples[:512, LEFT_MOTOR : LEFT_MOTOR + 1]
        powers[trial.label].append(_alpha_power(fb, spec.fs))
    _, p = stats.ttest_ind(powers[ClassLabel.Left], powers[ClassLabel.Right])
    assert p > 0.05


def test_accuracy_tracks_depth():
    # erd_depth is the difficulty knob: cross-validated accuracy should rise
    # from chance at d=0 toward a plateau at d=1.
    accs = []
    config = FeatureConfig(mode="psd+pca", k=32)
    for depth in (0.0, 0.25, 0.5, 0.75, 1.0):
        session = generate_session(
            SynthSpec(seed=42, n_runs=2, trials_per_run=10, erd_depth=depth),
            SessionKind.Offline,
        )
        accs.append(runwise_cv(session, config).mean)
    assert accs[0] < 0.60
    assert accs[-1] > 0.80
    # monotone within one small inversion
    violations = [max(0.0, a - b) for a, b in zip(accs, accs[1:])]
    assert sum(v > 0.01 for v in violations) == 0


# --- study directories ------------------------------------------------------


def test_generate_study_layout(tmp_path):
    spec = SynthSpec(seed=31, n_runs=2, trials_per_run=4, feedback_s=2.0)
    paths = generate_study(spec, tmp_path / "study", online_runs=2)
    assert sorted(paths) == ["offline", "online1", "online2"]

    offline = load_session(paths["offline"])
    online1 = load_session(paths["online1"])
    online2 = load_session(paths["online2"])
    assert offline.meta.session_kind is SessionKind.Offline
    assert online1.meta.session_kind is SessionKind.Online1
    assert online2.meta.session_kind is SessionKind.Online2
    # one subject across the study, fresh noise per session
    assert {s.meta.subject for s in (offline, online1, online2)} == {"synth31"}
    assert offline.recording.samples.tobytes() != online1.recording.samples.tobytes()
    assert online1.recording.samples.tobytes() != online2.recording.samples.tobytes()
    assert offline.meta.n_runs == 2
    assert online1.meta.n_runs == 2


def test_generate_study_is_reproducible(tmp_path):
    spec = SynthSpec(seed=9, n_runs=1, trials_per_run=4, feedback_s=2.0)
    a = generate_study(spec, tmp_path / "a")
    b = generate_study(spec, tmp_path / "b")
    for name in a:
        for fname in ("meta.json", "samples.f32le"):
            assert (a[name] / fname).read_bytes() == (b[name] / fname).read_bytes()
