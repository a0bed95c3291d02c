"""Cross-validation, component sweep, decoder training and persistence."""

import json

import numpy as np
import pytest

import mi_decode.evaluate as evaluate
from mi_decode.classify import save_classifier
from mi_decode.dsp import PreprocessParams
from mi_decode.errors import (
    BadK,
    DimensionMismatch,
    LayoutMismatch,
    MalformedMeta,
    MissingFile,
    NoTrials,
    TooFewRuns,
)
from mi_decode.evaluate import (
    DECODER_META_NAME,
    CvReport,
    FeatureConfig,
    FinetuneReport,
    SweepReport,
    config_hash,
    cv_from_matrix,
    eval_samples,
    finetune_experiment,
    load_decoder,
    pca_sweep,
    runwise_cv,
    save_decoder,
    session_windows,
    train_decoder,
    worker_count,
    _map_ordered,
)
from mi_decode.features import FeatureMatrix, WelchSpec, pca_fit
from mi_decode.session import EventKind, EventMarker, Recording, Session, SessionKind
from mi_decode.synth import SynthSpec, generate_session
from mi_decode.version import __version__

from conftest import SMALL_FEATURES, small_spec

L, R = 0, 1


# --- configuration ----------------------------------------------------------


def test_feature_config_modes():
    pca = FeatureConfig(mode="pca", k=10)
    psd = FeatureConfig(mode="psd")
    both = FeatureConfig(mode="psd+pca", k=10)
    assert pca.uses_pca and not pca.uses_psd
    assert psd.uses_psd and not psd.uses_pca
    assert both.uses_pca and both.uses_psd

    with pytest.raises(ValueError):
        FeatureConfig(mode="wavelet")
    with pytest.raises(BadK):
        FeatureConfig(mode="pca", k=None)
    with pytest.raises(BadK):
        FeatureConfig(mode="psd+pca", k=0)


def test_feature_config_to_dict_nulls_unused_k():
    doc = FeatureConfig(mode="psd", k=77).to_dict()
    assert doc["k"] is None
    assert doc["mode"] == "psd"
    assert doc["nperseg"] == 256


def test_config_hash_reacts_to_every_piece():
    params = PreprocessParams()
    config = FeatureConfig(mode="psd+pca", k=24)
    base = config_hash(params, config, "lda")
    assert len(base) == 64 and base == config_hash(params, config, "lda")
    assert base != config_hash(PreprocessParams(low_hz=5.0), config, "lda")
    assert base != config_hash(params, FeatureConfig(mode="psd+pca", k=25), "lda")
    assert base != config_hash(params, config, "centroid")


# --- worker pool ------------------------------------------------------------


def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("MI_DECODE_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("MI_DECODE_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("MI_DECODE_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("MI_DECODE_THREADS", "lots")
    assert worker_count() == 1


def test_map_ordered_keeps_order(monkeypatch):
    items = list(range(16))
    expected = [i * i for i in items]
    monkeypatch.setenv("MI_DECODE_THREADS", "1")
    assert _map_ordered(lambda i: i * i, items) == expected
    monkeypatch.setenv("MI_DECODE_THREADS", "4")
    assert _map_ordered(lambda i: i * i, items) == expected


# --- cross-validation -------------------------------------------------------


def _separable_matrix(n_runs=4, per_run=30, d=6, seed=4501, gap=4.0):
    rng = np.random.default_rng(seed)
    X, y, runs = [], [], []
    for r in range(n_runs):
        for lbl in (L, R):
            rows = rng.standard_normal((per_run // 2, d))
            rows[:, 0] += gap if lbl == R else -gap
            X.append(rows)
            y.extend([lbl] * (per_run // 2))
            runs.extend([r] * (per_run // 2))
    n = n_runs * per_run
    return FeatureMatrix(
        X=np.vstack(X),
        labels=np.array(y),
        trial_index=np.arange(n),
        run_index=np.array(runs),
    )


def test_cv_folds_are_runs():
    fm = _separable_matrix()
    rep = cv_from_matrix(fm, FeatureConfig(mode="pca", k=3))
    assert rep.n_folds == 4
    assert rep.fold_runs == (0, 1, 2, 3)
    assert rep.fold_accuracy == (1.0, 1.0, 1.0, 1.0)
    assert rep.mean == 1.0 and rep.std == 0.0
    assert rep.config["classifier"] == "lda"


def test_cv_needs_two_runs():
    fm = _separable_matrix(n_runs=1)
    with pytest.raises(TooFewRuns):
        cv_from_matrix(fm, FeatureConfig(mode="pca", k=3))


def test_cv_fits_pipeline_on_training_rows_only(monkeypatch):
    calls = []
    orig = evaluate.fit_pipeline

    def spy(raw_X, config):
        calls.append(raw_X.shape[0])
        return orig(raw_X, config)

    monkeypatch.setattr(evaluate, "fit_pipeline", spy)
    fm = _separable_matrix(n_runs=4, per_run=30)
    cv_from_matrix(fm, FeatureConfig(mode="pca", k=3))
    # every fold fits on the 90 training rows, never on the held-out 30
    assert calls == [90, 90, 90, 90]


def test_cv_report_to_dict():
    rep = CvReport(fold_accuracy=(0.5, 0.7), fold_runs=(0, 1), config={"a": 1})
    doc = rep.to_dict()
    assert doc["mean"] == pytest.approx(0.6)
    assert doc["fold_accuracy"] == [0.5, 0.7]
    assert doc["config"] == {"a": 1}


def test_runwise_cv_learns_the_small_session(small_offline):
    rep = runwise_cv(small_offline, SMALL_FEATURES)
    assert rep.n_folds == 2
    assert rep.mean > 0.65


def test_shuffled_labels_drop_to_chance(small_offline):
    ws = session_windows(small_offline, PreprocessParams())
    fm = evaluate.raw_feature_matrix(ws, SMALL_FEATURES)
    rng = np.random.default_rng(4502)
    shuffled = FeatureMatrix(
        X=fm.X,
        labels=rng.permutation(fm.labels),
        trial_index=fm.trial_index,
        run_index=fm.run_index,
    )
    rep = cv_from_matrix(shuffled, SMALL_FEATURES)
    assert 0.3 < rep.mean < 0.7


# --- PCA sweep --------------------------------------------------------------


def test_sweep_best_k_breaks_ties_downward():
    rep = SweepReport(
        points=((4, 0.9), (8, 0.9), (16, 0.85)),
        reports=(),
    )
    assert rep.best_k == 4
    doc = rep.to_dict()
    assert doc["best_k"] == 4
    assert doc["points"][0] == {"k": 4, "mean_accuracy": 0.9}


def test_pca_sweep_on_session(small_offline):
    sweep = pca_sweep(small_offline, ks=(8, 24), config=SMALL_FEATURES)
    assert [k for k, _ in sweep.points] == [8, 24]
    assert all(0.0 <= a <= 1.0 for _, a in sweep.points)
    assert len(sweep.reports) == 2
    assert sweep.best_k in (8, 24)

    again = pca_sweep(small_offline, ks=(8, 24), config=SMALL_FEATURES)
    assert again.points == sweep.points


def test_pca_sweep_rejects_bad_input(small_offline):
    with pytest.raises(BadK):
        pca_sweep(small_offline, ks=())
    with pytest.raises(BadK):
        pca_sweep(small_offline, ks=(8,), config=FeatureConfig(mode="psd"))


# --- decoder training -------------------------------------------------------


def test_train_decoder_provenance(small_offline):
    decoder = train_decoder([small_offline], SMALL_FEATURES)
    prov = decoder.provenance
    assert prov["sessions"] == ["synth201:Offline:2runs"]
    # 2 runs x 6 trials x 17 one-second windows per 2 s feedback phase
    assert prov["n_windows"] == 204
    assert prov["config_hash"] == config_hash(
        PreprocessParams(), SMALL_FEATURES, "lda"
    )
    assert prov["version"] == __version__


def test_train_decoder_is_deterministic(small_offline, tmp_path):
    a = train_decoder([small_offline], SMALL_FEATURES)
    b = train_decoder([small_offline], SMALL_FEATURES)
    save_decoder(a, tmp_path / "a")
    save_decoder(b, tmp_path / "b")
    for name in ("decoder.json", "lda.json", "pca.json", "pca.f32le"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_decoder_union(small_offline, small_online):
    base = train_decoder([small_offline], SMALL_FEATURES)
    tuned = train_decoder([small_offline, small_online], SMALL_FEATURES)
    assert tuned.provenance["n_windows"] == 2 * base.provenance["n_windows"]
    assert tuned.provenance["sessions"] == [
        "synth201:Offline:2runs",
        "synth202:Online1:2runs",
    ]
    # refit on the union, not a reuse of the base transform
    assert not np.array_equal(
        tuned.pipeline.pca.components, base.pipeline.pca.components
    )


def test_train_decoder_layout_checks(small_offline):
    with pytest.raises(LayoutMismatch):
        train_decoder([], SMALL_FEATURES)
    other = generate_session(
        small_spec(203, n_channels=10), SessionKind.Online1
    )
    with pytest.raises(LayoutMismatch):
        train_decoder([small_offline, other], SMALL_FEATURES)


# --- sample-level evaluation ------------------------------------------------


def test_eval_samples_confusion_consistency(small_decoder, small_online):
    rep = eval_samples(small_decoder, small_online)
    conf = np.array(rep.confusion)
    assert conf.sum() == rep.n_windows == 204
    assert rep.accuracy == pytest.approx((conf[0, 0] + conf[1, 1]) / rep.n_windows)
    doc = rep.to_dict()
    assert doc["confusion"] == [list(r) for r in rep.confusion]


def test_eval_samples_label_flip_complements(small_decoder, small_online):
    rec = small_online.recording
    swap = {
        EventKind.CueLeft: EventKind.CueRight,
        EventKind.CueRight: EventKind.CueLeft,
    }
    flipped_events = tuple(
        EventMarker(ev.sample_index, swap.get(ev.kind, ev.kind), ev.run_index)
        for ev in rec.events
    )
    flipped = Session(
        Recording(rec.samples, rec.fs, rec.channel_labels, flipped_events),
        small_online.meta,
    )
    rep = eval_samples(small_decoder, small_online)
    rep_f = eval_samples(small_decoder, flipped)
    assert rep.accuracy + rep_f.accuracy == pytest.approx(1.0, abs=1e-12)
    assert rep_f.confusion == (rep.confusion[1], rep.confusion[0])


def test_eval_samples_needs_trials(small_decoder, small_online):
    rec = small_online.recording
    bare = Session(
        Recording(rec.samples, rec.fs, rec.channel_labels, ()),
        small_online.meta,
    )
    with pytest.raises(NoTrials):
        eval_samples(small_decoder, bare)


def test_decoder_generalization_gap():
    train = generate_session(
        SynthSpec(seed=31, n_runs=2, trials_per_run=8, feedback_s=2.0),
        SessionKind.Offline,
    )
    test = generate_session(
        SynthSpec(seed=32, n_runs=2, trials_per_run=8, feedback_s=2.0),
        SessionKind.Online1,
    )
    decoder = train_decoder([train], SMALL_FEATURES)
    on_train = eval_samples(decoder, train).accuracy
    on_test = eval_samples(decoder, test).accuracy
    assert on_train >= on_test
    assert on_train > 0.95
    assert on_test > 0.6


# --- fine-tuning ------------------------------------------------------------


def test_finetune_on_identical_online_sessions():
    offline = generate_session(small_spec(41), SessionKind.Offline)
    online = generate_session(small_spec(42), SessionKind.Online1)
    rep = finetune_experiment(offline, online, online, SMALL_FEATURES)
    # fine-tuning saw the test session itself, so it cannot do worse
    assert rep.tuned_on_online2 >= rep.base_on_online2
    assert rep.tuned_on_online2 > 0.9
    doc = rep.to_dict()
    assert set(doc) == {"base_on_online1", "base_on_online2", "tuned_on_online2"}
    assert isinstance(rep, FinetuneReport)


# --- decoder persistence ----------------------------------------------------


def test_decoder_round_trip(small_decoder, small_online, tmp_path):
    save_decoder(small_decoder, tmp_path)
    back = load_decoder(tmp_path)
    assert back.params == small_decoder.params
    assert back.pipeline.config == small_decoder.pipeline.config
    assert back.provenance == small_decoder.provenance

    ws = small_decoder.windows(small_online.recording)
    s_orig = small_decoder.score_windows(ws)
    s_back = back.score_windows(ws)
    # PCA components travel as float32; scores agree to that precision
    assert np.allclose(s_back, s_orig, rtol=1e-4, atol=1e-6)
    agree = np.mean(back.predict_windows(ws) == small_decoder.predict_windows(ws))
    assert agree >= 0.99


def test_psd_decoder_round_trip(small_offline, small_online, tmp_path):
    decoder = train_decoder([small_offline], FeatureConfig(mode="psd"))
    save_decoder(decoder, tmp_path)
    assert not (tmp_path / "pca.json").exists()
    back = load_decoder(tmp_path)
    assert back.pipeline.pca is None
    ws = decoder.windows(small_online.recording)
    assert np.array_equal(back.predict_windows(ws), decoder.predict_windows(ws))


def test_load_decoder_detects_swapped_pca(small_decoder, tmp_path):
    save_decoder(small_decoder, tmp_path)
    # overwrite the PCA payload with a different matrix of the same shape
    rng = np.random.default_rng(4503)
    k, d = small_decoder.pipeline.pca.components.shape
    fake = rng.standard_normal((k, d)).astype("<f4")
    (tmp_path / "pca.f32le").write_bytes(fake.tobytes())
    with pytest.raises(MalformedMeta):
        load_decoder(tmp_path)


def test_load_decoder_detects_feature_count_mismatch(small_decoder, tmp_path):
    save_decoder(small_decoder, tmp_path)
    from mi_decode.features import load_pca, pca_id

    pid = pca_id(load_pca(tmp_path))
    short = small_decoder.clf
    clipped = type(short)(
        kind=short.kind,
        weights=short.weights[:-3],
        bias=short.bias,
        class_means=short.class_means[:, :-3],
        priors=short.priors,
    )
    save_classifier(clipped, tmp_path, pid)
    with pytest.raises(DimensionMismatch):
        load_decoder(tmp_path)


def test_load_decoder_missing_and_malformed(small_decoder, tmp_path):
    with pytest.raises(MissingFile):
        load_decoder(tmp_path / "nope")
    save_decoder(small_decoder, tmp_path)
    meta = tmp_path / DECODER_META_NAME
    doc = json.loads(meta.read_text(encoding="utf-8"))
    del doc["features"]
    meta.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(MalformedMeta):
        load_decoder(tmp_path)
