"""Temporal/spatial filtering, trial extraction and sliding-window segmentation.

The band-pass is a true Butterworth design built here from the analog
prototype (prewarped band edges, lowpass-to-bandpass transform, bilinear
map), organized as second-order sections. Offline filtering is zero-phase
forward-backward with a fixed reflect-pad rule; the streaming path is a
causal forward-only cascade whose chunked output is bit-identical to the
one-shot forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import sosfilt

from .errors import (
    ChannelCountMismatch,
    InvalidBand,
    NonIntegerWindow,
    NoTrials,
    OrphanMarker,
    OverlappingTrials,
    TooFewChannels,
    TrialTooShort,
)
from .session import CUE_KINDS, ClassLabel, EventKind, Recording


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float
    high_hz: float
    order: int = 4  # overall filter order; order/2 biquad sections
    fs: float = 512.0

    def __post_init__(self):
        if self.order not in (2, 4, 6, 8):
            raise InvalidBand(f"order must be one of 2,4,6,8, got {self.order}")
        if not 0 < self.low_hz < self.high_hz < self.fs / 2:
            raise InvalidBand(
                f"need 0 < low < high < fs/2, got ({self.low_hz}, {self.high_hz}) "
                f"at fs={self.fs}"
            )


@dataclass(frozen=True)
class Biquad:
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float


@dataclass(frozen=True)
class FilterCoefficients:
    """Cascade of stable biquad sections (a0 normalized to 1)."""

    sections: tuple[Biquad, ...]
    fs: float

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        for s in self.sections:
            # both poles strictly inside the unit circle
            if not (abs(s.a2) < 1 and abs(s.a1) < 1 + s.a2):
                raise ValueError(f"unstable section {s}")

    @property
    def sos(self) -> np.ndarray:
        return np.array(
            [[s.b0, s.b1, s.b2, 1.0, s.a1, s.a2] for s in self.sections]
        )


def design_bandpass(spec: BandpassSpec) -> FilterCoefficients:
    """Design a Butterworth band-pass as second-order sections.

    The analog prototype of order ``spec.order / 2`` is transformed to a
    band-pass (doubling the pole count to ``spec.order``) with the band
    edges prewarped so the bilinear map lands the -3 dB points exactly on
    low_hz and high_hz. Sections are ordered by ascending pole real part
    (complex pairs first, then real pole pairs); the overall gain is split
    evenly across sections.
    """
    n = spec.order // 2
    k = np.arange(n)
    theta = np.pi * (2 * k + n + 1) / (2 * n)
    proto = np.exp(1j * theta)  # unit-circle poles, Re < 0

    fs2 = 2.0 * spec.fs
    w1 = fs2 * np.tan(np.pi * spec.low_hz / spec.fs)
    w2 = fs2 * np.tan(np.pi * spec.high_hz / spec.fs)
    w0 = np.sqrt(w1 * w2)
    bw = w2 - w1

    # lowpass -> bandpass: pole p maps to the roots of s^2 - p*bw*s + w0^2
    pb = proto * bw / 2.0
    disc = np.sqrt(pb * pb - w0 * w0)
    apoles = np.concatenate([pb + disc, pb - disc])  # 2n analog poles
    # n analog zeros at s=0 (and n at infinity); gain bw^n

    zpoles = (fs2 + apoles) / (fs2 - apoles)
    gain = (bw**n) * (fs2**n) / float(np.real(np.prod(fs2 - apoles)))
    assert len(zpoles) == spec.order and np.all(np.abs(zpoles) < 1.0)

    tol = 1e-10
    pairs: list[tuple[float, float]] = []  # (a1, a2) per section
    cplx = sorted(
        (z for z in zpoles if z.imag > tol), key=lambda z: (z.real, z.imag)
    )
    for z in cplx:
        pairs.append((-2.0 * z.real, float(abs(z) ** 2)))
    reals = sorted(float(z.real) for z in zpoles if abs(z.imag) <= tol)
    for i in range(0, len(reals), 2):
        r1, r2 = reals[i], reals[i + 1]
        pairs.append((-(r1 + r2), r1 * r2))
    assert len(pairs) == n

    # one zero at z=+1 and one at z=-1 per section: numerator g*(z^2 - 1)
    g = gain ** (1.0 / n)
    sections = tuple(Biquad(b0=g, b1=0.0, b2=-g, a1=a1, a2=a2) for a1, a2 in pairs)
    return FilterCoefficients(sections=sections, fs=spec.fs)


def _pad_len(coeffs: FilterCoefficients, n_samples: int) -> int:
    pad = 3 * max(2 * len(coeffs.sections), 24)
    return min(pad, n_samples - 1)


def filter_offline(rec: Recording, coeffs: FilterCoefficients) -> Recording:
    """Zero-phase (forward-backward) filtering of every channel.

    The signal is reflect-padded by 3 * max(2 * n_sections, 24) samples on
    each side before the two passes and trimmed afterwards, so the result
    is deterministic and edge transients stay out of the data.
    """
    x = rec.samples
    sos = coeffs.sos
    pad = _pad_len(coeffs, x.shape[0])
    xp = np.pad(x, ((pad, pad), (0, 0)), mode="reflect") if pad else x
    y = sosfilt(sos, xp, axis=0)
    y = sosfilt(sos, y[::-1], axis=0)[::-1]
    if pad:
        y = y[pad:-pad]
    return rec.with_samples(y)


def filter_forward(rec: Recording, coeffs: FilterCoefficients) -> Recording:
    """Single forward pass from zero state, as the causal/online path sees it."""
    y = sosfilt(coeffs.sos, rec.samples, axis=0)
    return rec.with_samples(y)


def causal_filter_state(coeffs: FilterCoefficients, n_channels: int) -> np.ndarray:
    """Zero initial state for filter_causal_step: (n_sections, 2, n_channels)."""
    return np.zeros((len(coeffs.sections), 2, n_channels))


def filter_causal_step(
    coeffs: FilterCoefficients, state: np.ndarray, rows: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Filter a block of sample rows, carrying cascade state explicitly.

    Feeding a recording through in any chunking (down to row-by-row) gives
    output bit-identical to the one-shot forward pass.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != state.shape[2]:
        raise ChannelCountMismatch(
            f"rows have {rows.shape[1]} channels, state expects {state.shape[2]}"
        )
    out, new_state = sosfilt(coeffs.sos, rows, axis=0, zi=state)
    return out, new_state


def apply_car(rec: Recording) -> Recording:
    """Common average reference: subtract the instantaneous cross-channel mean."""
    if rec.n_channels < 2:
        raise TooFewChannels(f"CAR needs >= 2 channels, got {rec.n_channels}")
    x = rec.samples
    return rec.with_samples(x - x.mean(axis=1, keepdims=True))


@dataclass(frozen=True)
class PreprocessParams:
    """Filtering and windowing settings shared by training and replay."""

    low_hz: float = 4.0
    high_hz: float = 30.0
    order: int = 4
    car: bool = True
    win_len_s: float = 1.0
    step_s: float = 0.0625

    def band_spec(self, fs: float) -> BandpassSpec:
        return BandpassSpec(self.low_hz, self.high_hz, self.order, fs)

    def to_dict(self) -> dict:
        return {
            "low_hz": self.low_hz,
            "high_hz": self.high_hz,
            "order": self.order,
            "car": self.car,
            "win_len_s": self.win_len_s,
            "step_s": self.step_s,
        }


def preprocess(
    rec: Recording, params: PreprocessParams, causal: bool = False
) -> Recording:
    """Band-pass (zero-phase offline, causal when replaying online) then CAR."""
    coeffs = design_bandpass(params.band_spec(rec.fs))
    rec = filter_forward(rec, coeffs) if causal else filter_offline(rec, coeffs)
    if params.car:
        rec = apply_car(rec)
    return rec


def windows_from_recording(
    rec: Recording, params: PreprocessParams, causal: bool = False
) -> WindowSet:
    """Preprocess, cut trials at the feedback markers, and window them."""
    trials = extract_trials(preprocess(rec, params, causal=causal))
    if not trials:
        raise NoTrials("recording has no cue/feedback markers")
    return window_trials(trials, params.win_len_s, params.step_s)


@dataclass(frozen=True)
class Trial:
    """One cue's continuous-feedback segment."""

    label: ClassLabel
    run_index: int
    samples: np.ndarray  # (n_t, n_channels), read-only view
    start_sample: int  # offset of FeedbackStart in the source recording
    fs: float

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def extract_trials(rec: Recording) -> list[Trial]:
    """Cut one Trial per cue marker, spanning [FeedbackStart, FeedbackEnd)."""
    trials = []
    pending_cue = None  # (EventMarker, feedback_start or None)
    last_end = -1
    for ev in rec.events:
        if ev.kind in CUE_KINDS:
            if pending_cue is not None:
                raise OrphanMarker(
                    f"cue at sample {pending_cue[0].sample_index} has no feedback"
                )
            pending_cue = (ev, None)
        elif ev.kind is EventKind.FeedbackStart:
            if pending_cue is None:
                raise OrphanMarker(f"FeedbackStart at {ev.sample_index} without cue")
            pending_cue = (pending_cue[0], ev.sample_index)
        elif ev.kind is EventKind.FeedbackEnd:
            if pending_cue is None or pending_cue[1] is None:
                raise OrphanMarker(f"FeedbackEnd at {ev.sample_index} without start")
            cue, start = pending_cue
            if start < last_end:
                raise OverlappingTrials(
                    f"feedback at {start} starts before previous trial ends at {last_end}"
                )
            label = ClassLabel.Left if cue.kind is EventKind.CueLeft else ClassLabel.Right
            trials.append(
                Trial(
                    label=label,
                    run_index=cue.run_index,
                    samples=rec.samples[start : ev.sample_index],
                    start_sample=start,
                    fs=rec.fs,
                )
            )
            last_end = ev.sample_index
            pending_cue = None
    if pending_cue is not None:
        raise OrphanMarker(
            f"cue at sample {pending_cue[0].sample_index} has no feedback end"
        )
    return trials


@dataclass(frozen=True)
class WindowSet:
    """Sliding windows cut from trials, with per-window provenance.

    windows is (n_windows, win_len, n_channels); labels, trial_index and
    run_index are parallel length-n_windows arrays.
    """

    windows: np.ndarray
    labels: np.ndarray  # int, ClassLabel values
    trial_index: np.ndarray
    run_index: np.ndarray
    fs: float
    win_len: int
    win_step: int
    _flat: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[2]

    def flattened(self) -> np.ndarray:
        """Windows as rows of channel-major blocks: [c0 t0..tW, c1 t0..tW, ...].

        A 512-sample, 13-channel window flattens to 6656 features. Cached.
        """
        if "X" not in self._flat:
            n, w, c = self.windows.shape
            self._flat["X"] = np.ascontiguousarray(
                self.windows.transpose(0, 2, 1).reshape(n, c * w)
            )
        return self._flat["X"]

    def trial_slices(self) -> list[tuple[int, slice]]:
        """(trial_index, row slice) per trial, in temporal order."""
        out = []
        idx = self.trial_index
        start = 0
        for i in range(1, len(idx) + 1):
            if i == len(idx) or idx[i] != idx[start]:
                out.append((int(idx[start]), slice(start, i)))
                start = i
        return out


def _samples_per(value_s: float, fs: float, what: str) -> int:
    exact = value_s * fs
    n = round(exact)
    if abs(exact - n) > 1e-9 or n <= 0:
        raise NonIntegerWindow(f"{what} of {value_s}s is {exact} samples at fs={fs}")
    return n


def window_trials(
    trials: list[Trial], win_len_s: float = 1.0, step_s: float = 0.0625
) -> WindowSet:
    """Cut fixed-length windows from every trial.

    Defaults give 1 s windows stepped by 62.5 ms: 512 and 32 samples at
    fs=512, so a 2496-sample trial yields 1 + (2496-512)/32 = 63 windows.
    """
    if not trials:
        raise NoTrials("no trials to window")
    fs = trials[0].fs
    win = _samples_per(win_len_s, fs, "window length")
    step = _samples_per(step_s, fs, "window step")

    chunks, labels, t_idx, r_idx = [], [], [], []
    for t, trial in enumerate(trials):
        if trial.n_samples < win:
            raise TrialTooShort(
                f"trial {t} has {trial.n_samples} samples, window needs {win}"
            )
        count = 1 + (trial.n_samples - win) // step
        for w in range(count):
            chunks.append(trial.samples[w * step : w * step + win])
        labels.extend([trial.label.value] * count)
        t_idx.extend([t] * count)
        r_idx.extend([trial.run_index] * count)

    return WindowSet(
        windows=np.stack(chunks),
        labels=np.array(labels, dtype=np.int64),
        trial_index=np.array(t_idx, dtype=np.int64),
        run_index=np.array(r_idx, dtype=np.int64),
        fs=fs,
        win_len=win,
        win_step=step,
    )
