"""Dimensionality reduction: PCA with explained-variance reporting, and
Welch power-spectral-density features.

PCA works on the SVD of the centered data matrix (never an explicit
covariance) with a fixed sign convention so refits are bit-identical.
The Welch estimator uses Hann-tapered, 50%-overlapping modified
periodograms with one-sided density scaling; nperseg=256 at fs=512 gives
the 129 bins the rest of the pipeline expects.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadK, DimensionMismatch, IoFailure, MissingFile, WindowTooShort
from .dsp import WindowSet


@dataclass(frozen=True)
class PcaTransform:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance_ratio: np.ndarray  # (k,)
    k: int

    @property
    def d(self) -> int:
        return self.components.shape[1]


def pca_fit(X: np.ndarray, k: int) -> PcaTransform:
    """Fit a k-component PCA to the rows of X.

    Components are the top-k right singular vectors of the centered data;
    each component's largest-magnitude entry is made positive so the fit is
    deterministic. explained_variance_ratio[i] is sigma_i^2 / sum(sigma^2).
    Asking for k beyond the numeric rank is allowed; trailing ratios are 0.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise BadK(f"need a 2-D matrix with >= 2 rows, got shape {X.shape}")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise BadK(f"k={k} outside [1, {min(n, d)}]")

    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = float(np.sum(s**2))
    ratios = (s[:k] ** 2 / total) if total > 0 else np.zeros(k)
    return PcaTransform(
        mean=mean, components=components, explained_variance_ratio=ratios, k=k
    )


def pca_transform(t: PcaTransform, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != t.d:
        raise DimensionMismatch(f"X has {X.shape[-1]} columns, transform expects {t.d}")
    return (X - t.mean) @ t.components.T


def pca_inverse_transform(t: PcaTransform, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[-1] != t.k:
        raise DimensionMismatch(f"Z has {Z.shape[-1]} columns, transform has k={t.k}")
    return Z @ t.components + t.mean


def variance_curve(X: np.ndarray) -> list[tuple[int, float]]:
    """Cumulative explained-variance ratio for every component count."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise BadK(f"need a 2-D matrix with >= 2 rows, got shape {X.shape}")
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    total = float(np.sum(s**2))
    if total == 0:
        return [(i + 1, 0.0) for i in range(len(s))]
    cum = np.cumsum(s**2) / total
    return [(i + 1, float(c)) for i, c in enumerate(cum)]


@dataclass(frozen=True)
class WelchSpec:
    nperseg: int = 256
    noverlap: int = 128
    taper: str = "hann"  # periodic Hann; the only taper implemented

    def __post_init__(self):
        if not 0 <= self.noverlap < self.nperseg:
            raise WindowTooShort(
                f"need 0 <= noverlap < nperseg, got {self.noverlap}/{self.nperseg}"
            )
        if self.taper != "hann":
            raise ValueError(f"unsupported taper {self.taper!r}")

    @property
    def n_bins(self) -> int:
        return self.nperseg // 2 + 1


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _welch_stack(x: np.ndarray, spec: WelchSpec, fs: float) -> np.ndarray:
    """Welch PSD along axis 1 of a (..., n_time, n_channels) stack.

    Returns (..., n_channels, n_bins), one-sided density scaling.
    """
    n_time = x.shape[-2]
    if n_time < spec.nperseg:
        raise WindowTooShort(f"{n_time} samples < nperseg={spec.nperseg}")
    step = spec.nperseg - spec.noverlap
    n_seg = 1 + (n_time - spec.nperseg) // step

    segs = np.stack(
        [x[..., i * step : i * step + spec.nperseg, :] for i in range(n_seg)],
        axis=-3,
    )  # (..., n_seg, nperseg, ch)
    taper = _hann(spec.nperseg)[:, None]
    spectrum = np.fft.rfft(segs * taper, axis=-2)
    scale = 1.0 / (fs * float(np.sum(taper[:, 0] ** 2)))
    psd = (spectrum.real**2 + spectrum.imag**2) * scale
    psd[..., 1:-1, :] *= 2.0  # one-sided: double all bins but DC and Nyquist
    if spec.nperseg % 2:  # odd nperseg has no Nyquist bin
        psd[..., -1, :] *= 2.0
    return psd.mean(axis=-3).swapaxes(-1, -2)


def welch_psd(window: np.ndarray, spec: WelchSpec, fs: float) -> np.ndarray:
    """PSD of one (win_len, n_channels) window: (n_channels, nperseg/2+1).

    With win_len=512, nperseg=256 and noverlap=128 this averages 3 tapered
    segments per channel into 129 bins of width fs/256.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise WindowTooShort(f"window must be 2-D, got shape {window.shape}")
    return _welch_stack(window, spec, fs)


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-window feature rows with label and trial/run provenance."""

    X: np.ndarray  # (n_windows, n_features)
    labels: np.ndarray
    trial_index: np.ndarray
    run_index: np.ndarray

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def flatten_windows(ws: WindowSet) -> FeatureMatrix:
    """Raw time-domain features: each window flattened channel-major."""
    return FeatureMatrix(
        X=ws.flattened(),
        labels=ws.labels,
        trial_index=ws.trial_index,
        run_index=ws.run_index,
    )


def psd_features(
    ws: WindowSet, spec: WelchSpec | None = None, per_channel: bool = True
) -> FeatureMatrix:
    """Welch-PSD features for every window.

    per_channel=True concatenates the per-channel spectra channel-major
    (13 channels x 129 bins = 1677 features); per_channel=False averages
    across channels down to one 129-bin spectrum per window.
    """
    spec = spec or WelchSpec()
    n = ws.n_windows
    rows = []
    chunk = 512  # bound the rfft workspace
    for lo in range(0, n, chunk):
        psd = _welch_stack(ws.windows[lo : lo + chunk], spec, ws.fs)
        if per_channel:
            rows.append(psd.reshape(psd.shape[0], -1))
        else:
            rows.append(psd.mean(axis=1))
    return FeatureMatrix(
        X=np.concatenate(rows, axis=0),
        labels=ws.labels,
        trial_index=ws.trial_index,
        run_index=ws.run_index,
    )


PCA_META_NAME = "pca.json"
PCA_PAYLOAD_NAME = "pca.f32le"


def pca_id(t: PcaTransform) -> str:
    """Content hash of the serialized components; pairs a model to its PCA."""
    payload = np.ascontiguousarray(t.components, dtype="<f4").tobytes()
    return hashlib.sha256(payload).hexdigest()


def save_pca(t: PcaTransform, path) -> None:
    """Write pca.json (mean, ratios, shape) + pca.f32le (components, row-major)."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        doc = {
            "k": t.k,
            "d": t.d,
            "mean": [float(v) for v in t.mean],
            "explained_variance_ratio": [float(v) for v in t.explained_variance_ratio],
        }
        (path / PCA_META_NAME).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (path / PCA_PAYLOAD_NAME).write_bytes(
            np.ascontiguousarray(t.components, dtype="<f4").tobytes()
        )
    except OSError as exc:
        raise IoFailure(f"cannot write PCA to {path}: {exc}") from exc


def load_pca(path) -> PcaTransform:
    path = Path(path)
    meta_path = path / PCA_META_NAME
    payload_path = path / PCA_PAYLOAD_NAME
    if not meta_path.is_file() or not payload_path.is_file():
        raise MissingFile(f"no PCA files under {path}")
    doc = json.loads(meta_path.read_text(encoding="utf-8"))
    k, d = int(doc["k"]), int(doc["d"])
    raw = payload_path.read_bytes()
    if len(raw) != 4 * k * d:
        raise DimensionMismatch(
            f"{payload_path}: {len(raw)} bytes for k={k}, d={d}"
        )
    components = np.frombuffer(raw, dtype="<f4").reshape(k, d).astype(np.float64)
    return PcaTransform(
        mean=np.array(doc["mean"], dtype=np.float64),
        components=components,
        explained_variance_ratio=np.array(
            doc["explained_variance_ratio"], dtype=np.float64
        ),
        k=k,
    )
