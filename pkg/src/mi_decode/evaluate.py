"""Experiment orchestration: run-wise cross-validation, the PCA component
sweep, decoder training, sample-level evaluation and fine-tuning.

Cross-validation folds are whole runs, never shuffled windows: adjacent
windows overlap by 480 of 512 samples, so window-level shuffling would
leak nearly-identical samples across the train/test split and inflate
accuracy. Any PCA is refit inside each fold on the training runs only.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .classify import (
    LinearClassifier,
    fit_classifier,
    load_classifier,
    save_classifier,
)
from .dsp import PreprocessParams, WindowSet, windows_from_recording
from .errors import (
    BadK,
    DimensionMismatch,
    IoFailure,
    LayoutMismatch,
    MalformedMeta,
    MissingFile,
    TooFewRuns,
)
from .features import (
    FeatureMatrix,
    PcaTransform,
    WelchSpec,
    flatten_windows,
    load_pca,
    pca_fit,
    pca_id,
    pca_transform,
    psd_features,
    save_pca,
)
from .session import Recording, Session
from .version import __version__

T = TypeVar("T")
U = TypeVar("U")

MODE_PCA = "pca"
MODE_PSD = "psd"
MODE_PSD_PCA = "psd+pca"
FEATURE_MODES = (MODE_PCA, MODE_PSD, MODE_PSD_PCA)

DEFAULT_SWEEP_KS = (50, 100, 200, 400, 800, 1600)


def worker_count() -> int:
    """Worker cap from MI_DECODE_THREADS; 1 (sequential) by default."""
    raw = os.environ.get("MI_DECODE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_ordered(fn: Callable[[T], U], items: Sequence[T]) -> list[U]:
    """map() preserving input order, threaded when MI_DECODE_THREADS > 1."""
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class FeatureConfig:
    """What a window turns into before classification.

    mode "pca": flattened time-domain window -> k principal components.
    mode "psd": per-channel Welch spectra, no reduction.
    mode "psd+pca": Welch spectra -> k principal components.
    """

    mode: str = MODE_PCA
    k: int | None = 800
    welch: WelchSpec = WelchSpec()
    per_channel: bool = True

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"mode must be one of {FEATURE_MODES}, got {self.mode!r}")
        if self.uses_pca and (self.k is None or self.k < 1):
            raise BadK(f"mode {self.mode!r} needs k >= 1, got {self.k}")

    @property
    def uses_pca(self) -> bool:
        return self.mode in (MODE_PCA, MODE_PSD_PCA)

    @property
    def uses_psd(self) -> bool:
        return self.mode in (MODE_PSD, MODE_PSD_PCA)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k if self.uses_pca else None,
            "nperseg": self.welch.nperseg,
            "noverlap": self.welch.noverlap,
            "taper": self.welch.taper,
            "per_channel": self.per_channel,
        }


def raw_feature_matrix(ws: WindowSet, config: FeatureConfig) -> FeatureMatrix:
    """Per-window feature rows before any PCA (flattened time or Welch PSD)."""
    if config.uses_psd:
        return psd_features(ws, config.welch, per_channel=config.per_channel)
    return flatten_windows(ws)


@dataclass(frozen=True)
class FeaturePipeline:
    """A fitted feature path: raw windows -> (optional PCA) -> feature rows."""

    config: FeatureConfig
    pca: PcaTransform | None

    def transform_raw(self, X: np.ndarray) -> np.ndarray:
        return pca_transform(self.pca, X) if self.pca is not None else X

    def transform(self, ws: WindowSet) -> np.ndarray:
        return self.transform_raw(raw_feature_matrix(ws, self.config).X)


def fit_pipeline(raw_X: np.ndarray, config: FeatureConfig) -> FeaturePipeline:
    pca = pca_fit(raw_X, config.k) if config.uses_pca else None
    return FeaturePipeline(config=config, pca=pca)


def config_hash(
    params: PreprocessParams, config: FeatureConfig, clf_kind: str
) -> str:
    doc = {
        "preprocess": params.to_dict(),
        "features": config.to_dict(),
        "classifier": clf_kind,
    }
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def session_windows(
    session: Session, params: PreprocessParams, causal: bool = False
) -> WindowSet:
    return windows_from_recording(session.recording, params, causal=causal)


@dataclass(frozen=True)
class Decoder:
    """A trained preprocessing + feature + classifier stack."""

    params: PreprocessParams
    pipeline: FeaturePipeline
    clf: LinearClassifier
    provenance: dict

    def windows(self, rec: Recording, causal: bool = False) -> WindowSet:
        return windows_from_recording(rec, self.params, causal=causal)

    def score_windows(self, ws: WindowSet) -> np.ndarray:
        return self.clf.score(self.pipeline.transform(ws))

    def predict_windows(self, ws: WindowSet) -> np.ndarray:
        return self.clf.predict(self.pipeline.transform(ws))


@dataclass(frozen=True)
class CvReport:
    fold_accuracy: tuple[float, ...]
    fold_runs: tuple[int, ...]
    config: dict

    @property
    def n_folds(self) -> int:
        return len(self.fold_accuracy)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracy))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracy))

    def to_dict(self) -> dict:
        return {
            "fold_runs": list(self.fold_runs),
            "fold_accuracy": list(self.fold_accuracy),
            "mean": self.mean,
            "std": self.std,
            "config": self.config,
        }


def cv_from_matrix(
    fm: FeatureMatrix, config: FeatureConfig, clf_kind: str = "lda"
) -> CvReport:
    """Leave-one-run-out CV on precomputed raw feature rows.

    Each fold fits PCA (when the mode has one) and the classifier on the
    other runs' windows only, then scores the held-out run at window level.
    """
    runs = np.unique(fm.run_index)
    if len(runs) < 2:
        raise TooFewRuns(f"run-wise CV needs >= 2 runs, got {len(runs)}")

    def one_fold(r: int) -> float:
        test = fm.run_index == r
        Xtr, ytr = fm.X[~test], fm.labels[~test]
        Xte, yte = fm.X[test], fm.labels[test]
        pipe = fit_pipeline(Xtr, config)
        clf = fit_classifier(clf_kind, pipe.transform_raw(Xtr), ytr)
        return float(np.mean(clf.predict(pipe.transform_raw(Xte)) == yte))

    accs = _map_ordered(one_fold, [int(r) for r in runs])
    return CvReport(
        fold_accuracy=tuple(accs),
        fold_runs=tuple(int(r) for r in runs),
        config={**config.to_dict(), "classifier": clf_kind},
    )


def runwise_cv(
    session: Session,
    config: FeatureConfig,
    params: PreprocessParams = PreprocessParams(),
    clf_kind: str = "lda",
) -> CvReport:
    ws = session_windows(session, params)
    return cv_from_matrix(raw_feature_matrix(ws, config), config, clf_kind)


@dataclass(frozen=True)
class SweepReport:
    points: tuple[tuple[int, float], ...]  # (k, cv mean accuracy)
    reports: tuple[CvReport, ...]

    @property
    def best_k(self) -> int:
        # ties go to the smaller k
        return max(self.points, key=lambda p: (p[1], -p[0]))[0]

    def to_dict(self) -> dict:
        return {
            "points": [{"k": k, "mean_accuracy": a} for k, a in self.points],
            "best_k": self.best_k,
        }


def pca_sweep(
    session: Session,
    ks: Iterable[int] = DEFAULT_SWEEP_KS,
    config: FeatureConfig = FeatureConfig(),
    params: PreprocessParams = PreprocessParams(),
    clf_kind: str = "lda",
) -> SweepReport:
    """CV accuracy as a function of the PCA component count."""
    ks = sorted(set(int(k) for k in ks))
    if not ks:
        raise BadK("sweep needs at least one k")
    if not config.uses_pca:
        raise BadK(f"mode {config.mode!r} has no PCA stage to sweep")
    ws = session_windows(session, params)
    fm = raw_feature_matrix(ws, config)
    reports = [cv_from_matrix(fm, replace(config, k=k), clf_kind) for k in ks]
    points = tuple((k, rep.mean) for k, rep in zip(ks, reports))
    return SweepReport(points=points, reports=tuple(reports))


def _check_layout(sessions: Sequence[Session]) -> None:
    if not sessions:
        raise LayoutMismatch("no sessions given")
    fs = sessions[0].recording.fs
    labels = sessions[0].recording.channel_labels
    for s in sessions[1:]:
        if s.recording.fs != fs or s.recording.channel_labels != labels:
            raise LayoutMismatch(
                f"session {s.meta.subject}:{s.meta.session_kind.value} has "
                f"fs={s.recording.fs}, channels={list(s.recording.channel_labels)}; "
                f"expected fs={fs}, channels={list(labels)}"
            )


def train_decoder(
    sessions: Sequence[Session],
    config: FeatureConfig = FeatureConfig(),
    params: PreprocessParams = PreprocessParams(),
    clf_kind: str = "lda",
) -> Decoder:
    """Fit features and classifier on the union of all given sessions' windows.

    With several sessions (fine-tuning), one PCA is refit on the combined
    windows rather than reusing the first session's transform.
    """
    _check_layout(sessions)
    raws = []
    labels = []
    for s in sessions:
        ws = session_windows(s, params)
        fm = raw_feature_matrix(ws, config)
        raws.append(fm.X)
        labels.append(fm.labels)
    X = np.vstack(raws)
    y = np.concatenate(labels)
    pipe = fit_pipeline(X, config)
    clf = fit_classifier(clf_kind, pipe.transform_raw(X), y)
    prov = {
        "sessions": [
            f"{s.meta.subject}:{s.meta.session_kind.value}:{s.meta.n_runs}runs"
            for s in sessions
        ],
        "n_windows": int(X.shape[0]),
        "config_hash": config_hash(params, config, clf_kind),
        "version": __version__,
    }
    return Decoder(params=params, pipeline=pipe, clf=clf, provenance=prov)


@dataclass(frozen=True)
class SampleReport:
    """Window-level accuracy and 2x2 confusion counts (rows true, cols predicted)."""

    accuracy: float
    confusion: tuple[tuple[int, int], tuple[int, int]]
    n_windows: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": [list(row) for row in self.confusion],
            "n_windows": self.n_windows,
        }


def eval_samples(decoder: Decoder, session: Session) -> SampleReport:
    """Score every window of a session with the decoder's own feature path."""
    ws = session_windows(session, decoder.params)
    pred = decoder.predict_windows(ws)
    y = ws.labels
    conf = tuple(
        tuple(int(np.sum((y == t) & (pred == p))) for p in (0, 1)) for t in (0, 1)
    )
    return SampleReport(
        accuracy=float(np.mean(pred == y)),
        confusion=conf,
        n_windows=int(ws.n_windows),
    )


@dataclass(frozen=True)
class FinetuneReport:
    """The three accuracies of the offline-vs-fine-tuned comparison."""

    base_on_online1: float
    base_on_online2: float
    tuned_on_online2: float

    def to_dict(self) -> dict:
        return {
            "base_on_online1": self.base_on_online1,
            "base_on_online2": self.base_on_online2,
            "tuned_on_online2": self.tuned_on_online2,
        }


def finetune_experiment(
    offline: Session,
    online1: Session,
    online2: Session,
    config: FeatureConfig = FeatureConfig(),
    params: PreprocessParams = PreprocessParams(),
    clf_kind: str = "lda",
) -> FinetuneReport:
    """Train on offline only vs offline+online1, test at sample level.

    The tuned decoder refits PCA and classifier on the combined windows of
    both training sessions.
    """
    base = train_decoder([offline], config, params, clf_kind)
    tuned = train_decoder([offline, online1], config, params, clf_kind)
    return FinetuneReport(
        base_on_online1=eval_samples(base, online1).accuracy,
        base_on_online2=eval_samples(base, online2).accuracy,
        tuned_on_online2=eval_samples(tuned, online2).accuracy,
    )


DECODER_META_NAME = "decoder.json"


def save_decoder(decoder: Decoder, path) -> None:
    """Write a decoder directory: decoder.json, lda.json, pca.json/pca.f32le."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {path}: {exc}") from exc
    pid = None
    if decoder.pipeline.pca is not None:
        save_pca(decoder.pipeline.pca, path)
        pid = pca_id(decoder.pipeline.pca)
    save_classifier(decoder.clf, path, pid)
    doc = {
        "preprocess": decoder.params.to_dict(),
        "features": decoder.pipeline.config.to_dict(),
        "classifier": decoder.clf.kind,
        "provenance": decoder.provenance,
    }
    try:
        (path / DECODER_META_NAME).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoFailure(f"cannot write {path / DECODER_META_NAME}: {exc}") from exc


def load_decoder(path) -> Decoder:
    """Load a decoder directory, checking the classifier/PCA pairing."""
    path = Path(path)
    meta_path = path / DECODER_META_NAME
    if not meta_path.is_file():
        raise MissingFile(f"missing {meta_path}")
    try:
        doc = json.loads(meta_path.read_text(encoding="utf-8"))
        pp = doc["preprocess"]
        fc = doc["features"]
        params = PreprocessParams(
            low_hz=float(pp["low_hz"]),
            high_hz=float(pp["high_hz"]),
            order=int(pp["order"]),
            car=bool(pp["car"]),
            win_len_s=float(pp["win_len_s"]),
            step_s=float(pp["step_s"]),
        )
        config = FeatureConfig(
            mode=str(fc["mode"]),
            k=None if fc["k"] is None else int(fc["k"]),
            welch=WelchSpec(
                nperseg=int(fc["nperseg"]),
                noverlap=int(fc["noverlap"]),
                taper=str(fc["taper"]),
            ),
            per_channel=bool(fc["per_channel"]),
        )
        provenance = dict(doc["provenance"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise MalformedMeta(f"{meta_path}: {exc}") from exc

    clf, stored_pid = load_classifier(path)
    pca = load_pca(path) if config.uses_pca else None
    if pca is not None:
        actual = pca_id(pca)
        if stored_pid != actual:
            raise MalformedMeta(
                f"{path}: classifier is paired with PCA {stored_pid}, "
                f"directory holds {actual}"
            )
        if clf.n_features != pca.k:
            raise DimensionMismatch(
                f"classifier expects {clf.n_features} features, PCA yields {pca.k}"
            )
    return Decoder(
        params=params,
        pipeline=FeaturePipeline(config=config, pca=pca),
        clf=clf,
        provenance=provenance,
    )
