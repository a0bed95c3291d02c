"""Two-class linear classifiers behind one pluggable surface.

The main model is linear discriminant analysis solved through an SVD
whitening of the pooled within-class scatter (no covariance inversion);
singular values below a relative cutoff are dropped, which gives
pseudo-inverse behaviour on degenerate directions. A nearest-centroid
model ships as the sanity baseline.

Every model scores x as ``weights . x + bias`` and predicts Right exactly
when the score is strictly positive; a score of 0 ties to Left.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, IoFailure, MissingFile, SingleClass
from .session import ClassLabel

SV_CUTOFF = 1e-12  # relative singular-value cutoff for the scatter pseudo-inverse


@dataclass(frozen=True)
class LinearClassifier:
    kind: str  # "lda" or "centroid"
    weights: np.ndarray  # (k,)
    bias: float
    class_means: np.ndarray  # (2, k), row order Left, Right
    priors: np.ndarray  # (2,)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def score(self, X: np.ndarray) -> np.ndarray:
        """Signed decision scores; positive means Right."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features:
            raise DimensionMismatch(
                f"X has {X.shape[-1]} features, model expects {self.n_features}"
            )
        return X @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels as ClassLabel values (0=Left, 1=Right)."""
        return (self.score(X) > 0).astype(np.int64)


def _split_classes(X: np.ndarray, y: np.ndarray):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not match y {y.shape}")
    Xl = X[y == ClassLabel.Left.value]
    Xr = X[y == ClassLabel.Right.value]
    if len(Xl) == 0 or len(Xr) == 0:
        raise SingleClass("training data must contain both classes")
    return X, Xl, Xr


def lda_fit(X: np.ndarray, y: np.ndarray, sv_cutoff: float = SV_CUTOFF) -> LinearClassifier:
    """Fit the shared-covariance linear discriminant.

    weights = pinv(pooled covariance) @ (mu_R - mu_L), with the
    pseudo-inverse taken through the SVD of the pooled scatter and a
    relative cutoff of sv_cutoff on its singular values. The bias places
    the boundary at equal posterior under empirical class priors. If the
    scatter is zero everywhere the weights vanish and prediction falls
    back to the prior side.
    """
    X, Xl, Xr = _split_classes(X, y)
    n, k = X.shape
    if n <= k:
        warnings.warn(
            f"LDA with {n} rows for {k} features; scatter is rank-deficient",
            stacklevel=2,
        )
    mu_l = Xl.mean(axis=0)
    mu_r = Xr.mean(axis=0)
    centered = np.concatenate([Xl - mu_l, Xr - mu_r])
    cov = (centered.T @ centered) / max(n - 2, 1)

    u, s, vt = np.linalg.svd(cov, hermitian=True)
    keep = s >= sv_cutoff * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    w = (vt.T * inv) @ (u.T @ (mu_r - mu_l))

    priors = np.array([len(Xl) / n, len(Xr) / n])
    bias = float(-w @ (mu_l + mu_r) / 2.0 + np.log(priors[1] / priors[0]))
    return LinearClassifier(
        kind="lda",
        weights=w,
        bias=bias,
        class_means=np.stack([mu_l, mu_r]),
        priors=priors,
    )


def centroid_fit(X: np.ndarray, y: np.ndarray) -> LinearClassifier:
    """Nearest class mean under Euclidean distance.

    score(x) = (|x - mu_L|^2 - |x - mu_R|^2) / 2, which is linear:
    (mu_R - mu_L) . x + (|mu_L|^2 - |mu_R|^2) / 2.
    """
    X, Xl, Xr = _split_classes(X, y)
    mu_l = Xl.mean(axis=0)
    mu_r = Xr.mean(axis=0)
    w = mu_r - mu_l
    bias = float(mu_l @ mu_l - mu_r @ mu_r) / 2.0
    priors = np.array([len(Xl) / len(X), len(Xr) / len(X)])
    return LinearClassifier(
        kind="centroid",
        weights=w,
        bias=bias,
        class_means=np.stack([mu_l, mu_r]),
        priors=priors,
    )


FIT_FUNCTIONS = {"lda": lda_fit, "centroid": centroid_fit}


def fit_classifier(kind: str, X: np.ndarray, y: np.ndarray) -> LinearClassifier:
    if kind not in FIT_FUNCTIONS:
        raise ValueError(f"unknown classifier kind {kind!r}; have {sorted(FIT_FUNCTIONS)}")
    return FIT_FUNCTIONS[kind](X, y)


MODEL_NAME = "lda.json"


def save_classifier(clf: LinearClassifier, path, pca_id: str | None) -> None:
    """Write lda.json; pca_id records the feature transform this model is paired with."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        doc = {
            "kind": clf.kind,
            "k": clf.n_features,
            "weights": [float(v) for v in clf.weights],
            "bias": clf.bias,
            "class_means": [[float(v) for v in row] for row in clf.class_means],
            "priors": [float(v) for v in clf.priors],
            "pca_id": pca_id,
        }
        (path / MODEL_NAME).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoFailure(f"cannot write classifier to {path}: {exc}") from exc


def load_classifier(path) -> tuple[LinearClassifier, str | None]:
    path = Path(path)
    model_path = path / MODEL_NAME
    if not model_path.is_file():
        raise MissingFile(f"missing {model_path}")
    doc = json.loads(model_path.read_text(encoding="utf-8"))
    clf = LinearClassifier(
        kind=doc["kind"],
        weights=np.array(doc["weights"], dtype=np.float64),
        bias=float(doc["bias"]),
        class_means=np.array(doc["class_means"], dtype=np.float64),
        priors=np.array(doc["priors"], dtype=np.float64),
    )
    return clf, doc.get("pca_id")
