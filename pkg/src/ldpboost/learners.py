"""Base learners and the local shares they are built from.

Three share types feed three learners:

* cross-table differences -> decision stump (binary attributes, two classes)
* perturbed weighted samples -> nearest-centroid classifier
* perturbed local parameters -> multinomial logistic regression
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregate import MeanEstimate, estimate_mean
from .mechanisms import perturb, scale_to_unit, unscale


def _check_binary_labels(y: np.ndarray) -> None:
    if y.size and not np.all((y == 0) | (y == 1)):
        raise ValueError("the stump learner needs binary class labels")


@dataclass(frozen=True)
class Binarizer:
    """Public per-attribute thresholds: value > threshold maps to 1."""

    thresholds: np.ndarray

    @classmethod
    def constant(cls, d: int, threshold: float = 0.0) -> "Binarizer":
        return cls(np.full(d, float(threshold)))

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X > self.thresholds).astype(np.int8)


# ---------------------------------------------------------------------------
# Local statistic: cross tables and decision stumps


@dataclass(frozen=True)
class CrossTableDiffs:
    d0: np.ndarray
    d1: np.ndarray

    def flatten(self) -> np.ndarray:
        """Interleave as (d0_1, d1_1, ..., d0_d, d1_d)."""
        out = np.empty(2 * self.d0.size)
        out[0::2] = self.d0
        out[1::2] = self.d1
        return out

    def scaled(self, c: float) -> "CrossTableDiffs":
        return CrossTableDiffs(self.d0 * c, self.d1 * c)


def weighted_crosstables(X, y, w, binarizer: Binarizer) -> np.ndarray:
    """Weighted 2x2 tables, shape (d, 2, 2), indexed [attr, attribute value, class]."""
    y = np.asarray(y)
    _check_binary_labels(y)
    w = np.asarray(w, dtype=float)
    B = binarizer.transform(X)
    ones = w @ B if B.size else np.zeros(binarizer.thresholds.size)
    ones_c1 = (w * (y == 1)) @ B if B.size else np.zeros_like(ones)
    tot_c1 = float(np.sum(w[y == 1]))
    tot_c0 = float(np.sum(w[y == 0]))
    tables = np.empty((binarizer.thresholds.size, 2, 2))
    tables[:, 1, 1] = ones_c1
    tables[:, 1, 0] = ones - ones_c1
    tables[:, 0, 1] = tot_c1 - ones_c1
    tables[:, 0, 0] = tot_c0 - (ones - ones_c1)
    return tables


def owner_crosstable_diffs(X, y, w, binarizer: Binarizer) -> CrossTableDiffs:
    """Per attribute: class-0 minus class-1 weight mass on each branch."""
    X = np.asarray(X, dtype=float).reshape(-1, binarizer.thresholds.size)
    y = np.asarray(y)
    _check_binary_labels(y)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    B = binarizer.transform(X).astype(float)
    signed = np.where(y == 0, w, -w)
    d1 = signed @ B
    d0 = signed @ (1.0 - B)
    return CrossTableDiffs(d0=np.asarray(d0, dtype=float), d1=np.asarray(d1, dtype=float))


def perturb_crosstable(diffs: CrossTableDiffs, eps, mechanism, rng: np.random.Generator) -> np.ndarray:
    flat = diffs.flatten()
    if np.any(np.abs(flat) > 1.0 + 1e-12):
        raise ValueError("cross-table difference exceeds the public bound 1")
    return perturb(mechanism, np.clip(flat, -1.0, 1.0), eps, rng)


def crosstable_scores(aggregated) -> np.ndarray:
    v = aggregated.vector if isinstance(aggregated, MeanEstimate) else np.asarray(aggregated, dtype=float)
    return np.abs(v[0::2]) + np.abs(v[1::2])


# Scores this close to the maximum count as tied, so that sums accumulated in a
# different order (per owner vs pooled) still pick the same attribute.
TIE_TOL = 1e-12


def choose_best_attribute(aggregated, tie_tol: float = TIE_TOL) -> int:
    """Attribute maximizing |d0| + |d1|; ties go to the lowest index."""
    scores = crosstable_scores(aggregated)
    top = scores.max()
    return int(np.flatnonzero(scores >= top - tie_tol * max(1.0, abs(top)))[0])


@dataclass(frozen=True)
class Stump:
    attr: int
    label0: int
    label1: int
    threshold: float = 0.0

    kind = "stump"

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        high = X[:, self.attr] > self.threshold
        return np.where(high, self.label1, self.label0).astype(int)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "attr": self.attr, "label0": self.label0, "label1": self.label1,
                "threshold": self.threshold}

    @classmethod
    def from_dict(cls, data: dict) -> "Stump":
        return cls(int(data["attr"]), int(data["label0"]), int(data["label1"]), float(data.get("threshold", 0.0)))


def stump_from_diffs(attr: int, aggregated, binarizer: Binarizer | None = None) -> Stump:
    v = aggregated.vector if isinstance(aggregated, MeanEstimate) else np.asarray(aggregated, dtype=float)
    d0, d1 = v[2 * attr], v[2 * attr + 1]
    threshold = 0.0 if binarizer is None else float(binarizer.thresholds[attr])
    # d = (class-0 mass) - (class-1 mass); ties go to class 0
    return Stump(attr=int(attr), label0=0 if d0 >= 0 else 1, label1=0 if d1 >= 0 else 1, threshold=threshold)


def stump_predict(stump: Stump, x, binarizer: Binarizer) -> np.ndarray | int:
    X = np.asarray(x, dtype=float)
    bits = binarizer.transform(np.atleast_2d(X))[:, stump.attr]
    out = np.where(bits == 1, stump.label1, stump.label0).astype(int)
    return int(out[0]) if X.ndim == 1 else out


def fit_stump(X, y, w, binarizer: Binarizer) -> Stump:
    """Non-private stump fit on a pooled sample set."""
    flat = owner_crosstable_diffs(X, y, w, binarizer).flatten()
    attr = choose_best_attribute(flat)
    return stump_from_diffs(attr, flat, binarizer)


# ---------------------------------------------------------------------------
# Local samples: nearest-centroid classifier


def weighted_sample_share(x, w, eps, mechanism, rng: np.random.Generator) -> np.ndarray:
    """Perturb ``w * x``; accepts one sample or a batch with one weight per row."""
    X = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("sample weights for shares must lie in [0, 1]")
    weighted = X * w[..., None] if X.ndim == 2 else X * w
    return perturb(mechanism, weighted, eps, rng)


@dataclass
class CentroidModel:
    centroids: np.ndarray
    class_counts: np.ndarray
    norm_order: float = 2.0

    kind = "centroid"

    @property
    def usable(self) -> np.ndarray:
        return self.class_counts > 0

    def predict(self, X) -> np.ndarray:
        return ncc_predict(self, X, self.norm_order)

    def to_dict(self) -> dict:
        K, d = self.centroids.shape
        return {"kind": self.kind, "K": K, "d": d, "centroids": self.centroids.tolist(),
                "class_counts": self.class_counts.tolist(), "norm_order": self.norm_order}

    @classmethod
    def from_dict(cls, data: dict) -> "CentroidModel":
        return cls(np.asarray(data["centroids"], dtype=float), np.asarray(data["class_counts"], dtype=int),
                   float(data.get("norm_order", 2.0)))


def fit_centroids(vectors, labels, K: int, norm_order: float = 2.0, class_mass=None) -> CentroidModel:
    """Per-class centroids of share vectors.

    By default each class sum is divided by the class count. When the shares
    are weighted samples, pass ``class_mass`` (per-class sum of the share
    weights) to get weighted centroids instead.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in 0..{K - 1}")
    counts = np.bincount(labels, minlength=K)
    if not np.any(counts):
        raise ValueError("every class is empty")
    d = V.shape[1]
    sums = np.zeros((K, d))
    np.add.at(sums, labels, V)
    denom = counts.astype(float) if class_mass is None else np.asarray(class_mass, dtype=float)
    ok = (counts > 0) & (denom > 0)
    centroids = np.divide(sums, denom[:, None], out=np.zeros((K, d)), where=ok[:, None])
    return CentroidModel(centroids=centroids, class_counts=np.where(ok, counts, 0), norm_order=norm_order)


def ncc_predict(model: CentroidModel, x, norm_order: float | None = None):
    order = model.norm_order if norm_order is None else norm_order
    X = np.asarray(x, dtype=float)
    Xb = np.atleast_2d(X)
    usable = np.flatnonzero(model.usable)
    diffs = Xb[:, None, :] - model.centroids[usable][None, :, :]
    dist = np.linalg.norm(diffs, ord=order, axis=2)
    out = usable[np.argmin(dist, axis=1)]
    return int(out[0]) if X.ndim == 1 else out


# ---------------------------------------------------------------------------
# Local classifier: multinomial logistic regression


@dataclass
class LinearModel:
    """Softmax model; row k of ``params.reshape(K, d + 1)`` is (weights_k, intercept_k)."""

    params: np.ndarray
    K: int
    d: int

    kind = "linear"

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).ravel()
        if self.params.size != self.K * (self.d + 1):
            raise ValueError("parameter vector length must be K * (d + 1)")

    @property
    def matrix(self) -> np.ndarray:
        return self.params.reshape(self.K, self.d + 1)

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        W = self.matrix
        return X @ W[:, :-1].T + W[:, -1]

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K, "d": self.d, "params": self.params.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "LinearModel":
        return cls(np.asarray(data["params"], dtype=float), int(data["K"]), int(data["d"]))


@dataclass(frozen=True)
class LinearHyperparams:
    step: float = 0.5
    iterations: int = 200
    clip_bound: float = 1.0


def logistic_loss_and_grad(params, X, y, w, K: int) -> tuple[float, np.ndarray]:
    """Weighted softmax cross-entropy, normalized by the total weight."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    n, d = X.shape
    W = np.asarray(params, dtype=float).reshape(K, d + 1)
    total = w.sum()
    if total <= 0:
        raise ValueError("need at least one sample with positive weight")
    logits = X @ W[:, :-1].T + W[:, -1]
    logits -= logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits).sum(axis=1))
    log_prob = logits - log_norm[:, None]
    loss = -np.dot(w, log_prob[np.arange(n), y]) / total

    resid = np.exp(log_prob)
    resid[np.arange(n), y] -= 1.0
    resid *= (w / total)[:, None]
    grad = np.empty((K, d + 1))
    grad[:, :-1] = resid.T @ X
    grad[:, -1] = resid.sum(axis=0)
    return float(loss), grad.ravel()


def fit_local_linear(X, y, w, K: int, hyper: LinearHyperparams = LinearHyperparams(),
                     trace: list | None = None) -> LinearModel:
    """Fixed-step full-batch gradient descent from the zero model."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = np.asarray(w, dtype=float)
    if not np.any(w > 0):
        raise ValueError("need at least one sample with positive weight")
    d = X.shape[1]
    params = np.zeros(K * (d + 1))
    for _ in range(hyper.iterations):
        loss, grad = logistic_loss_and_grad(params, X, y, w, K)
        if trace is not None:
            trace.append(loss)
        params = params - hyper.step * grad
    return LinearModel(params, K, d)


def linear_share(model: LinearModel, clip_bound: float, eps, mechanism, rng: np.random.Generator) -> np.ndarray:
    if clip_bound <= 0:
        raise ValueError("clip bound must be positive")
    clipped = np.clip(model.params, -clip_bound, clip_bound)
    noisy = perturb(mechanism, scale_to_unit(clipped, clip_bound), eps, rng)
    return unscale(noisy, clip_bound)


def aggregate_linear(shares: Sequence, K: int, d: int) -> LinearModel:
    return LinearModel(estimate_mean(shares).vector, K, d)


def linear_predict(model: LinearModel, x):
    X = np.asarray(x, dtype=float)
    out = model.predict(X)
    return int(out[0]) if X.ndim == 1 else out


MODEL_TYPES = {cls.kind: cls for cls in (Stump, CentroidModel, LinearModel)}


def model_from_dict(data: dict):
    return MODEL_TYPES[data["kind"]].from_dict(data)
