"""SAMME arithmetic shared by the centralized reference and the federated protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .learners import (
    Binarizer,
    LinearHyperparams,
    fit_centroids,
    fit_local_linear,
    fit_stump,
    model_from_dict,
)

ERR_FLOOR = 1e-10
# alpha values this small are secure-sum rounding around a chance-level round
ALPHA_TOL = 1e-9


class StrictModeAbort(RuntimeError):
    """Raised in strict mode when a round is no better than random guessing."""


def init_weights(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one sample")
    return np.full(n, 1.0 / n)


def weighted_error_local(model, X, y, w) -> tuple[float, float]:
    """(sum of weights on misclassified samples, sum of all weights)."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return 0.0, 0.0
    wrong = model.predict(X) != np.asarray(y)
    return float(np.sum(w[wrong])), float(np.sum(w))


def clamp_error(err: float) -> float:
    return min(max(err, ERR_FLOOR), 1.0 - ERR_FLOOR)


def alpha(err: float, K: int) -> float:
    if K < 2:
        raise ValueError("need at least two classes")
    err = clamp_error(err)
    return math.log((1.0 - err) / err) + math.log(K - 1)


def update_weights(weights, misclassified, alpha_m: float) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    flags = np.asarray(misclassified, dtype=bool)
    if flags.shape != w.shape:
        raise ValueError("flags must align with weights")
    return np.where(flags, w * math.exp(alpha_m), w)


def renormalize(weights, total: float | None = None) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return w / (w.sum() if total is None else total)


@dataclass
class Ensemble:
    K: int
    members: list = field(default_factory=list)  # (alpha, model) pairs

    def add(self, alpha_m: float, model) -> None:
        self.members.append((float(alpha_m), model))

    def votes(self, X, upto: int | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        members = self.members if upto is None else self.members[:upto]
        votes = np.zeros((X.shape[0], self.K))
        rows = np.arange(X.shape[0])
        for a, model in members:
            votes[rows, model.predict(X)] += a
        return votes

    def predict(self, X, upto: int | None = None) -> np.ndarray:
        return np.argmax(self.votes(X, upto), axis=1)

    def truncated(self, m: int) -> "Ensemble":
        return Ensemble(self.K, list(self.members[:m]))

    def to_dict(self) -> dict:
        return {"K": self.K, "members": [{"alpha": a, "model": m.to_dict()} for a, m in self.members]}

    @classmethod
    def from_dict(cls, data: dict) -> "Ensemble":
        ens = cls(int(data["K"]))
        for rec in data["members"]:
            ens.add(rec["alpha"], model_from_dict(rec["model"]))
        return ens


def ensemble_predict(ensemble: Ensemble, x, predict_fn: Callable | None = None):
    """Weighted vote; ``predict_fn(model, X)`` overrides ``model.predict``."""
    if not ensemble.members:
        raise ValueError("empty ensemble")
    X = np.asarray(x, dtype=float)
    Xb = np.atleast_2d(X)
    votes = np.zeros((Xb.shape[0], ensemble.K))
    rows = np.arange(Xb.shape[0])
    for a, model in ensemble.members:
        pred = model.predict(Xb) if predict_fn is None else np.atleast_1d(predict_fn(model, Xb))
        votes[rows, pred] += a
    out = np.argmax(votes, axis=1)
    return int(out[0]) if X.ndim == 1 else out


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "bdt"  # bdt | ncc | lr
    threshold: float | Sequence[float] = 0.0
    norm_order: float = 2.0
    linear: LinearHyperparams = LinearHyperparams()

    def binarizer(self, d: int) -> Binarizer:
        t = np.asarray(self.threshold, dtype=float)
        return Binarizer(np.broadcast_to(t, (d,)).astype(float).copy())


def share_weights(w, n_total: int, weight_bound: float = 1.0) -> np.ndarray:
    """Map boosting weights into [0, 1] for weighted-sample shares.

    ``n_total * w`` is 1 for uniform weights; ``weight_bound`` is a public
    upper bound on it (see :func:`next_weight_bound`), so relative weights
    survive the mapping unchanged.
    """
    r = np.asarray(w, dtype=float) * n_total / weight_bound
    if np.any(r > 1.0 + 1e-9):
        raise ValueError("weight exceeds its public bound")
    return np.minimum(r, 1.0)


def next_weight_bound(bound: float, alpha_m: float, new_total: float) -> float:
    """Public bound on ``N * w_i`` after one update-and-renormalize step."""
    return bound * math.exp(alpha_m) / new_total


def fit_base_learner(learner: LearnerConfig, X, y, w, K: int):
    """Non-private fit of one base model on pooled data with sample weights ``w``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if learner.kind == "bdt":
        if K != 2:
            raise ValueError("the stump learner supports two classes only")
        return fit_stump(X, y, w, learner.binarizer(X.shape[1]))
    if learner.kind == "ncc":
        w = np.asarray(w, dtype=float)
        mass = np.bincount(y, weights=w, minlength=K)
        return fit_centroids(X * w[:, None], y, K, learner.norm_order, class_mass=mass)
    if learner.kind == "lr":
        return fit_local_linear(X, y, w, K, learner.linear)
    raise ValueError(f"unknown learner {learner.kind!r}")


@dataclass
class SammeRound:
    err: float
    alpha: float
    flagged: bool


def fit_samme_centralized(X, y, K: int, M: int, learner: LearnerConfig = LearnerConfig(),
                          strict: bool = False) -> tuple[Ensemble, list[SammeRound]]:
    """Plain SAMME on pooled data; the reference the federated run is checked against."""
    if M < 1:
        raise ValueError("need at least one round")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    w = init_weights(len(y))
    ensemble = Ensemble(K)
    rounds = []
    for _ in range(M):
        model = fit_base_learner(learner, X, y, w, K)
        wrong = model.predict(X) != y
        err = float(np.sum(w[wrong]) / np.sum(w))
        a = alpha(err, K)
        flagged = a <= ALPHA_TOL
        if flagged:
            if strict:
                raise StrictModeAbort(f"round error {err:.4f} no better than chance")
            a = 0.0
        ensemble.add(a, model)
        rounds.append(SammeRound(err=err, alpha=a, flagged=flagged))
        w = renormalize(update_weights(w, wrong, a))
    return ensemble, rounds
