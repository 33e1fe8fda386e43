"""Numeric local-differential-privacy perturbation primitives.

Every mechanism is a pure function of ``(input, epsilon, rng)`` where ``rng``
is a :class:`numpy.random.Generator`. Inputs live in ``[-1, 1]`` (scalars or
vectors); use :func:`scale_to_unit` / :func:`unscale` for other public bounds.

Multi-dimensional mechanisms accept either a single record of shape ``(d,)``
or a batch of independent records of shape ``(n, d)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

_DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an input lies outside the domain a mechanism accepts."""


@dataclass(frozen=True)
class PrivacyBudget:
    """Pure epsilon-LDP budget. There is no delta: every mechanism here is pure."""

    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon!r}")

    def __float__(self) -> float:
        return float(self.epsilon)


class MechanismKind(str, enum.Enum):
    NOOP = "noop"
    LAPLACE = "laplace"
    PIECEWISE = "pm"
    DUCHI = "duchi"

    @property
    def private(self) -> bool:
        return self is not MechanismKind.NOOP


def as_epsilon(eps) -> float:
    return float(PrivacyBudget(float(eps)).epsilon)


def _check_unit(x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DomainError("input contains non-finite values")
    if np.any(np.abs(x) > 1.0 + _DOMAIN_TOL):
        raise DomainError(f"input outside [-1, 1]: max |x| = {np.max(np.abs(x))!r}")
    return np.clip(x, -1.0, 1.0)


# ---------------------------------------------------------------------------
# Piecewise mechanism


@dataclass(frozen=True)
class PmParams:
    delta: float
    phi_left: ArrayLike
    phi_right: ArrayLike
    p_core: float

    @property
    def core_density(self) -> float:
        return self.p_core / (self.delta - 1.0)

    @property
    def tail_density(self) -> float:
        return (1.0 - self.p_core) / (self.delta + 1.0)


def pm_delta(eps) -> float:
    """Half-width of the output range of the 1-D piecewise mechanism."""
    e = math.exp(as_epsilon(eps) / 2.0)
    return (e + 1.0) / (e - 1.0)


def compute_pm_params(x: ArrayLike, eps) -> PmParams:
    eps = as_epsilon(eps)
    arr = _check_unit(np.asarray(x, dtype=float))
    e = math.exp(eps / 2.0)
    delta = (e + 1.0) / (e - 1.0)
    phi_left = (delta + 1.0) / 2.0 * arr - (delta - 1.0) / 2.0
    phi_right = phi_left + delta - 1.0
    if arr.ndim == 0:
        phi_left, phi_right = float(phi_left), float(phi_right)
    return PmParams(delta=delta, phi_left=phi_left, phi_right=phi_right, p_core=e / (e + 1.0))


def pm_pdf(output: ArrayLike, x: float, eps) -> np.ndarray:
    """Closed-form output density of the 1-D piecewise mechanism at input ``x``."""
    params = compute_pm_params(x, eps)
    o = np.asarray(output, dtype=float)
    inside = np.abs(o) <= params.delta
    core = (o >= params.phi_left) & (o <= params.phi_right)
    return np.where(inside, np.where(core, params.core_density, params.tail_density), 0.0)


def pm_perturb_1d(x: ArrayLike, eps, rng: np.random.Generator) -> ArrayLike:
    """Perturb each entry of ``x`` independently with the 1-D piecewise mechanism."""
    params = compute_pm_params(x, eps)
    delta = params.delta
    phi_l = np.asarray(params.phi_left, dtype=float)
    phi_r = np.asarray(params.phi_right, dtype=float)
    shape = phi_l.shape

    in_core = rng.random(shape) < params.p_core
    core = phi_l + rng.random(shape) * (delta - 1.0)
    # Uniform over [-delta, phi_l] U [phi_r, delta]: one draw over the total
    # tail length, mapped onto whichever piece it lands in.
    left_len = phi_l + delta
    s = rng.random(shape) * (delta + 1.0)
    tail = np.where(s < left_len, -delta + s, phi_r + (s - left_len))
    out = np.where(in_core, core, tail)
    if out.ndim == 0:
        return float(out)
    return out


def pm_sample_count(d: int, eps) -> int:
    return max(1, min(d, int(math.floor(as_epsilon(eps) / 2.5))))


def _as_records(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        raise DomainError("multi-dimensional mechanisms need a vector input")
    single = arr.ndim == 1
    return (arr[None, :] if single else arr), single


def _pick_k(rng: np.random.Generator, n: int, d: int, k: int) -> np.ndarray:
    """Boolean (n, d) mask with exactly ``k`` uniformly chosen True entries per row."""
    keys = rng.random((n, d))
    idx = np.argpartition(keys, k - 1, axis=1)[:, :k] if k < d else np.tile(np.arange(d), (n, 1))
    mask = np.zeros((n, d), dtype=bool)
    np.put_along_axis(mask, idx, True, axis=1)
    return mask


def pm_perturb_md(x, eps, rng: np.random.Generator) -> np.ndarray:
    """Piecewise mechanism for vectors: perturb ``k`` sampled coordinates at ``eps/k``.

    Sampled coordinates are scaled by ``d/k`` to stay unbiased; the remaining
    coordinates are reported as exactly 0.
    """
    eps = as_epsilon(eps)
    records, single = _as_records(x)
    records = _check_unit(records)
    n, d = records.shape
    k = pm_sample_count(d, eps)
    mask = _pick_k(rng, n, d, k)
    out = np.zeros_like(records)
    out[mask] = (d / k) * pm_perturb_1d(records[mask], eps / k, rng)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Laplace baseline


def laplace_perturb_1d(x: ArrayLike, eps, rng: np.random.Generator) -> ArrayLike:
    eps = as_epsilon(eps)
    arr = _check_unit(np.asarray(x, dtype=float))
    out = arr + rng.laplace(0.0, 2.0 / eps, size=arr.shape)
    if out.ndim == 0:
        return float(out)
    return out


def laplace_perturb_md(x, eps, rng: np.random.Generator) -> np.ndarray:
    """Split ``eps`` evenly across coordinates: Laplace noise of scale ``2d/eps`` each."""
    eps = as_epsilon(eps)
    records, single = _as_records(x)
    records = _check_unit(records)
    d = records.shape[1]
    out = records + rng.laplace(0.0, 2.0 * d / eps, size=records.shape)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Duchi et al. baseline


def _duchi_agreement_mass(d: int) -> tuple[Fraction, Fraction]:
    """Expected agreement ``E[(2a - d)/d]`` on the positive and negative corner sets.

    ``a`` counts coordinates of the released corner that agree in sign with the
    randomized-response vector; the positive set holds corners with ``a >= d/2``.
    """
    pos_num = pos_den = 0
    for a in range(d + 1):
        c = math.comb(d, a)
        if 2 * a >= d:
            pos_num += c * (2 * a - d)
            pos_den += c
    pos = Fraction(pos_num, pos_den * d)
    return pos, -pos


def duchi_calibrate(d: int, eps) -> float:
    """Solve ``E[output_j] = x_j`` for the corner magnitude ``B``.

    Conditioned on the sign vector ``v``, the release has mean ``B * c * v``
    with ``c = P(u=1) E[agree|T+] + P(u=0) E[agree|T-]``; since ``E[v_j] = x_j``
    the estimator is unbiased exactly when ``B = 1/c``.
    """
    eps = as_epsilon(eps)
    pos, neg = _duchi_agreement_mass(d)
    p = 1.0 / (1.0 + math.exp(-eps))
    c = p * float(pos) + (1.0 - p) * float(neg)
    return 1.0 / c


def duchi_bound_closed_form(d: int, eps) -> float:
    eps = as_epsilon(eps)
    if d % 2 == 1:
        cd = 2 ** (d - 1) / math.comb(d - 1, (d - 1) // 2)
    else:
        cd = (2 ** (d - 1) + math.comb(d, d // 2) / 2) / math.comb(d - 1, d // 2)
    return (math.exp(eps) + 1.0) / (math.exp(eps) - 1.0) * cd


@dataclass(frozen=True)
class DuchiParams:
    bound_b: float
    d: int
    p_agree: float
    pos_sizes: np.ndarray
    neg_sizes: np.ndarray


def duchi_params(d: int, eps) -> DuchiParams:
    eps = as_epsilon(eps)
    weights = np.array([float(math.comb(d, a)) for a in range(d + 1)])
    a = np.arange(d + 1)
    pos = np.where(2 * a >= d, weights, 0.0)
    neg = np.where(2 * a <= d, weights, 0.0)
    p = 1.0 / (1.0 + math.exp(-eps))
    return DuchiParams(
        bound_b=duchi_calibrate(d, eps),
        d=d,
        p_agree=p,
        pos_sizes=pos / pos.sum(),
        neg_sizes=neg / neg.sum(),
    )


def duchi_perturb_md(x, eps, rng: np.random.Generator) -> np.ndarray:
    """Release a uniformly chosen corner of ``{-B, B}^d`` on the side of a sign vector.

    The sign vector takes ``+1`` at coordinate ``j`` with probability
    ``(1 + x_j) / 2``; with probability ``e^eps / (e^eps + 1)`` the corner is
    drawn from those with nonnegative inner product with it, otherwise from
    those with nonpositive inner product.
    """
    records, single = _as_records(x)
    records = _check_unit(records)
    n, d = records.shape
    params = duchi_params(d, eps)

    v = np.where(rng.random((n, d)) < (1.0 + records) / 2.0, 1.0, -1.0)
    positive = rng.random(n) < params.p_agree
    # Uniform over a corner set = pick the agreement count by set size,
    # then a uniform subset of that many agreeing coordinates.
    agree_pos = rng.choice(d + 1, size=n, p=params.pos_sizes)
    agree_neg = rng.choice(d + 1, size=n, p=params.neg_sizes)
    agree = np.where(positive, agree_pos, agree_neg)
    ranks = np.argsort(rng.random((n, d)), axis=1).argsort(axis=1)
    signs = np.where(ranks < agree[:, None], 1.0, -1.0)
    out = params.bound_b * v * signs
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Public-bound rescaling and dispatch


def scale_to_unit(x: ArrayLike, t) -> ArrayLike:
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("public bound t must be positive")
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > t_arr * (1.0 + _DOMAIN_TOL)):
        raise DomainError("value exceeds its declared public bound")
    out = np.clip(arr / t_arr, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def unscale(x: ArrayLike, t) -> ArrayLike:
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("public bound t must be positive")
    out = np.asarray(x, dtype=float) * t_arr
    return float(out) if out.ndim == 0 else out


_DISPATCH = {
    MechanismKind.LAPLACE: laplace_perturb_md,
    MechanismKind.PIECEWISE: pm_perturb_md,
    MechanismKind.DUCHI: duchi_perturb_md,
}


def perturb(kind, x, eps, rng: np.random.Generator) -> np.ndarray:
    """Perturb a record (or batch of records) with the chosen mechanism.

    ``NOOP`` returns a copy of ``x`` and ignores ``eps``; it exists only for
    non-private baselines.
    """
    kind = MechanismKind(kind)
    if kind is MechanismKind.NOOP:
        records = np.array(x, dtype=float)
        _check_unit(records)
        return records
    return _DISPATCH[kind](x, eps, rng)


def noise_scale(kind, d: int, eps) -> float:
    """Largest per-coordinate output magnitude scale, for run reports."""
    kind = MechanismKind(kind)
    if kind is MechanismKind.NOOP:
        return 0.0
    if kind is MechanismKind.PIECEWISE:
        k = pm_sample_count(d, eps)
        return d / k * pm_delta(as_epsilon(eps) / k)
    if kind is MechanismKind.LAPLACE:
        return 2.0 * d / as_epsilon(eps)
    return duchi_calibrate(d, eps)
