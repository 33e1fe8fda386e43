"""Simulated multi-owner boosting: owners, the data user, and the round loop.

Owners hold disjoint trunks of the training data and a slice of the global
weight vector. Each round a fresh group of owners submits one perturbed share
apiece; the data user aggregates the shares into a base model and broadcasts
it; every owner then evaluates the model locally and the weighted error and
weight totals are assembled with the ring secure sum.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import secure_sum as ss
from .aggregate import estimate_mean
from .boosting import (
    ALPHA_TOL,
    Ensemble,
    LearnerConfig,
    StrictModeAbort,
    alpha,
    clamp_error,
    init_weights,
    next_weight_bound,
    share_weights,
    update_weights,
    weighted_error_local,
)
from .learners import (
    CrossTableDiffs,
    aggregate_linear,
    choose_best_attribute,
    fit_centroids,
    fit_local_linear,
    linear_share,
    owner_crosstable_diffs,
    perturb_crosstable,
    stump_from_diffs,
    weighted_sample_share,
)
from .mechanisms import MechanismKind, as_epsilon, noise_scale

log = logging.getLogger(__name__)

# spawn-key tags for the derived randomness streams
_OWNER, _SELECT, _SECURE, _PARTITION = 1, 2, 3, 4


class BudgetExhaustedError(RuntimeError):
    """An owner would be asked for a second share, or too few fresh owners remain."""


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class DataOwner:
    id: int
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    participated: bool = False

    @property
    def n(self) -> int:
        return len(self.y)

    def rng(self, seed: int, round_no: int) -> np.random.Generator:
        return derived_rng(seed, _OWNER, round_no, self.id)


@dataclass
class FederationConfig:
    owners: int
    group_size: int
    rounds: int
    epsilon: float = 1.0
    mechanism: MechanismKind = MechanismKind.PIECEWISE
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    K: int = 2
    seed: int = 0
    full_participation: bool = False
    strict: bool = False
    workers: int = 1
    record_messages: bool = False

    def __post_init__(self):
        self.mechanism = MechanismKind(self.mechanism)
        if self.mechanism.private:
            as_epsilon(self.epsilon)
        if self.group_size < 1 or self.rounds < 1 or self.owners < 1:
            raise ValueError("owners, group_size and rounds must be positive")
        if self.full_participation:
            if self.mechanism.private:
                raise ValueError("full participation is only allowed for non-private runs")
        elif self.rounds * self.group_size > self.owners:
            raise BudgetExhaustedError(
                f"{self.rounds} rounds x {self.group_size} owners exceeds {self.owners} owners"
            )
        if self.group_size > self.owners:
            raise ValueError("group larger than the owner population")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mechanism"] = self.mechanism.value
        return out


@dataclass
class RoundReport:
    round: int
    group: list[int]
    err: float
    alpha: float
    model: dict
    flags: list[str]
    noise_scale: float

    def to_dict(self) -> dict:
        return asdict(self)


def partition_owners(X, y, L: int, rng: np.random.Generator) -> list[DataOwner]:
    """Shuffle, then cut into L contiguous trunks; the first N mod L get one extra."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    n = len(y)
    if L < 1 or L > n:
        raise ValueError(f"cannot split {n} samples across {L} owners")
    order = rng.permutation(n)
    w = init_weights(n)
    return [
        DataOwner(id=i, X=X[idx], y=y[idx], weights=w[idx].copy())
        for i, idx in enumerate(np.array_split(order, L))
    ]


def select_group(owners: list[DataOwner], group_size: int, rng: np.random.Generator) -> list[DataOwner]:
    """Uniformly pick fresh owners and charge their one-round budget."""
    fresh = [o for o in owners if not o.participated]
    if group_size > len(fresh):
        raise BudgetExhaustedError(f"asked for {group_size} owners, only {len(fresh)} have budget left")
    picked = rng.choice(len(fresh), size=group_size, replace=False)
    group = [fresh[i] for i in sorted(picked)]
    for o in group:
        o.participated = True
    return group


class BudgetLedger:
    """Record of which owners have spent their budget; rejects any reuse."""

    def __init__(self):
        self.spent: dict[int, int] = {}

    def charge(self, owner_ids, round_no: int) -> None:
        ids = list(owner_ids)
        if len(set(ids)) != len(ids):
            raise BudgetExhaustedError("duplicate owner in a single group")
        reused = [i for i in ids if i in self.spent]
        if reused:
            raise BudgetExhaustedError(f"owners {reused} already spent their budget")
        for i in ids:
            self.spent[i] = round_no


class Federation:
    """Owners plus the data user's view of one boosting run."""

    def __init__(self, config: FederationConfig, owners: list[DataOwner]):
        self.config = config
        self.owners = owners
        self.n_total = sum(o.n for o in owners)
        self.d = owners[0].X.shape[1]
        self.ledger = BudgetLedger()
        self.user_log: list[dict[str, Any]] = []
        self.ring_log: list[ss.MaskedMessage] = []
        self.binarizer = config.learner.binarizer(self.d)
        # public bound on N * w_i, used to map NCC sample weights into [0, 1]
        self.weight_bound = 1.0
        self._sessions = 0

    @classmethod
    def from_data(cls, config: FederationConfig, X, y) -> "Federation":
        owners = partition_owners(X, y, config.owners, derived_rng(config.seed, _PARTITION))
        if len(owners) != config.owners:
            raise ValueError("owner count mismatch")
        return cls(config, owners)

    # -- owner side -------------------------------------------------------

    def prepare_share(self, owner: DataOwner, round_no: int) -> dict:
        cfg = self.config
        rng = owner.rng(cfg.seed, round_no)
        kind = cfg.learner.kind
        if kind == "bdt":
            diffs = owner_crosstable_diffs(owner.X, owner.y, owner.weights, self.binarizer)
            clipped = False
            if cfg.mechanism.private:
                # rescale so a typical owner's statistics are O(1) before perturbing
                diffs = diffs.scaled(len(self.owners))
                flat = diffs.flatten()
                clipped = bool(np.any(np.abs(flat) > 1.0))
                diffs = CrossTableDiffs(np.clip(diffs.d0, -1, 1), np.clip(diffs.d1, -1, 1))
            payload = perturb_crosstable(diffs, cfg.epsilon, cfg.mechanism, rng)
            return {"payload": payload, "clipped": clipped}
        if kind == "ncc":
            r = share_weights(owner.weights, self.n_total, self.weight_bound)
            vectors = weighted_sample_share(owner.X, r, cfg.epsilon, cfg.mechanism, rng)
            mass = np.bincount(owner.y, weights=r, minlength=cfg.K)
            return {"payload": np.atleast_2d(vectors), "labels": owner.y.copy(), "mass": mass, "clipped": False}
        if kind == "lr":
            local = fit_local_linear(owner.X, owner.y, owner.weights, cfg.K, cfg.learner.linear)
            bound = cfg.learner.linear.clip_bound
            clipped = bool(np.any(np.abs(local.params) > bound))
            payload = linear_share(local, bound, cfg.epsilon, cfg.mechanism, rng)
            return {"payload": payload, "clipped": clipped}
        raise ValueError(f"unknown learner {kind!r}")

    def collect_shares(self, group: list[DataOwner], round_no: int) -> list[dict]:
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(lambda o: self.prepare_share(o, round_no), group))
        return [self.prepare_share(o, round_no) for o in group]

    # -- data user side ---------------------------------------------------

    def aggregate(self, shares: list[dict], round_no: int = 0):
        cfg = self.config
        kind = cfg.learner.kind
        if kind == "bdt":
            agg = estimate_mean([s["payload"] for s in shares])
            return stump_from_diffs(choose_best_attribute(agg), agg, self.binarizer)
        if kind == "ncc":
            vectors = np.vstack([s["payload"] for s in shares])
            labels = np.concatenate([s["labels"] for s in shares])
            # per-class share-weight mass, summed securely across the group
            mass = [self._secure_sum([float(s["mass"][k]) for s in shares], round_no, f"class_mass_{k}")
                    for k in range(cfg.K)]
            return fit_centroids(vectors, labels, cfg.K, cfg.learner.norm_order, class_mass=mass)
        return aggregate_linear([s["payload"] for s in shares], cfg.K, self.d)

    def _secure_sum(self, values, round_no: int, name: str) -> float:
        rng = derived_rng(self.config.seed, _SECURE, round_no, self._sessions)
        result = ss.run_ring(values, rng, session=self._sessions)
        self._sessions += 1
        if self.config.record_messages:
            self.ring_log.extend(result.messages)
            self.user_log.append({"type": "secure_sum", "round": round_no, "name": name, "total": result.total})
        return result.total

    # -- protocol ---------------------------------------------------------

    def select(self, round_no: int) -> list[DataOwner]:
        if self.config.full_participation:
            return list(self.owners)
        group = select_group(self.owners, self.config.group_size, derived_rng(self.config.seed, _SELECT, round_no))
        self.ledger.charge([o.id for o in group], round_no)
        return group

    def run_round(self, round_no: int, group: list[DataOwner]) -> tuple[Any, float, float, RoundReport]:
        cfg = self.config
        shares = self.collect_shares(group, round_no)
        if cfg.record_messages:
            for o, s in zip(group, shares):
                entry = {"type": "share", "round": round_no, "owner": o.id, "payload": np.asarray(s["payload"]).tolist()}
                if "labels" in s:
                    entry["labels"] = s["labels"].tolist()
                self.user_log.append(entry)
        model = self.aggregate(shares, round_no)
        if cfg.record_messages:
            self.user_log.append({"type": "broadcast", "round": round_no, "model": model.to_dict()})

        # every owner evaluates the broadcast model on its own samples
        local = [weighted_error_local(model, o.X, o.y, o.weights) for o in self.owners]
        wrong_mass = self._secure_sum([num for num, _ in local], round_no, "weighted_error")
        total_mass = self._secure_sum([den for _, den in local], round_no, "weights_sum")
        err = clamp_error(wrong_mass / total_mass)
        a = alpha(err, cfg.K)
        flags = []
        if a <= ALPHA_TOL:
            if cfg.strict:
                raise StrictModeAbort(f"round {round_no}: error {err:.4f} no better than chance")
            flags.append("alpha_nonpositive")
            a = 0.0
        if any(s["clipped"] for s in shares):
            flags.append("share_clipped")

        for o in self.owners:
            o.weights = update_weights(o.weights, model.predict(o.X) != o.y, a)
        new_total = self._secure_sum([float(o.weights.sum()) for o in self.owners], round_no, "weights_sum_updated")
        for o in self.owners:
            o.weights = o.weights / new_total
        self.weight_bound = next_weight_bound(self.weight_bound, a, new_total)

        width = 2 * self.d if cfg.learner.kind == "bdt" else (
            self.d if cfg.learner.kind == "ncc" else cfg.K * (self.d + 1))
        report = RoundReport(
            round=round_no,
            group=[o.id for o in group],
            err=err,
            alpha=a,
            model=model.to_dict(),
            flags=flags,
            noise_scale=noise_scale(cfg.mechanism, width, cfg.epsilon) if cfg.mechanism.private else 0.0,
        )
        log.debug("round %d: err=%.4f alpha=%.4f flags=%s", round_no, err, a, flags)
        return model, err, a, report

    def run(self) -> tuple[Ensemble, list[RoundReport]]:
        ensemble = Ensemble(self.config.K)
        reports = []
        for m in range(self.config.rounds):
            group = self.select(m)
            model, _, a, report = self.run_round(m, group)
            ensemble.add(a, model)
            reports.append(report)
        return ensemble, reports

    def global_weights(self) -> np.ndarray:
        return np.concatenate([o.weights for o in self.owners])


def run_boosting(config: FederationConfig, X, y) -> tuple[Ensemble, list[RoundReport]]:
    return Federation.from_data(config, X, y).run()
