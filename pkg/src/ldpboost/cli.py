"""Experiment harness: synthetic data, mechanism benchmarks, training sweeps,
hitting-rate studies and model evaluation.

Every command writes a delimited table whose first line is ``# config: {...}``
holding the full run configuration, so a table can be regenerated from itself.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .aggregate import estimate_mean, mse, rank_attributes, top_k_hitting_rate
from .boosting import Ensemble, LearnerConfig
from .data import (
    EncodedDataset,
    Schema,
    SynthSpec,
    gen_synthetic,
    load_dataset,
    schema_path,
    train_test_split,
    write_dataset,
)
from .federation import Federation, FederationConfig, derived_rng
from .learners import LinearHyperparams, choose_best_attribute, crosstable_scores, owner_crosstable_diffs
from .mechanisms import MechanismKind, perturb

log = logging.getLogger(__name__)

COLUMNS = ["dataset", "learner", "mechanism", "epsilon", "rounds", "seed", "metric", "value", "sd"]
DEFAULT_EPS = [1.0, 3.0, 5.0, 7.0, 9.0]
TRAIN_FRACTION = 0.8

# spawn-key tags for harness randomness
_BENCH, _SPLIT = 11, 12


@dataclass
class RunConfig:
    command: str
    dataset: str | None = None
    schema: str | None = None
    synth: dict = field(default_factory=dict)
    learner: str = "bdt"
    mechanism: str = "pm"
    eps: list[float] = field(default_factory=lambda: list(DEFAULT_EPS))
    owners: int = 100
    group_size: int | None = None
    rounds: int | None = None
    boost: bool = False
    reps: int = 20
    seed: int = 0
    clip_bound: float = 1.0
    binarize_threshold: float = 0.0
    norm_order: float = 2.0
    d: int = 50
    k: list[int] = field(default_factory=list)
    mechanisms: list[str] = field(default_factory=list)
    model: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


@dataclass
class Row:
    dataset: str
    learner: str
    mechanism: str
    epsilon: float | str
    rounds: int | str
    seed: int
    metric: str
    value: float
    sd: float | str = ""


def _fmt(v) -> str:
    # repr of a float is locale-independent and round-trips exactly
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_table(config: RunConfig, rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {config.to_json()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def read_table(text: str) -> tuple[dict, list[dict]]:
    """Parse a table written by :func:`render_table` back into (config, rows)."""
    first, _, rest = text.partition("\n")
    if not first.startswith("# config: "):
        raise ValueError("missing config header")
    config = json.loads(first[len("# config: "):])
    return config, list(csv.DictReader(io.StringIO(rest)))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    values = [float(v) for v in values]
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return statistics.fmean(values), sd


# ---------------------------------------------------------------------------
# synth


def cmd_synth(spec: SynthSpec, out: str) -> EncodedDataset:
    ds = gen_synthetic(spec)
    write_dataset(ds, out)
    return ds


# ---------------------------------------------------------------------------
# mse-bench


def mse_bench(d: int, L: int, eps_list: Sequence[float], mechanisms: Sequence[str], reps: int,
              seed: int = 0) -> dict[tuple[str, float], list[float]]:
    """MSE of the mean estimate of L uniform vectors in [-1, 1]^d, per repetition."""
    out = {}
    for mi, mech in enumerate(mechanisms):
        kind = MechanismKind(mech)
        for ei, eps in enumerate(eps_list):
            errs = []
            for r in range(reps):
                rng = derived_rng(seed, _BENCH, mi, ei, r)
                truth = rng.uniform(-1.0, 1.0, size=(L, d))
                noisy = perturb(kind, truth, eps, rng)
                errs.append(mse(estimate_mean(noisy).vector, truth.mean(axis=0)))
            out[(kind.value, float(eps))] = errs
    return out


def cmd_mse_bench(cfg: RunConfig) -> list[Row]:
    mechs = cfg.mechanisms or [m.value for m in MechanismKind]
    results = mse_bench(cfg.d, cfg.owners, cfg.eps, mechs, cfg.reps, cfg.seed)
    rows = []
    for (mech, eps), errs in results.items():
        m, sd = _mean_sd(errs)
        rows.append(Row(f"uniform-d{cfg.d}-L{cfg.owners}", "-", mech, eps, "-", cfg.seed, "mse", m, sd))
    return rows


# ---------------------------------------------------------------------------
# train


def default_rounds(learner: str, boost: bool) -> int:
    # the linear learner gains nothing from boosting, so it trains one round unless asked
    return 1 if learner == "lr" and not boost else 12


def learner_config(cfg: RunConfig) -> LearnerConfig:
    return LearnerConfig(
        kind=cfg.learner,
        threshold=cfg.binarize_threshold,
        norm_order=cfg.norm_order,
        linear=LinearHyperparams(clip_bound=cfg.clip_bound),
    )


def load_run_dataset(cfg: RunConfig) -> tuple[str, EncodedDataset]:
    if cfg.dataset:
        schema = Schema.load(cfg.schema or schema_path(cfg.dataset))
        return Path(cfg.dataset).name, load_dataset(cfg.dataset, schema)
    spec = SynthSpec(**cfg.synth)
    return "synthetic", gen_synthetic(spec)


def federation_config(cfg: RunConfig, eps: float, run_seed: int, K: int) -> FederationConfig:
    rounds = cfg.rounds or default_rounds(cfg.learner, cfg.boost)
    group = cfg.group_size or max(1, cfg.owners // rounds)
    return FederationConfig(
        owners=cfg.owners,
        group_size=group,
        rounds=rounds,
        epsilon=eps,
        mechanism=MechanismKind(cfg.mechanism),
        learner=learner_config(cfg),
        K=K,
        seed=run_seed,
    )


def train_runs(cfg: RunConfig, ds: EncodedDataset):
    """Yield (eps, rep, ensemble, reports, test set) over the ε grid and repetitions."""
    for eps in cfg.eps:
        for r in range(cfg.reps):
            train, test = train_test_split(ds, TRAIN_FRACTION, derived_rng(cfg.seed, _SPLIT, r))
            fcfg = federation_config(cfg, eps, cfg.seed * 100_003 + r, ds.K)
            ensemble, reports = Federation.from_data(fcfg, train.X, train.y).run()
            yield float(eps), r, ensemble, reports, test


def cmd_train(cfg: RunConfig, model_out: str | None = None) -> list[Row]:
    name, ds = load_run_dataset(cfg)
    rounds = cfg.rounds or default_rounds(cfg.learner, cfg.boost)
    errors: dict[float, list[list[float]]] = {}
    flagged: dict[float, list[int]] = {}
    models = []
    for eps, r, ens, reports, test in train_runs(cfg, ds):
        curve = [float(np.mean(ens.predict(test.X, upto=m) != test.y)) for m in range(1, rounds + 1)]
        errors.setdefault(eps, []).append(curve)
        flagged.setdefault(eps, []).append(sum(1 for rep in reports if "alpha_nonpositive" in rep.flags))
        if model_out is not None:
            models.append({"epsilon": eps, "rep": r, "ensemble": ens.to_dict(),
                           "reports": [rep.to_dict() for rep in reports]})
    rows = []
    for eps, curves in errors.items():
        arr = np.asarray(curves)
        for m in range(rounds):
            mean, sd = _mean_sd(arr[:, m])
            rows.append(Row(name, cfg.learner, cfg.mechanism, eps, m + 1, cfg.seed, "misclassification", mean, sd))
        mean, sd = _mean_sd(1.0 - arr[:, -1])
        rows.append(Row(name, cfg.learner, cfg.mechanism, eps, rounds, cfg.seed, "accuracy", mean, sd))
        mean, sd = _mean_sd(flagged[eps])
        rows.append(Row(name, cfg.learner, cfg.mechanism, eps, rounds, cfg.seed, "flagged_rounds", mean, sd))
    if model_out is not None:
        Path(model_out).write_text(json.dumps({"config": json.loads(cfg.to_json()), "models": models},
                                              sort_keys=True) + "\n")
    return rows


# ---------------------------------------------------------------------------
# hitrate


def truth_ranking(X, y, binarizer) -> np.ndarray:
    """Non-private attribute ranking on the pooled data under uniform weights."""
    w = np.full(len(y), 1.0 / len(y))
    return rank_attributes(crosstable_scores(owner_crosstable_diffs(X, y, w, binarizer).flatten()))


def hitrate_choices(cfg: RunConfig, ds: EncodedDataset, eps: float) -> list[int]:
    """Attribute chosen in the first round of each of ``cfg.reps`` private runs."""
    chosen = []
    one_round = RunConfig(**{**asdict(cfg), "rounds": 1})
    for r in range(cfg.reps):
        fcfg = federation_config(one_round, eps, cfg.seed * 100_003 + r, ds.K)
        fed = Federation.from_data(fcfg, ds.X, ds.y)
        shares = fed.collect_shares(fed.select(0), 0)
        agg = estimate_mean([s["payload"] for s in shares])
        chosen.append(choose_best_attribute(agg))
    return chosen


def cmd_hitrate(cfg: RunConfig) -> list[Row]:
    if cfg.learner != "bdt":
        raise ValueError("hitting rates are defined for the stump learner")
    name, ds = load_run_dataset(cfg)
    if ds.K != 2:
        raise ValueError("hitting rates need two classes")
    truth = truth_ranking(ds.X, ds.y, learner_config(cfg).binarizer(ds.d))
    ks = cfg.k or list(range(1, ds.d + 1))
    rows = []
    for eps in cfg.eps:
        chosen = hitrate_choices(cfg, ds, eps)
        for k in ks:
            rep = top_k_hitting_rate(truth, chosen, k)
            # binomial standard error of the rate
            sd = float(np.sqrt(rep.rate * (1 - rep.rate) / rep.runs))
            rows.append(Row(name, "bdt", cfg.mechanism, float(eps), 1, cfg.seed, f"hit@{k}", rep.rate, sd))
    return rows


# ---------------------------------------------------------------------------
# eval


def load_ensemble(path) -> Ensemble:
    data = json.loads(Path(path).read_text())
    if "models" in data:  # a training artifact: take its first ensemble
        data = data["models"][0]["ensemble"]
    return Ensemble.from_dict(data)


def evaluate(ensemble: Ensemble, ds: EncodedDataset) -> dict[str, float]:
    d_model = _model_dim(ensemble)
    if d_model is not None and d_model != ds.d:
        raise ValueError(f"model expects {d_model} attributes, dataset has {ds.d}")
    if any(getattr(m, "attr", -1) >= ds.d for _, m in ensemble.members):
        raise ValueError(f"a stump splits on an attribute beyond the dataset's {ds.d}")
    if ds.K > ensemble.K:
        raise ValueError(f"model knows {ensemble.K} classes, dataset has {ds.K}")
    pred = ensemble.predict(ds.X)
    acc = float(np.mean(pred == ds.y))
    out = {"accuracy": acc, "misclassification": 1.0 - acc}
    for i in range(ensemble.K):
        for j in range(ensemble.K):
            out[f"confusion_{i}_{j}"] = float(np.sum((ds.y == i) & (pred == j)))
    return out


def _model_dim(ensemble: Ensemble) -> int | None:
    for _, model in ensemble.members:
        info = model.to_dict()
        if "d" in info:
            return int(info["d"])
    return None


def cmd_eval(cfg: RunConfig) -> list[Row]:
    ensemble = load_ensemble(cfg.model)
    name, ds = load_run_dataset(cfg)
    kinds = sorted({m.kind for _, m in ensemble.members})
    return [Row(name, "+".join(kinds), "-", "-", len(ensemble.members), cfg.seed, metric, value)
            for metric, value in evaluate(ensemble, ds).items()]


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output table path (default: stdout)")
        if data:
            p.add_argument("--dataset", help="CSV file; synthetic data when omitted")
            p.add_argument("--schema", help="schema JSON (default: <dataset>.schema.json)")
            p.add_argument("--n", type=int, default=SynthSpec.n, help="synthetic sample count")
            p.add_argument("--combo-noise", type=float, default=0.0)

    def federated(p):
        p.add_argument("--learner", choices=["bdt", "ncc", "lr"], default="bdt")
        p.add_argument("--mechanism", choices=[m.value for m in MechanismKind], default="pm")
        p.add_argument("--eps", type=_float_list, default=list(DEFAULT_EPS))
        p.add_argument("--owners", type=int, default=100)
        p.add_argument("--group-size", type=int)
        p.add_argument("--rounds", type=int)
        p.add_argument("--reps", type=int, default=20)
        p.add_argument("--clip-bound", type=float, default=1.0)
        p.add_argument("--binarize-threshold", type=float, default=0.0)
        p.add_argument("--norm-order", type=float, default=2.0)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=SynthSpec.n)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--combo-noise", type=float, default=0.0)
    p.add_argument("--out", required=True, help="CSV path; the schema goes next to it")

    p = sub.add_parser("mse-bench", help="mean-estimation MSE per mechanism and budget")
    common(p, data=False)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--owners", type=int, default=500)
    p.add_argument("--eps", type=_float_list, default=[3.0, 5.0, 7.0, 9.0])
    p.add_argument("--mechanism", type=_str_list, dest="mechanisms", default=[m.value for m in MechanismKind])
    p.add_argument("--reps", type=int, default=20)

    p = sub.add_parser("train", help="federated boosting sweep over budgets")
    common(p)
    federated(p)
    p.add_argument("--boost", action="store_true", help="allow more than one round for lr")
    p.add_argument("--model-out", help="write ensembles and per-round reports as JSON")

    p = sub.add_parser("hitrate", help="top-k hitting rate of the private split attribute")
    common(p)
    federated(p)
    p.add_argument("--k", type=_int_list, default=[])

    p = sub.add_parser("eval", help="evaluate a saved ensemble on a dataset")
    common(p)
    p.add_argument("--model", required=True)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command, seed=args.seed)
    if getattr(args, "dataset", None) is None and hasattr(args, "n"):
        cfg.synth = {"n": args.n, "seed": args.seed, "combo_noise": args.combo_noise}
    for name in ("dataset", "schema", "learner", "mechanism", "eps", "owners", "group_size", "rounds",
                 "boost", "reps", "clip_bound", "binarize_threshold", "norm_order", "d", "k",
                 "mechanisms", "model"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if cfg.command in ("mse-bench", "eval"):
        cfg.learner = cfg.mechanism = "-"
    if cfg.command == "eval":
        cfg.eps = []
    if cfg.command == "hitrate":
        cfg.rounds = 1
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth":
        cmd_synth(SynthSpec(n=args.n, seed=args.seed, combo_noise=args.combo_noise), args.out)
        return 0
    cfg = config_from_args(args)
    if cfg.command == "train" and cfg.learner == "lr" and (cfg.rounds or 1) > 1 and not cfg.boost:
        parser.error("boosting the linear learner needs --boost")
    try:
        if cfg.command == "mse-bench":
            rows = cmd_mse_bench(cfg)
        elif cfg.command == "train":
            rows = cmd_train(cfg, args.model_out)
        elif cfg.command == "hitrate":
            rows = cmd_hitrate(cfg)
        else:
            rows = cmd_eval(cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(render_table(cfg, rows), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
