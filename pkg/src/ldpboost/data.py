"""Dataset ingestion, encoding, normalization and the synthetic generator."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass
class Schema:
    columns: dict[str, str]  # name -> numeric | categorical, in file order
    label: str
    bounds: dict[str, list[float]] = field(default_factory=dict)
    binarize_label: bool = False

    def __post_init__(self):
        if self.label not in self.columns:
            raise SchemaError(f"label column {self.label!r} not declared")
        bad = {k: v for k, v in self.columns.items() if v not in (NUMERIC, CATEGORICAL)}
        if bad:
            raise SchemaError(f"unknown column kinds: {bad}")

    @property
    def features(self) -> list[str]:
        return [c for c in self.columns if c != self.label]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "columns": [{"name": n, "kind": k} for n, k in self.columns.items()],
            "bounds": self.bounds,
            "binarize_label": self.binarize_label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        cols = {c["name"]: c["kind"] for c in data["columns"]}
        return cls(cols, data["label"], dict(data.get("bounds", {})), bool(data.get("binarize_label", False)))

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass
class NormalizationSpec:
    """Per-attribute public bounds [lo, hi] mapped affinely onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray
    declared_public: bool = True

    @classmethod
    def symmetric(cls, t, declared_public: bool = True) -> "NormalizationSpec":
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("bounds must be positive")
        return cls(-t, t.copy(), declared_public)

    @property
    def t(self) -> np.ndarray:
        return (self.hi - self.lo) / 2.0

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        width = self.hi - self.lo
        safe = np.where(width > 0, width, 1.0)
        out = np.where(width > 0, 2.0 * (X - self.lo) / safe - 1.0, 0.0)
        return np.clip(out, -1.0, 1.0)

    def invert(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return (Z + 1.0) / 2.0 * (self.hi - self.lo) + self.lo


@dataclass
class EncodedDataset:
    X: np.ndarray
    y: np.ndarray
    K: int
    normalization: NormalizationSpec | None = None
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("feature matrix and labels disagree in length")
        if self.X.size and np.max(np.abs(self.X)) > 1.0:
            raise ValueError("encoded features must lie in [-1, 1]")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.K):
            raise ValueError(f"labels must lie in 0..{self.K - 1}")
        if not self.feature_names:
            self.feature_names = [f"f{j}" for j in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "EncodedDataset":
        return EncodedDataset(self.X[idx], self.y[idx], self.K, self.normalization, list(self.feature_names))


# ---------------------------------------------------------------------------
# CSV ingestion and encoding


def load_csv(path, schema: Schema) -> dict[str, list]:
    """Read a headed CSV into typed columns keyed by name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: no header row") from None
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise SchemaError(f"columns missing from file: {missing}")
        pos = {name: header.index(name) for name in schema.columns}
        table: dict[str, list] = {name: [] for name in schema.columns}
        for rowno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", rowno)
            for name, kind in schema.columns.items():
                cell = row[pos[name]].strip()
                if kind == NUMERIC:
                    try:
                        table[name].append(float(cell))
                    except ValueError:
                        raise ParseError(f"column {name!r}: not a number: {cell!r}", rowno) from None
                else:
                    table[name].append(cell)
    return table


@dataclass
class OneHotEncoder:
    categories: dict[str, list[str]]

    @classmethod
    def fit(cls, raw: dict[str, list], schema: Schema) -> "OneHotEncoder":
        cats = {}
        for name in schema.features:
            if schema.columns[name] == CATEGORICAL:
                cats[name] = list(dict.fromkeys(raw[name]))
        return cls(cats)

    def output_names(self, schema: Schema) -> list[str]:
        names = []
        for name in schema.features:
            if name in self.categories:
                names.extend(f"{name}={v}" for v in self.categories[name])
            else:
                names.append(name)
        return names

    def transform(self, raw: dict[str, list], schema: Schema) -> np.ndarray:
        blocks = []
        for name in schema.features:
            col = raw[name]
            if name in self.categories:
                index = {v: i for i, v in enumerate(self.categories[name])}
                unseen = sorted({v for v in col if v not in index})
                if unseen:
                    raise SchemaError(f"column {name!r}: unseen categories {unseen}")
                block = np.zeros((len(col), len(index)))
                block[np.arange(len(col)), [index[v] for v in col]] = 1.0
                blocks.append(block)
            else:
                blocks.append(np.asarray(col, dtype=float)[:, None])
        if not blocks:
            return np.zeros((len(raw[schema.label]), 0))
        return np.hstack(blocks)

    def inverse(self, name: str, block) -> list[str]:
        block = np.asarray(block)
        return [self.categories[name][i] for i in np.argmax(block, axis=1)]


def one_hot_encode(raw: dict[str, list], schema: Schema) -> tuple[np.ndarray, list[str], OneHotEncoder]:
    enc = OneHotEncoder.fit(raw, schema)
    return enc.transform(raw, schema), enc.output_names(schema), enc


def normalize(table, bounds=None) -> tuple[np.ndarray, NormalizationSpec]:
    """Map each attribute onto [-1, 1].

    ``bounds`` may be a per-attribute half-width ``t`` (symmetric) or an
    ``(lo, hi)`` pair of arrays. Without bounds they are taken from the data
    and the result is flagged as not declared in advance.
    """
    X = np.asarray(table, dtype=float)
    if bounds is None:
        spec = NormalizationSpec(X.min(axis=0), X.max(axis=0), declared_public=False)
        log.warning("normalization bounds computed from the data; they are treated as public")
    elif isinstance(bounds, tuple):
        spec = NormalizationSpec(np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float))
    else:
        spec = NormalizationSpec.symmetric(np.broadcast_to(np.asarray(bounds, dtype=float), X.shape[1:]))
    if np.any(spec.hi < spec.lo):
        raise ValueError("bounds must satisfy lo <= hi")
    zero = spec.hi == spec.lo
    if np.any(zero):
        warnings.warn(f"zero-width attributes {np.flatnonzero(zero).tolist()} mapped to 0", stacklevel=2)
    return spec.apply(X), spec


def binarize_label_by_mean(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return (v > v.mean()).astype(int)


def encode_labels(values) -> tuple[np.ndarray, list]:
    classes = sorted(set(values))
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[v] for v in values], dtype=int), classes


def load_dataset(path, schema: Schema) -> EncodedDataset:
    raw = load_csv(path, schema)
    Z, names, _ = one_hot_encode(raw, schema)
    bounds = None
    if schema.bounds:
        lo = np.empty(Z.shape[1])
        hi = np.empty(Z.shape[1])
        for j, name in enumerate(names):
            if name in schema.bounds:
                lo[j], hi[j] = schema.bounds[name]
            elif "=" in name:
                lo[j], hi[j] = 0.0, 1.0  # one-hot columns are bounded by construction
            else:
                raise SchemaError(f"no declared bound for column {name!r}")
        bounds = (lo, hi)
    X, spec = normalize(Z, bounds)
    labels = raw[schema.label]
    if schema.binarize_label:
        y = binarize_label_by_mean(labels)
        K = 2
    else:
        y, classes = encode_labels(labels)
        K = max(2, len(classes))
    return EncodedDataset(X, y, K, spec, names)


def write_dataset(ds: EncodedDataset, path, label: str = "y") -> Schema:
    """Write features and labels as CSV plus a ``.schema.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ds.feature_names, label])
        for row, yi in zip(ds.X, ds.y):
            writer.writerow([*(repr(float(v)) for v in row), int(yi)])
    schema = Schema(
        columns={**{n: NUMERIC for n in ds.feature_names}, label: NUMERIC},
        label=label,
        bounds={n: [-1.0, 1.0] for n in ds.feature_names},
    )
    schema.dump(schema_path(path))
    return schema


def schema_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".schema.json")


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass(frozen=True)
class SynthSpec:
    n: int = 10_000
    informative: int = 10
    total: int = 20
    classes: int = 2
    seed: int = 0
    separation: float = 1.0
    combo_noise: float = 0.0
    modes: int = 2

    def __post_init__(self):
        if self.total < self.informative or self.informative < 1:
            raise ValueError("need 1 <= informative <= total")
        if self.classes != 2:
            raise ValueError("the synthetic generator produces two classes")
        if self.n < 2:
            raise ValueError("need at least two samples")
        if self.modes < 1:
            raise ValueError("need at least one mode per class")


def gen_synthetic_raw(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized feature matrix and labels."""
    rng = np.random.default_rng(spec.seed)
    y = np.zeros(spec.n, dtype=int)
    y[spec.n // 2:] = 1
    rng.shuffle(y)
    # per-attribute class-mean gaps of varying strength so attributes rank cleanly
    gaps = spec.separation * rng.uniform(0.25, 1.0, size=spec.informative)
    signs = np.where(y == 1, 0.5, -0.5)
    informative = rng.standard_normal((spec.n, spec.informative)) + signs[:, None] * gaps
    if spec.modes > 1:
        # each class is an equal-weight mixture of unit-variance Gaussian components
        offsets = spec.separation * rng.standard_normal((2, spec.modes, spec.informative))
        component = rng.integers(0, spec.modes, size=spec.n)
        informative += offsets[y, component]
    n_combo = spec.total - spec.informative
    mix = rng.standard_normal((spec.informative, n_combo)) / np.sqrt(spec.informative)
    combos = informative @ mix
    if spec.combo_noise > 0:
        combos = combos + spec.combo_noise * rng.standard_normal(combos.shape)
    return np.hstack([informative, combos]), y


def gen_synthetic(spec: SynthSpec = SynthSpec()) -> EncodedDataset:
    raw, y = gen_synthetic_raw(spec)
    t = np.max(np.abs(raw), axis=0)
    X, norm = normalize(raw, t)
    return EncodedDataset(X, y, 2, norm, [f"f{j}" for j in range(spec.total)])


def train_test_split(ds: EncodedDataset, fraction: float, rng: np.random.Generator):
    """Class-stratified seeded split; ``fraction`` of each class goes to train."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    train_idx, test_idx = [], []
    for k in range(ds.K):
        members = np.flatnonzero(ds.y == k)
        members = members[rng.permutation(members.size)]
        cut = int(round(fraction * members.size))
        train_idx.append(members[:cut])
        test_idx.append(members[cut:])
    train = np.sort(np.concatenate(train_idx))
    test = np.sort(np.concatenate(test_idx))
    if train.size == 0 or test.size == 0:
        raise ValueError("split leaves one side empty")
    return ds.subset(train), ds.subset(test)
