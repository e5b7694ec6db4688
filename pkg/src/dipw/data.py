"""Tabular dataset model, CSV ingestion, encoding, scaling, and fold plans.

A :class:`Dataset` bundles the experiment's outcome, binary treatment, known
propensity, and named covariate matrix, and validates the overlap bound on
the propensities at construction. Everything downstream (transforms,
estimators, evaluation) consumes this type and treats it as immutable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import generator

__all__ = [
    "DEFAULT_OVERLAP_MARGIN",
    "Dataset",
    "FoldPlan",
    "SchemaError",
    "StandardizationRecord",
    "load_csv",
    "make_folds",
    "one_hot_count",
    "standardize",
    "train_test_split",
    "write_csv",
]

# Default xi for the overlap bound propensity in (xi, 1 - xi).
DEFAULT_OVERLAP_MARGIN = 0.01


class SchemaError(ValueError):
    """A CSV schema names missing columns or maps them inconsistently."""


@dataclass(frozen=True)
class Dataset:
    """Randomized-experiment sample with known assignment probabilities.

    Attributes:
        y: Outcomes, shape (n,).
        t: Treatment indicators in {0, 1}, shape (n,).
        propensity: Known per-unit treatment probability, each inside
            (overlap_margin, 1 - overlap_margin).
        x: Covariate matrix, shape (n, p).
        column_names: p unique covariate labels.
        overlap_margin: The xi used to validate the propensities.
    """

    y: np.ndarray
    t: np.ndarray
    propensity: np.ndarray
    x: np.ndarray
    column_names: tuple[str, ...]
    overlap_margin: float = DEFAULT_OVERLAP_MARGIN

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64)
        t = np.asarray(self.t)
        prop = np.asarray(self.propensity, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d matrix")
        n = y.shape[0]
        if t.shape != (n,) or prop.shape != (n,) or x.shape[0] != n:
            raise ValueError("y, t, propensity, and x rows must share length")
        if not np.isin(t, (0, 1)).all():
            bad = np.flatnonzero(~np.isin(t, (0, 1)))
            raise ValueError(f"treatment must be 0 or 1, violated at rows {bad[:10].tolist()}")
        xi = self.overlap_margin
        if not (xi > 0):
            raise ValueError("overlap_margin must be positive")
        if not ((prop > xi) & (prop < 1 - xi)).all():
            raise ValueError(f"propensities must lie in ({xi}, {1 - xi})")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise ValueError("outcomes and covariates must be finite (no missing values)")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != x.shape[1]:
            raise ValueError("column_names length must match covariate count")
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t.astype(np.int64))
        object.__setattr__(self, "propensity", prop)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "column_names", names)
        for arr in (self.y, self.t, self.propensity, self.x):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, index: np.ndarray) -> "Dataset":
        """Row-subset dataset for a boolean mask or integer index array."""
        return Dataset(
            y=self.y[index],
            t=self.t[index],
            propensity=self.propensity[index],
            x=self.x[index],
            column_names=self.column_names,
            overlap_margin=self.overlap_margin,
        )


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic partition of n units into k near-equal folds."""

    k: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        a = np.asarray(self.assignment, dtype=np.int64)
        object.__setattr__(self, "assignment", a)
        a.setflags(write=False)
        sizes = np.bincount(a, minlength=self.k)
        if sizes.max() - sizes.min() > 1:
            raise ValueError("fold sizes must differ by at most 1")

    @property
    def n(self) -> int:
        return self.assignment.shape[0]


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column centering/scaling actually applied by :func:`standardize`.

    Constant columns are flagged and passed through untouched, so their
    stored scale is 1 and their stored mean is 0; the scale vector is
    therefore strictly positive for every column.
    """

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray = field(repr=False)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.scale + self.mean


def standardize(x: np.ndarray) -> tuple[np.ndarray, StandardizationRecord]:
    """Center and scale each covariate column to mean 0 and sd 1.

    Standard deviations use the n-denominator convention, which keeps the
    lambda_max formula free of correction factors. Constant columns are
    passed through unchanged and flagged on the record.

    Args:
        x: Covariate matrix with at least 2 rows.

    Returns:
        (scaled matrix, StandardizationRecord).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("standardize needs a matrix with n >= 2 rows")
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    constant = sd == 0.0
    mean = np.where(constant, 0.0, mean)
    scale = np.where(constant, 1.0, sd)
    record = StandardizationRecord(mean=mean, scale=scale, constant=constant)
    return record.transform(x), record


def make_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Assign n units to k folds of near-equal size by a seeded permutation.

    The unit at position ``perm[i]`` of the seeded permutation goes to fold
    ``i % k``, so fold sizes differ by at most one and the same
    ``(n, k, seed)`` always reproduces the same assignment.
    """
    if k < 2:
        raise ValueError(f"fold count must be at least 2, got {k}")
    if k > n:
        raise ValueError(f"fold count {k} exceeds sample size {n}")
    perm = generator(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def train_test_split(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded disjoint split with ``round(n * test_fraction)`` test rows."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = d.n
    n_test = int(np.floor(n * test_fraction + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    perm = generator(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return d.subset(train_idx), d.subset(test_idx)


def one_hot_count(
    values: np.ndarray, reference: int, name: str = "count"
) -> tuple[np.ndarray, list[str]]:
    """One-hot encode a non-negative integer count with a reference level.

    One indicator column is produced per observed non-reference level, in
    ascending level order; reference rows are all-zero, so each row sums to
    0 or 1.

    Args:
        values: Non-negative integer counts.
        reference: The level encoded as the all-zero row; must be observed.
        name: Prefix for the generated column names, ``{name}_{level}``.

    Returns:
        (indicator matrix, column names).
    """
    v = np.asarray(values)
    as_int = np.asarray(v, dtype=np.float64)
    if not np.isfinite(as_int).all() or not (as_int == np.round(as_int)).all() or (as_int < 0).any():
        raise ValueError("count values must be non-negative integers")
    v = as_int.astype(np.int64)
    levels = np.unique(v)
    if reference not in levels:
        raise ValueError(f"reference level {reference} not observed in the data")
    keep = [int(lv) for lv in levels if lv != reference]
    matrix = np.column_stack([(v == lv).astype(np.float64) for lv in keep]) if keep else np.empty((v.shape[0], 0))
    names = [f"{name}_{lv}" for lv in keep]
    return matrix, names


def load_csv(path: str | Path, schema: dict) -> Dataset:
    """Read a comma-separated, headered, UTF-8 file into a Dataset.

    Args:
        path: CSV file with a header row, '.' decimal marks.
        schema: Column-role map with keys:
            ``outcome``: outcome column name.
            ``treatment``: treatment column name.
            ``propensity``: propensity column name, or a constant in (0, 1).
            ``covariates``: list of covariate column names.
            ``one_hot``: optional {column: reference_level} for count
            covariates to expand; the column must be listed in covariates.
            ``overlap_margin``: optional xi for the overlap bound.

    Raises:
        SchemaError: missing columns or malformed schema.
        ValueError: unparseable cells (reported with 1-based data row
            numbers), treatments outside {0, 1}, propensities outside (0, 1).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    for key in ("outcome", "treatment", "covariates"):
        if key not in schema:
            raise SchemaError(f"schema is missing the '{key}' entry")
    if "propensity" not in schema:
        raise SchemaError("schema must give a propensity column or constant")

    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = list(reader)

    col_index = {name: i for i, name in enumerate(header)}
    covariates = list(schema["covariates"])
    prop_spec = schema["propensity"]
    named = [schema["outcome"], schema["treatment"], *covariates]
    if isinstance(prop_spec, str):
        named.append(prop_spec)
    missing = [c for c in named if c not in col_index]
    if missing:
        raise SchemaError(f"columns not found in {path.name}: {missing}")

    one_hot = dict(schema.get("one_hot", {}))
    unknown = [c for c in one_hot if c not in covariates]
    if unknown:
        raise SchemaError(f"one_hot columns must be listed as covariates: {unknown}")

    n = len(rows)
    mapped = {c: np.empty(n) for c in named}
    bad_rows: list[int] = []
    for r, row in enumerate(rows):
        try:
            for c in named:
                mapped[c][r] = float(row[col_index[c]])
        except (ValueError, IndexError):
            bad_rows.append(r + 1)
    if bad_rows:
        shown = ", ".join(map(str, bad_rows[:20]))
        more = "" if len(bad_rows) <= 20 else f" (+{len(bad_rows) - 20} more)"
        raise ValueError(f"unparseable values in mapped columns at data rows: {shown}{more}")

    t_raw = mapped[schema["treatment"]]
    bad_t = np.flatnonzero(~np.isin(t_raw, (0.0, 1.0)))
    if bad_t.size:
        shown = ", ".join(str(i + 1) for i in bad_t[:20])
        raise ValueError(f"treatment values outside {{0, 1}} at data rows: {shown}")

    if isinstance(prop_spec, str):
        propensity = mapped[prop_spec]
    else:
        constant = float(prop_spec)
        if not (0.0 < constant < 1.0):
            raise ValueError(f"constant propensity must lie in (0, 1), got {constant}")
        propensity = np.full(n, constant)

    blocks: list[np.ndarray] = []
    names: list[str] = []
    for c in covariates:
        if c in one_hot:
            block, block_names = one_hot_count(mapped[c], int(one_hot[c]), name=c)
            blocks.append(block)
            names.extend(block_names)
        else:
            blocks.append(mapped[c][:, None])
            names.append(c)
    x = np.hstack(blocks) if blocks else np.empty((n, 0))

    return Dataset(
        y=mapped[schema["outcome"]],
        t=t_raw.astype(np.int64),
        propensity=propensity,
        x=x,
        column_names=tuple(names),
        overlap_margin=float(schema.get("overlap_margin", DEFAULT_OVERLAP_MARGIN)),
    )


def write_csv(d: Dataset, path: str | Path) -> dict:
    """Write a Dataset to CSV and return the schema that reloads it.

    Floats are written with shortest round-trip formatting, so
    ``load_csv(write_csv(d))`` reproduces the arrays exactly.
    """
    path = Path(path)
    header = ["outcome", "treatment", "propensity", *d.column_names]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(d.n):
            row = [repr(float(d.y[i])), str(int(d.t[i])), repr(float(d.propensity[i]))]
            row.extend(repr(float(v)) for v in d.x[i])
            writer.writerow(row)
    return {
        "outcome": "outcome",
        "treatment": "treatment",
        "propensity": "propensity",
        "covariates": list(d.column_names),
        "overlap_margin": d.overlap_margin,
    }
