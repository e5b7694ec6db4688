"""Model evaluation: RMSE against known effects, uplift curves, AUUC,
bootstrap bands, subgroup effects, and budgeted-targeting arithmetic.

The uplift value at k is the difference-in-means effect estimate among the
k units with the highest predicted effects, times k; its graph is the
uplift curve and AUUC is the plain sum of the curve over k = 1..n. Ties in
scores are broken by ascending original index, so curves are deterministic
without any randomness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .estimators import CateModel
from .seeding import generator
from .transform import DenoisingDiagnostics

__all__ = [
    "SubgroupReport",
    "UpliftCurve",
    "auuc_table",
    "budget_gain",
    "curve_to_csv",
    "diagnostics_report",
    "rmse_cate",
    "subgroup_ate",
    "uplift_band",
    "uplift_curve",
]


@dataclass(frozen=True)
class UpliftCurve:
    """Uplift values U(1..n), their sum (AUUC), and the random-targeting line.

    ``baseline[k-1] = k * ATE`` is the expected gain from treating k units
    chosen at random; ``band`` holds optional per-k bootstrap (lower, upper)
    arrays at ``band_level``.
    """

    u: np.ndarray
    auuc: float
    baseline: np.ndarray
    band: Optional[tuple[np.ndarray, np.ndarray]] = None
    band_level: Optional[float] = None

    @property
    def n(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class SubgroupReport:
    """Difference-in-means effect estimates within bins of one variable."""

    variable: str
    labels: tuple[str, ...]
    ate: np.ndarray
    se: np.ndarray
    n_treated: np.ndarray
    n_control: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return self.n_treated + self.n_control


def rmse_cate(m: CateModel, x_test: np.ndarray, tau_true: np.ndarray) -> float:
    """Root mean squared error of predicted effects against known ones."""
    tau_true = np.asarray(tau_true, dtype=np.float64)
    pred = m.predict(x_test)
    if pred.shape != tau_true.shape:
        raise ValueError("tau_true length must match x_test rows")
    return float(np.sqrt(np.mean((pred - tau_true) ** 2)))


def _sorted_curve(scores: np.ndarray, y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """U(k) for k = 1..n with units ordered by descending score, ties by index."""
    order = np.argsort(-scores, kind="stable")
    ys = y[order]
    ts = t[order].astype(np.float64)
    k = np.arange(1, scores.shape[0] + 1, dtype=np.float64)
    n1 = np.cumsum(ts)
    n0 = k - n1
    s1 = np.cumsum(ys * ts)
    s0 = np.cumsum(ys) - s1
    both = (n1 > 0) & (n0 > 0)
    u = np.zeros_like(k)
    np.divide(s1, n1, out=s1, where=both)
    np.divide(s0, n0, out=s0, where=both)
    u[both] = (s1[both] - s0[both]) * k[both]
    return u


def _validate_uplift_inputs(scores, y, t):
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t)
    if not (scores.shape == y.shape == t.shape) or scores.ndim != 1:
        raise ValueError("scores, y, and t must be equal-length vectors")
    if not np.isin(t, (0, 1)).all():
        raise ValueError("treatment indicator must be 0 or 1")
    t = t.astype(np.int64)
    if t.sum() == 0 or t.sum() == t.shape[0]:
        raise ValueError("uplift evaluation needs both treated and control units")
    return scores, y, t


def uplift_curve(scores: np.ndarray, y_test: np.ndarray, t_test: np.ndarray) -> UpliftCurve:
    """Uplift curve of a scoring on a test set.

    U(k) is zero whenever the top-k units are all treated or all control
    (the difference in means does not exist yet), which anchors the curve at
    the origin. U(n) equals the full-sample difference in means times n, and
    AUUC is the exact sum of the curve.
    """
    scores, y, t = _validate_uplift_inputs(scores, y_test, t_test)
    u = _sorted_curve(scores, y, t)
    n = scores.shape[0]
    ate = u[-1] / n
    baseline = ate * np.arange(1, n + 1, dtype=np.float64)
    return UpliftCurve(u=u, auuc=float(u.sum()), baseline=baseline)


def uplift_band(
    scores: np.ndarray,
    y_test: np.ndarray,
    t_test: np.ndarray,
    level: float,
    n_boot: int,
    seed: int,
    *,
    max_retries: int = 100,
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise bootstrap percentile band for the uplift curve.

    (score, y, t) triples are resampled with replacement; each resample is
    re-sorted and evaluated on the k-grid of the original test size.
    Resamples that lose one of the arms are redrawn, up to ``max_retries``
    consecutive times.
    """
    scores, y, t = _validate_uplift_inputs(scores, y_test, t_test)
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    if n_boot < 2:
        raise ValueError("n_boot must be at least 2")
    n = scores.shape[0]
    rng = generator(seed)
    curves = np.empty((n_boot, n))
    for b in range(n_boot):
        for attempt in range(max_retries + 1):
            idx = rng.integers(0, n, size=n)
            ts = t[idx]
            if 0 < ts.sum() < n:
                break
        else:
            raise ValueError(f"could not draw a two-arm resample in {max_retries} retries")
        curves[b] = _sorted_curve(scores[idx], y[idx], ts)
    tail = (1.0 - level) / 2.0
    lower = np.quantile(curves, tail, axis=0)
    upper = np.quantile(curves, 1.0 - tail, axis=0)
    return lower, upper


def auuc_table(models: Sequence[CateModel], test: Dataset) -> list[tuple[str, float]]:
    """Evaluate each model's AUUC on a shared test set, best first.

    Ties in AUUC order by model name for a stable ranking.
    """
    rows = []
    for m in models:
        curve = uplift_curve(m.predict(test.x), test.y, test.t)
        rows.append((m.kind, curve.auuc))
    return sorted(rows, key=lambda r: (-r[1], r[0]))


def budget_gain(curve: UpliftCurve, k: int) -> tuple[float, float, Optional[float]]:
    """Gain from treating the k top-ranked units versus k random units.

    Returns (treated_gain, random_gain, improvement_ratio); the ratio is
    None when the random gain is zero.
    """
    if not (1 <= k <= curve.n):
        raise ValueError(f"k must lie in [1, {curve.n}], got {k}")
    treated_gain = float(curve.u[k - 1])
    random_gain = float(curve.u[-1] * k / curve.n)
    ratio = treated_gain / random_gain if random_gain != 0.0 else None
    return treated_gain, random_gain, ratio


def subgroup_ate(test: Dataset, variable: str, bins) -> SubgroupReport:
    """Difference-in-means effect per bin of one covariate.

    Args:
        test: evaluation dataset.
        variable: covariate name to bin on.
        bins: an int (that many equal-count quantile bins), a sequence of
            edges (half-open intervals, last one closed), or "levels" (one
            bin per distinct value).

    Every bin must contain both treated and control units. Standard errors
    use the two-sample unpooled formula sqrt(s1^2/n1 + s0^2/n0).
    """
    if variable not in test.column_names:
        raise ValueError(f"unknown variable: {variable!r}")
    v = test.x[:, test.column_names.index(variable)]

    if isinstance(bins, str):
        if bins != "levels":
            raise ValueError("bins must be an int, a sequence of edges, or 'levels'")
        levels = np.unique(v)
        masks = [v == lv for lv in levels]
        labels = [repr(float(lv)) for lv in levels]
    elif isinstance(bins, int):
        if bins < 1:
            raise ValueError("bin count must be positive")
        qs = np.quantile(v, np.linspace(0, 1, bins + 1))
        edges = np.unique(qs)
        masks, labels = _edge_bins(v, edges)
    else:
        edges = np.asarray(list(bins), dtype=np.float64)
        if edges.ndim != 1 or edges.shape[0] < 2 or (np.diff(edges) <= 0).any():
            raise ValueError("edges must be a strictly increasing sequence")
        if (v < edges[0]).any() or (v > edges[-1]).any():
            raise ValueError("edges must cover the variable's observed range")
        masks, labels = _edge_bins(v, edges)

    ate, se, n1s, n0s = [], [], [], []
    for mask, label in zip(masks, labels):
        y1 = test.y[mask & (test.t == 1)]
        y0 = test.y[mask & (test.t == 0)]
        if y1.size == 0 or y0.size == 0:
            raise ValueError(f"bin {label} has an empty treatment arm")
        ate.append(y1.mean() - y0.mean())
        var1 = y1.var(ddof=1) if y1.size > 1 else 0.0
        var0 = y0.var(ddof=1) if y0.size > 1 else 0.0
        se.append(np.sqrt(var1 / y1.size + var0 / y0.size))
        n1s.append(y1.size)
        n0s.append(y0.size)
    return SubgroupReport(
        variable=variable,
        labels=tuple(labels),
        ate=np.asarray(ate),
        se=np.asarray(se),
        n_treated=np.asarray(n1s, dtype=np.int64),
        n_control=np.asarray(n0s, dtype=np.int64),
    )


def _edge_bins(v: np.ndarray, edges: np.ndarray):
    masks, labels = [], []
    for i in range(edges.shape[0] - 1):
        last = i == edges.shape[0] - 2
        if last:
            mask = (v >= edges[i]) & (v <= edges[i + 1])
        else:
            mask = (v >= edges[i]) & (v < edges[i + 1])
        masks.append(mask)
        labels.append(f"[{edges[i]:g}, {edges[i + 1]:g}{']' if last else ')'}")
    return masks, labels


def diagnostics_report(m: CateModel) -> DenoisingDiagnostics:
    """The model's recorded denoising diagnostics.

    Raises:
        ValueError: for kinds without diagnostics (the t-learner).
    """
    if m.diagnostics is None:
        raise ValueError(f"{m.kind} models do not carry denoising diagnostics")
    return m.diagnostics


def curve_to_csv(curve: UpliftCurve, path: str | Path) -> None:
    """Write (k, u, baseline[, lower, upper]) rows; floats round-trip exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = ["k", "u", "baseline"]
        if curve.band is not None:
            header += ["lower", "upper"]
        writer.writerow(header)
        for i in range(curve.n):
            row = [str(i + 1), repr(float(curve.u[i])), repr(float(curve.baseline[i]))]
            if curve.band is not None:
                row += [repr(float(curve.band[0][i])), repr(float(curve.band[1][i]))]
            writer.writerow(row)
