"""Regression random forest used as the cross-fitted nuisance learner.

Tree growing is delegated to scikit-learn's ``RandomForestRegressor``
(variance-reduction splits at midpoints between sorted feature values,
seeded bootstrap per tree, deterministic given the spec seed and independent
of ``n_jobs`` scheduling). The fitted trees are immediately extracted into
plain arrays: prediction, serialization, and every downstream consumer work
off those arrays alone.

``cross_fit_predict`` produces out-of-fold predictions so no unit's own row
influences its nuisance value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Protocol, runtime_checkable

import numpy as np
from numba import njit
from sklearn.ensemble import RandomForestRegressor

from .data import Dataset, FoldPlan
from .seeding import derive_seed

__all__ = [
    "ForestLearner",
    "ForestSpec",
    "NuisanceLearner",
    "RegressionForest",
    "Tree",
    "cross_fit_predict",
    "fit_forest",
    "predict_forest",
]


@dataclass(frozen=True)
class ForestSpec:
    """Forest configuration.

    ``mtry`` defaults to max(1, p // 3) at fit time when left as None.
    """

    n_trees: int = 100
    mtry: Optional[int] = None
    min_leaf: int = 5
    max_depth: Optional[int] = None
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be at least 1")


@dataclass(frozen=True)
class Tree:
    """Binary regression tree in array form.

    ``feature[i] < 0`` marks a leaf whose prediction is ``value[i]``;
    internal nodes route rows with ``x[feature] <= threshold`` left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@njit(cache=True, nogil=True)
def _walk(feature, threshold, left, right, value, x, out):
    n = x.shape[0]
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@dataclass(frozen=True)
class RegressionForest:
    """Fitted forest: prediction is the mean of per-tree leaf means."""

    trees: tuple[Tree, ...]
    spec: ForestSpec
    feature_count: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict_forest(self, x)


def _extract_tree(estimator) -> Tree:
    t = estimator.tree_
    feature = np.asarray(t.feature, dtype=np.int64)
    return Tree(
        feature=feature,
        threshold=np.asarray(t.threshold, dtype=np.float64),
        left=np.asarray(t.children_left, dtype=np.int64),
        right=np.asarray(t.children_right, dtype=np.int64),
        value=np.asarray(t.value[:, 0, 0], dtype=np.float64),
    )


def fit_forest(x: np.ndarray, y: np.ndarray, spec: ForestSpec, threads: int = 1) -> RegressionForest:
    """Grow a seeded regression forest on (x, y).

    Results are a pure function of (x, y, spec); ``threads`` only controls
    how many workers grow trees.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be a 2-d matrix")
    n, p = x.shape
    if y.shape != (n,):
        raise ValueError("y length must match x rows")
    if n < 2 * spec.min_leaf:
        raise ValueError(f"need at least {2 * spec.min_leaf} rows for min_leaf={spec.min_leaf}, got {n}")
    mtry = spec.mtry if spec.mtry is not None else max(1, p // 3)
    if mtry > p:
        raise ValueError(f"mtry={mtry} exceeds feature count {p}")
    model = RandomForestRegressor(
        n_estimators=spec.n_trees,
        max_features=mtry,
        min_samples_leaf=spec.min_leaf,
        max_depth=spec.max_depth,
        bootstrap=spec.bootstrap,
        random_state=spec.seed % (2**32),
        n_jobs=threads,
    )
    model.fit(x, y)
    trees = tuple(_extract_tree(est) for est in model.estimators_)
    return RegressionForest(trees=trees, spec=replace(spec, mtry=mtry), feature_count=p)


def predict_forest(model: RegressionForest, x: np.ndarray) -> np.ndarray:
    """Average the per-tree leaf means for each row of x."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != model.feature_count:
        raise ValueError(f"x must have {model.feature_count} columns")
    out = np.zeros(x.shape[0])
    if x.shape[0] == 0:
        return out
    for tree in model.trees:
        _walk(tree.feature, tree.threshold, tree.left, tree.right, tree.value, x, out)
    return out / len(model.trees)


@runtime_checkable
class NuisanceLearner(Protocol):
    """Pluggable regression learner for nuisance functions.

    Implementations are deterministic given their seed, expose
    ``with_seed`` so cross-fitting can derive per-fold seeds, and report
    ``min_fit_rows``, the smallest training set they accept.
    """

    seed: int
    min_fit_rows: int

    def fit(self, x: np.ndarray, y: np.ndarray): ...

    def with_seed(self, seed: int) -> "NuisanceLearner": ...


@dataclass(frozen=True)
class ForestLearner:
    """NuisanceLearner backed by :func:`fit_forest`."""

    spec: ForestSpec = ForestSpec()
    threads: int = 1

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def min_fit_rows(self) -> int:
        return 2 * self.spec.min_leaf

    def fit(self, x: np.ndarray, y: np.ndarray) -> RegressionForest:
        return fit_forest(x, y, self.spec, threads=self.threads)

    def with_seed(self, seed: int) -> "ForestLearner":
        return ForestLearner(spec=replace(self.spec, seed=seed), threads=self.threads)


def cross_fit_predict(
    d: Dataset,
    target: np.ndarray,
    plan: FoldPlan,
    learner: NuisanceLearner,
) -> np.ndarray:
    """Out-of-fold predictions of ``target`` from covariates.

    For each fold the learner is trained on the fold's complement (seeded by
    ``derive_seed(learner.seed, fold)``) and predicts the held-out rows, so
    predictions in a fold depend only on data outside it.
    """
    target = np.asarray(target, dtype=np.float64)
    if plan.n != d.n or target.shape != (d.n,):
        raise ValueError("plan and target must cover the dataset")
    out = np.empty(d.n)
    min_rows = getattr(learner, "min_fit_rows", 1)
    for k in range(plan.k):
        held = plan.assignment == k
        rest = ~held
        if int(rest.sum()) < min_rows:
            raise ValueError(
                f"fold {k}: complement has {int(rest.sum())} rows, learner needs {min_rows}"
            )
        model = learner.with_seed(derive_seed(learner.seed, k)).fit(d.x[rest], target[rest])
        out[held] = model.predict(d.x[held])
    return out
