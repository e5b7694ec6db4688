"""Weak-signal simulation design and the replication harness.

The design draws 50 covariates (X1..X30 uniform on (0, 1), X31..X50
standard normal), assigns treatment by a fair coin with known probability,
and builds

    Y = b(X) + T * tau(X) + noise,      noise ~ N(0, noise_sd^2),
    tau(X) = 0.5 (X1 + X2) + X4 + X32 / 3 + 2 X40,
    b(X)   = m * { sin(pi X1 X2) + 2 (X3 - 0.5)^2 + X4 + 0.5 X5
                   + log(1 + exp(S)) + max(0, S) / 2 + max(0, X34 + X35) / 2 },
    S      = X31 + X32 + X33,

with multiplier m = 5 by default. The softplus/ReLU tail enters at half
weight (as in the Nie-Wager setups this design extends): that calibration
puts the treatment effect at roughly 3.5% of the outcome variance at the
default multiplier, the weak-signal regime the study targets. At full
weight the share drops to about 1%, which matches neither the documented
design nor its error tables.

Randomness: PCG64 streams seeded through ``derive_seed``; normal variates
come from the inverse normal CDF applied to PCG64 uniforms, so every draw
is a pure function of the seeds for a fixed numpy version. Draw order per
sample: covariate uniforms, covariate normals, treatment uniforms, noise
uniforms.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .data import Dataset
from .estimators import (
    CateModel,
    EstimatorConfig,
    fit_dipw_algo1,
    fit_dipw_algo2,
    fit_dr,
    fit_ipw,
    fit_t_learner,
)
from .evaluation import rmse_cate, uplift_curve
from .seeding import derive_seed, generator

__all__ = [
    "DgpSpec",
    "METHODS",
    "ReplicateResult",
    "ReplicationReport",
    "SimulatedSample",
    "baseline_outcome",
    "generate",
    "null_dgp",
    "run_replications",
    "treatment_effect",
]

REPORT_FORMAT_VERSION = 1

_ROLE_DGP = 0
_ROLE_ESTIMATOR = 1
_KEY_TRAIN = 0
_KEY_TEST = 1

METHODS = {
    "dipw": fit_dipw_algo1,
    "dipw-algo1": fit_dipw_algo1,
    "dipw-algo2": fit_dipw_algo2,
    "ipw": fit_ipw,
    "dr": fit_dr,
    "t-learner": fit_t_learner,
}

_METRICS = ("rmse", "auuc", "lambda", "r_squared", "sigma_e", "sigma_u")


@dataclass(frozen=True)
class DgpSpec:
    """Simulation knobs; defaults reproduce the reference study design."""

    n_train: int = 1000
    n_test: int = 10000
    p_treat: float = 0.5
    b_multiplier: float = 5.0
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample sizes must be positive")
        if not (0.0 < self.p_treat < 1.0):
            raise ValueError(f"p_treat must lie in (0, 1), got {self.p_treat}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")


@dataclass(frozen=True)
class SimulatedSample:
    """A drawn sample plus the quantities only a simulation can know."""

    data: Dataset
    tau: np.ndarray
    y0: np.ndarray
    y1: np.ndarray


def treatment_effect(x: np.ndarray) -> np.ndarray:
    """tau(X) = 0.5 (X1 + X2) + X4 + X32 / 3 + 2 X40 (1-based indices)."""
    return 0.5 * (x[:, 0] + x[:, 1]) + x[:, 3] + x[:, 31] / 3.0 + 2.0 * x[:, 39]


def baseline_outcome(x: np.ndarray, multiplier: float = 5.0) -> np.ndarray:
    """Baseline b(X) with the softplus/ReLU tail at half weight."""
    s = x[:, 30] + x[:, 31] + x[:, 32]
    return multiplier * (
        np.sin(np.pi * x[:, 0] * x[:, 1])
        + 2.0 * (x[:, 2] - 0.5) ** 2
        + x[:, 3]
        + 0.5 * x[:, 4]
        + np.logaddexp(0.0, s)
        + 0.5 * np.maximum(0.0, s)
        + 0.5 * np.maximum(0.0, x[:, 33] + x[:, 34])
    )


_COLUMN_NAMES = tuple(f"x{j}" for j in range(1, 51))


def _draw(spec: DgpSpec, n: int, seed: int, null_effect: bool) -> SimulatedSample:
    rng = generator(seed)
    x = np.empty((n, 50))
    x[:, :30] = rng.random((n, 30))
    x[:, 30:] = ndtri(rng.random((n, 20)))
    t = (rng.random(n) < spec.p_treat).astype(np.int64)
    noise = spec.noise_sd * ndtri(rng.random(n))
    tau = np.zeros(n) if null_effect else treatment_effect(x)
    b = baseline_outcome(x, spec.b_multiplier)
    y0 = b + noise
    y1 = b + tau + noise
    y = np.where(t == 1, y1, y0)
    data = Dataset(
        y=y, t=t, propensity=np.full(n, spec.p_treat), x=x, column_names=_COLUMN_NAMES
    )
    return SimulatedSample(data=data, tau=tau, y0=y0, y1=y1)


def generate(spec: DgpSpec) -> tuple[SimulatedSample, SimulatedSample]:
    """Seed-deterministic (train, test) draw from the design."""
    train = _draw(spec, spec.n_train, derive_seed(spec.seed, _KEY_TRAIN), False)
    test = _draw(spec, spec.n_test, derive_seed(spec.seed, _KEY_TEST), False)
    return train, test


def null_dgp(spec: DgpSpec) -> tuple[SimulatedSample, SimulatedSample]:
    """Same draw as :func:`generate` but with the effect forced to zero."""
    train = _draw(spec, spec.n_train, derive_seed(spec.seed, _KEY_TRAIN), True)
    test = _draw(spec, spec.n_test, derive_seed(spec.seed, _KEY_TEST), True)
    return train, test


@dataclass(frozen=True)
class ReplicateResult:
    """One (replicate, method) cell of a replication study."""

    replicate: int
    method: str
    rmse: Optional[float] = None
    auuc: Optional[float] = None
    chosen_lambda: Optional[float] = None
    r_squared: Optional[float] = None
    sigma_e: Optional[float] = None
    sigma_u: Optional[float] = None
    error: Optional[str] = None

    def metric(self, name: str) -> Optional[float]:
        return {
            "rmse": self.rmse,
            "auuc": self.auuc,
            "lambda": self.chosen_lambda,
            "r_squared": self.r_squared,
            "sigma_e": self.sigma_e,
            "sigma_u": self.sigma_u,
        }[name]


@dataclass(frozen=True)
class ReplicationReport:
    """All per-cell results of a study, plus the configuration that made them."""

    spec: DgpSpec
    methods: tuple[str, ...]
    n_reps: int
    master_seed: int
    results: tuple[ReplicateResult, ...]

    def cells(self, method: str) -> list[ReplicateResult]:
        return [r for r in self.results if r.method == method]

    def metric_values(self, method: str, metric: str) -> np.ndarray:
        vals = [r.metric(metric) for r in self.cells(method) if r.metric(metric) is not None]
        return np.asarray(vals, dtype=np.float64)

    def summary(self) -> dict:
        out: dict = {}
        for method in self.methods:
            entry: dict = {"errors": sum(1 for r in self.cells(method) if r.error)}
            for metric in _METRICS:
                vals = self.metric_values(method, metric)
                if vals.size == 0:
                    continue
                q25, q75 = np.quantile(vals, [0.25, 0.75])
                entry[metric] = {
                    "mean": float(vals.mean()),
                    "median": float(np.median(vals)),
                    "iqr": float(q75 - q25),
                    "count": int(vals.size),
                }
            out[method] = entry
        return out

    def to_json(self, path: str | Path) -> None:
        doc = {
            "format_version": REPORT_FORMAT_VERSION,
            "spec": asdict(self.spec),
            "methods": list(self.methods),
            "n_reps": self.n_reps,
            "master_seed": self.master_seed,
            "numpy_version": np.__version__,
            "results": [
                {k: v for k, v in asdict(r).items() if v is not None} for r in self.results
            ],
            "summary": self.summary(),
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    def to_csv(self, path: str | Path) -> None:
        """Tidy long format: replicate, method, metric, value."""
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["replicate", "method", "metric", "value"])
            for r in self.results:
                for metric in _METRICS:
                    value = r.metric(metric)
                    writer.writerow(
                        [r.replicate, r.method, metric, "" if value is None else repr(value)]
                    )


def _evaluate_fit(model: CateModel, test: SimulatedSample) -> dict:
    curve = uplift_curve(model.predict(test.data.x), test.data.y, test.data.t)
    out = {
        "rmse": rmse_cate(model, test.data.x, test.tau),
        "auuc": curve.auuc,
    }
    d = model.diagnostics
    if d is not None:
        out["chosen_lambda"] = d.lambda_denoised if d.lambda_denoised is not None else d.lambda_raw
        out["r_squared"] = d.r_squared
        out["sigma_e"] = d.sigma_e
        out["sigma_u"] = d.sigma_u
    return out


def _run_one(spec: DgpSpec, methods: Sequence[str], base: EstimatorConfig,
             master_seed: int, rep: int) -> list[ReplicateResult]:
    dgp = replace(spec, seed=derive_seed(master_seed, _ROLE_DGP, rep))
    train, test = generate(dgp)
    cfg = replace(base, seed=derive_seed(master_seed, _ROLE_ESTIMATOR, rep))
    rows = []
    for method in methods:
        try:
            model = METHODS[method](train.data, cfg)
            rows.append(ReplicateResult(replicate=rep, method=method, **_evaluate_fit(model, test)))
        except Exception as exc:  # recorded per cell; the study continues
            rows.append(ReplicateResult(replicate=rep, method=method, error=str(exc)))
    return rows


def run_replications(
    spec: DgpSpec,
    methods: Sequence[str],
    n_reps: int,
    master_seed: int,
    *,
    base_config: Optional[EstimatorConfig] = None,
    threads: int = 1,
) -> ReplicationReport:
    """Repeatedly draw, fit, and score every method on fresh data.

    Replicate r draws its data with seed ``derive_seed(master_seed, 0, r)``
    and fits with estimator seed ``derive_seed(master_seed, 1, r)``, so the
    report is a pure function of (spec, methods, n_reps, master_seed) no
    matter how many worker threads run replicates.

    A method failure on one replicate is recorded in that cell's ``error``
    and the study continues.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}; known: {sorted(METHODS)}")
    base = base_config if base_config is not None else EstimatorConfig()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(
                pool.map(
                    lambda rep: _run_one(spec, methods, base, master_seed, rep),
                    range(n_reps),
                )
            )
    else:
        chunks = [_run_one(spec, methods, base, master_seed, rep) for rep in range(n_reps)]
    results = tuple(row for chunk in chunks for row in chunk)
    return ReplicationReport(
        spec=spec,
        methods=tuple(methods),
        n_reps=n_reps,
        master_seed=master_seed,
        results=results,
    )
