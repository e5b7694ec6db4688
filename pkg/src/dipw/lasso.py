"""Coordinate-descent solver for L1-penalized least squares.

Solves

    min over (a, theta)   (1/2n) ||y - a*1 - D theta||^2 + lam * sum_j|theta_j|
                          over penalized j only,

where any subset of design columns can be declared unpenalized (they are
minimized exactly, like the intercept). The solver runs cyclic coordinate
descent with soft-thresholding on penalized coordinates, covariance-style
updates on the Gram matrix, active-set sweeps after each full cycle, and a
final stationarity check: a fit is reported converged only when every
coordinate's KKT residual is within half the documented 10x-tolerance bound.

``cv_lasso`` adds the geometric penalty grid and seeded k-fold
cross-validation used by the estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .data import make_folds

__all__ = [
    "CvRecord",
    "PenaltySpec",
    "SparseLinearFit",
    "cv_lasso",
    "fit_lasso",
    "lambda_max",
    "lambda_path",
    "penalized_objective",
]


@dataclass(frozen=True)
class PenaltySpec:
    """Grid, cross-validation, and convergence settings for the Lasso."""

    grid_size: int = 100
    lambda_min_ratio: float = 1e-3
    cv_folds: int = 10
    selection_rule: str = "min-mse"
    tolerance: float = 1e-7
    max_iterations: int = 100_000

    def __post_init__(self) -> None:
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if not (0.0 < self.lambda_min_ratio < 1.0):
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.selection_rule not in ("min-mse", "one-se"):
            raise ValueError(f"unknown selection_rule: {self.selection_rule!r}")
        if not (self.tolerance > 0):
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class CvRecord:
    """Per-lambda validation MSE summary from seeded k-fold CV."""

    lambdas: np.ndarray
    mean_mse: np.ndarray
    se_mse: np.ndarray
    folds: int
    seed: int
    selected_index: int


@dataclass(frozen=True)
class SparseLinearFit:
    """Solution of the penalized problem on a given design.

    ``coef`` is aligned with the design columns as passed by the caller;
    ``beta`` and ``unpenalized_coefs`` are the penalized and unpenalized
    sub-vectors of it. ``path_*`` hold the full-data regularization path
    (a single entry for a plain ``fit_lasso`` call).
    """

    coef: np.ndarray
    intercept: float
    lam: float
    penalized_mask: np.ndarray
    converged: bool
    iterations: int
    path_lambdas: np.ndarray
    path_coefs: np.ndarray
    path_intercepts: np.ndarray
    cv: Optional[CvRecord] = None

    @property
    def beta(self) -> np.ndarray:
        return self.coef[self.penalized_mask]

    @property
    def unpenalized_coefs(self) -> np.ndarray:
        return self.coef[~self.penalized_mask]

    def predict(self, design: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(design, dtype=np.float64) @ self.coef


def penalized_objective(
    design: np.ndarray,
    response: np.ndarray,
    penalized_mask: np.ndarray,
    coef: np.ndarray,
    intercept: float,
    lam: float,
) -> float:
    """(1/2n)||y - a - D theta||^2 + lam * ||theta_penalized||_1."""
    r = response - intercept - design @ coef
    n = response.shape[0]
    return float(r @ r / (2.0 * n) + lam * np.abs(coef[penalized_mask]).sum())


@njit(cache=True, nogil=True)
def _cd_gram(gram, lin, sq, penalized, lam, coef, tol, max_sweeps, kkt_tol):
    """Cyclic coordinate descent on precomputed moments.

    gram = D'D/n, lin = D'y/n, sq = diag(gram). coef is updated in place.
    Returns (sweeps, converged, kkt_violation).
    """
    m = lin.shape[0]
    grad = np.empty(m)

    sweeps = 0
    converged = False
    kkt = np.inf
    while sweeps < max_sweeps:
        # Full cycle over every coordinate.
        maxd = 0.0
        for j in range(m):
            if sq[j] <= 0.0:
                continue
            gj = lin[j]
            for k in range(m):
                gj -= gram[j, k] * coef[k]
            rho = gj + sq[j] * coef[j]
            if penalized[j]:
                if rho > lam:
                    new = (rho - lam) / sq[j]
                elif rho < -lam:
                    new = (rho + lam) / sq[j]
                else:
                    new = 0.0
            else:
                new = rho / sq[j]
            d = new - coef[j]
            if d != 0.0:
                coef[j] = new
                ad = abs(d)
                if ad > maxd:
                    maxd = ad
        sweeps += 1
        if maxd < tol:
            # Stationarity check against the subgradient conditions.
            kkt = 0.0
            for j in range(m):
                if sq[j] <= 0.0:
                    continue
                gj = lin[j]
                for k in range(m):
                    gj -= gram[j, k] * coef[k]
                if not penalized[j]:
                    v = abs(gj)
                elif coef[j] > 0.0:
                    v = abs(gj - lam)
                elif coef[j] < 0.0:
                    v = abs(gj + lam)
                else:
                    v = abs(gj) - lam
                    if v < 0.0:
                        v = 0.0
                if v > kkt:
                    kkt = v
            if kkt <= kkt_tol:
                converged = True
                break
            continue
        # Active-set cycles: only unpenalized or currently nonzero coords.
        while sweeps < max_sweeps:
            maxd = 0.0
            for j in range(m):
                if sq[j] <= 0.0 or (penalized[j] and coef[j] == 0.0):
                    continue
                gj = lin[j]
                for k in range(m):
                    gj -= gram[j, k] * coef[k]
                rho = gj + sq[j] * coef[j]
                if penalized[j]:
                    if rho > lam:
                        new = (rho - lam) / sq[j]
                    elif rho < -lam:
                        new = (rho + lam) / sq[j]
                    else:
                        new = 0.0
                else:
                    new = rho / sq[j]
                d = new - coef[j]
                if d != 0.0:
                    coef[j] = new
                    ad = abs(d)
                    if ad > maxd:
                        maxd = ad
            sweeps += 1
            if maxd < tol:
                break
    return sweeps, converged, kkt


def _validate_problem(design, response, penalized_mask):
    design = np.asarray(design, dtype=np.float64)
    response = np.asarray(response, dtype=np.float64)
    mask = np.asarray(penalized_mask, dtype=bool)
    if design.ndim != 2:
        raise ValueError("design must be a 2-d matrix")
    n, m = design.shape
    if n < 1:
        raise ValueError("design needs at least one row")
    if response.shape != (n,):
        raise ValueError("response length must match design rows")
    if mask.shape != (m,):
        raise ValueError("penalized_mask length must match design columns")
    if not np.isfinite(design).all() or not np.isfinite(response).all():
        raise ValueError("design and response must be finite")
    return design, response, mask


def _augment(design, mask, include_intercept):
    """Prepend the intercept column; return (full design, full mask)."""
    if not include_intercept:
        return design, mask
    n = design.shape[0]
    full = np.hstack([np.ones((n, 1)), design])
    full_mask = np.concatenate([[False], mask])
    return full, full_mask


def lambda_max(
    design: np.ndarray,
    response: np.ndarray,
    penalized_mask: np.ndarray,
    *,
    include_intercept: bool = True,
) -> float:
    """Smallest penalty that zeroes every penalized coefficient.

    Equals max over penalized columns of |<column, response residualized on
    the unpenalized columns (and intercept)>| / n.
    """
    design, response, mask = _validate_problem(design, response, penalized_mask)
    if not mask.any():
        raise ValueError("no penalized columns: lambda_max is undefined")
    full, full_mask = _augment(design, mask, include_intercept)
    resid = _residualize_on_unpenalized(full, full_mask, response)
    n = response.shape[0]
    return float(np.max(np.abs(full[:, full_mask].T @ resid)) / n)


def _residualize_on_unpenalized(full, full_mask, response):
    u = full[:, ~full_mask]
    if u.shape[1] == 0:
        return response
    coef, *_ = np.linalg.lstsq(u, response, rcond=None)
    return response - u @ coef


def lambda_path(
    design: np.ndarray,
    response: np.ndarray,
    penalized_mask: np.ndarray,
    spec: PenaltySpec,
    *,
    include_intercept: bool = True,
) -> np.ndarray:
    """Strictly decreasing geometric grid from lambda_max down.

    Raises:
        ValueError: no penalized columns, or lambda_max = 0 (the response is
            orthogonal to every penalized column and the path is degenerate).
    """
    lam_max = lambda_max(design, response, penalized_mask, include_intercept=include_intercept)
    n = design.shape[0]
    rms_response = float(np.sqrt(np.mean(np.asarray(response, dtype=np.float64) ** 2)))
    rms_columns = float(np.sqrt(np.max(np.mean(np.asarray(design, dtype=np.float64) ** 2, axis=0))))
    if lam_max <= 1e-12 * max(rms_response * rms_columns, np.finfo(float).tiny):
        raise ValueError("degenerate path: response is orthogonal to all penalized columns")
    exponents = np.linspace(0.0, np.log(spec.lambda_min_ratio), spec.grid_size)
    return lam_max * np.exp(exponents)


def _solve_at_lambda_max(full, full_mask, response):
    """Closed-form solution whenever lam >= lambda_max: restricted OLS.

    Unpenalized columns take their exact least-squares values and every
    penalized coefficient is exactly zero; solving this branch directly
    removes last-ulp ambiguity when lam equals lambda_max.
    """
    coef = np.zeros(full.shape[1])
    u_idx = np.flatnonzero(~full_mask)
    if u_idx.size:
        sol, *_ = np.linalg.lstsq(full[:, u_idx], response, rcond=None)
        coef[u_idx] = sol
    return coef


def fit_lasso(
    design: np.ndarray,
    response: np.ndarray,
    penalized_mask: np.ndarray,
    lam: float,
    warm_start: Optional[np.ndarray] = None,
    *,
    include_intercept: bool = True,
    tolerance: float = 1e-7,
    max_iterations: int = 100_000,
) -> SparseLinearFit:
    """Solve the penalized problem at a single penalty level.

    Args:
        design: n x m matrix, used exactly as given (standardize upstream
            if unit-free penalties are wanted).
        response: length-n vector.
        penalized_mask: which of the m columns carry the L1 penalty.
        lam: penalty level, >= 0.
        warm_start: optional length-m starting coefficients.
        include_intercept: add an always-unpenalized intercept coordinate.

    Non-convergence within ``max_iterations`` sweeps is flagged on the
    result, not raised.
    """
    design, response, mask = _validate_problem(design, response, penalized_mask)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    full, full_mask = _augment(design, mask, include_intercept)
    m = full.shape[1]

    if mask.any():
        lam_ceiling = lambda_max(design, response, mask, include_intercept=include_intercept)
    else:
        lam_ceiling = 0.0
    if lam >= lam_ceiling and (lam > 0.0 or not mask.any()):
        coef_full = _solve_at_lambda_max(full, full_mask, response)
        sweeps, converged = 0, True
    else:
        coef_full = np.zeros(m)
        if warm_start is not None:
            ws = np.asarray(warm_start, dtype=np.float64)
            if ws.shape != (design.shape[1],):
                raise ValueError("warm_start length must match design columns")
            offset = 1 if include_intercept else 0
            coef_full[offset:] = ws
            if include_intercept:
                coef_full[0] = float(np.mean(response - design @ ws))
        gram, lin, sq = _moments(full, response)
        sweeps, converged, _ = _cd_gram(
            gram, lin, sq, full_mask, float(lam), coef_full,
            float(tolerance), int(max_iterations), 5.0 * float(tolerance),
        )
    return _build_fit(coef_full, mask, float(lam), include_intercept, bool(converged), int(sweeps))


def _moments(full: np.ndarray, response: np.ndarray):
    n = full.shape[0]
    gram = np.ascontiguousarray(full.T @ full / n)
    lin = full.T @ response / n
    return gram, lin, np.ascontiguousarray(np.diag(gram))


def _build_fit(coef_full, mask, lam, include_intercept, converged, sweeps, path=None, cv=None):
    if include_intercept:
        intercept, coef = float(coef_full[0]), coef_full[1:].copy()
    else:
        intercept, coef = 0.0, coef_full.copy()
    if path is None:
        path_lambdas = np.array([lam])
        path_coefs = coef[None, :].copy()
        path_intercepts = np.array([intercept])
    else:
        path_lambdas, path_coefs, path_intercepts = path
    return SparseLinearFit(
        coef=coef,
        intercept=intercept,
        lam=lam,
        penalized_mask=mask,
        converged=converged,
        iterations=sweeps,
        path_lambdas=path_lambdas,
        path_coefs=path_coefs,
        path_intercepts=path_intercepts,
        cv=cv,
    )


def _path_solve(full, full_mask, response, lams, tolerance, max_iterations,
                first_is_lambda_max=False):
    """Warm-started solves down a decreasing grid; returns coefs and flags.

    ``first_is_lambda_max`` marks grids whose first point is this design's
    own lambda_max, where the solution is the restricted OLS with exact
    zeros elsewhere; cross-validation folds reuse the full-data grid, so
    their first point must be solved like any other.
    """
    m = full.shape[1]
    gram, lin, sq = _moments(full, response)
    coef = np.zeros(m)
    coefs = np.empty((lams.shape[0], m))
    sweeps = np.zeros(lams.shape[0], dtype=np.int64)
    converged = np.zeros(lams.shape[0], dtype=bool)
    kkt_tol = 5.0 * tolerance
    for i, lam in enumerate(lams):
        if i == 0 and first_is_lambda_max:
            coef[:] = _solve_at_lambda_max(full, full_mask, response)
            converged[i] = True
        else:
            s, c, _ = _cd_gram(
                gram, lin, sq, full_mask, float(lam), coef,
                tolerance, max_iterations, kkt_tol,
            )
            sweeps[i], converged[i] = s, c
        coefs[i] = coef
    return coefs, sweeps, converged


def cv_lasso(
    design: np.ndarray,
    response: np.ndarray,
    penalized_mask: np.ndarray,
    spec: PenaltySpec,
    seed: int,
    *,
    include_intercept: bool = True,
) -> SparseLinearFit:
    """Select the penalty by seeded k-fold cross-validation and refit.

    The grid is shared across folds; each fold fits the whole path with warm
    starts, validation MSE is averaged per lambda, and the penalty is chosen
    by ``spec.selection_rule`` ("min-mse", ties toward the larger lambda, or
    "one-se"). The returned fit carries the full-data path and the CV record.
    """
    design, response, mask = _validate_problem(design, response, penalized_mask)
    n = design.shape[0]
    if n < spec.cv_folds:
        raise ValueError(f"need at least cv_folds={spec.cv_folds} rows, got {n}")
    lams = lambda_path(design, response, mask, spec, include_intercept=include_intercept)
    full, full_mask = _augment(design, mask, include_intercept)

    plan = make_folds(n, spec.cv_folds, seed)
    mse = np.empty((spec.cv_folds, lams.shape[0]))
    for k in range(spec.cv_folds):
        train = plan.assignment != k
        val = ~train
        coefs, _, _ = _path_solve(
            np.asarray(full[train], order="C"), full_mask, response[train],
            lams, spec.tolerance, spec.max_iterations,
        )
        preds = full[val] @ coefs.T
        mse[k] = np.mean((response[val][:, None] - preds) ** 2, axis=0)

    mean_mse = mse.mean(axis=0)
    se_mse = mse.std(axis=0, ddof=1) / np.sqrt(spec.cv_folds)
    best = int(np.argmin(mean_mse))  # first index = largest lambda on ties
    if spec.selection_rule == "one-se":
        threshold = mean_mse[best] + se_mse[best]
        best = int(np.flatnonzero(mean_mse <= threshold)[0])
    cv = CvRecord(
        lambdas=lams, mean_mse=mean_mse, se_mse=se_mse,
        folds=spec.cv_folds, seed=seed, selected_index=best,
    )

    coefs, sweeps, converged = _path_solve(
        full, full_mask, response, lams, spec.tolerance, spec.max_iterations,
        first_is_lambda_max=True,
    )
    path = (
        lams,
        coefs[:, 1:].copy() if include_intercept else coefs.copy(),
        coefs[:, 0].copy() if include_intercept else np.zeros(lams.shape[0]),
    )
    return _build_fit(
        coefs[best].copy(), mask, float(lams[best]), include_intercept,
        bool(converged[: best + 1].all()), int(sweeps[: best + 1].sum()),
        path=path, cv=cv,
    )
