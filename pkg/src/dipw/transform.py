"""Pseudo-outcome construction: IPW weights, denoising, and AIPW.

The weight W = (T - p(X)) / (p(X)(1 - p(X))) turns the outcome into an
unbiased signal of the conditional treatment effect: E[YW | X] = tau(X).
The denoising step projects YW on (W, B(X)W) by least squares and keeps the
residual, which has the same conditional mean but strictly smaller variance
whenever B carries outcome information; with the optimal
B*(x) = (1 - p(x)) mu1(x) + p(x) mu0(x) the residual coincides with the
AIPW (doubly robust) transformation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, FoldPlan

__all__ = [
    "DegenerateDenoiseError",
    "DenoisingDiagnostics",
    "PseudoOutcomeSet",
    "aipw_transform",
    "b_star",
    "clip_to_outcome_range",
    "denoise",
    "ipw_transform",
    "ipw_weight",
    "noise_decomposition_check",
]


class DegenerateDenoiseError(ValueError):
    """The denoising regressors (W, BW) are numerically collinear."""


@dataclass(frozen=True)
class PseudoOutcomeSet:
    """Per-unit transformed outcomes, raw and (optionally) denoised.

    ``denoised = raw - alpha[0]*w - alpha[1]*b_hat*w`` holds exactly when
    denoising has been applied; the denoised fields are None before that.
    """

    w: np.ndarray
    raw: np.ndarray
    denoised: Optional[np.ndarray] = None
    b_hat: Optional[np.ndarray] = None
    alpha: Optional[tuple[float, float]] = None
    fold_plan: Optional[FoldPlan] = None
    r_squared: Optional[float] = None


@dataclass(frozen=True)
class DenoisingDiagnostics:
    """How much the denoising step bought on a fitted model.

    sigma_e is the sample sd of (raw pseudo-outcome - fitted effect),
    sigma_u the same for the denoised pseudo-outcome; r_squared is the
    denoising regression's share of the raw pseudo-outcome's (uncentered)
    sum of squares. ``lambda_raw`` holds the cross-validated penalty of a
    non-denoised fit, ``lambda_denoised`` that of a denoised fit; each model
    populates its own slot.
    """

    sigma_e: Optional[float] = None
    sigma_u: Optional[float] = None
    r_squared: Optional[float] = None
    lambda_raw: Optional[float] = None
    lambda_denoised: Optional[float] = None


def ipw_weight(t, p):
    """W = (t - p) / (p(1 - p)); equals 1/p for treated, -1/(1-p) for control.

    Accepts scalars or arrays; propensities must lie strictly inside (0, 1)
    and treatments in {0, 1}.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    p_arr = np.asarray(p, dtype=np.float64)
    if not np.isin(t_arr, (0.0, 1.0)).all():
        raise ValueError("treatment indicator must be 0 or 1")
    if not ((p_arr > 0.0) & (p_arr < 1.0)).all():
        raise ValueError("propensity must lie strictly inside (0, 1)")
    w = (t_arr - p_arr) / (p_arr * (1.0 - p_arr))
    return float(w) if np.ndim(t) == 0 and np.ndim(p) == 0 else w


def ipw_transform(d: Dataset) -> PseudoOutcomeSet:
    """Raw pseudo-outcomes YW, with E[YW | X] = tau(X)."""
    w = ipw_weight(d.t, d.propensity)
    return PseudoOutcomeSet(w=w, raw=d.y * w)


def b_star(p, mu1, mu0):
    """Variance-optimal denoiser B*(x) = (1 - p(x)) mu1(x) + p(x) mu0(x)."""
    p_arr = np.asarray(p, dtype=np.float64)
    if not ((p_arr > 0.0) & (p_arr < 1.0)).all():
        raise ValueError("propensity must lie strictly inside (0, 1)")
    out = (1.0 - p_arr) * np.asarray(mu1, dtype=np.float64) + p_arr * np.asarray(mu0, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out


def clip_to_outcome_range(values: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamp nuisance predictions to [min(y), max(y)].

    Guards against pathological learner extrapolation without touching
    well-behaved predictions.
    """
    return np.clip(np.asarray(values, dtype=np.float64), np.min(y), np.max(y))


def denoise(d: Dataset, b_hat: np.ndarray, plan: Optional[FoldPlan] = None) -> PseudoOutcomeSet:
    """Regress YW on (W, B_hat(X)W) and keep the residual (the OLS one).

    b_hat values are clipped to the observed outcome range before use. The
    regression carries no intercept beyond the alpha_1 * W term, matching
    its population definition. R-squared is 1 - SSR/SST with the uncentered
    SST, which is the natural choice for a no-intercept projection and keeps
    the value in [0, 1]; an identically-zero raw pseudo-outcome returns 0.

    Raises:
        DegenerateDenoiseError: W and B_hat*W are numerically collinear
            (e.g. a constant b_hat); pick a more informative B.
    """
    b_hat = np.asarray(b_hat, dtype=np.float64)
    if b_hat.shape != (d.n,):
        raise ValueError("b_hat length must match the dataset")
    if not np.isfinite(b_hat).all():
        raise ValueError("b_hat must be finite")
    w = ipw_weight(d.t, d.propensity)
    raw = d.y * w
    b_clipped = clip_to_outcome_range(b_hat, d.y)

    sst = float(raw @ raw)
    if sst == 0.0:
        return PseudoOutcomeSet(
            w=w, raw=raw, denoised=raw.copy(), b_hat=b_clipped,
            alpha=(0.0, 0.0), fold_plan=plan, r_squared=0.0,
        )

    z = np.column_stack([w, b_clipped * w])
    gram = z.T @ z
    # Relative det threshold: exact collinearity gives det == 0.
    scale = gram[0, 0] * gram[1, 1]
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
    if scale == 0.0 or abs(det) <= 1e-12 * scale:
        raise DegenerateDenoiseError(
            "W and B(X)W are numerically collinear (is b_hat constant?); "
            "denoising needs a B that varies with X"
        )
    alpha = np.linalg.solve(gram, z.T @ raw)
    denoised = raw - alpha[0] * w - alpha[1] * b_clipped * w
    ssr = float(denoised @ denoised)
    r_squared = min(max(1.0 - ssr / sst, 0.0), 1.0)
    return PseudoOutcomeSet(
        w=w, raw=raw, denoised=denoised, b_hat=b_clipped,
        alpha=(float(alpha[0]), float(alpha[1])), fold_plan=plan, r_squared=r_squared,
    )


def aipw_transform(d: Dataset, mu1_hat: np.ndarray, mu0_hat: np.ndarray) -> np.ndarray:
    """Doubly robust pseudo-outcome T(Y-mu1)/p - (1-T)(Y-mu0)/(1-p) + mu1 - mu0.

    Identical, unit by unit, to YW - B*(X)W with B* built from the same
    outcome regressions.
    """
    mu1 = np.asarray(mu1_hat, dtype=np.float64)
    mu0 = np.asarray(mu0_hat, dtype=np.float64)
    if mu1.shape != (d.n,) or mu0.shape != (d.n,):
        raise ValueError("prediction vectors must match the dataset length")
    t = d.t.astype(np.float64)
    p = d.propensity
    return t * (d.y - mu1) / p - (1.0 - t) * (d.y - mu0) / (1.0 - p) + mu1 - mu0


def noise_decomposition_check(
    d: Dataset, y0: Optional[np.ndarray] = None, y1: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Split YW into effect signal and pure noise (simulation-only).

    YW = (Y(1) - Y(0)) T W + Y(0) W, where the second term has conditional
    mean zero. Requires the potential outcomes, so this only runs on
    simulated data; the reconstruction signal + noise == YW is exact because
    the signal is computed as the difference.

    Returns:
        (signal, noise) per-unit vectors.
    """
    if y0 is None or y1 is None:
        raise ValueError(
            "noise decomposition requires potential outcomes (simulation mode); "
            "y0 and y1 were not provided"
        )
    y0 = np.asarray(y0, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    if y0.shape != (d.n,) or y1.shape != (d.n,):
        raise ValueError("potential outcome vectors must match the dataset length")
    w = ipw_weight(d.t, d.propensity)
    raw = d.y * w
    noise = y0 * w
    signal = raw - noise
    return signal, noise
