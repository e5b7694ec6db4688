"""CATE estimators sharing one model type.

Four fitting routines, all consuming a :class:`~dipw.data.Dataset` and an
:class:`EstimatorConfig` and returning a :class:`CateModel`:

* ``fit_dipw_algo1``: joint L1-penalized least squares of YW on
  [X | W | B_hat(X)W] with the last two columns unpenalized; B_hat is
  cross-fitted out of fold.
* ``fit_dipw_algo2``: first projects YW on (W, B_hat W) and keeps the
  residual, then runs the penalized regression of the residual on X alone.
* ``fit_ipw``: the non-denoised baseline, penalized regression of YW on X.
* ``fit_dr``: penalized regression of the AIPW pseudo-outcome built from
  cross-fitted per-arm outcome regressions (the propensity is never
  estimated; it is known by design).
* ``fit_t_learner``: difference of per-arm regression forests.

Covariates are standardized before fitting (configurable) and coefficients
are reported back in original units. All randomness derives from
``cfg.seed``: the cross-fitting fold plan uses key 0, nuisance learners
key 1 (with per-arm and per-fold subkeys), and the penalty cross-validation
key 2, so identical (data, config) always reproduce the same model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset, FoldPlan, StandardizationRecord, make_folds, standardize
from .forest import ForestLearner, ForestSpec, RegressionForest, Tree, cross_fit_predict
from .lasso import PenaltySpec, SparseLinearFit, cv_lasso
from .seeding import derive_seed
from .transform import (
    DenoisingDiagnostics,
    aipw_transform,
    b_star,
    clip_to_outcome_range,
    denoise,
    ipw_weight,
)

__all__ = [
    "CateModel",
    "EstimatorConfig",
    "MODEL_FORMAT_VERSION",
    "cross_fit_nuisance",
    "fit_dipw_algo1",
    "fit_dipw_algo2",
    "fit_dr",
    "fit_ipw",
    "fit_t_learner",
    "model_from_dict",
    "predict_cate",
]

MODEL_FORMAT_VERSION = 1

_ROLE_FOLDS = 0
_ROLE_LEARNER = 1
_ROLE_CV = 2
_ARM_TREATED = 1
_ARM_CONTROL = 2

LINEAR_KINDS = ("dipw-algo1", "dipw-algo2", "ipw", "dr")


@dataclass(frozen=True)
class EstimatorConfig:
    """Shared estimator settings.

    ``b_choice`` picks the denoising target: "pooled-mu" cross-fits the
    pooled outcome regression E[Y | X], "b-star" builds the variance-optimal
    (1-p) mu1 + p mu0 from per-arm regressions.
    """

    k_folds: int = 5
    nuisance: ForestSpec = field(default_factory=ForestSpec)
    b_choice: str = "pooled-mu"
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    seed: int = 0
    standardize: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if self.k_folds < 2:
            raise ValueError("k_folds must be at least 2")
        if self.b_choice not in ("pooled-mu", "b-star"):
            raise ValueError(f"unknown b_choice: {self.b_choice!r}")


@dataclass(frozen=True)
class CateModel:
    """Fitted treatment-effect model with provenance.

    Linear kinds satisfy predict(x) = intercept + x @ coefficients exactly
    (original covariate units); the t-learner stores two forests instead.
    """

    kind: str
    column_names: tuple[str, ...]
    coefficients: Optional[np.ndarray]
    intercept: Optional[float]
    alpha: Optional[tuple[float, float]]
    forests: Optional[tuple[RegressionForest, RegressionForest]]
    diagnostics: Optional[DenoisingDiagnostics]
    config: EstimatorConfig
    fold_plan: Optional[FoldPlan] = None
    fit: Optional[SparseLinearFit] = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict_cate(self, x)

    @property
    def chosen_lambda(self) -> Optional[float]:
        return None if self.fit is None else self.fit.lam

    def named_coefficients(self) -> dict[str, float]:
        """(variable, coefficient) mapping, intercept first."""
        if self.coefficients is None:
            raise ValueError(f"{self.kind} model has no linear coefficients")
        out = {"intercept": float(self.intercept)}
        out.update({n: float(c) for n, c in zip(self.column_names, self.coefficients)})
        return out

    def to_dict(self) -> dict:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "column_names": list(self.column_names),
            "config": _config_to_dict(self.config),
            "seed": self.config.seed,
        }
        if self.coefficients is not None:
            doc["intercept"] = float(self.intercept)
            doc["coefficients"] = {n: float(c) for n, c in zip(self.column_names, self.coefficients)}
        if self.alpha is not None:
            doc["alpha"] = [float(a) for a in self.alpha]
        if self.fit is not None:
            doc["lambda"] = float(self.fit.lam)
        if self.diagnostics is not None:
            doc["diagnostics"] = {k: v for k, v in asdict(self.diagnostics).items() if v is not None}
        if self.forests is not None:
            doc["forests"] = {
                "treated": _forest_to_dict(self.forests[0]),
                "control": _forest_to_dict(self.forests[1]),
            }
        return doc


def _config_to_dict(cfg: EstimatorConfig) -> dict:
    out = asdict(cfg)
    out.pop("threads", None)  # execution detail, not part of the statistical config
    return out


def _forest_to_dict(forest: RegressionForest) -> dict:
    return {
        "spec": asdict(forest.spec),
        "feature_count": forest.feature_count,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in forest.trees
        ],
    }


def _forest_from_dict(doc: dict) -> RegressionForest:
    trees = tuple(
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            value=np.asarray(t["value"], dtype=np.float64),
        )
        for t in doc["trees"]
    )
    return RegressionForest(
        trees=trees, spec=ForestSpec(**doc["spec"]), feature_count=int(doc["feature_count"])
    )


def model_from_dict(doc: dict) -> CateModel:
    """Rebuild a serialized model (paths and CV records are not persisted)."""
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version: {doc.get('format_version')}")
    cfg_doc = dict(doc["config"])
    cfg = EstimatorConfig(
        k_folds=cfg_doc["k_folds"],
        nuisance=ForestSpec(**cfg_doc["nuisance"]),
        b_choice=cfg_doc["b_choice"],
        penalty=PenaltySpec(**cfg_doc["penalty"]),
        seed=cfg_doc["seed"],
        standardize=cfg_doc["standardize"],
        threads=cfg_doc.get("threads", 1),
    )
    names = tuple(doc["column_names"])
    coefficients = None
    intercept = None
    if "coefficients" in doc:
        coefficients = np.asarray([doc["coefficients"][n] for n in names], dtype=np.float64)
        intercept = float(doc["intercept"])
    forests = None
    if "forests" in doc:
        forests = (
            _forest_from_dict(doc["forests"]["treated"]),
            _forest_from_dict(doc["forests"]["control"]),
        )
    diagnostics = DenoisingDiagnostics(**doc["diagnostics"]) if "diagnostics" in doc else None
    alpha = tuple(doc["alpha"]) if "alpha" in doc else None
    return CateModel(
        kind=doc["kind"],
        column_names=names,
        coefficients=coefficients,
        intercept=intercept,
        alpha=alpha,
        forests=forests,
        diagnostics=diagnostics,
        config=cfg,
    )


def predict_cate(m: CateModel, x: np.ndarray) -> np.ndarray:
    """Per-row predicted treatment effect."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != len(m.column_names):
        raise ValueError(f"x must have {len(m.column_names)} columns")
    if m.kind == "t-learner":
        treated, control = m.forests
        return treated.predict(x) - control.predict(x)
    return m.intercept + x @ m.coefficients


def _design_x(d: Dataset, cfg: EstimatorConfig) -> tuple[np.ndarray, Optional[StandardizationRecord]]:
    if not cfg.standardize:
        return d.x, None
    return standardize(d.x)


def _back_transform(beta: np.ndarray, intercept: float, record: Optional[StandardizationRecord]):
    """Map coefficients from the standardized design back to original units."""
    if record is None:
        return beta.copy(), float(intercept)
    coefficients = beta / record.scale
    return coefficients, float(intercept - coefficients @ record.mean)


def _pooled_learner(cfg: EstimatorConfig) -> ForestLearner:
    seed = derive_seed(cfg.seed, _ROLE_LEARNER)
    return ForestLearner(spec=replace(cfg.nuisance, seed=seed), threads=cfg.threads)


def _cross_fit_arm(d: Dataset, plan: FoldPlan, cfg: EstimatorConfig, arm: int) -> np.ndarray:
    """Out-of-fold predictions of E[Y | X, T=arm], trained on complement rows of that arm."""
    role = _ARM_TREATED if arm == 1 else _ARM_CONTROL
    base_seed = derive_seed(cfg.seed, _ROLE_LEARNER, role)
    learner = ForestLearner(spec=replace(cfg.nuisance, seed=base_seed), threads=cfg.threads)
    out = np.empty(d.n)
    label = "treated" if arm == 1 else "control"
    for k in range(plan.k):
        held = plan.assignment == k
        rows = (~held) & (d.t == arm)
        n_rows = int(rows.sum())
        if n_rows == 0:
            raise ValueError(f"fold {k}: complement has no {label} units")
        if n_rows < learner.min_fit_rows:
            raise ValueError(
                f"fold {k}: complement has {n_rows} {label} units, learner needs {learner.min_fit_rows}"
            )
        model = learner.with_seed(derive_seed(base_seed, k)).fit(d.x[rows], d.y[rows])
        out[held] = model.predict(d.x[held])
    return out


def cross_fit_nuisance(d: Dataset, cfg: EstimatorConfig, plan: FoldPlan) -> np.ndarray:
    """Out-of-fold B_hat per ``cfg.b_choice`` (pooled E[Y|X] or B*)."""
    if cfg.b_choice == "pooled-mu":
        return cross_fit_predict(d, d.y, plan, _pooled_learner(cfg))
    mu1 = _cross_fit_arm(d, plan, cfg, arm=1)
    mu0 = _cross_fit_arm(d, plan, cfg, arm=0)
    return b_star(d.propensity, mu1, mu0)


def _linear_model(
    d: Dataset,
    cfg: EstimatorConfig,
    kind: str,
    fit: SparseLinearFit,
    record: Optional[StandardizationRecord],
    diagnostics: Optional[DenoisingDiagnostics],
    alpha: Optional[tuple[float, float]] = None,
    plan: Optional[FoldPlan] = None,
) -> CateModel:
    beta = fit.coef[: d.p]
    coefficients, intercept = _back_transform(beta, fit.intercept, record)
    return CateModel(
        kind=kind,
        column_names=d.column_names,
        coefficients=coefficients,
        intercept=intercept,
        alpha=alpha,
        forests=None,
        diagnostics=diagnostics,
        config=cfg,
        fold_plan=plan,
        fit=fit,
    )


def fit_dipw_algo1(d: Dataset, cfg: EstimatorConfig = EstimatorConfig()) -> CateModel:
    """Denoised IPW Lasso, joint form.

    Cross-fits B_hat, then minimizes over (intercept, alpha1, alpha2, beta)

        (1/2n) sum_i (Y_i W_i - X_i' beta - a1 W_i - a2 B_hat_i W_i)^2
            + lam ||beta||_1

    with lam chosen by cross-validation; only beta is penalized, and the
    W / B_hat W columns enter unstandardized.
    """
    plan = make_folds(d.n, cfg.k_folds, derive_seed(cfg.seed, _ROLE_FOLDS))
    b_hat = cross_fit_nuisance(d, cfg, plan)
    pos = denoise(d, b_hat, plan)  # clips b_hat; alpha + R^2 for diagnostics
    xs, record = _design_x(d, cfg)
    design = np.hstack([xs, pos.w[:, None], (pos.b_hat * pos.w)[:, None]])
    mask = np.concatenate([np.ones(d.p, dtype=bool), [False, False]])
    fit = cv_lasso(design, pos.raw, mask, cfg.penalty, derive_seed(cfg.seed, _ROLE_CV))
    alpha = (float(fit.coef[d.p]), float(fit.coef[d.p + 1]))
    tau_hat = fit.intercept + xs @ fit.coef[: d.p]
    joint_denoised = pos.raw - alpha[0] * pos.w - alpha[1] * pos.b_hat * pos.w
    diagnostics = DenoisingDiagnostics(
        sigma_e=float(np.std(pos.raw - tau_hat)),
        sigma_u=float(np.std(joint_denoised - tau_hat)),
        r_squared=pos.r_squared,
        lambda_denoised=float(fit.lam),
    )
    return _linear_model(d, cfg, "dipw-algo1", fit, record, diagnostics, alpha=alpha, plan=plan)


def fit_dipw_algo2(
    d: Dataset,
    cfg: EstimatorConfig = EstimatorConfig(),
    *,
    alpha_override: Optional[tuple[float, float]] = None,
) -> CateModel:
    """Denoised IPW Lasso, residualized form.

    Estimates (alpha1, alpha2) by the least-squares projection of YW on
    (W, B_hat W), then runs the penalized regression of the residual on X.
    ``alpha_override`` pins the projection coefficients instead (the (0, 0)
    setting reproduces the non-denoised fit; debugging aid).
    """
    plan = make_folds(d.n, cfg.k_folds, derive_seed(cfg.seed, _ROLE_FOLDS))
    b_hat = cross_fit_nuisance(d, cfg, plan)
    if alpha_override is None:
        pos = denoise(d, b_hat, plan)
        alpha = pos.alpha
        denoised = pos.denoised
        r_squared = pos.r_squared
        w, raw, b_clip = pos.w, pos.raw, pos.b_hat
    else:
        w = ipw_weight(d.t, d.propensity)
        raw = d.y * w
        b_clip = clip_to_outcome_range(b_hat, d.y)
        alpha = (float(alpha_override[0]), float(alpha_override[1]))
        denoised = raw - alpha[0] * w - alpha[1] * b_clip * w
        r_squared = None
    xs, record = _design_x(d, cfg)
    mask = np.ones(d.p, dtype=bool)
    fit = cv_lasso(xs, denoised, mask, cfg.penalty, derive_seed(cfg.seed, _ROLE_CV))
    tau_hat = fit.intercept + xs @ fit.coef
    diagnostics = DenoisingDiagnostics(
        sigma_e=float(np.std(raw - tau_hat)),
        sigma_u=float(np.std(denoised - tau_hat)),
        r_squared=r_squared,
        lambda_denoised=float(fit.lam),
    )
    return _linear_model(d, cfg, "dipw-algo2", fit, record, diagnostics, alpha=alpha, plan=plan)


def fit_ipw(d: Dataset, cfg: EstimatorConfig = EstimatorConfig()) -> CateModel:
    """Non-denoised IPW Lasso: penalized regression of YW on X."""
    w = ipw_weight(d.t, d.propensity)
    raw = d.y * w
    xs, record = _design_x(d, cfg)
    mask = np.ones(d.p, dtype=bool)
    fit = cv_lasso(xs, raw, mask, cfg.penalty, derive_seed(cfg.seed, _ROLE_CV))
    tau_hat = fit.intercept + xs @ fit.coef
    diagnostics = DenoisingDiagnostics(
        sigma_e=float(np.std(raw - tau_hat)),
        lambda_raw=float(fit.lam),
    )
    return _linear_model(d, cfg, "ipw", fit, record, diagnostics)


def fit_dr(d: Dataset, cfg: EstimatorConfig = EstimatorConfig()) -> CateModel:
    """DR-learner: penalized regression of the AIPW pseudo-outcome on X.

    mu1 and mu0 are cross-fitted forests trained on the treated and control
    rows of each fold complement; the known propensity is used as-is.
    """
    plan = make_folds(d.n, cfg.k_folds, derive_seed(cfg.seed, _ROLE_FOLDS))
    mu1 = _cross_fit_arm(d, plan, cfg, arm=1)
    mu0 = _cross_fit_arm(d, plan, cfg, arm=0)
    pseudo = aipw_transform(d, mu1, mu0)
    xs, record = _design_x(d, cfg)
    mask = np.ones(d.p, dtype=bool)
    fit = cv_lasso(xs, pseudo, mask, cfg.penalty, derive_seed(cfg.seed, _ROLE_CV))
    tau_hat = fit.intercept + xs @ fit.coef
    diagnostics = DenoisingDiagnostics(
        sigma_e=float(np.std(pseudo - tau_hat)),
        lambda_raw=float(fit.lam),
    )
    return _linear_model(d, cfg, "dr", fit, record, diagnostics, plan=plan)


def fit_t_learner(d: Dataset, cfg: EstimatorConfig = EstimatorConfig()) -> CateModel:
    """Two per-arm forests; the effect is the difference of their predictions."""
    treated_rows = d.t == 1
    control_rows = ~treated_rows
    base_seed = derive_seed(cfg.seed, _ROLE_LEARNER)
    learner = ForestLearner(spec=cfg.nuisance, threads=cfg.threads)
    for label, rows in (("treated", treated_rows), ("control", control_rows)):
        if int(rows.sum()) < learner.min_fit_rows:
            raise ValueError(
                f"{label} group has {int(rows.sum())} units, learner needs {learner.min_fit_rows}"
            )
    treated = learner.with_seed(derive_seed(base_seed, _ARM_TREATED)).fit(
        d.x[treated_rows], d.y[treated_rows]
    )
    control = learner.with_seed(derive_seed(base_seed, _ARM_CONTROL)).fit(
        d.x[control_rows], d.y[control_rows]
    )
    return CateModel(
        kind="t-learner",
        column_names=d.column_names,
        coefficients=None,
        intercept=None,
        alpha=None,
        forests=(treated, control),
        diagnostics=None,
        config=cfg,
    )
