"""Command-line surface: simulate | fit | evaluate | uplift.

Every run writes a ``config.json`` echo (all resolved flags, seeds, library
versions) next to its outputs, so any result can be reproduced exactly.
Exit codes: 0 success, 1 runtime failure, 2 usage or input-validation
problems. All randomness flows from ``--seed`` through the documented
derivation scheme, and CSV outputs are byte-identical across reruns and
worker-thread counts.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import SchemaError, load_csv
from .estimators import (
    EstimatorConfig,
    ForestSpec,
    model_from_dict,
)
from .evaluation import budget_gain, curve_to_csv, diagnostics_report, uplift_band, uplift_curve, UpliftCurve
from .lasso import PenaltySpec
from .sim import METHODS, DgpSpec, run_replications

CONFIG_FORMAT_VERSION = 1


def _threads_default() -> int:
    env = os.environ.get("DIPW_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-folds", type=int, default=5, help="cross-fitting folds for nuisances")
    p.add_argument("--b-choice", choices=("pooled-mu", "b-star"), default="pooled-mu")
    p.add_argument("--trees", type=int, default=100, help="trees per nuisance forest")
    p.add_argument("--mtry", type=int, default=None, help="features tried per split (default p/3)")
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--cv-folds", type=int, default=10, help="folds for penalty cross-validation")
    p.add_argument("--lambda-grid", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=1e-3)
    p.add_argument("--selection-rule", choices=("min-mse", "one-se"), default="min-mse")
    p.add_argument("--no-standardize", action="store_true",
                   help="fit on raw covariate units instead of standardized ones")


def _add_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", type=str, default=None, help="JSON file with the column-role map")
    p.add_argument("--outcome", type=str, default=None)
    p.add_argument("--treatment", type=str, default=None)
    p.add_argument("--propensity", type=str, default=None,
                   help="propensity column name, or a constant in (0, 1)")
    p.add_argument("--covariates", type=str, default=None, help="comma-separated column names")
    p.add_argument("--one-hot", action="append", default=[], metavar="COL=REF",
                   help="count column to one-hot encode with the given reference level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dipw",
        description="Denoised IPW Lasso treatment-effect estimation and evaluation",
    )
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the replication study on the built-in design")
    sim.add_argument("--p-treat", type=float, default=0.5)
    sim.add_argument("--reps", type=int, default=50)
    sim.add_argument("--n-train", type=int, default=1000)
    sim.add_argument("--n-test", type=int, default=10000)
    sim.add_argument("--b-multiplier", type=float, default=5.0)
    sim.add_argument("--noise-sd", type=float, default=1.0)
    sim.add_argument("--methods", type=str, default="dipw-algo1,ipw,dr,t-learner")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--out", type=str, required=True)
    _add_estimator_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit one estimator on a CSV dataset")
    fit.add_argument("--data", type=str, required=True)
    fit.add_argument("--method", type=str, default="dipw-algo1", choices=sorted(METHODS))
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--threads", type=int, default=None)
    fit.add_argument("--out", type=str, required=True)
    _add_schema_flags(fit)
    _add_estimator_flags(fit)
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="score fitted models on a test CSV")
    ev.add_argument("--model", action="append", required=True, help="model JSON (repeatable)")
    ev.add_argument("--data", type=str, required=True)
    ev.add_argument("--tau-column", type=str, default=None,
                    help="true-effect column for simulation-mode RMSE")
    ev.add_argument("--out", type=str, required=True)
    _add_schema_flags(ev)
    ev.set_defaults(func=cmd_evaluate)

    up = sub.add_parser("uplift", help="uplift curve and budget gains for one model")
    up.add_argument("--model", type=str, required=True)
    up.add_argument("--data", type=str, required=True)
    up.add_argument("--band-level", type=float, default=None,
                    help="confidence level to attach a bootstrap band, e.g. 0.95")
    up.add_argument("--n-boot", type=int, default=200)
    up.add_argument("--budget", action="append", type=float, default=[],
                    help="budget fraction in (0, 1] to report gains for (repeatable)")
    up.add_argument("--seed", type=int, default=0)
    up.add_argument("--out", type=str, required=True)
    _add_schema_flags(up)
    up.set_defaults(func=cmd_uplift)

    parser._dipw_subparsers = {"simulate": sim, "fit": fit, "evaluate": ev, "uplift": up}
    return parser


def _usage_fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _runtime_fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _resolve_threads(args) -> int:
    return args.threads if getattr(args, "threads", None) else _threads_default()


def _echo_config(args, out_dir: Path) -> None:
    arguments = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")
    }
    doc = {
        "format_version": CONFIG_FORMAT_VERSION,
        "command": args.command,
        "arguments": arguments,
        "versions": {"dipw": __version__, "numpy": np.__version__},
    }
    (out_dir / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")


def _estimator_config(args, threads: int) -> EstimatorConfig:
    return EstimatorConfig(
        k_folds=args.k_folds,
        nuisance=ForestSpec(
            n_trees=args.trees,
            mtry=args.mtry,
            min_leaf=args.min_leaf,
            max_depth=args.max_depth,
        ),
        b_choice=args.b_choice,
        penalty=PenaltySpec(
            grid_size=args.lambda_grid,
            lambda_min_ratio=args.lambda_min_ratio,
            cv_folds=args.cv_folds,
            selection_rule=args.selection_rule,
        ),
        seed=args.seed,
        standardize=not args.no_standardize,
        threads=threads,
    )


def _schema_from_args(args) -> dict:
    if args.schema:
        schema = json.loads(Path(args.schema).read_text(encoding="utf-8"))
    else:
        if not (args.outcome and args.treatment and args.propensity and args.covariates):
            raise SchemaError(
                "give --schema, or all of --outcome/--treatment/--propensity/--covariates"
            )
        try:
            propensity: str | float = float(args.propensity)
        except ValueError:
            propensity = args.propensity
        schema = {
            "outcome": args.outcome,
            "treatment": args.treatment,
            "propensity": propensity,
            "covariates": [c.strip() for c in args.covariates.split(",") if c.strip()],
        }
        if args.one_hot:
            one_hot = {}
            for item in args.one_hot:
                col, _, ref = item.partition("=")
                if not _ or not col:
                    raise SchemaError(f"--one-hot expects COL=REF, got {item!r}")
                one_hot[col] = int(ref)
            schema["one_hot"] = one_hot
    return schema


def _read_column(path: str, name: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if name not in header:
            raise SchemaError(f"column not found in {path}: {name}")
        idx = header.index(name)
        return np.asarray([float(row[idx]) for row in reader])


def cmd_simulate(args) -> int:
    if not (0.0 < args.p_treat < 1.0):
        return _usage_fail(f"--p-treat must lie in (0, 1), got {args.p_treat}")
    if args.reps < 1:
        return _usage_fail("--reps must be at least 1")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        return _usage_fail(f"unknown methods {unknown}; known: {sorted(METHODS)}")
    threads = _resolve_threads(args)
    try:
        spec = DgpSpec(
            n_train=args.n_train,
            n_test=args.n_test,
            p_treat=args.p_treat,
            b_multiplier=args.b_multiplier,
            noise_sd=args.noise_sd,
        )
    except ValueError as exc:
        return _usage_fail(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        report = run_replications(
            spec, methods, args.reps, args.seed,
            base_config=_estimator_config(args, 1), threads=threads,
        )
        report.to_json(out_dir / "report.json")
        report.to_csv(out_dir / "report.csv")
        _echo_config(args, out_dir)
    except Exception as exc:
        return _runtime_fail(str(exc))
    return 0


def cmd_fit(args) -> int:
    threads = _resolve_threads(args)
    try:
        schema = _schema_from_args(args)
        dataset = load_csv(args.data, schema)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        return _usage_fail(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        cfg = _estimator_config(args, threads)
        model = METHODS[args.method](dataset, cfg)
        (out_dir / "model.json").write_text(
            json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        if model.coefficients is not None:
            with (out_dir / "coefficients.csv").open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow(["variable", "coefficient"])
                for name, value in model.named_coefficients().items():
                    writer.writerow([name, repr(value)])
        _echo_config(args, out_dir)
    except Exception as exc:
        return _runtime_fail(str(exc))
    return 0


def cmd_evaluate(args) -> int:
    try:
        schema = _schema_from_args(args)
        dataset = load_csv(args.data, schema)
        tau = _read_column(args.data, args.tau_column) if args.tau_column else None
        models = []
        for path in args.model:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            models.append((path, model_from_dict(doc)))
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        return _usage_fail(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        entries = []
        for path, model in models:
            curve = uplift_curve(model.predict(dataset.x), dataset.y, dataset.t)
            entry = {"model": path, "kind": model.kind, "auuc": curve.auuc}
            if tau is not None:
                pred = model.predict(dataset.x)
                entry["rmse"] = float(np.sqrt(np.mean((pred - tau) ** 2)))
            if model.diagnostics is not None:
                entry["diagnostics"] = {
                    k: v
                    for k, v in vars(diagnostics_report(model)).items()
                    if v is not None
                }
            entries.append(entry)
        ranking = sorted(
            ((e["kind"], e["auuc"]) for e in entries), key=lambda r: (-r[1], r[0])
        )
        doc = {
            "format_version": CONFIG_FORMAT_VERSION,
            "models": entries,
            "ranking": [{"kind": k, "auuc": a} for k, a in ranking],
        }
        (out_dir / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        with (out_dir / "ranking.csv").open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["kind", "auuc"])
            for kind, auuc in ranking:
                writer.writerow([kind, repr(float(auuc))])
        _echo_config(args, out_dir)
    except Exception as exc:
        return _runtime_fail(str(exc))
    return 0


def cmd_uplift(args) -> int:
    for fraction in args.budget:
        if not (0.0 < fraction <= 1.0):
            return _usage_fail(f"--budget fractions must lie in (0, 1], got {fraction}")
    if args.band_level is not None and not (0.0 < args.band_level < 1.0):
        return _usage_fail(f"--band-level must lie in (0, 1), got {args.band_level}")
    try:
        schema = _schema_from_args(args)
        dataset = load_csv(args.data, schema)
        model = model_from_dict(json.loads(Path(args.model).read_text(encoding="utf-8")))
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        return _usage_fail(str(exc))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        scores = model.predict(dataset.x)
        curve = uplift_curve(scores, dataset.y, dataset.t)
        if args.band_level is not None:
            band = uplift_band(
                scores, dataset.y, dataset.t, args.band_level, args.n_boot, args.seed
            )
            curve = UpliftCurve(
                u=curve.u, auuc=curve.auuc, baseline=curve.baseline,
                band=band, band_level=args.band_level,
            )
        curve_to_csv(curve, out_dir / "curve.csv")
        budgets = []
        for fraction in args.budget:
            k = max(1, int(np.floor(fraction * curve.n + 0.5)))
            treated_gain, random_gain, ratio = budget_gain(curve, k)
            budgets.append(
                {
                    "fraction": fraction,
                    "k": k,
                    "treated_gain": treated_gain,
                    "random_gain": random_gain,
                    "improvement_ratio": ratio,
                }
            )
        summary = {
            "format_version": CONFIG_FORMAT_VERSION,
            "kind": model.kind,
            "auuc": curve.auuc,
            "ate": float(curve.u[-1] / curve.n),
            "n_test": curve.n,
            "budgets": budgets,
        }
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        _echo_config(args, out_dir)
    except Exception as exc:
        return _runtime_fail(str(exc))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    # Two-phase parse so --config supplies defaults and explicit flags win.
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", type=str, default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        try:
            defaults = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config: {exc}")
        if not isinstance(defaults, dict):
            parser.error("--config must hold a JSON object of flag defaults")
        normalized = {k.replace("-", "_"): v for k, v in defaults.items()}
        # Subparsers parse into a fresh namespace, so defaults must be set on
        # each of them, not just on the top-level parser.
        targets = [parser, *parser._dipw_subparsers.values()]
        known = {a.dest for p in targets for a in p._actions}
        unknown = sorted(set(normalized) - known)
        if unknown:
            parser.error(f"unknown --config keys: {unknown}")
        for p in targets:
            dests = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in normalized.items() if k in dests})
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
