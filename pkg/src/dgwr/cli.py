"""Command-line interface: fit, tune, diagnose, and simulate subcommands.

Outputs are deterministic for identical invocations (no timestamps, fixed key
order, exact float round-tripping) and carry every effective setting in the
metadata, including values the user never passed. Errors exit nonzero with a
machine-readable JSON record on stderr. The DGWR_THREADS environment variable
caps worker parallelism for simulation replications.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import io as dio
from .diagnostics import (
    compute_diagnostics,
    flag_outliers,
    normalized_weights_from_residuals,
    sandwich_covariance,
)
from .errors import (
    ConfigError,
    DegenerateWeights,
    DgwrError,
    InputError,
    InsufficientEffectiveSampleSize,
    NumericalError,
    ScoreUnavailable,
    SelectionFailed,
    SingularJacobian,
    SingularMomentMatrix,
)
from .estimator import FitConfig, fit_all
from .kernels import KernelSpec
from .selection import DEFAULT_GAMMAS, TuningGrid, select
from .simlab import ScenarioConfig, run_replications

ERROR_CODES = {
    InputError: ("input-error", 2),
    ConfigError: ("config-error", 3),
    SelectionFailed: ("selection-failed", 4),
    InsufficientEffectiveSampleSize: ("insufficient-effective-sample-size", 5),
    SingularMomentMatrix: ("singular-moment-matrix", 6),
    SingularJacobian: ("singular-jacobian", 6),
    NumericalError: ("numerical-error", 7),
    ScoreUnavailable: ("score-unavailable", 8),
    DegenerateWeights: ("degenerate-weights", 9),
}


def _error_record(err: DgwrError):
    for cls, (code, status) in ERROR_CODES.items():
        if isinstance(err, cls):
            return {"error": {"code": code, "message": str(err)}}, status
    return {"error": {"code": "dgwr-error", "message": str(err)}}, 10


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as err:
        raise InputError(f"cannot parse numeric list {text!r}: {err}") from err


def _add_data_flags(sp, with_model: bool):
    sp.add_argument("--input", required=True, help="input CSV path")
    sp.add_argument("--coords", required=True, help="two coordinate column names, comma separated")
    sp.add_argument("--response", required=True, help="response column name")
    sp.add_argument("--covariates", default="", help="covariate column names, comma separated")
    sp.add_argument("--standardize", action="store_true", help="center/scale covariates")
    sp.add_argument(
        "--transform",
        default="none",
        help="response transform: 'none' or 'log1p-per-area:AREACOL'",
    )
    sp.add_argument("--warn-geographic", action="store_true",
                    help="warn when coordinates look like unprojected lon/lat")
    if with_model:
        sp.add_argument("--gamma", default="auto", help="robustness parameter, or 'auto'")
        sp.add_argument("--bandwidth", default="auto", help="kernel bandwidth, or 'auto'")
        sp.add_argument("--gamma-grid", default=None, help="candidate gammas, comma separated")
        sp.add_argument("--bandwidth-grid", default=None, help="candidate bandwidths, comma separated")
        sp.add_argument("--kernel", default="gaussian", choices=["gaussian", "bisquare"])
        sp.add_argument("--threshold", type=float, default=0.5, help="outlier flag threshold on U")


def _add_output_flags(sp):
    sp.add_argument("--output", default="-", help="output path, '-' for stdout")
    sp.add_argument("--format", default="json", choices=["json", "csv"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgwr",
        description="Robust geographically weighted regression with automatic tuning.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    fit = sub.add_parser("fit", help="fit local models and write per-location results")
    _add_data_flags(fit, with_model=True)
    _add_output_flags(fit)

    tune = sub.add_parser("tune", help="run tuning only and write the score traces")
    _add_data_flags(tune, with_model=True)
    _add_output_flags(tune)

    diag = sub.add_parser("diagnose", help="recompute outlier diagnostics from a fit file")
    diag.add_argument("--input", required=True, help="fit output JSON from a prior run")
    diag.add_argument("--threshold", type=float, default=None,
                      help="override the outlier flag threshold")
    _add_output_flags(diag)

    sim = sub.add_parser("simulate", help="run the synthetic replication study")
    sim.add_argument("--scenario", type=int, default=2, choices=[1, 2],
                     help="1 = variance inflation, 2 = mean shift")
    sim.add_argument("--phi", type=float, default=0.4, help="covariate field correlation range")
    sim.add_argument("--omega", type=float, default=0.0, help="outlier ratio")
    sim.add_argument("--reps", type=int, default=50, help="replication count")
    sim.add_argument("--n", type=int, default=200, help="samples per replication")
    sim.add_argument("--seed", type=int, default=0, help="study seed")
    _add_output_flags(sim)

    return parser


def _parse_transform(text: str):
    if text in ("none", ""):
        return "none", None
    name, _, col = text.partition(":")
    if name.replace("-", "_") != "log1p_per_area" or not col:
        raise InputError(f"unknown transform {text!r}; use 'none' or 'log1p-per-area:AREACOL'")
    return "log1p_per_area", col


def _load_dataset(args):
    transform, area_col = _parse_transform(args.transform)
    covs = [c for c in args.covariates.split(",") if c.strip()]
    dataset, meta = dio.ingest_csv(
        args.input,
        coord_columns=[c.strip() for c in args.coords.split(",")],
        response_column=args.response,
        covariate_columns=covs,
        transform=transform,
        area_column=area_col,
        standardize=args.standardize,
    )
    if args.warn_geographic and dio.looks_geographic(dataset.coords):
        print(
            "warning: coordinates look like unprojected longitude/latitude over a "
            "large extent; distances are planar Euclidean",
            file=sys.stderr,
        )
    return dataset, meta


def _parse_value(text, flag: str) -> float:
    try:
        return float(text)
    except ValueError as err:
        raise InputError(f"{flag} must be a number or 'auto', got {text!r}") from err


def _resolve_model(args, dataset):
    """Resolve (config, selection) honoring 'auto' for gamma and bandwidth."""
    kernel = KernelSpec(args.kernel, 1.0)
    base = FitConfig(gamma=0.0, kernel=kernel)
    auto_gamma = str(args.gamma).lower() == "auto"
    auto_bw = str(args.bandwidth).lower() == "auto"

    gammas = _float_list(args.gamma_grid) if args.gamma_grid else list(DEFAULT_GAMMAS)
    if args.bandwidth_grid:
        bandwidths = _float_list(args.bandwidth_grid)
    else:
        bandwidths = list(TuningGrid.default_for(dataset.coords).bandwidths)
    if not auto_gamma:
        gammas = [_parse_value(args.gamma, "--gamma")]
    if not auto_bw:
        bandwidths = [_parse_value(args.bandwidth, "--bandwidth")]

    selection = None
    if auto_gamma or auto_bw:
        selection = select(dataset, TuningGrid(tuple(gammas), tuple(bandwidths)), base)
        gamma, bw = selection.gamma_opt, selection.b_opt
    else:
        gamma, bw = gammas[0], bandwidths[0]
    config = replace(base, gamma=gamma, kernel=KernelSpec(args.kernel, bw))
    return config, selection


def _selection_payload(selection) -> dict:
    return {
        "gamma_opt": selection.gamma_opt,
        "b_opt": selection.b_opt,
        "hscore_trace": [{"gamma": g, "score": h} for g, h in selection.hscore_trace],
        "rcv_trace": [{"bandwidth": b, "score": r} for b, r in selection.rcv_trace],
        "skipped": [{"kind": k, "value": v, "reason": r} for k, v, r in selection.skipped],
    }


def _effective_config(args, dataset, config, ingest_meta, grids) -> dict:
    floor = config.sigma2_floor
    if floor is None:
        floor = 1e-12 * float(np.var(dataset.response))
    min_ess = config.min_ess if config.min_ess is not None else dataset.p + 1
    return {
        "input": args.input,
        **ingest_meta,
        "kernel": config.kernel.family,
        "gamma": config.gamma,
        "bandwidth": config.kernel.bandwidth,
        "gamma_requested": str(args.gamma),
        "bandwidth_requested": str(args.bandwidth),
        "gamma_grid": grids[0],
        "bandwidth_grid": grids[1],
        "threshold": args.threshold,
        "max_iter": config.max_iter,
        "tol": config.tol,
        "sigma2_floor": floor,
        "min_ess": min_ess,
        "n": dataset.n,
        "p": dataset.p,
    }


def _grids_used(args, selection):
    if selection is None:
        return None, None
    gs = sorted({g for g, _ in selection.hscore_trace} | {v for k, v, _ in selection.skipped if k == "gamma"})
    bs = sorted({b for b, _ in selection.rcv_trace} | {v for k, v, _ in selection.skipped if k == "bandwidth"})
    return gs, bs


def _run_fit(args) -> dict:
    dataset, ingest_meta = _load_dataset(args)
    config, selection = _resolve_model(args, dataset)
    fits = fit_all(dataset, config)
    cov = sandwich_covariance(dataset, fits, config)
    diag = compute_diagnostics(
        dataset,
        fits,
        config,
        threshold=args.threshold,
        # intercept-only fits have no covariate columns to diagnose
        include_intercept_cn=(dataset.p == 1),
    )
    resid = dataset.response - np.einsum("ip,ip->i", dataset.design, np.stack([f.beta for f in fits]))

    locations = []
    for i, f in enumerate(fits):
        locations.append(
            {
                "index": i,
                "coords": list(dataset.coords[i]),
                "beta": list(f.beta),
                "se": list(cov.std_errors[i]),
                "sigma2": f.sigma2,
                "residual": float(resid[i]),
                "U": float(diag.normalized_weights[i]),
                "outlier": bool(diag.outlier_flags[i]),
                "cn": float(diag.condition_numbers[i]),
                "iterations": f.iterations,
                "converged": f.converged,
            }
        )
    payload = {
        "meta": {
            "schema_version": dio.SCHEMA_VERSION,
            "subcommand": "fit",
            "config": _effective_config(args, dataset, config, ingest_meta, _grids_used(args, selection)),
        },
        "locations": locations,
    }
    if selection is not None:
        payload["selection"] = _selection_payload(selection)
    if cov.failures:
        payload["meta"]["covariance_failures"] = [{"index": i, "reason": r} for i, r in cov.failures]
    return payload


def _run_tune(args) -> dict:
    dataset, ingest_meta = _load_dataset(args)
    args_gamma, args_bw = args.gamma, args.bandwidth
    if str(args_gamma).lower() != "auto" and str(args_bw).lower() != "auto":
        raise ConfigError("tune requires --gamma auto and/or --bandwidth auto")
    config, selection = _resolve_model(args, dataset)
    return {
        "meta": {
            "schema_version": dio.SCHEMA_VERSION,
            "subcommand": "tune",
            "config": _effective_config(args, dataset, config, ingest_meta, _grids_used(args, selection)),
        },
        "selection": _selection_payload(selection),
    }


def _run_diagnose(args) -> dict:
    prior = dio.read_fit_file(args.input)
    meta_cfg = prior["meta"]["config"]
    gamma = float(meta_cfg["gamma"])
    threshold = float(args.threshold) if args.threshold is not None else float(meta_cfg["threshold"])
    locs = prior["locations"]
    resid = np.array([loc["residual"] for loc in locs], dtype=float)
    sigma2 = np.array([loc["sigma2"] for loc in locs], dtype=float)
    u = normalized_weights_from_residuals(resid, sigma2, gamma)
    flags = flag_outliers(u, threshold)
    return {
        "meta": {
            "schema_version": dio.SCHEMA_VERSION,
            "subcommand": "diagnose",
            "config": {"input": args.input, "gamma": gamma, "threshold": threshold, "n": len(locs)},
        },
        "locations": [
            {
                "index": loc["index"],
                "U": float(u[i]),
                "outlier": bool(flags[i]),
                "cn": loc.get("cn"),
            }
            for i, loc in enumerate(locs)
        ],
    }


def _run_simulate(args) -> dict:
    scenario = "mixture_variance" if args.scenario == 1 else "mean_shift"
    config = ScenarioConfig(n=args.n, scenario=scenario, omega=args.omega, seed=args.seed, phi=args.phi)
    workers = max(1, int(os.environ.get("DGWR_THREADS", "1")))
    report = run_replications(config, args.reps, max_workers=workers)
    return {
        "meta": {
            "schema_version": dio.SCHEMA_VERSION,
            "subcommand": "simulate",
            "config": {
                **report.to_dict()["config"],
                "reps": args.reps,
                "methods": list(report.methods),
                "max_workers": workers,
            },
        },
        "report": report.to_dict(),
    }


def _simulate_csv_rows(payload: dict) -> list:
    rows = []
    for rec in payload["report"]["results"]:
        row = {"rep": rec["rep"], "outlier_count": rec["outlier_count"]}
        for method in payload["report"]["methods"]:
            row[f"mse_{method}"] = rec["mse"][method]
            row[f"gamma_{method}"] = rec["gamma"][method]
            row[f"bandwidth_{method}"] = rec["bandwidth"][method]
        rows.append(row)
    return rows


def _tune_csv_rows(payload: dict) -> list:
    rows = [
        {"kind": "gamma", "value": t["gamma"], "score": t["score"]}
        for t in payload["selection"]["hscore_trace"]
    ]
    rows += [
        {"kind": "bandwidth", "value": t["bandwidth"], "score": t["score"]}
        for t in payload["selection"]["rcv_trace"]
    ]
    return rows


def _emit(payload: dict, args) -> None:
    if args.format == "json":
        text = dio.dumps_payload(payload)
    else:
        if args.subcommand in ("fit", "diagnose"):
            rows = dio.location_rows(dio.sanitize(payload))
        elif args.subcommand == "simulate":
            rows = _simulate_csv_rows(dio.sanitize(payload))
        else:
            rows = _tune_csv_rows(dio.sanitize(payload))
        text = dio.dumps_csv(rows)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)


_RUNNERS = {
    "fit": _run_fit,
    "tune": _run_tune,
    "diagnose": _run_diagnose,
    "simulate": _run_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload = _RUNNERS[args.subcommand](args)
        _emit(payload, args)
    except DgwrError as err:
        record, status = _error_record(err)
        sys.stderr.write(dio.dumps_payload(record))
        return status
    return 0


if __name__ == "__main__":
    sys.exit(main())
