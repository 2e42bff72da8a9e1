"""Command-line interface.

JSON goes to stdout (or ``--out``); a short human-readable table goes to
stderr. Exit codes: 0 ok, 2 usage, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import efficiency_cutoff, design_diagnostics
from .errors import ClusterIVError, NonPositiveSeDiff, ParseError
from .estimators import STRATEGIES, FitResult, fit_all
from .heterogeneity import cluster_bootstrap, hettest
from .io import InputSpec, read_csv
from .rng import resolve_threads
from .simlab import HeteroSimConfig, HomogeneousSimConfig, oracle_plim_check, run_hettest_mc, run_table2

SCHEMA_VERSION = "1.0"

log = logging.getLogger("clusteriv")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(_clean({"schema_version": SCHEMA_VERSION, **payload}), indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_list(text: str | None) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _load(args):
    spec = InputSpec(
        path=args.csv,
        outcome_col=args.outcome,
        treatment_col=args.treatment,
        instrument_col=args.instrument,
        cluster_col=args.cluster,
        covariate_cols=_csv_list(args.covariates),
        missing_policy=args.missing,
    )
    try:
        return read_csv(spec)
    except FileNotFoundError:
        raise ParseError(0, None, f"cannot open {args.csv}") from None


def _input_block(args, report) -> dict:
    return {"path": str(args.csv), **report.to_dict()}


def _table(rows: list[tuple], header: tuple) -> str:
    cells = [tuple(str(c) for c in header)] + [tuple(_fmt(c) for c in r) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def cmd_fit(args) -> int:
    data, report = _load(args)
    strategies = _csv_list(args.strategies) or list(STRATEGIES)
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise SystemExit(f"error: unknown strategies: {', '.join(unknown)}")
    fe_cov = _csv_list(args.fe_covariates) if args.fe_covariates is not None else None
    results = fit_all(data, strategies, fe_covariates=fe_cov, df_correction=args.df_correction)
    _emit({
        "command": "fit",
        "input": _input_block(args, report),
        "df_correction": args.df_correction,
        "results": [r.to_dict(residuals=args.residuals) if isinstance(r, FitResult) else r.to_dict()
                    for r in results],
    }, args.out)
    rows = []
    for r in results:
        if isinstance(r, FitResult):
            rows.append((r.strategy, r.tau_hat, r.se, r.ci_low, r.ci_high))
        else:
            rows.append((r.strategy, r.error, "", "", ""))
    print(_table(rows, ("strategy", "tau_hat", "se", "ci_low", "ci_high")), file=sys.stderr)
    ok = [r for r in results if isinstance(r, FitResult)]
    return 0 if ok else 4


def cmd_hettest(args) -> int:
    data, report = _load(args)
    res = hettest(data)
    _emit({"command": "hettest", "input": _input_block(args, report), "result": res.to_dict()}, args.out)
    print(f"tau_2sls={res.tau_ls:.4f} tau_2sfe={res.tau_fe:.4f} se_diff={res.se_diff:.4f} "
          f"t={res.t_stat:.3f} p={res.p_value:.4f} reject_5pct={res.reject}", file=sys.stderr)
    return 0


def cmd_bootstrap(args) -> int:
    data, report = _load(args)
    boot = cluster_bootstrap(data, args.reps, args.seed, threads=resolve_threads(args.threads))
    try:
        analytic = hettest(data).to_dict()
    except NonPositiveSeDiff as exc:
        analytic = {"error": type(exc).__name__, "message": str(exc), "se_diff": None}
    _emit({
        "command": "bootstrap",
        "input": _input_block(args, report),
        "bootstrap": boot.to_dict(replicates=not args.no_replicates),
        "analytic": analytic,
    }, args.out)
    print(f"bootstrap se_diff={boot.se_diff:.4f} (analytic {analytic['se_diff']}); "
          f"t={boot.t_stat:.3f}; {boot.n_failed} of {boot.B} replicates excluded", file=sys.stderr)
    return 0


def cmd_diagnose(args) -> int:
    data, report = _load(args)
    diag = design_diagnostics(data)
    payload = {"command": "diagnose", "input": _input_block(args, report), "diagnostics": diag.to_dict()}
    if args.variance_ratio is not None and diag.kappa_hat > 0:
        # plug-in comparison using the sample kappa_hat and c_hat
        ratio = diag.kappa_hat * (1 + args.variance_ratio * diag.c_hat)
        payload["efficiency_plugin"] = {
            "variance_ratio": args.variance_ratio,
            "efficiency_ratio": ratio,
            "cutoff": efficiency_cutoff(min(diag.kappa_hat, 1.0), diag.c_hat),
            "favours": "2sfe" if ratio > 1 else "2sls",
        }
    _emit(payload, args.out)
    print(f"kappa_hat={diag.kappa_hat:.4f} c_hat={diag.c_hat:.4f} "
          f"clusters with within-variation in the instrument: {diag.n_effective_clusters}/{diag.n_clusters}",
          file=sys.stderr)
    for note in diag.notes:
        print(f"warning: {note}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    threads = resolve_threads(args.threads)
    if args.design == "table2":
        cfg = HomogeneousSimConfig(n_clusters=args.clusters)
        summ = run_table2(args.sigma_x, args.sigma_eta, args.reps, args.seed, config=cfg, threads=threads)
        rows = [(s, m["mse"], m["coverage"], m["mean_ci_length"]) for s, m in summ.per_strategy.items()]
        print(_table(rows, ("strategy", "mse", "coverage", "mean_ci_length")), file=sys.stderr)
        payload = {"command": "simulate", "design": "table2", "summary": summ.to_dict()}
    elif args.design == "hettest":
        cfg = HeteroSimConfig(n_clusters=args.clusters, cluster_size=args.cluster_size)
        summ = run_hettest_mc(args.delta, args.reps, args.seed, config=cfg, threads=threads)
        m = summ.metrics
        print(f"mean tau_2sls={m['mean_tau_ls']:.4f} mean tau_2sfe={m['mean_tau_fe']:.4f} "
              f"mean t={m['mean_t']:.3f} rejection={m['rejection_rate']:.3f}", file=sys.stderr)
        payload = {"command": "simulate", "design": "hettest", "summary": summ.to_dict()}
    else:
        cfg = HeteroSimConfig(n_clusters=args.clusters, cluster_size=args.cluster_size, delta=args.delta,
                              tau_second_type=args.theta, e_override=args.equal_e)
        checks = oracle_plim_check(cfg, args.reps, args.seed, threads=threads)
        for c in checks:
            print(f"{c.estimator}: predicted={c.predicted:.4f} mc_mean={c.mc_mean:.4f} "
                  f"z={c.z_score:.2f}", file=sys.stderr)
        _emit({"command": "simulate", "design": "plim", "params": cfg.__dict__,
               "seed": args.seed, "checks": [c.to_dict() for c in checks]}, args.out)
        return 0
    if args.csv:
        Path(args.csv).write_text(summ.to_csv(), encoding="utf-8")
    _emit(payload, args.out)
    return 0


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("csv", help="input CSV with a header row")
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--instrument", required=True)
    p.add_argument("--cluster", required=True)
    p.add_argument("--covariates", default="", help="comma-separated covariate columns")
    p.add_argument("--missing", choices=("error", "drop_row"), default="error")
    p.add_argument("--out", help="write JSON here instead of stdout")


def _threads_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $CLUSTERIV_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clusteriv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the estimation strategies")
    _data_args(p)
    p.add_argument("--strategies", default=",".join(STRATEGIES))
    p.add_argument("--fe-covariates", default=None,
                   help="covariates for 2sfe-x and fe-x (default: same as --covariates)")
    p.add_argument("--df-correction", action="store_true", help="scale covariances by G/(G-1)")
    p.add_argument("--residuals", action="store_true", help="include residuals in the JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("hettest", help="test for cluster heterogeneity (2sls vs 2sfe)")
    _data_args(p)
    p.set_defaults(func=cmd_hettest)

    p = sub.add_parser("bootstrap", help="pairs-cluster bootstrap of 2sls, 2sfe and their difference")
    _data_args(p)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--no-replicates", action="store_true", help="omit replicate draws from the JSON")
    _threads_arg(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("diagnose", help="within-cluster instrument variation and efficiency plug-ins")
    _data_args(p)
    p.add_argument("--variance-ratio", type=float, default=None,
                   help="assumed sigma_alpha^2 / sigma_eps^2 for a plug-in efficiency comparison")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="Monte Carlo designs")
    p.add_argument("design", choices=("table2", "hettest", "plim"))
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--sigma-eta", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--theta", type=float, default=None, help="complier effect in second-type clusters (plim)")
    p.add_argument("--equal-e", type=float, default=None, help="common instrument probability (plim)")
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--cluster-size", type=int, default=20)
    p.add_argument("--csv", help="write the per-strategy table or histogram bins as CSV")
    p.add_argument("--out")
    _threads_arg(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate" and args.clusters is None:
        args.clusters = 200 if args.design == "table2" else 100
    try:
        return args.func(args)
    except ClusterIVError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
