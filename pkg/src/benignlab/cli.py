"""Command-line entry point: ``benignlab {estimate,flow,sweep,verify}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a ``verify`` criterion failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import spectrum as sp
from .datagen import DataError, derive_seed, export_csv, sample_dataset
from .estimator import (
    RankDeficientError,
    implicit_bias_estimate,
    interpolation_residual,
    stationarity_residual,
    svd_factors,
)
from .flow import FLOW_W_SCALE, DivergenceError, balanced_init, train_gradient_descent
from .harness import (
    ConfigError,
    ExperimentConfig,
    SweepError,
    SweepSpec,
    TrialError,
    resolve_init,
    run_sweep,
)
from .risk import excess_risk
from .tables import Table, emit_csv, emit_plot

EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 2, 3, 4
OUT_ENV = "BENIGNLAB_OUT"

log = logging.getLogger("benignlab")


def _load_config(args) -> dict:
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    else:
        cfg = {}
    inst = cfg.setdefault("instance", {})
    for key in ("spectrum", "theta_star", "n", "sigma", "features"):
        value = getattr(args, key, None)
        if value is not None:
            inst[key] = value
    if getattr(args, "w_policy", None) is not None:
        cfg["w_policy"] = json.loads(args.w_policy) if args.w_policy.startswith("{") else args.w_policy
    if getattr(args, "seed", None) is not None:
        cfg["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        cfg["trials"] = args.trials
    if "spectrum" not in inst or "n" not in inst:
        raise ConfigError("config needs instance.spectrum and instance.n (file or flags)")
    return cfg


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV, "benignlab-out"))


def cmd_estimate(args) -> int:
    raw = _load_config(args)
    cfg = ExperimentConfig.from_dict(raw)
    if args.dry_run:
        print(json.dumps(cfg.raw, indent=2, sort_keys=True))
        return 0
    inst = cfg.instance
    ds = sample_dataset(inst, derive_seed(cfg.master_seed, 0))
    w = sp.w_from_init(resolve_init(cfg))
    svd = svd_factors(ds.X)
    sol = implicit_bias_estimate(ds.X, ds.y, w, svd=svd)
    stat = stationarity_residual(svd, sol.theta_hat, w)
    summary = {
        "n": inst.n, "p": inst.p, "seed": ds.seed,
        "norm_theta_hat": float(np.linalg.norm(sol.theta_hat)),
        "norm_theta_ols": float(np.linalg.norm(sol.theta_ols)),
        "norm_perturbation": float(np.linalg.norm(sol.perturbation)),
        "alpha_star": sol.alpha_star,
        "norm_y_tilde": sol.y_tilde_norm,
        "norm_w_tail": sol.w_tail_norm,
        "interpolation_residual": interpolation_residual(ds.X, ds.y, sol.theta_hat),
        "stationarity_residual": stat,
        "risk_theta_hat": excess_risk(sol.theta_hat, inst.theta_star, inst.spectrum),
        "risk_theta_ols": excess_risk(sol.theta_ols, inst.theta_star, inst.spectrum),
    }
    for key, value in summary.items():
        print(f"{key:24s} {value}")
    if args.dump:
        table = Table(["index", "theta_hat", "theta_ols"],
                      [(i + 1, float(a), float(b)) for i, (a, b) in enumerate(zip(sol.theta_hat, sol.theta_ols))])
        print(f"wrote {emit_csv(table, args.dump)}")
    if args.dump_data:
        print(f"wrote {export_csv(ds, args.dump_data)}")
    return 0


def cmd_flow(args) -> int:
    raw = _load_config(args)
    cfg = ExperimentConfig.from_dict(raw)
    if args.dry_run:
        print(json.dumps(cfg.raw, indent=2, sort_keys=True))
        return 0
    inst = cfg.instance
    ds = sample_dataset(inst, derive_seed(cfg.master_seed, 0))
    theta0 = resolve_init(cfg)
    if not np.any(theta0):
        g = np.random.default_rng([cfg.master_seed, 1]).standard_normal(inst.p)
        theta0 = args.init_norm * g / np.linalg.norm(g)
    net = balanced_init(theta0, args.m, seed=cfg.master_seed)
    step = None if args.step_factor is None else args.step_factor / np.linalg.norm(ds.X, 2) ** 2
    res = train_gradient_descent(net, ds.X, ds.y, step=step, max_iters=args.max_iters, tol=args.tol)
    w = sp.w_from_init(theta0)
    rows = []
    for label, scale in (("w", 1.0), (f"{FLOW_W_SCALE:g}w", FLOW_W_SCALE)):
        target = implicit_bias_estimate(ds.X, ds.y, scale * w).theta_hat
        gap = float(np.linalg.norm(res.theta - target) / np.linalg.norm(target))
        rows.append((label, gap))
    print(f"iterations {res.iterations}  converged {res.converged}  step {res.step:.3e}  "
          f"restarts {res.restarts}")
    print(f"fit residual {res.fit_residual:.3e}  balancedness {res.relative_balancedness:.3e}")
    print(f"{'closed form at':16s} {'rel. distance':>14s}")
    for label, gap in rows:
        print(f"{label:16s} {gap:14.6e}")
    return 0


def cmd_sweep(args) -> int:
    raw = _load_config(args)
    sweep_cfg = raw.pop("sweep", {})
    axis = args.axis or sweep_cfg.get("axis")
    values = [float(v) for v in args.values.split(",")] if args.values else sweep_cfg.get("values")
    if not axis or not values:
        raise ConfigError("sweep needs an axis and values (flags or config 'sweep' block)")
    if axis in ("n", "p", "k"):
        values = [int(v) for v in values]
    spec = SweepSpec(axis, tuple(values), ExperimentConfig.from_dict(raw))
    if args.dry_run:
        print(json.dumps({**spec.base.raw, "sweep": {"axis": axis, "values": list(values)}},
                         indent=2, sort_keys=True))
        return 0
    out = _out_dir(args)
    name = args.name or f"sweep_{axis}"
    try:
        table = run_sweep(spec, threads=args.threads)
    except SweepError as exc:
        dump = emit_csv(exc.partial, out / f"{name}.partial.csv")
        print(f"sweep failed: {exc}; partial results in {dump}", file=sys.stderr)
        return EXIT_NUMERIC
    path = emit_csv(table, out / f"{name}.csv")
    print(f"wrote {path}")
    if args.plot and len(table) >= 2:
        cols = args.plot.split(",")
        svg = emit_plot(table, axis, cols, out / f"{name}.svg", loglog=args.loglog,
                        title=f"{', '.join(cols)} vs {axis}")
        print(f"wrote {svg}")
    return 0


def cmd_verify(args) -> int:
    from .acceptance import load_tolerances, run_all

    tol = load_tolerances(args.tolerances)
    only = [int(x) for x in args.only.split(",")] if args.only else None
    out = _out_dir(args)
    failed = 0
    for result in run_all(tol, only):
        print(result.line(), flush=True)
        failed += not result.passed
        for name, stat in result.experiments.items():
            emit_csv(stat.table(), out / f"verify_{result.number:02d}_{name}.csv")
    return EXIT_TOLERANCE if failed else 0


def _add_instance_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--spectrum", help="e.g. 'spike(2, 0.001, 5000)' or a JSON array")
    p.add_argument("--theta-star", dest="theta_star", help="zero | e1 | random_unit(seed) | explicit([...])")
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--features", choices=("gaussian", "uniform", "rademacher"))
    p.add_argument("--w-policy", dest="w_policy",
                   help="zero | guess_exact | '{\"guess_noisy\": 0.1}' | '{\"explicit\": [...]}'")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="benignlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="closed-form estimate on one sampled instance")
    _add_instance_flags(p)
    p.add_argument("--dump", help="write theta_hat and theta_ols to this CSV")
    p.add_argument("--dump-data", dest="dump_data", help="write the sampled dataset to this CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("flow", help="gradient descent on a balanced net vs the closed form")
    _add_instance_flags(p)
    p.add_argument("--m", type=int, default=30, help="hidden width")
    p.add_argument("--init-norm", type=float, default=1.0, help="||theta(0)|| when the policy gives none")
    p.add_argument("--step-factor", type=float, default=None,
                   help="step = factor / mu_1(XX^T); default derives the step from the init")
    p.add_argument("--max-iters", type=int, default=2_000_000)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("sweep", help="Monte Carlo sweep along one axis to CSV/SVG")
    _add_instance_flags(p)
    p.add_argument("--axis", choices=("n", "p", "eps", "k", "b", "sigma"))
    p.add_argument("--values", help="comma-separated, strictly monotone")
    p.add_argument("--trials", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./benignlab-out)")
    p.add_argument("--name", help="file stem for outputs")
    p.add_argument("--plot", help="comma-separated y columns to plot against the axis")
    p.add_argument("--loglog", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the acceptance criteria against the tolerance file")
    p.add_argument("--tolerances", help="alternative tolerance JSON")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--out", help=f"directory for per-experiment CSVs (default ${OUT_ENV} or ./benignlab-out)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, sp.SpectrumError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RankDeficientError, DivergenceError, TrialError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
