"""Executable exit criteria, shared by ``benignlab verify`` and the test suite.

Every criterion reads its sizes and tolerances from ``tolerances.json`` and
returns a CriterionResult; nothing here decides tolerances on the fly.
"""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import oracles
from . import spectrum as sp
from .datagen import NoiseModel, ProblemInstance, derive_seed, parse_theta_star, sample_dataset
from .estimator import (
    alpha_sandwich,
    implicit_bias_estimate,
    interpolation_residual,
    objective,
    quartic_residual,
    stationarity_residual,
    svd_factors,
    transformed_data,
)
from .flow import FLOW_W_SCALE, balanced_init, train_gradient_descent
from .harness import ExperimentConfig, SweepSpec, resolve_init, run_sweep, run_trials
from .risk import empirical_risk_report
from .spectral import HypothesisWarning, alpha_concentration_stat, trace_inverse_stat
from .tables import csv_text


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    max_seconds: float | None = None
    experiments: dict = field(default_factory=dict)  # name -> ConcentrationStat, for CSV dumps

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (limit {self.max_seconds:g}s)" if self.max_seconds else ""
        info = "; ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{status}] {self.number:2d} {self.name}: {self.seconds:.1f}s{budget} | {info}"


def _short(v):
    if isinstance(v, float):
        return format(v, ".4g")
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(str(_short(x)) for x in v) + "]"
    return v


def load_tolerances(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("benignlab").joinpath("tolerances.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, dict]],
           max_seconds: float | None) -> CriterionResult:
    t0 = time.perf_counter()
    out = fn()
    ok, details = out[:2]
    experiments = out[2] if len(out) > 2 else {}
    dt = time.perf_counter() - t0
    within = max_seconds is None or dt < max_seconds
    if not within:
        details["runtime_exceeded"] = True
    return CriterionResult(number, name, bool(ok and within), details, dt, max_seconds, experiments)


def _ratio_quantiles(stat) -> list[float]:
    """Empirical 5% and 95% quantiles of value/predicted; reported, never thresholded."""
    return [float(q) for q in np.quantile(stat.values / stat.predicted, [0.05, 0.95])]


def _gaussian_instance(n: int, p: int, sigma: float = 1.0, theta="random_unit(0)") -> ProblemInstance:
    spec = sp.isotropic(p)
    return ProblemInstance(spec, parse_theta_star(theta, p), n, noise=NoiseModel(sigma))


def _random_init(p: int, seed: int, norm: float = 1.0) -> np.ndarray:
    g = np.random.default_rng(seed).standard_normal(p)
    return norm * g / np.linalg.norm(g)


# --- 1 ------------------------------------------------------------------------

def interpolation_instances(tol: dict):
    c = tol["interpolation"]
    inst = _gaussian_instance(c["n"], c["p"])
    for i in range(c["instances"]):
        ds = sample_dataset(inst, derive_seed(101, i))
        w = sp.w_from_init(_random_init(c["p"], 10_000 + i))
        yield ds.X, ds.y, w


def criterion_interpolation(tol: dict) -> CriterionResult:
    c = tol["interpolation"]

    def run():
        worst_fit = worst_kkt = 0.0
        for X, y, w in interpolation_instances(tol):
            svd = svd_factors(X)
            sol = implicit_bias_estimate(X, y, w, svd=svd)
            worst_fit = max(worst_fit, interpolation_residual(X, y, sol.theta_hat))
            kkt = stationarity_residual(svd, sol.theta_hat, w)
            worst_kkt = max(worst_kkt, 0.0 if kkt is None else kkt)
        ok = worst_fit <= c["interp_rtol"] and worst_kkt <= c["kkt_atol"]
        return ok, {"max_fit_residual": worst_fit, "max_kkt_residual": worst_kkt}

    return _timed(1, "interpolation and stationarity", run, c["max_seconds"])


# --- 2 ------------------------------------------------------------------------

def brute_force_instances(tol: dict):
    c = tol["brute_force"]
    inst = _gaussian_instance(c["n"], c["p"])
    for i in range(c["instances"]):
        ds = sample_dataset(inst, derive_seed(202, i))
        w = sp.w_from_init(_random_init(c["p"], 20_000 + i, norm=float(1 + i % 3)))
        yield i, ds.X, ds.y, w


def criterion_brute_force(tol: dict) -> CriterionResult:
    c = tol["brute_force"]

    def run():
        worst_rel = 0.0
        violations = 0
        for i, X, y, w in brute_force_instances(tol):
            sol = implicit_bias_estimate(X, y, w)
            ref = oracles.nullspace_descent(X, y, w, seed=i)
            worst_rel = max(worst_rel, np.linalg.norm(sol.theta_hat - ref) / np.linalg.norm(ref))
            f_hat = objective(sol.theta_hat, w)
            scales = np.geomspace(1e-4, 1.0, c["feasible_points"])[:, None]
            pts = oracles.random_feasible(X, y, c["feasible_points"], seed=i, center=sol.theta_hat)
            pts = sol.theta_hat + (pts - sol.theta_hat) * scales
            vals = np.linalg.norm(pts, axis=1) ** 1.5 - pts @ w
            violations += int(np.sum(vals < f_hat - 1e-12 * max(1.0, abs(f_hat))))
        ok = worst_rel <= c["rtol"] and violations == 0
        return ok, {"max_rel_error": worst_rel, "dominance_violations": violations}

    return _timed(2, "closed form vs brute force", run, c["max_seconds"])


# --- 3 ------------------------------------------------------------------------

def flow_problem(tol: dict):
    c = tol["flow"]
    inst = _gaussian_instance(c["n"], c["p"], sigma=c["sigma"])
    ds = sample_dataset(inst, derive_seed(303, 0))
    theta0 = _random_init(c["p"], 30_303, norm=c["init_norm"])
    return ds.X, ds.y, theta0


def criterion_flow(tol: dict) -> CriterionResult:
    c = tol["flow"]

    def run():
        X, y, theta0 = flow_problem(tol)
        net = balanced_init(theta0, c["m"], seed=3)
        step = c["step_factor"] / np.linalg.norm(X, 2) ** 2
        res = train_gradient_descent(net, X, y, step=step, max_iters=c["max_iters"], tol=c["fit_tol"])
        w = sp.w_from_init(theta0)
        target = implicit_bias_estimate(X, y, w).theta_hat
        flow_target = implicit_bias_estimate(X, y, FLOW_W_SCALE * w).theta_hat
        gap = float(np.linalg.norm(res.theta - target) / np.linalg.norm(target))
        gap_flow = float(np.linalg.norm(res.theta - flow_target) / np.linalg.norm(flow_target))
        bal = res.relative_balancedness
        ok = res.converged and gap <= c["theta_rtol"] and bal <= c["balance_rtol"]
        return ok, {"converged": res.converged, "iterations": res.iterations,
                    "gap_vs_closed_form": gap, "balancedness": bal,
                    "gap_vs_closed_form_at_1.5w": gap_flow}

    return _timed(3, "gradient descent vs closed form", run, c["max_seconds"])


# --- 4 ------------------------------------------------------------------------

def criterion_alpha_quartic(tol: dict) -> CriterionResult:
    rtol = tol["alpha_quartic"]["rtol"]

    def run():
        worst_q = 0.0
        worst_lo = worst_hi = 0.0  # positive values mean a violated side
        count = 0
        problems = [(X, y, w) for X, y, w in interpolation_instances(tol)]
        problems += [(X, y, w) for _, X, y, w in brute_force_instances(tol)]
        X, y, theta0 = flow_problem(tol)
        problems.append((X, y, sp.w_from_init(theta0)))
        for n in tol["benign_trend"]["n"]:
            cfg = _benign_config(tol, n, "guess_exact", trials=3)
            w = sp.w_from_init(resolve_init(cfg))
            for t in range(cfg.trials):
                ds = sample_dataset(cfg.instance, derive_seed(cfg.master_seed, t))
                problems.append((ds.X, ds.y, w))
        for X, y, w in problems:
            td = transformed_data(svd_factors(X), y, w)
            sol = implicit_bias_estimate(X, y, w)
            lo, hi = alpha_sandwich(td.y_tilde_norm, float(np.linalg.norm(w)))
            a = sol.alpha_star
            worst_q = max(worst_q, quartic_residual(a, td.y_tilde_norm, td.w_tail_norm))
            worst_lo = max(worst_lo, (lo - a) / a)
            worst_hi = max(worst_hi, (a - hi) / a)
            count += 1
        ok = worst_q <= rtol and worst_lo <= rtol and worst_hi <= rtol
        return ok, {"instances": count, "max_quartic_residual": worst_q,
                    "max_lower_violation": worst_lo, "max_upper_violation": worst_hi}

    return _timed(4, "alpha* sandwich and quartic", run, None)


# --- 5 ------------------------------------------------------------------------

def criterion_trace(tol: dict) -> CriterionResult:
    c = tol["trace"]

    def stat_at(p):
        inst = ProblemInstance(sp.spike(c["k"], c["eps"], p), np.zeros(p), c["n"])
        return trace_inverse_stat(inst, c["k"], c["trials"], master_seed=505)

    def run():
        main = stat_at(c["p"])
        trend = {p: stat_at(p) for p in c["trend_p"]}
        devs = [abs(t.relative_deviation) for t in trend.values()]
        in_band = abs(main.relative_deviation) <= c["band"]
        shrinking = all(a > b for a, b in zip(devs, devs[1:]))
        return in_band and shrinking, {"observed": main.observed, "predicted": main.predicted,
                                       "rel_dev": main.relative_deviation, "trend_devs": devs,
                                       "ratio_q05_q95": _ratio_quantiles(main)}, \
            {"trace_inverse": main, **{f"trace_inverse_p{p}": t for p, t in trend.items()}}

    return _timed(5, "trace of inverse Gram concentration", run, c["max_seconds"])


# --- 6 ------------------------------------------------------------------------

def _alpha_instance(c: dict, n: int, p: int) -> ProblemInstance:
    return ProblemInstance(sp.spike(c["k"], c["eps"], p), parse_theta_star(c["theta_star"], p), n,
                           noise=NoiseModel(c["sigma"]))


def criterion_alpha_concentration(tol: dict) -> CriterionResult:
    c = tol["alpha_concentration"]

    def run():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HypothesisWarning)
            main = alpha_concentration_stat(_alpha_instance(c, c["n"], c["p"]), c["trials"],
                                            master_seed=606, k=c["k"])
            stats = {n: alpha_concentration_stat(_alpha_instance(c, n, c["p_per_n"] * n), c["trials"],
                                                 master_seed=607, k=c["k"])
                     for n in c["trend_n"]}
        trend = [t.rms_deviation for t in stats.values()]
        ratio = main.observed / main.predicted
        lo, hi = c["band"]
        ok = lo <= ratio <= hi and trend[-1] < trend[0]
        return ok, {"mean_ratio": ratio, "std_error": main.std_error / main.predicted,
                    "rms_dev_trend": trend, "ratio_q05_q95": _ratio_quantiles(main)}, \
            {"alpha_star": main, **{f"alpha_star_n{n}": t for n, t in stats.items()}}

    return _timed(6, "alpha* concentration", run, c["max_seconds"])


# --- 7 and 8 share one paired sweep ----------------------------------------------

def _benign_config(tol: dict, n: int, policy, trials: int | None = None) -> ExperimentConfig:
    c = tol["benign_trend"]
    return ExperimentConfig.from_dict({
        "instance": {"spectrum": {"preset": "spike", "k": c["k"], "eps": c["eps"], "p": c["p"]},
                     "theta_star": c["theta_star"], "n": n, "sigma": c["sigma"]},
        "w_policy": policy,
        "trials": c["trials"] if trials is None else trials,
        "master_seed": 808,
    })


@lru_cache(maxsize=4)
def _benign_results_cached(key: str):
    tol = json.loads(key)
    return tuple((n, tuple(run_trials(_benign_config(tol, n, "guess_exact"))))
                 for n in tol["benign_trend"]["n"])


def _benign_results(tol: dict):
    return _benign_results_cached(json.dumps(tol, sort_keys=True))


def criterion_decomposition(tol: dict) -> CriterionResult:
    rtol = tol["decomposition"]["rtol"]

    def run():
        worst = worst_noise = 0.0
        count = 0
        for _, results in _benign_results(tol):
            for r in results:
                worst = max(worst, r.decomposition_error)
                worst_noise = max(worst_noise, abs(r.noise_term - r.noise_term_ols) / r.noise_term_ols)
                count += 1
        inst = _gaussian_instance(tol["interpolation"]["n"], tol["interpolation"]["p"])
        for i, (X, y, w) in enumerate(interpolation_instances(tol)):
            ds = sample_dataset(inst, derive_seed(101, i))
            svd = svd_factors(X)
            sol = implicit_bias_estimate(X, y, w, svd=svd)
            rep = empirical_risk_report(sol, inst.theta_star, inst.spectrum, ds.eps, w=w, svd=svd)
            worst = max(worst, rep.decomposition_error)
            count += 1
        ok = worst <= rtol and worst_noise <= rtol
        return ok, {"trials": count, "max_decomposition_error": worst,
                    "max_noise_term_mismatch": worst_noise}

    return _timed(7, "exact risk decomposition", run, None)


def criterion_benign_trend(tol: dict) -> CriterionResult:
    c = tol["benign_trend"]

    def run():
        means, paired = [], []
        for n, results in _benign_results(tol):
            zero = np.array([r.risk_ols for r in results])
            guess = np.array([r.risk_exact for r in results])
            means.append(float(zero.mean()))
            d = guess - zero
            upper = float(d.mean() + c["z"] * d.std(ddof=1) / math.sqrt(d.size))
            bias_gap = float(np.mean([r.bias_term - r.bias_term_ols for r in results]))
            paired.append((n, upper, bias_gap))
        decreasing = all(a > b for a, b in zip(means, means[1:]))
        guess_better = all(u <= 0 for _, u, _ in paired)
        bias_explains = all(g < 0 for _, _, g in paired)
        return decreasing and guess_better and bias_explains, {
            "mean_risk_zero_by_n": means,
            "strictly_decreasing": decreasing,
            "paired_upper95_guess_minus_zero": [u for _, u, _ in paired],
            "guess_beats_zero": guess_better,
            "bias_gap": [g for _, _, g in paired],
        }

    return _timed(8, "benign-overfitting trend and psi guess", run, None)


# --- 9 ------------------------------------------------------------------------

def criterion_effective_rank(tol: dict) -> CriterionResult:
    c = tol["effective_rank"]

    def run():
        rng = np.random.default_rng(909)
        worst = 0.0
        monotone_fail = 0
        for i in range(c["spectra"]):
            p = int(rng.integers(1, 60))
            lam = np.sort(np.exp(rng.uniform(-8, 2, size=p)))[::-1]
            spec = sp.CovarianceSpectrum(lam)
            size = int(rng.integers(1, p + 1))
            S = rng.choice(np.arange(1, p + 1), size=size, replace=False)
            rep = sp.subset_ranks(spec, S)
            worst = max(worst, (rep.r - rep.R) / rep.R, (rep.R - rep.r ** 2) / rep.r ** 2)
            if i % 20 == 0:
                n = int(rng.integers(1, 10))
                ks = [sp.critical_index(spec, n, b).k for b in (0.05, 0.1, 0.5, 1.0, 2.0)]
                ks += [sp.critical_index(spec, n2, 0.5).k for n2 in (n, n + 1, 2 * n + 3)]
                for seq in (ks[:5], ks[5:]):
                    vals = [math.inf if k is None else k for k in seq]
                    monotone_fail += int(any(a > b for a, b in zip(vals, vals[1:])))
        ok = worst <= c["rtol"] and monotone_fail == 0
        return ok, {"spectra": c["spectra"], "max_violation": worst, "monotonicity_failures": monotone_fail}

    return _timed(9, "effective-rank laws", run, None)


# --- 10 -----------------------------------------------------------------------

def determinism_sweep(tol: dict) -> SweepSpec:
    c = tol["determinism"]
    base = ExperimentConfig.from_dict({
        "instance": {"spectrum": "spike(2, 0.01, 1000)", "theta_star": "e1", "n": 20, "sigma": 0.5},
        "w_policy": "guess_exact", "trials": c["trials"], "master_seed": 1010,
    })
    return SweepSpec("n", (10, 20, 40), base)


def criterion_determinism(tol: dict) -> CriterionResult:
    c = tol["determinism"]

    def run():
        spec = determinism_sweep(tol)
        texts = [csv_text(run_sweep(spec, threads=t)) for t in c["threads"]]
        texts.append(csv_text(run_sweep(spec, threads=c["threads"][0])))
        same = all(t == texts[0] for t in texts)
        return same, {"runs": len(texts), "bytes": len(texts[0])}

    return _timed(10, "sweep determinism across thread counts", run, None)


CRITERIA = {
    1: criterion_interpolation,
    2: criterion_brute_force,
    3: criterion_flow,
    4: criterion_alpha_quartic,
    5: criterion_trace,
    6: criterion_alpha_concentration,
    7: criterion_decomposition,
    8: criterion_benign_trend,
    9: criterion_effective_rank,
    10: criterion_determinism,
}


def run_all(tol: dict | None = None, only=None) -> list[CriterionResult]:
    tol = tol if tol is not None else load_tolerances()
    numbers = sorted(CRITERIA) if only is None else sorted(only)
    return [CRITERIA[i](tol) for i in numbers]
