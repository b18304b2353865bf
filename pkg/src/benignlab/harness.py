"""Seeded Monte Carlo trials, axis sweeps and their aggregation."""
from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

from . import spectrum as sp
from .datagen import ProblemInstance, derive_seed, instance_from_config, sample_dataset
from .estimator import (
    implicit_bias_estimate,
    interpolation_residual,
    stationarity_residual,
    svd_factors,
)
from .risk import (
    DEFAULT_DELTA,
    bound_terms,
    empirical_risk_report,
    excess_risk,
    lower_bound_terms,
)
from .spectral import DEFAULT_MARGIN
from .tables import Table

log = logging.getLogger(__name__)

SWEEP_AXES = ("n", "p", "eps", "k", "b", "sigma")


class ConfigError(ValueError):
    pass


class TrialError(RuntimeError):
    def __init__(self, trial: int, seed: int, cause: Exception):
        super().__init__(f"trial {trial} (seed {seed}) failed: {cause}")
        self.trial, self.seed, self.cause = trial, seed, cause


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    instance: ProblemInstance
    w_policy: Any = "zero"
    trials: int = 1
    master_seed: int = 0
    b: float = sp.DEFAULT_B
    delta: float = DEFAULT_DELTA
    c: float = 1.0
    margin: float = DEFAULT_MARGIN
    raw: dict = field(default_factory=dict)  # the declarative form, kept for sweeps

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        _policy_kind(self.w_policy)

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        cfg = copy.deepcopy(cfg)
        try:
            inst = instance_from_config(cfg["instance"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad instance config: {exc}") from exc
        return cls(
            instance=inst,
            w_policy=cfg.get("w_policy", "zero"),
            trials=int(cfg.get("trials", 1)),
            master_seed=int(cfg.get("master_seed", 0)),
            b=float(cfg.get("b", sp.DEFAULT_B)),
            delta=float(cfg.get("delta", DEFAULT_DELTA)),
            c=float(cfg.get("c", 1.0)),
            margin=float(cfg.get("margin", DEFAULT_MARGIN)),
            raw=cfg,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in changes.items():
            raw[key] = value
        return ExperimentConfig.from_dict(raw)

    @property
    def critical(self) -> sp.CriticalIndex:
        return sp.critical_index(self.instance.spectrum, self.instance.n, self.b)


def _policy_kind(policy) -> str:
    if policy in ("zero", "guess_exact"):
        return policy
    if isinstance(policy, dict) and len(policy) == 1:
        kind = next(iter(policy))
        if kind in ("guess_noisy", "explicit"):
            return kind
    raise ConfigError(
        f"unknown w_policy {policy!r}; expected 'zero', 'guess_exact', "
        "{'guess_noisy': scale} or {'explicit': [...]}"
    )


def resolve_init(config: ExperimentConfig) -> np.ndarray:
    """theta(0) implied by the w policy (the zero vector for 'zero')."""
    inst = config.instance
    kind = _policy_kind(config.w_policy)
    if kind == "zero":
        return np.zeros(inst.p)
    if kind == "explicit":
        theta0 = np.asarray(config.w_policy["explicit"], dtype=float)
        if theta0.size != inst.p:
            raise ConfigError(f"explicit theta(0) has length {theta0.size}, expected {inst.p}")
        return theta0
    k = config.critical.k
    if k is None:
        raise ConfigError("guess policies need a finite critical index to compute s_k")
    if inst.sigma <= 0:
        raise ConfigError("guess policies need sigma > 0")
    s_k = sp.tail_sum(inst.spectrum, k)
    guess = inst.theta_star.copy()
    if kind == "guess_noisy":
        g = np.random.default_rng([config.master_seed, 0x5EED]).standard_normal(inst.p)
        guess = guess + float(config.w_policy["guess_noisy"]) * g / np.linalg.norm(g)
    return sp.init_for_guess(guess, inst.sigma, inst.n, s_k)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    risk_exact: float
    risk_ols: float
    alpha_star: float
    trace_inv: float
    mu1: float
    mun: float
    bias_term: float
    cross_term: float
    noise_term: float
    bias_term_ols: float
    noise_term_ols: float
    bias_ub: float
    bias_weak_ub: float
    variance_ub: float
    xi_ub: float
    bias_lb: float
    variance_lb: float
    interpolation_residual: float
    stationarity_residual: float
    decomposition_error: float
    anticoncentration: bool
    margin_p: bool
    margin_n: bool
    norm_bound: bool

    FLAG_FIELDS = ("anticoncentration", "margin_p", "margin_n", "norm_bound")

    @classmethod
    def numeric_fields(cls) -> list[str]:
        skip = {"trial", "seed", *cls.FLAG_FIELDS}
        return [f.name for f in fields(cls) if f.name not in skip]


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialResult:
    """Everything measured on one dataset; a pure function of (config, trial_index)."""
    seed = derive_seed(config.master_seed, trial_index)
    try:
        return _run_trial(config, trial_index, seed)
    except Exception as exc:  # attach trial context
        raise TrialError(trial_index, seed, exc) from exc


def _run_trial(config: ExperimentConfig, trial_index: int, seed: int) -> TrialResult:
    inst = config.instance
    spec, n = inst.spectrum, inst.n
    theta0 = resolve_init(config)
    w = sp.w_from_init(theta0)
    ds = sample_dataset(inst, seed)
    svd = svd_factors(ds.X)

    sol = implicit_bias_estimate(ds.X, ds.y, w, svd=svd)
    ols = implicit_bias_estimate(ds.X, ds.y, np.zeros(inst.p), svd=svd)
    rep = empirical_risk_report(sol, inst.theta_star, spec, ds.eps, w=w, svd=svd)
    rep_ols = empirical_risk_report(ols, inst.theta_star, spec, ds.eps, w=np.zeros(inst.p), svd=svd)
    lb = lower_bound_terms(ds.X, spec, inst.theta_star, inst.sigma, svd=svd)

    crit = config.critical
    nan = float("nan")
    bias_ub = bias_weak = var_ub = xi_ub = nan
    margin_p = margin_n = False
    if crit.k is not None:
        k = crit.k
        s_k = sp.tail_sum(spec, k)
        if np.any(theta0) and inst.sigma > 0:
            psi = sp.psi_from_init(theta0, inst.sigma, n, s_k)
        else:
            psi = np.zeros(inst.p)
        bt = bound_terms(spec, n, k, inst.theta_star, psi, config.delta, config.c)
        bias_ub, bias_weak, var_ub, xi_ub = bt.bias, bt.bias_weak, bt.variance, bt.xi
        margin_p = inst.p >= config.margin * (n + k)
        margin_n = n >= config.margin * max(k, s_k)
    stat = stationarity_residual(svd, sol.theta_hat, w)
    d2 = svd.d ** 2
    return TrialResult(
        trial=trial_index,
        seed=seed,
        risk_exact=rep.risk_exact,
        risk_ols=rep_ols.risk_exact,
        alpha_star=sol.alpha_star,
        trace_inv=svd.trace_gram_inverse(),
        mu1=float(d2[0]),
        mun=float(d2[-1]),
        bias_term=rep.bias_term,
        cross_term=rep.cross_term,
        noise_term=rep.noise_term,
        bias_term_ols=rep_ols.bias_term,
        noise_term_ols=rep_ols.noise_term,
        bias_ub=bias_ub,
        bias_weak_ub=bias_weak,
        variance_ub=var_ub,
        xi_ub=xi_ub,
        bias_lb=lb.bias_lb,
        variance_lb=lb.variance_lb,
        interpolation_residual=interpolation_residual(ds.X, ds.y, sol.theta_hat),
        stationarity_residual=0.0 if stat is None else stat,
        decomposition_error=rep.decomposition_error,
        anticoncentration=inst.feature_dist.satisfies_anticoncentration,
        margin_p=bool(margin_p),
        margin_n=bool(margin_n),
        norm_bound=bool(np.linalg.norm(inst.theta_star) <= 1.0 and np.linalg.norm(w) <= 1.0),
    )


def run_trials(config: ExperimentConfig, threads: int = 1) -> list[TrialResult]:
    indices = range(config.trials)
    if threads <= 1:
        return [run_trial(config, t) for t in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: run_trial(config, t), indices))


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    # fsum over values in trial order: exact rounding, independent of scheduling
    m = len(values)
    mean = math.fsum(values) / m
    if m < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


def aggregate(results: Sequence[TrialResult]) -> dict:
    results = sorted(results, key=lambda r: r.trial)
    row: dict = {"trials": len(results)}
    for name in TrialResult.numeric_fields():
        vals = [getattr(r, name) for r in results]
        row[f"{name}_mean"], row[f"{name}_se"] = _mean_se(vals)
    for flag in TrialResult.FLAG_FIELDS:
        row[flag] = int(all(getattr(r, flag) for r in results))
    return row


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: ExperimentConfig

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        vals = list(self.values)
        if not vals:
            raise ConfigError("sweep needs at least one value")
        diffs = np.diff(np.asarray(vals, dtype=float))
        if len(vals) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("sweep values must be strictly monotone")
        object.__setattr__(self, "values", tuple(vals))
        for v in vals:
            cfg = self.config_at(v)
            if cfg.instance.p <= cfg.instance.n:
                raise ConfigError(f"{self.axis}={v} gives p <= n")

    def config_at(self, value) -> ExperimentConfig:
        raw = copy.deepcopy(self.base.raw)
        inst = raw.setdefault("instance", {})
        if self.axis == "n":
            inst["n"] = int(value)
        elif self.axis == "sigma":
            inst["sigma"] = float(value)
        elif self.axis == "b":
            raw["b"] = float(value)
        else:
            inst["spectrum"] = _respectrum(inst["spectrum"], self.axis, value)
        return ExperimentConfig.from_dict(raw)


def _respectrum(spec_cfg, axis: str, value):
    """Change p, eps or k of a preset spectrum config."""
    if isinstance(spec_cfg, str):
        name, _, rest = spec_cfg.partition("(")
        args = [float(a) for a in rest.rstrip(")").split(",")] if rest.strip(")") else []
        spec_cfg = {"preset": name.strip(), **dict(zip(_PRESET_ARGS.get(name.strip(), ()), args))}
    if not isinstance(spec_cfg, dict):
        raise ConfigError(f"cannot sweep {axis} over an explicit spectrum")
    spec_cfg = dict(spec_cfg)
    name = spec_cfg["preset"]
    if axis not in _PRESET_ARGS.get(name, ()):
        raise ConfigError(f"preset {name!r} has no parameter {axis!r}")
    spec_cfg[axis] = value
    for key in ("k", "p"):
        if key in spec_cfg:
            spec_cfg[key] = int(spec_cfg[key])
    return spec_cfg


_PRESET_ARGS = {"isotropic": ("p",), "spike": ("k", "eps", "p"), "poly": ("a", "p"), "exp": ("gamma", "p")}


def run_sweep(spec: SweepSpec, threads: int = 1) -> Table:
    """One aggregated row per axis value, in axis order."""
    rows = []
    columns: list[str] | None = None
    for value in spec.values:
        cfg = spec.config_at(value)
        try:
            results = run_trials(cfg, threads=threads)
        except TrialError as exc:
            partial = Table(columns or [spec.axis], rows)
            raise SweepError(spec.axis, value, partial, exc) from exc
        row = {spec.axis: value, **aggregate(results)}
        if columns is None:
            columns = list(row)
        rows.append(tuple(row[c] for c in columns))
    return Table(columns, rows)


class SweepError(RuntimeError):
    def __init__(self, axis, value, partial: Table, cause: Exception):
        super().__init__(f"sweep aborted at {axis}={value}: {cause}")
        self.partial = partial
        self.cause = cause


def trial_table(results: Sequence[TrialResult]) -> Table:
    names = [f.name for f in fields(TrialResult)]
    return Table(names, [tuple(asdict(r)[n] for n in names) for r in results])
