"""Sampling of overparameterized regression instances x = Sigma^(1/2) u, y = x.theta* + eps."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectrum import CovarianceSpectrum, parse_spectrum

RANK_RTOL = 1e-8

FEATURE_KINDS = ("gaussian", "uniform", "rademacher")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureDistribution:
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise DataError(f"unknown feature kind {self.kind!r}; expected one of {FEATURE_KINDS}")

    @property
    def satisfies_anticoncentration(self) -> bool:
        # rademacher has atoms, so no bounded density
        return self.kind != "rademacher"

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "uniform":
            root3 = math.sqrt(3.0)
            return rng.uniform(-root3, root3, size=shape)
        return rng.choice(np.array([-1.0, 1.0]), size=shape)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 1.0

    def __post_init__(self):
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise DataError("noise sigma must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    spectrum: CovarianceSpectrum
    theta_star: np.ndarray
    n: int
    feature_dist: FeatureDistribution = field(default_factory=FeatureDistribution)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float).ravel()
        object.__setattr__(self, "theta_star", theta)
        if theta.size != self.spectrum.p:
            raise DataError(
                f"theta_star has length {theta.size} but the spectrum has p={self.spectrum.p}"
            )
        if self.spectrum.p <= self.n:
            raise DataError(f"need p > n (got p={self.spectrum.p}, n={self.n})")
        if self.n < 1:
            raise DataError("n must be positive")

    @property
    def p(self) -> int:
        return self.spectrum.p

    @property
    def sigma(self) -> float:
        return self.noise.sigma


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    eps: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.eps, other.eps)
        )


def derive_seed(master_seed: int, trial: int) -> int:
    """64-bit seed for trial ``trial``; depends only on the pair, never on execution order."""
    state = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(trial)]).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


def sample_dataset(instance: ProblemInstance, seed: int) -> Dataset:
    rng = np.random.default_rng(int(seed))
    n, p = instance.n, instance.p
    u = instance.feature_dist.sample(rng, (n, p))
    X = u * np.sqrt(instance.spectrum.lambdas)
    eps = instance.noise.sigma * rng.standard_normal(n)
    y = X @ instance.theta_star + eps
    return Dataset(X=X, y=y, eps=eps, seed=int(seed))


def whitened_columns(ds: Dataset, spec: CovarianceSpectrum) -> np.ndarray:
    """Matrix whose i-th column is z_i = X e_i / sqrt(lambda_i)."""
    if spec.p != ds.p:
        raise DataError("spectrum length does not match the number of columns of X")
    return ds.X / np.sqrt(spec.lambdas)


def rank_certificate(X: np.ndarray) -> tuple[bool, float]:
    """(full row rank?, smallest singular value) with relative tolerance RANK_RTOL."""
    X = np.asarray(X, dtype=float)
    n = min(X.shape)
    if n == 0:
        return False, 0.0
    s = np.linalg.svd(X, compute_uv=False)
    s_min = float(s[-1]) if s.size == X.shape[0] else 0.0
    s_max = float(s[0])
    return bool(s_max > 0 and s_min > RANK_RTOL * s_max), s_min


# --- config presets ----------------------------------------------------------

def parse_theta_star(cfg, p: int) -> np.ndarray:
    """``zero``, ``e1``, ``random_unit(seed)``, ``explicit([...])`` or a list."""
    if isinstance(cfg, (list, tuple, np.ndarray)):
        theta = np.asarray(cfg, dtype=float)
    elif isinstance(cfg, dict):
        return parse_theta_star(_dict_to_call(cfg), p)
    elif isinstance(cfg, str):
        text = cfg.strip()
        if text == "zero":
            theta = np.zeros(p)
        elif text == "e1":
            theta = np.zeros(p)
            theta[0] = 1.0
        elif text.startswith("random_unit"):
            seed = int(text[text.index("(") + 1: text.rindex(")")])
            g = np.random.default_rng(seed).standard_normal(p)
            theta = g / np.linalg.norm(g)
        elif text.startswith("explicit"):
            theta = np.asarray(json.loads(text[text.index("(") + 1: text.rindex(")")]), dtype=float)
        else:
            raise DataError(f"unknown theta_star preset {cfg!r}")
    else:
        raise DataError(f"cannot parse theta_star {cfg!r}")
    if theta.size != p:
        raise DataError(f"theta_star has length {theta.size}, expected {p}")
    return theta


def _dict_to_call(cfg: dict) -> str:
    name = cfg["preset"]
    if name in ("zero", "e1"):
        return name
    if name == "random_unit":
        return f"random_unit({int(cfg['seed'])})"
    if name == "explicit":
        return f"explicit({json.dumps(list(cfg['values']))})"
    raise DataError(f"unknown theta_star preset {name!r}")


def instance_from_config(cfg: dict) -> ProblemInstance:
    spec = parse_spectrum(cfg["spectrum"])
    return ProblemInstance(
        spectrum=spec,
        theta_star=parse_theta_star(cfg.get("theta_star", "e1"), spec.p),
        n=int(cfg["n"]),
        feature_dist=FeatureDistribution(cfg.get("features", "gaussian")),
        noise=NoiseModel(float(cfg.get("sigma", 1.0))),
    )


def export_csv(ds: Dataset, path: str | Path) -> Path:
    """Row-major X with y and eps appended as the last two columns."""
    path = Path(path)
    header = [f"x{i}" for i in range(1, ds.p + 1)] + ["y", "eps"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, yi, ei in zip(ds.X, ds.y, ds.eps):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(yi)), repr(float(ei))])
    return path


def load_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.asarray([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, -1)
    return data[:, :-2], data[:, -2], data[:, -1]


def moment_summary(samples: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and variance of stacked samples."""
    stacked = np.vstack(samples)
    return stacked.mean(axis=0), stacked.var(axis=0)
