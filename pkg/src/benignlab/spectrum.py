"""Covariance spectra, effective ranks, the critical index and the psi rescaling."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_B = 10.0


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CovarianceSpectrum:
    """Descending positive eigenvalues of a diagonal covariance."""

    lambdas: np.ndarray

    def __init__(self, lambdas: Iterable[float]):
        lam = np.asarray(list(lambdas) if not isinstance(lambdas, np.ndarray) else lambdas,
                         dtype=float).ravel()
        if lam.size == 0:
            raise SpectrumError("empty spectrum")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise SpectrumError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) > 0):
            warnings.warn("spectrum was not sorted; sorting in descending order", stacklevel=2)
            lam = np.sort(lam)[::-1]
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def p(self) -> int:
        return self.lambdas.size

    def __len__(self) -> int:
        return self.p

    def __eq__(self, other):
        if not isinstance(other, CovarianceSpectrum):
            return NotImplemented
        return np.array_equal(self.lambdas, other.lambdas)

    def __hash__(self):
        return hash(self.lambdas.tobytes())

    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.lambdas])

    @classmethod
    def from_json(cls, text: str) -> "CovarianceSpectrum":
        return cls(json.loads(text))


@dataclass(frozen=True)
class EffectiveRankReport:
    j: int | None  # None for reports built from an arbitrary index set
    s: float
    r: float
    R: float


@dataclass(frozen=True)
class CriticalIndex:
    """Smallest j with r_j >= b*n. ``k is None`` encodes the infinite case."""

    k: int | None
    b: float

    @property
    def infinite(self) -> bool:
        return self.k is None

    def require_finite(self) -> int:
        if self.k is None:
            raise SpectrumError(
                f"critical index is infinite for b={self.b}; the tail never reaches b*n"
            )
        return self.k


# --- presets -----------------------------------------------------------------

def isotropic(p: int) -> CovarianceSpectrum:
    return CovarianceSpectrum(np.ones(int(p)))


def spike(k: int, eps: float, p: int) -> CovarianceSpectrum:
    """(k, eps)-spike: k unit eigenvalues followed by p-k copies of eps."""
    k, p = int(k), int(p)
    if not 0 <= k < p:
        raise SpectrumError("spike needs 0 <= k < p")
    if not 0 < eps <= 1:
        raise SpectrumError("spike needs 0 < eps <= 1")
    lam = np.full(p, float(eps))
    lam[:k] = 1.0
    return CovarianceSpectrum(lam)


def poly(a: float, p: int) -> CovarianceSpectrum:
    return CovarianceSpectrum(np.arange(1, int(p) + 1, dtype=float) ** (-float(a)))


def exp(gamma: float, p: int) -> CovarianceSpectrum:
    if not 0 < gamma <= 1:
        raise SpectrumError("exp preset needs 0 < gamma <= 1")
    return CovarianceSpectrum(float(gamma) ** np.arange(1, int(p) + 1, dtype=float))


def explicit(values: Sequence[float]) -> CovarianceSpectrum:
    return CovarianceSpectrum(values)


_PRESETS = {"isotropic": isotropic, "spike": spike, "poly": poly, "exp": exp}


def parse_spectrum(cfg) -> CovarianceSpectrum:
    """Build a spectrum from a config value.

    Accepts a JSON array of eigenvalues, a dict such as
    ``{"preset": "spike", "k": 2, "eps": 0.001, "p": 5000}``, or a string like
    ``"spike(2, 0.001, 5000)"`` / ``"explicit([1, 0.5])"``.
    """
    if isinstance(cfg, CovarianceSpectrum):
        return cfg
    if isinstance(cfg, (list, tuple, np.ndarray)):
        return explicit(cfg)
    if isinstance(cfg, dict):
        cfg = dict(cfg)
        name = cfg.pop("preset")
        if name == "explicit":
            return explicit(cfg["values"])
        if name not in _PRESETS:
            raise SpectrumError(f"unknown spectrum preset {name!r}")
        return _PRESETS[name](**cfg)
    if isinstance(cfg, str):
        text = cfg.strip()
        if text.startswith("["):
            return explicit(json.loads(text))
        name, _, rest = text.partition("(")
        name = name.strip()
        if not rest.endswith(")"):
            raise SpectrumError(f"cannot parse spectrum {cfg!r}")
        args = json.loads("[" + rest[:-1] + "]")
        if name == "explicit":
            return explicit(args[0])
        if name not in _PRESETS:
            raise SpectrumError(f"unknown spectrum preset {name!r}")
        return _PRESETS[name](*args)
    raise SpectrumError(f"cannot parse spectrum {cfg!r}")


# --- effective ranks ---------------------------------------------------------

def _check_index(spec: CovarianceSpectrum, j: int) -> int:
    if not 0 <= j < spec.p:
        raise IndexError(f"index {j} outside [0, {spec.p})")
    return int(j)


def _ascending_sum(values: np.ndarray) -> float:
    # smallest entries first; math.fsum is exact-rounded anyway but the order is part of the contract
    return math.fsum(np.sort(values))


def tail_sum(spec: CovarianceSpectrum, j: int) -> float:
    """s_j = sum of lambda_i over i > j (1-based), i.e. entries j..p-1 of the array."""
    j = _check_index(spec, j)
    return _ascending_sum(spec.lambdas[j:])


def effective_ranks(spec: CovarianceSpectrum, j: int) -> EffectiveRankReport:
    j = _check_index(spec, j)
    tail = spec.lambdas[j:]
    s = _ascending_sum(tail)
    r = s / tail[0]
    R = s * s / _ascending_sum(tail * tail)
    return EffectiveRankReport(j=j, s=s, r=r, R=R)


def subset_ranks(spec: CovarianceSpectrum, S: Iterable[int]) -> EffectiveRankReport:
    """Ranks of an arbitrary 1-based index set S."""
    idx = np.asarray(sorted(set(int(i) for i in S)), dtype=int)
    if idx.size == 0:
        raise SpectrumError("index set must be nonempty")
    if idx[0] < 1 or idx[-1] > spec.p:
        raise IndexError("index set must lie in 1..p")
    lam = spec.lambdas[idx - 1]
    s = _ascending_sum(lam)
    return EffectiveRankReport(j=None, s=s, r=s / lam.max(), R=s * s / _ascending_sum(lam * lam))


def all_effective_ranks(spec: CovarianceSpectrum) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised (s_j, r_j, R_j) for every j = 0..p-1."""
    lam = spec.lambdas
    s = np.cumsum(lam[::-1])[::-1]
    sq = np.cumsum((lam * lam)[::-1])[::-1]
    return s, s / lam, s * s / sq


def critical_index(spec: CovarianceSpectrum, n: int, b: float = DEFAULT_B) -> CriticalIndex:
    if n < 1 or b <= 0:
        raise SpectrumError("critical_index needs n >= 1 and b > 0")
    _, r, _ = all_effective_ranks(spec)
    hits = np.flatnonzero(r >= b * n)
    if hits.size == 0:
        return CriticalIndex(k=None, b=float(b))
    k = int(hits[0])
    # the vectorised sums can differ from the exact ones in the last ulp right at the threshold
    while k > 0 and effective_ranks(spec, k - 1).r >= b * n:
        k -= 1
    while k < spec.p and effective_ranks(spec, k).r < b * n:
        k += 1
    return CriticalIndex(k=k if k < spec.p else None, b=float(b))


# --- psi rescaling -----------------------------------------------------------

def w_from_init(theta0: np.ndarray) -> np.ndarray:
    """w = theta(0) / sqrt(||theta(0)||); the zero vector maps to zero."""
    theta0 = np.asarray(theta0, dtype=float)
    norm = np.linalg.norm(theta0)
    if norm == 0:
        return np.zeros_like(theta0)
    return theta0 / math.sqrt(norm)


def psi_scale(sigma: float, n: int, s_k: float) -> float:
    """2 sqrt(sigma) n^(1/4) / (3 s_k^(1/4)); also the centre alpha* concentrates around."""
    if sigma <= 0 or s_k <= 0 or n < 1:
        raise SpectrumError("psi scale needs sigma > 0, s_k > 0, n >= 1")
    return 2.0 * math.sqrt(sigma) * n ** 0.25 / (3.0 * s_k ** 0.25)


def psi_from_init(theta0, sigma: float, n: int, s_k: float) -> np.ndarray:
    theta0 = np.asarray(theta0, dtype=float)
    if not np.any(theta0):
        raise SpectrumError("initialization must be nonzero")
    return psi_scale(sigma, n, s_k) * w_from_init(theta0)


def init_for_guess(psi_hat, sigma: float, n: int, s_k: float) -> np.ndarray:
    """Initialization theta(0) whose psi equals the supplied guess."""
    psi_hat = np.asarray(psi_hat, dtype=float)
    if not np.any(psi_hat):
        raise SpectrumError("guess must be nonzero")
    if sigma <= 0 or s_k <= 0 or n < 1:
        raise SpectrumError("init_for_guess needs sigma > 0, s_k > 0, n >= 1")
    return 9.0 * psi_hat * np.linalg.norm(psi_hat) / 4.0 * math.sqrt(s_k / (sigma ** 2 * n))
