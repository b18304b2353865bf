"""Gram-matrix diagnostics: head/tail split, trace of the inverse Gram, extreme
eigenvalues of column-submatrix Grams, and concentration of the noise projection
and of alpha*."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .datagen import Dataset, ProblemInstance, derive_seed, sample_dataset, whitened_columns
from .estimator import SvdFactors, implicit_bias_estimate, svd_factors
from .spectrum import (
    DEFAULT_B,
    CovarianceSpectrum,
    SpectrumError,
    critical_index,
    psi_scale,
    subset_ranks,
    tail_sum,
)
from .tables import Table

DEFAULT_MARGIN = 4.0


class HypothesisError(ValueError):
    """A problem instance falls outside the regime a diagnostic is defined for."""


class HypothesisWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GramDecomposition:
    A: np.ndarray
    H: np.ndarray
    T: np.ndarray

    @property
    def additivity_error(self) -> float:
        return float(np.linalg.norm(self.A - self.H - self.T) / np.linalg.norm(self.A))


@dataclass(frozen=True, eq=False)
class ConcentrationStat:
    observed: float
    predicted: float
    relative_deviation: float
    n_trials: int
    std_error: float
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rms_deviation: float = float("nan")  # sqrt(mean((value/predicted - 1)^2)) over trials

    @classmethod
    def from_values(cls, values: Sequence[float], predicted: float) -> "ConcentrationStat":
        v = np.asarray(values, dtype=float)
        m = v.size
        mean = math.fsum(v) / m
        sd = math.sqrt(math.fsum((v - mean) ** 2) / (m - 1)) if m > 1 else 0.0
        if predicted != 0:
            rel = (mean - predicted) / predicted
            rms = math.sqrt(math.fsum((v / predicted - 1.0) ** 2) / m)
        else:
            rel = rms = float("nan")
        return cls(observed=mean, predicted=predicted, relative_deviation=rel, n_trials=m,
                   std_error=sd / math.sqrt(m), values=v, rms_deviation=rms)

    def rows(self) -> list[dict]:
        """Per-trial rows for CSV emission (the harness appends the aggregate footer)."""
        return [
            {"trial": i, "observed": float(v), "predicted": self.predicted,
             "deviation": (float(v) - self.predicted) / self.predicted if self.predicted else float("nan")}
            for i, v in enumerate(self.values)
        ]

    def table(self) -> Table:
        """Per-trial rows plus a footer row labelled ``mean`` holding the aggregate."""
        cols = ["trial", "observed", "predicted", "deviation"]
        body = [tuple(r[c] for c in cols) for r in self.rows()]
        return Table(cols, body + [("mean", self.observed, self.predicted, self.relative_deviation)])


def gram_head_tail(ds: Dataset, spec: CovarianceSpectrum, k: int) -> GramDecomposition:
    """A = XX^T assembled directly; H and T from the first k and the remaining whitened columns."""
    if not 0 <= k < spec.p:
        raise IndexError(f"k={k} outside [0, {spec.p})")
    Z = whitened_columns(ds, spec)
    lam = spec.lambdas
    A = ds.X @ ds.X.T
    H = (Z[:, :k] * lam[:k]) @ Z[:, :k].T
    T = (Z[:, k:] * lam[k:]) @ Z[:, k:].T
    return GramDecomposition(A=A, H=H, T=T)


def trace_gram_inverse_dense(X) -> float:
    """Tr((XX^T)^(-1)) via an explicit inverse; used only as a cross-check."""
    X = np.asarray(X, dtype=float)
    return float(np.trace(np.linalg.inv(X @ X.T)))


def _trial_datasets(instance: ProblemInstance, trials: int, master_seed: int):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for t in range(trials):
        yield sample_dataset(instance, derive_seed(master_seed, t))


def _require_headroom(instance: ProblemInstance, k: int, margin: float):
    if instance.p < margin * (instance.n + k):
        raise HypothesisError(
            f"tail too thin: p={instance.p} < {margin:g}*(n+k)={margin * (instance.n + k):g}; "
            "the trace concentration needs many more tail directions than samples"
        )


def trace_inverse_stat(instance: ProblemInstance, k: int, trials: int, master_seed: int,
                       margin: float = DEFAULT_MARGIN) -> ConcentrationStat:
    """Mean of Tr((XX^T)^(-1)) against n/s_k."""
    _require_headroom(instance, k, margin)
    s_k = tail_sum(instance.spectrum, k)
    values = [svd_factors(ds.X).trace_gram_inverse()
              for ds in _trial_datasets(instance, trials, master_seed)]
    return ConcentrationStat.from_values(values, instance.n / s_k)


def _subset_index(spec: CovarianceSpectrum, S: Iterable[int]) -> np.ndarray:
    idx = np.asarray(sorted(set(int(i) for i in S)), dtype=int)
    if idx.size == 0 or idx[0] < 1 or idx[-1] > spec.p:
        raise IndexError("S must be a nonempty subset of 1..p")
    return idx - 1


def _subset_grams(instance: ProblemInstance, S, trials: int, master_seed: int):
    cols = _subset_index(instance.spectrum, S)
    if cols.size < instance.n:
        raise HypothesisError(f"|S|={cols.size} < n={instance.n}: the smallest eigenvalue is 0")
    for ds in _trial_datasets(instance, trials, master_seed):
        XS = ds.X[:, cols]
        yield np.linalg.eigvalsh(XS @ XS.T)


def eigen_range_stat(instance: ProblemInstance, S, trials: int,
                     master_seed: int) -> tuple[ConcentrationStat, ConcentrationStat]:
    """Largest and smallest eigenvalue of X_S X_S^T, both against s(S)."""
    s_S = subset_ranks(instance.spectrum, S).s
    top, bottom = [], []
    for mu in _subset_grams(instance, S, trials, master_seed):
        top.append(mu[-1])
        bottom.append(mu[0])
    return ConcentrationStat.from_values(top, s_S), ConcentrationStat.from_values(bottom, s_S)


@dataclass(frozen=True)
class TailProbRow:
    t: float
    count: int
    trials: int

    @property
    def frequency(self) -> float:
        return self.count / self.trials

    @property
    def display(self) -> str:
        return f"< {1.0 / self.trials:.6g}" if self.count == 0 else f"{self.frequency:.6g}"


def smallest_eig_tail_prob(instance: ProblemInstance, S, t_grid: Sequence[float], trials: int,
                           master_seed: int, rank_margin: float = 1.0) -> list[TailProbRow]:
    """Empirical Pr[mu_n(X_S X_S^T) <= t s(S)] for each t."""
    t_grid = [float(t) for t in t_grid]
    if any(not 0 < t < 1 for t in t_grid):
        raise ValueError("every t must lie in (0, 1)")
    ranks = subset_ranks(instance.spectrum, S)
    if ranks.r < rank_margin * instance.n:
        raise HypothesisError(f"r(S)={ranks.r:g} is below {rank_margin:g}*n")
    ratios = np.array([mu[0] / ranks.s for mu in _subset_grams(instance, S, trials, master_seed)])
    return [TailProbRow(t=t, count=int(np.sum(ratios <= t)), trials=trials) for t in t_grid]


def noise_projection_stat(ds: Dataset, svd: SvdFactors, sigma: float) -> ConcentrationStat:
    """||D^+ U^T eps||^2 against sigma^2 Tr((XX^T)^(-1)) for one realization."""
    proj = (svd.U.T @ ds.eps) / svd.d
    observed = float(proj @ proj)
    return ConcentrationStat.from_values([observed], sigma ** 2 * svd.trace_gram_inverse())


def alpha_concentration_stat(instance: ProblemInstance, trials: int, master_seed: int,
                             w=None, k: int | None = None, b: float = DEFAULT_B,
                             margin: float = DEFAULT_MARGIN, norm_bound: float = 1.0) -> ConcentrationStat:
    """alpha* per trial against 2 sqrt(sigma) n^(1/4) / (3 s_k^(1/4)).

    ``k`` defaults to the critical index at threshold ``b``.  Instances outside
    the concentration regime only raise a HypothesisWarning.
    """
    n, p = instance.n, instance.p
    if k is None:
        k = critical_index(instance.spectrum, n, b).require_finite()
    s_k = tail_sum(instance.spectrum, k)
    w = np.zeros(p) if w is None else np.asarray(w, dtype=float)
    problems = []
    if p < margin * (n + k):
        problems.append(f"p={p} < {margin:g}(n+k)")
    if n < margin * max(k, s_k):
        problems.append(f"n={n} < {margin:g} max(k, s_k)={margin * max(k, s_k):g}")
    if np.linalg.norm(instance.theta_star) > norm_bound or np.linalg.norm(w) > norm_bound:
        problems.append(f"||theta*|| or ||w|| exceeds {norm_bound:g}")
    for msg in problems:
        warnings.warn(msg, HypothesisWarning, stacklevel=2)
    values = [implicit_bias_estimate(ds.X, ds.y, w).alpha_star
              for ds in _trial_datasets(instance, trials, master_seed)]
    return ConcentrationStat.from_values(values, psi_scale(instance.sigma, n, s_k))
