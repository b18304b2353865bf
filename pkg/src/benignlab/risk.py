"""Excess risk under a known diagonal covariance, upper-bound terms and lower-bound forms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import ImplicitBiasSolution, SvdFactors, svd_factors
from .spectrum import CovarianceSpectrum, SpectrumError, effective_ranks, tail_sum

DEFAULT_DELTA = 0.05

CSV_COLUMNS = (
    "risk_exact", "bias_term", "cross_term", "noise_term",
    "bias_ub", "variance_ub", "xi_ub", "bias_lb", "variance_lb",
)


def excess_risk(theta, theta_star, spec: CovarianceSpectrum) -> float:
    """(theta - theta*)^T Sigma (theta - theta*) for diagonal Sigma."""
    d = np.asarray(theta, dtype=float) - np.asarray(theta_star, dtype=float)
    if d.size != spec.p:
        raise ValueError(f"dimension mismatch: {d.size} vs p={spec.p}")
    return float(np.dot(spec.lambdas * d, d))


@dataclass(frozen=True)
class BoundTerms:
    bias: float
    bias_weak: float
    variance: float
    xi: float
    delta: float
    constants: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"bias_ub": self.bias, "variance_ub": self.variance, "xi_ub": self.xi}


def _check_delta(delta: float):
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")


def bound_terms(spec: CovarianceSpectrum, n: int, k, theta_star, psi,
                delta: float = DEFAULT_DELTA, c: float = 1.0) -> BoundTerms:
    """Upper-bound expressions with the stand-in constant ``c``.

    ``k`` may be an int or a CriticalIndex; an infinite index is refused.
    """
    if hasattr(k, "require_finite"):
        k = k.require_finite()
    if k is None:
        raise SpectrumError("bound terms are undefined for an infinite critical index")
    _check_delta(delta)
    k = int(k)
    lam = spec.lambdas
    diff = np.asarray(theta_star, dtype=float) - np.asarray(psi, dtype=float)
    rk = effective_ranks(spec, k)
    r0 = effective_ranks(spec, 0).r
    s_k = rk.s
    log_d = math.log(1.0 / delta)

    head = float(np.sum(diff[:k] ** 2 / lam[:k]))
    tail = float(np.sum(lam[k:] * diff[k:] ** 2))
    bias = c * (head * (s_k / n) ** 2 + tail)
    bias_weak = 2.0 * c * float(diff @ diff) * s_k / n
    variance = c * log_d * (k / n + n / rk.R)
    psi_sq = float(np.dot(psi, psi))
    bracket = n / rk.R + n ** 2 / rk.r ** 2 + s_k / n + log_d / n + k ** 2 / n ** 2
    spread = max(math.sqrt(r0 / n), r0 / n, math.sqrt(log_d / n))
    xi = c * lam[0] * psi_sq * bracket * spread
    return BoundTerms(bias=bias, bias_weak=bias_weak, variance=variance, xi=xi, delta=delta,
                      constants={"c": c, "lambda1": float(lam[0]), "k": k, "s_k": s_k})


def spike_bound_terms(k: int, eps: float, p: int, n: int, theta_star, psi,
                      delta: float = DEFAULT_DELTA, c: float = 1.0) -> BoundTerms:
    """Spike-model forms, using eps*p in place of the exact tail mass eps*(p-k)."""
    if not 0 < eps <= 1:
        raise ValueError("spike model needs 0 < eps <= 1")
    if not 0 <= k < p:
        raise ValueError("spike model needs 0 <= k < p")
    _check_delta(delta)
    diff = np.asarray(theta_star, dtype=float) - np.asarray(psi, dtype=float)
    log_d = math.log(1.0 / delta)
    ep_n = eps * p / n
    head = float(diff[:k] @ diff[:k])
    tail = float(diff[k:] @ diff[k:])
    bias = c * (head * ep_n ** 2 + eps * tail)
    bias_weak = c * float(diff @ diff) * ep_n
    variance = c * log_d * (k / n + n / p)
    lam1 = 1.0 if k > 0 else eps
    psi_sq = float(np.dot(psi, psi))
    bracket = n / p + ep_n + log_d / n + k ** 2 / n ** 2
    spread = max(math.sqrt((k + eps * p) / n), math.sqrt(log_d / n))
    xi = c * lam1 * psi_sq * bracket * spread
    return BoundTerms(bias=bias, bias_weak=bias_weak, variance=variance, xi=xi, delta=delta,
                      constants={"c": c, "lambda1": lam1, "k": k, "s_k": eps * p,
                                 "s_k_exact": eps * (p - k)})


@dataclass(frozen=True)
class LowerBoundReport:
    bias_lb: float
    variance_lb: float


def _pinv_rows(svd: SvdFactors) -> np.ndarray:
    """X^+ = X^T (XX^T)^(-1) as a p x n matrix."""
    return svd.Vt.T @ (svd.U / svd.d).T


def lower_bound_terms(X, spec: CovarianceSpectrum, theta_star, sigma: float,
                      svd: SvdFactors | None = None) -> LowerBoundReport:
    """theta*^T B theta* and sigma^2 Tr(C) for one realization of X."""
    svd = svd if svd is not None else svd_factors(X)
    lam = spec.lambdas
    v = svd.null_project(np.asarray(theta_star, dtype=float))
    bias_lb = float(np.dot(lam * v, v))
    Xp = _pinv_rows(svd)
    trace_c = float(np.sum(lam[:, None] * Xp * Xp))
    return LowerBoundReport(bias_lb=bias_lb, variance_lb=sigma ** 2 * trace_c)


def gram_forms_dense(X, spec: CovarianceSpectrum) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """B, C and the cross matrix M built literally from (XX^T)^(-1); small problems only."""
    X = np.asarray(X, dtype=float)
    G_inv = np.linalg.inv(X @ X.T)
    Sigma = np.diag(spec.lambdas)
    P = np.eye(X.shape[1]) - X.T @ G_inv @ X
    B = P @ Sigma @ P
    C = G_inv @ X @ Sigma @ X.T @ G_inv
    M = P @ Sigma @ X.T @ G_inv
    return B, C, M


@dataclass(frozen=True)
class RiskReport:
    """Exact split: risk = bias_term + cross_term + noise_term."""

    risk_exact: float
    bias_term: float
    cross_term: float
    noise_term: float

    @property
    def decomposition_error(self) -> float:
        total = self.bias_term + self.cross_term + self.noise_term
        return abs(total - self.risk_exact) / max(abs(self.risk_exact), 1e-300)


def empirical_risk_report(solution: ImplicitBiasSolution, theta_star, spec: CovarianceSpectrum,
                          eps, X=None, w=None, svd: SvdFactors | None = None) -> RiskReport:
    """Split the excess risk of theta_hat into null-space bias, cross and noise parts.

    With v = theta* - alpha* w and X^+ the pseudo-inverse,
    theta_hat - theta* = -P_null v + X^+ eps, so
    risk = v^T B v - 2 v^T M eps + eps^T C eps.
    ``w`` defaults to the direction implied by the solution's perturbation.
    """
    svd = svd if svd is not None else svd_factors(X)
    lam = spec.lambdas
    theta_star = np.asarray(theta_star, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if w is None:
        if solution.alpha_star > 0 and np.any(solution.perturbation):
            w_null = solution.perturbation / solution.alpha_star
        else:
            w_null = np.zeros_like(theta_star)
        v_null = svd.null_project(theta_star) - solution.alpha_star * w_null
    else:
        v_null = svd.null_project(theta_star - solution.alpha_star * np.asarray(w, dtype=float))
    noise_vec = svd.pinv_apply(eps)
    bias_term = float(np.dot(lam * v_null, v_null))
    cross_term = -2.0 * float(np.dot(lam * v_null, noise_vec))
    noise_term = float(np.dot(lam * noise_vec, noise_vec))
    return RiskReport(
        risk_exact=excess_risk(solution.theta_hat, theta_star, spec),
        bias_term=bias_term,
        cross_term=cross_term,
        noise_term=noise_term,
    )
