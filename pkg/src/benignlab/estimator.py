"""Closed-form minimizer of ||theta||^(3/2) - w.theta subject to X theta = y.

Everything goes through the SVD of X; (XX^T)^(-1) is never formed.  For wide
matrices only the row-space block of V is kept (``SvdFactors.Vt``); the null
space is handled implicitly as the orthogonal complement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import RANK_RTOL


class RankDeficientError(np.linalg.LinAlgError):
    """X does not have full row rank."""


@dataclass(frozen=True, eq=False)
class SvdFactors:
    """X = U diag(d) Vt, with Vt the n x p row-space block of V^T.

    ``null_basis`` holds the remaining p - n rows of V^T when the full
    factorization was requested; it is None otherwise.
    """

    U: np.ndarray
    d: np.ndarray
    Vt: np.ndarray
    null_basis: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.Vt.shape[1]

    @property
    def D(self) -> np.ndarray:
        D = np.zeros((self.n, self.p))
        D[np.arange(self.n), np.arange(self.n)] = self.d
        return D

    @property
    def Ddagger(self) -> np.ndarray:
        Dd = np.zeros((self.p, self.n))
        Dd[np.arange(self.n), np.arange(self.n)] = 1.0 / self.d
        return Dd

    @property
    def V(self) -> np.ndarray:
        if self.null_basis is None:
            raise ValueError("full V not available; call svd_factors(X, full=True)")
        return np.vstack([self.Vt, self.null_basis]).T

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.d) @ self.Vt

    def null_project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto null(X)."""
        return v - self.Vt.T @ (self.Vt @ v)

    def pinv_apply(self, b: np.ndarray) -> np.ndarray:
        """X^T (XX^T)^(-1) b, i.e. X^+ b."""
        return self.Vt.T @ ((self.U.T @ b) / self.d)

    def trace_gram_inverse(self) -> float:
        """Tr((XX^T)^(-1)) = sum 1/d_i^2."""
        return math.fsum(1.0 / self.d ** 2)


def svd_factors(X: np.ndarray, full: bool = False) -> SvdFactors:
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p <= n:
        raise ValueError(f"expected a wide matrix with p > n, got {n} x {p}")
    if full:
        U, d, Vt_full = np.linalg.svd(X, full_matrices=True)
        Vt, null = Vt_full[:n], Vt_full[n:]
    else:
        U, d, Vt = np.linalg.svd(X, full_matrices=False)
        null = None
    if not (d[0] > 0 and d[-1] > RANK_RTOL * d[0]):
        raise RankDeficientError(
            f"X is rank deficient (s_min={d[-1]:.3e}, s_max={d[0]:.3e}); full row rank is required"
        )
    return SvdFactors(U=U, d=d, Vt=Vt, null_basis=null)


@dataclass(frozen=True, eq=False)
class TransformedData:
    """y_tilde = D^+ U^T y and the split of w_tilde = V^T w into row-space head and null tail."""

    y_tilde: np.ndarray  # length p, zero past index n
    w_tilde_head: np.ndarray  # first n coordinates of V^T w
    w_tail_norm: float  # ||w_tilde_{n+1:p}||
    w_tilde: np.ndarray | None = None  # full V^T w when the null basis is known
    theta_tilde: np.ndarray | None = None

    @property
    def y_tilde_norm(self) -> float:
        return float(np.linalg.norm(self.y_tilde))


def transformed_data(svd: SvdFactors, y, w) -> TransformedData:
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    y_tilde = np.zeros(svd.p)
    y_tilde[: svd.n] = (svd.U.T @ y) / svd.d
    head = svd.Vt @ w
    if svd.null_basis is not None:
        tail = svd.null_basis @ w
        w_tilde = np.concatenate([head, tail])
        tail_norm = float(np.linalg.norm(tail))
    else:
        w_tilde = None
        tail_norm = float(np.linalg.norm(svd.null_project(w)))
    return TransformedData(y_tilde=y_tilde, w_tilde_head=head, w_tail_norm=tail_norm, w_tilde=w_tilde)


def alpha_star(y_tilde_norm: float, w_tail_norm: float) -> float:
    """Positive root of 81 a^4 - 16 zeta a^2 - 16 rho = 0 with zeta=||w_tail||^2, rho=||y_tilde||^2."""
    if y_tilde_norm < 0 or w_tail_norm < 0:
        raise ValueError("norms must be nonnegative")
    zeta = w_tail_norm ** 2
    # hypot keeps sqrt(64 zeta^2 + 1296 rho) from underflowing for tiny ||y_tilde||
    return math.sqrt(8.0 * zeta + math.hypot(8.0 * zeta, 36.0 * y_tilde_norm)) / 9.0


def quartic_residual(alpha: float, y_tilde_norm: float, w_tail_norm: float) -> float:
    """Relative residual of the stationarity quartic at alpha."""
    zeta, rho = w_tail_norm ** 2, y_tilde_norm ** 2
    terms = (81.0 * alpha ** 4, 16.0 * zeta * alpha ** 2, 16.0 * rho)
    scale = max(terms) or 1.0
    return abs(terms[0] - terms[1] - terms[2]) / scale


def alpha_sandwich(y_tilde_norm: float, w_norm: float) -> tuple[float, float]:
    """Lower and upper bounds on alpha* in terms of ||y_tilde|| and the full ||w||."""
    lower = 2.0 * math.sqrt(y_tilde_norm) / 3.0
    # ||y|| * (sqrt(1 + 4 r^2/81) + 2r/9) with r = ||w||^2/||y||, written without the division
    q = 2.0 * w_norm ** 2 / 9.0
    upper = 2.0 * math.sqrt(math.hypot(y_tilde_norm, q) + q) / 3.0
    return lower, upper


@dataclass(frozen=True, eq=False)
class ImplicitBiasSolution:
    theta_hat: np.ndarray
    theta_ols: np.ndarray
    alpha_star: float
    perturbation: np.ndarray
    y_tilde_norm: float
    w_tail_norm: float


def min_norm_ols(X, y, svd: SvdFactors | None = None) -> np.ndarray:
    svd = svd if svd is not None else svd_factors(X)
    return svd.pinv_apply(np.asarray(y, dtype=float))


def implicit_bias_estimate(X, y, w, svd: SvdFactors | None = None) -> ImplicitBiasSolution:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.shape[0] != y.size or X.shape[1] != w.size:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}, w {w.shape}")
    svd = svd if svd is not None else svd_factors(X)
    td = transformed_data(svd, y, w)
    a = alpha_star(td.y_tilde_norm, td.w_tail_norm)
    theta_ols = svd.pinv_apply(y)
    if td.w_tail_norm == 0.0:
        perturbation = np.zeros_like(w)
    else:
        perturbation = a * svd.null_project(w)
    return ImplicitBiasSolution(
        theta_hat=theta_ols + perturbation,
        theta_ols=theta_ols,
        alpha_star=a,
        perturbation=perturbation,
        y_tilde_norm=td.y_tilde_norm,
        w_tail_norm=td.w_tail_norm,
    )


def objective(theta, w) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(np.linalg.norm(theta) ** 1.5 - np.dot(w, theta))


def interpolation_residual(X, y, theta) -> float:
    """||X theta - y|| / ||y|| (absolute when y = 0)."""
    ny = np.linalg.norm(y)
    res = np.linalg.norm(np.asarray(X) @ theta - y)
    return float(res / ny) if ny > 0 else float(res)


def stationarity_residual(svd: SvdFactors, theta_hat, w) -> float | None:
    """||P_null((3/2) theta/||theta||^(1/2) - w)||; None for the degenerate theta = 0."""
    norm = np.linalg.norm(theta_hat)
    if norm < 1e-12:
        return None
    grad = 1.5 * theta_hat / math.sqrt(norm) - w
    return float(np.linalg.norm(svd.null_project(grad)))
