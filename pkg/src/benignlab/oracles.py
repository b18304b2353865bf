"""Slow, independent reference computations used to cross-check the fast paths.

None of these touch the SVD pipeline in ``estimator``: the null space comes
from a QR factorization, the quartic is solved by bisection, risks are
sampled.
"""
from __future__ import annotations

import math

import numpy as np

from .spectrum import CovarianceSpectrum


def null_space_qr(X) -> tuple[np.ndarray, np.ndarray]:
    """(particular least-norm solution map Q1 R^-T, orthonormal null basis N) via QR of X^T."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    Q, R = np.linalg.qr(X.T, mode="complete")
    return Q[:, :n], R[:n], Q[:, n:]


def particular_solution(X, y) -> np.ndarray:
    """Least-norm interpolant from the QR factors: theta = Q1 R1^{-T} y."""
    Q1, R1, _ = null_space_qr(X)
    return Q1 @ np.linalg.solve(R1.T, np.asarray(y, dtype=float))


def bisection_quartic(zeta: float, rho: float, tol: float = 1e-15, max_iter: int = 400) -> float:
    """Positive root of 81 a^4 - 16 zeta a^2 - 16 rho by bisection."""
    def f(a):
        return 81.0 * a ** 4 - 16.0 * zeta * a ** 2 - 16.0 * rho

    lo, hi = 0.0, 1.0
    while f(hi) < 0:
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(hi, 1e-300):
            break
    return 0.5 * (lo + hi)


def nullspace_descent(X, y, w, restarts: int = 3, seed: int = 0, max_iter: int = 20_000,
                      gtol: float = 1e-11) -> np.ndarray:
    """Minimize ||t0 + N xi||^(3/2) - w.(t0 + N xi) over xi by gradient descent with
    Armijo backtracking, keeping the best of several random starts."""
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    t0 = particular_solution(X, y)
    _, _, N = null_space_qr(X)
    rng = np.random.default_rng(seed)
    wN = N.T @ w

    def f(xi):
        th = t0 + N @ xi
        return np.linalg.norm(th) ** 1.5 - w @ th

    def grad(xi):
        th = t0 + N @ xi
        nrm = np.linalg.norm(th)
        g = 1.5 * th / math.sqrt(nrm) if nrm > 0 else np.zeros_like(th)
        return N.T @ g - wN

    scale = max(np.linalg.norm(t0), np.linalg.norm(w), 1.0)
    best, best_val = None, np.inf
    for r in range(restarts):
        xi = np.zeros(N.shape[1]) if r == 0 else rng.standard_normal(N.shape[1]) * scale
        step = 1.0
        fx = f(xi)
        for _ in range(max_iter):
            g = grad(xi)
            gn = g @ g
            if gn <= (gtol * scale) ** 2:
                break
            while True:
                cand = xi - step * g
                fc = f(cand)
                if fc <= fx - 0.5 * step * gn or step < 1e-16:
                    break
                step *= 0.5
            if fc >= fx:
                break  # no representable decrease left
            xi, fx = cand, fc
            step *= 2.0
        if fx < best_val:
            best, best_val = xi, fx
    return t0 + N @ best


def random_feasible(X, y, count: int, seed: int = 0, scale: float = 1.0,
                    center=None) -> np.ndarray:
    """``count`` random interpolants theta' = center + N xi (rows of the result)."""
    _, _, N = null_space_qr(X)
    center = particular_solution(X, y) if center is None else np.asarray(center, dtype=float)
    xi = np.random.default_rng(seed).standard_normal((count, N.shape[1])) * scale
    return center[None, :] + xi @ N.T


def monte_carlo_risk(theta, theta_star, spec: CovarianceSpectrum, n_test: int = 100_000,
                     seed: int = 0) -> tuple[float, float]:
    """Sample mean and standard error of (x.(theta* - theta))^2 over fresh gaussian test points."""
    d = np.asarray(theta_star, dtype=float) - np.asarray(theta, dtype=float)
    rng = np.random.default_rng(seed)
    root = np.sqrt(spec.lambdas)
    vals = np.empty(n_test)
    chunk = 10_000
    for start in range(0, n_test, chunk):
        m = min(chunk, n_test - start)
        x = rng.standard_normal((m, spec.p)) * root
        vals[start:start + m] = (x @ d) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_test))
