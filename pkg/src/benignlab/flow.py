"""Full-batch gradient descent on balanced two-layer linear networks x -> a^T W x."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# Gradient flow from a balanced init reaches argmin (2/3)||theta||^(3/2) - w.theta,
# i.e. the closed form evaluated at this multiple of w = theta(0)/sqrt(||theta(0)||).
FLOW_W_SCALE = 1.5


class DivergenceError(RuntimeError):
    pass


@dataclass(eq=False)
class TwoLayerNet:
    a: np.ndarray  # (m,)
    W: np.ndarray  # (m, p)

    @property
    def theta(self) -> np.ndarray:
        return self.W.T @ self.a

    def balancedness(self) -> float:
        """Frobenius norm of aa^T - WW^T."""
        return float(np.linalg.norm(np.outer(self.a, self.a) - self.W @ self.W.T))

    def copy(self) -> "TwoLayerNet":
        return TwoLayerNet(self.a.copy(), self.W.copy())


def balanced_init(theta0, m: int, seed=None) -> TwoLayerNet:
    """Rank-one balanced net with W^T a = theta0: a = sqrt(|theta0|) u, W = u theta0^T / sqrt(|theta0|)."""
    theta0 = np.asarray(theta0, dtype=float)
    norm = np.linalg.norm(theta0)
    if norm == 0:
        raise ValueError("balanced init needs a nonzero theta0")
    if m < 1:
        raise ValueError("hidden width must be >= 1")
    if m == 1:
        u = np.ones(1)
    else:
        u = np.random.default_rng(seed).standard_normal(m)
        u /= np.linalg.norm(u)
    root = math.sqrt(norm)
    return TwoLayerNet(a=root * u, W=np.outer(u, theta0 / root))


def loss_and_grads(net: TwoLayerNet, X, y) -> tuple[float, np.ndarray, np.ndarray]:
    """L = ||y - X W^T a||^2 and its gradients with respect to a and W."""
    r = X @ (net.W.T @ net.a) - y
    g = 2.0 * (X.T @ r)
    return float(r @ r), net.W @ g, np.outer(net.a, g)


def default_step(net: TwoLayerNet, X) -> float:
    mu1 = np.linalg.norm(X, ord=2) ** 2
    scale = float(net.a @ net.a) + np.linalg.norm(net.W, ord=2) ** 2
    return 0.1 / (mu1 * max(scale, 1e-12))


@dataclass(eq=False)
class FlowResult:
    net: TwoLayerNet
    iterations: int
    converged: bool
    fit_residual: float  # ||y - X theta|| / ||y||
    balancedness: float
    step: float
    restarts: int

    @property
    def theta(self) -> np.ndarray:
        return self.net.theta

    @property
    def relative_balancedness(self) -> float:
        scale = float(self.net.a @ self.net.a)  # ||aa^T||_F
        return self.balancedness / scale if scale > 0 else self.balancedness


def train_gradient_descent(net: TwoLayerNet, X, y, step: float | None = None,
                           max_iters: int = 200_000, tol: float = 1e-10,
                           max_restarts: int = 20) -> FlowResult:
    """Gradient descent until ||y - X theta|| <= tol ||y||.

    On divergence (loss 10x above its starting value, or non-finite) the run
    restarts from ``net`` with half the step.  Hitting ``max_iters`` is reported
    through ``converged=False`` rather than raised.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if net.W.shape[1] != X.shape[1] or net.W.shape[0] != net.a.size:
        raise ValueError("network shape does not match X")
    if step is None:
        step = default_step(net, X)
    if step <= 0:
        raise ValueError("step must be positive")
    ny = float(np.linalg.norm(y))
    target = tol * ny if ny > 0 else tol
    Xt = X.T

    for restart in range(max_restarts + 1):
        a = net.a.copy()
        W = net.W.copy()
        r = X @ (W.T @ a) - y
        loss0 = float(r @ r)
        diverged = False
        it = 0
        while it < max_iters:
            res = math.sqrt(float(r @ r))
            if res <= target:
                break
            if not math.isfinite(res) or res * res > 10.0 * loss0 + 1e-300:
                diverged = True
                break
            g = 2.0 * (Xt @ r)
            ga = W @ g
            W -= step * np.outer(a, g)
            a -= step * ga
            r = X @ (W.T @ a) - y
            it += 1
        if not diverged:
            out = TwoLayerNet(a, W)
            res = float(np.linalg.norm(X @ out.theta - y))
            return FlowResult(
                net=out,
                iterations=it,
                converged=res <= target,
                fit_residual=res / ny if ny > 0 else res,
                balancedness=out.balancedness(),
                step=step,
                restarts=restart,
            )
        log.info("gradient descent diverged at step %.3e; halving", step)
        step *= 0.5
    raise DivergenceError(f"gradient descent diverged after {max_restarts} step reductions")
