"""A small BFGS minimizer with finite-difference gradients.

Written for low-dimensional, cheap, piecewise-smooth objectives such as the
6-parameter reprojection error. The returned iterate is always the best one
seen, so the final objective never exceeds the starting value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    converged: bool
    message: str


def central_difference_gradient(fun, x, rel_step=1e-6):
    """Central finite-difference gradient with step ``rel_step * max(1, |x_i|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        # use the realized step to cancel representation error in x +/- h
        g[i] = (fun(xp) - fun(xm)) / (xp[i] - xm[i])
    return g


def minimize_bfgs(
    fun: Callable[[np.ndarray], float],
    x0,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
    gtol: float = 1e-8,
    xtol: float = 1e-10,
    max_iter: int = 500,
    rel_step: float = 1e-6,
    c1: float = 1e-4,
) -> OptimizeResult:
    """Minimize ``fun`` with BFGS and an Armijo backtracking line search.

    Converges when the gradient infinity-norm drops below ``gtol`` or no step
    longer than ``xtol`` decreases the objective.
    """
    nfev = 0

    def f(v):
        nonlocal nfev
        nfev += 1
        return float(fun(v))

    if grad is None:
        def grad(v):
            return central_difference_gradient(f, v, rel_step)

    x = np.array(x0, dtype=float)
    n = x.size
    fx = f(x)
    if not np.isfinite(fx):
        return OptimizeResult(x, fx, np.full(n, np.nan), 0, nfev, False, "objective not finite at start")
    g = grad(x)
    H = np.eye(n)
    first_update = True

    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            return OptimizeResult(x, fx, g, it - 1, nfev, True, "gradient below tolerance")
        p = -H @ g
        slope = float(g @ p)
        if not slope < 0:
            # lost positive definiteness; restart from steepest descent
            H = np.eye(n)
            first_update = True
            p = -g
            slope = float(g @ p)

        alpha = 1.0
        step_ok = False
        while True:
            x_new = x + alpha * p
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new <= fx + c1 * alpha * slope:
                step_ok = True
                break
            if np.linalg.norm(alpha * p) < xtol:
                break
            alpha *= 0.5

        if not step_ok:
            return OptimizeResult(x, fx, g, it - 1, nfev, True, "step below tolerance")

        s = x_new - x
        g_new = grad(x_new)
        y = g_new - g
        x, fx, g = x_new, f_new, g_new

        if np.linalg.norm(s) < xtol:
            return OptimizeResult(x, fx, g, it, nfev, True, "step below tolerance")

        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                H = np.eye(n) * (sy / float(y @ y))
                first_update = False
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)

    converged = bool(np.max(np.abs(g)) < gtol)
    return OptimizeResult(x, fx, g, max_iter, nfev, converged, "maximum iterations reached")
