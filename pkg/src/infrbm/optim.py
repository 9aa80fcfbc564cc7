"""Limited-memory BFGS with Armijo backtracking."""

from dataclasses import dataclass

import numpy as np


@dataclass
class LbfgsResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool

    @property
    def grad_norm(self):
        return float(np.linalg.norm(self.grad))


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((rho, a))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def lbfgs(fun, x0, tol=1e-5, max_iters=500, memory=10, c1=1e-4, max_backtracks=60):
    """Minimize ``fun(x) -> (value, grad)`` until ||grad||_2 <= tol or ``max_iters``.

    Every accepted step satisfies the Armijo condition, so the returned value
    never exceeds the value at ``x0``.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    s_hist, y_hist = [], []
    for it in range(max_iters):
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            return LbfgsResult(x, f, g, it, True)
        d = -_two_loop(g, s_hist, y_hist)
        slope = g @ d
        if not slope < 0:
            s_hist, y_hist = [], []
            d, slope = -g, -(g @ g)
        step = 1.0 if s_hist else min(1.0, 1.0 / gnorm)
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fun(x_new)
            if f_new <= f + c1 * step * slope:
                break
            step *= 0.5
        else:
            # no decrease representable along d: treat as converged to machine precision
            return LbfgsResult(x, f, g, it, False)
        s, y = x_new - x, g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        x, f, g = x_new, f_new, g_new
    return LbfgsResult(x, f, g, max_iters, bool(np.linalg.norm(g) <= tol))
