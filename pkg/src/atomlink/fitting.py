"""Damped nonlinear least squares (Levenberg-Marquardt).

Small dense problems only: a handful of parameters, a few hundred residuals.
The Jacobian is either supplied or built by central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class FitConvergenceError(RuntimeError):
    """The optimizer stopped without meeting the convergence criterion."""

    def __init__(self, message: str, cost: float, trace: list[np.ndarray]):
        super().__init__(f"{message} (final cost {cost:.6g} after {len(trace) - 1} accepted steps)")
        self.cost = cost
        self.trace = trace


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    cov: np.ndarray
    stderr: np.ndarray
    cost: float
    n_iter: int
    n_eval: int
    dof: int
    trace: list[np.ndarray] = field(repr=False)

    @property
    def reduced_chi2(self) -> float:
        return 2 * self.cost / self.dof if self.dof > 0 else float("nan")


def _fd_jacobian(fun, p, r0, steps):
    J = np.empty((r0.size, p.size))
    for k in range(p.size):
        h = steps[k] * max(1.0, abs(p[k]))
        dp = np.zeros_like(p)
        dp[k] = h
        J[:, k] = (fun(p + dp) - fun(p - dp)) / (2 * h)
    return J


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    p0,
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    fd_steps=1e-6,
    bounds: tuple | None = None,
    max_iter: int = 500,
    rtol: float = 1e-10,
    xtol: float = 1e-10,
    lam0: float = 1e-3,
    scale_cov: bool = True,
) -> FitResult:
    """Minimize ``0.5 * sum(residual(p)**2)``.

    Converges when an accepted step changes the cost by less than ``rtol``
    relative, moves the parameters by less than ``xtol`` relative, when the
    cost underflows to ~0, or when no damping can reduce the cost any further.
    Raises :class:`FitConvergenceError` after ``max_iter`` iterations
    otherwise. ``bounds = (lo, hi)`` keeps iterates in a box by projection.

    The covariance is ``(J^T J)^-1``, scaled by the residual variance
    ``2 cost / (n - p)`` unless ``scale_cov`` is false (residuals already
    weighted by their standard deviations).
    """
    p = np.asarray(p0, dtype=float).copy()
    if bounds is not None:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), p.shape) for b in bounds)
        p = np.clip(p, lo, hi)
    steps = np.broadcast_to(np.asarray(fd_steps, dtype=float), p.shape)
    n_eval = 0

    def fun(q):
        nonlocal n_eval
        n_eval += 1
        r = np.asarray(residual(q), dtype=float)
        if not np.all(np.isfinite(r)):
            return np.full_like(r, np.inf)
        return r

    r = fun(p)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise FitConvergenceError("non-finite residual at the initial guess", cost, [p.copy()])
    jac = (lambda q, r_: np.asarray(jacobian(q), dtype=float)) if jacobian else (lambda q, r_: _fd_jacobian(fun, q, r_, steps))
    lam = lam0
    trace = [p.copy()]
    converged = False
    J = jac(p, r)
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        d[d <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = p + step
            if bounds is not None:
                p_new = np.clip(p_new, lo, hi)
            r_new = fun(p_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged = True  # no damping improves the cost: at a minimum
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        moved = np.linalg.norm(p_new - p) / max(np.linalg.norm(p), 1e-300)
        p, r, cost = p_new, r_new, cost_new
        trace.append(p.copy())
        lam = max(lam / 10, 1e-12)
        if rel < rtol or moved < xtol or cost < 1e-30:
            converged = True
            break
        J = jac(p, r)
    if not converged:
        raise FitConvergenceError(f"no convergence within {max_iter} iterations", cost, trace)

    J = jac(p, r)
    dof = r.size - p.size
    try:
        cov = np.linalg.pinv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.nan)
    if scale_cov:
        cov = cov * (2 * cost / dof if dof > 0 else np.nan)
    stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    return FitResult(p, cov, stderr, cost, it, n_eval, dof, trace)
