"""Small damped least-squares (Levenberg-Marquardt) solver.

Handles underdetermined residuals (fewer residuals than unknowns): the
damped step is the minimum-norm solution in the scaled variable space, so
iterates stay close to the seed. Residual evaluations may raise
:class:`InfeasiblePoint`; such trial points are rejected like uphill steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InfeasiblePoint(RuntimeError):
    """Residual undefined at this point (e.g. the simulation lost an event)."""


class SolverError(RuntimeError):
    """Solver did not reach the requested tolerance."""

    def __init__(self, message, best=None, residual_norm=None):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def levenberg_marquardt(
    fun,
    x0,
    bounds=None,
    scale=None,
    ftol: float = 1e-9,
    xtol: float = 1e-14,
    max_iter: int = 200,
    fd_rel_step: float = 1e-6,
    lam0: float = 1e-3,
) -> LeastSquaresResult:
    """Minimize ``|fun(x)|^2`` with damped Gauss-Newton steps.

    ``scale`` sets the per-variable step metric (defaults to all ones);
    Jacobians are forward differences with relative step ``fd_rel_step`` in
    scaled coordinates. Accepted iterates never increase the residual norm.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
    if bounds is None:
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
    else:
        lo = np.asarray([b[0] for b in bounds], dtype=float)
        hi = np.asarray([b[1] for b in bounds], dtype=float)

    def clip(x):
        return np.minimum(np.maximum(x, lo), hi)

    x = clip(x0)
    r = np.asarray(fun(x), dtype=float)
    rnorm = np.linalg.norm(r)
    lam = lam0
    it = 0
    while it < max_iter:
        it += 1
        if rnorm <= ftol:
            return LeastSquaresResult(x, r, rnorm, it, True)

        w = x / scale
        jac = np.empty((r.size, n))
        ok = True
        for j in range(n):
            dw = fd_rel_step * max(abs(w[j]), 1.0)
            xj = x.copy()
            xj[j] = (w[j] + dw) * scale[j]
            if xj[j] > hi[j]:
                dw = -dw
                xj[j] = (w[j] + dw) * scale[j]
            try:
                rj = np.asarray(fun(clip(xj)), dtype=float)
            except InfeasiblePoint:
                ok = False
                break
            jac[:, j] = (rj - r) / dw
        if not ok:
            raise SolverError(
                "Jacobian evaluation hit an infeasible point", best=x, residual_norm=rnorm
            )

        accepted = False
        for _ in range(25):
            aug = np.vstack([jac, np.sqrt(lam) * np.eye(n)])
            rhs = np.concatenate([-r, np.zeros(n)])
            sw = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            x_try = clip((w + sw) * scale)
            step = np.linalg.norm(sw)
            if step < xtol:
                break
            try:
                r_try = np.asarray(fun(x_try), dtype=float)
            except InfeasiblePoint:
                lam *= 10.0
                continue
            if np.linalg.norm(r_try) < rnorm:
                x, r, rnorm = x_try, r_try, np.linalg.norm(r_try)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 5.0
        if not accepted:
            if rnorm <= 10.0 * ftol:
                return LeastSquaresResult(x, r, rnorm, it, True)
            raise SolverError(
                f"stalled at |r|={rnorm:.3e} after {it} iterations",
                best=x,
                residual_norm=rnorm,
            )
    if rnorm <= ftol:
        return LeastSquaresResult(x, r, rnorm, it, True)
    raise SolverError(
        f"no convergence in {max_iter} iterations (|r|={rnorm:.3e})",
        best=x,
        residual_norm=rnorm,
    )
