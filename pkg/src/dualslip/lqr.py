"""Step-to-step regulation: stride-map linearization, DARE, feedback law.

The stride map is linearized about the periodic gait in the side-normalized
frame where the gait is a fixed point; the resulting discrete LQR gain maps
midstance state errors to corrections of the touchdown angles and the leg
stiffness applied over the next step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gait import PeriodicGait
from .model import ModelParams, Terrain
from .sim import SimSettings, mirror_control, mirror_state, stride_map_normalized


class SynthesisError(RuntimeError):
    """Linearization or Riccati solve failed."""


@dataclass
class StrideLinearization:
    """Jacobians of the side-normalized stride map at the periodic gait."""

    jx: np.ndarray  # 5x5, d(next MS)/d(MS state)
    ju: np.ndarray  # 5x3, d(next MS)/d(controls)
    gait: PeriodicGait
    fd_step: float

    def controllable(self) -> bool:
        n = self.jx.shape[0]
        blocks = [self.ju]
        for _ in range(n - 1):
            blocks.append(self.jx @ blocks[-1])
        ctrb = np.hstack(blocks)
        return int(np.linalg.matrix_rank(ctrb)) == n


@dataclass
class LqrSolution:
    """Weights, Riccati solution, and the feedback gain."""

    q: np.ndarray
    r: np.ndarray
    p: np.ndarray
    k: np.ndarray  # 3x5
    linearization: StrideLinearization | None = None
    closed_loop_eigs: np.ndarray = field(default_factory=lambda: np.array([]))


def numeric_jacobians(
    gait: PeriodicGait,
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
    fd_step: float = 1e-6,
) -> StrideLinearization:
    """Central-difference Jacobians of the normalized stride map.

    Per-variable steps are ``fd_step * max(|v|, 1)``. Probes run through the
    full event-driven stride, so the integration tolerances in ``settings``
    must be well below the probe step; failures name the offending probe.
    """

    def f(x, u):
        x_next, record = stride_map_normalized(x, u, terrain, params, settings)
        if x_next is None:
            raise SynthesisError(f"stride failed during linearization: {record.outcome}")
        return x_next

    x0, u0 = gait.x0, gait.u0
    jx = np.empty((5, 5))
    for j in range(5):
        h = fd_step * max(abs(x0[j]), 1.0)
        xp = x0.copy()
        xp[j] += h
        xm = x0.copy()
        xm[j] -= h
        try:
            jx[:, j] = (f(xp, u0) - f(xm, u0)) / (2.0 * h)
        except SynthesisError as err:
            raise SynthesisError(f"state probe {j}: {err}") from None
    ju = np.empty((5, 3))
    for j in range(3):
        h = fd_step * max(abs(u0[j]), 1.0)
        up = u0.copy()
        up[j] += h
        um = u0.copy()
        um[j] -= h
        try:
            ju[:, j] = (f(x0, up) - f(x0, um)) / (2.0 * h)
        except SynthesisError as err:
            raise SynthesisError(f"control probe {j}: {err}") from None
    return StrideLinearization(jx=jx, ju=ju, gait=gait, fd_step=fd_step)


def solve_dare(
    jx: np.ndarray,
    ju: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> np.ndarray:
    """Structure-preserving doubling iteration for the discrete Riccati
    equation.

    Each sweep squares the effective horizon, so convergence is quadratic;
    iterates start from P = Q and stop when the update falls below ``tol``
    in max norm. The iterate is symmetrized every sweep.
    """
    a = np.asarray(jx, dtype=float)
    ju = np.asarray(ju, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    n = a.shape[0]
    g = ju @ np.linalg.solve(r, ju.T)
    h = q.copy()
    eye = np.eye(n)
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            m = eye + g @ h
            try:
                m_inv_a = np.linalg.solve(m, a)
                m_inv_g = np.linalg.solve(m, g @ a.T)
            except np.linalg.LinAlgError as err:
                raise SynthesisError(f"Riccati doubling step singular: {err}") from None
            h_next = h + a.T @ h @ m_inv_a
            g = g + a @ m_inv_g
            a = a @ m_inv_a
        h_next = 0.5 * (h_next + h_next.T)
        g = 0.5 * (g + g.T)
        if not np.all(np.isfinite(h_next)) or not np.all(np.isfinite(g)):
            raise SynthesisError("Riccati doubling diverged")
        delta = np.abs(h_next - h).max()
        h = h_next
        if delta < tol:
            return _newton_polish(h, jx, ju, q, r)
    raise SynthesisError(f"Riccati doubling did not converge in {max_iter} sweeps")


def _newton_polish(p, jx, ju, q, r, sweeps: int = 2) -> np.ndarray:
    """Newton correction of a near-converged Riccati solution.

    Weakly damped closed-loop modes leave the doubling iterate with a
    residual well above round-off; each Newton step solves the discrete
    Lyapunov equation of the residual along the closed-loop dynamics.
    """
    n = p.shape[0]
    eye = np.eye(n)
    for _ in range(sweeps):
        pju = p @ ju
        gain = np.linalg.solve(ju.T @ pju + r, pju.T @ jx)
        a_cl = jx - ju @ gain
        res = jx.T @ p @ jx - jx.T @ pju @ gain + q - p
        if np.abs(res).max() < 1e-14:
            break
        lhs = np.kron(a_cl.T, a_cl.T) - np.eye(n * n)
        try:
            vec = np.linalg.solve(lhs, -res.reshape(n * n))
        except np.linalg.LinAlgError:
            break
        p = p + vec.reshape(n, n)
        p = 0.5 * (p + p.T)
    return p


def dare_residual(
    p: np.ndarray, jx: np.ndarray, ju: np.ndarray, q: np.ndarray, r: np.ndarray
) -> float:
    pju = p @ ju
    res = p - (jx.T @ p @ jx - jx.T @ pju @ np.linalg.solve(ju.T @ pju + r, pju.T @ jx) + q)
    return float(np.abs(res).max())


def lqr_gain(p: np.ndarray, jx: np.ndarray, ju: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Feedback gain K = -(Ju' P Ju + R)^-1 Ju' P Jx."""
    m = ju.T @ p @ ju + r
    try:
        return -np.linalg.solve(m, ju.T @ p @ jx)
    except np.linalg.LinAlgError as err:
        raise SynthesisError(f"singular gain system: {err}") from None


def synthesize(
    linearization: StrideLinearization,
    q: np.ndarray | None = None,
    r: np.ndarray | None = None,
) -> LqrSolution:
    """Solve the Riccati equation and assemble the feedback gain."""
    q = np.eye(5) if q is None else np.asarray(q, dtype=float)
    r = np.eye(3) if r is None else np.asarray(r, dtype=float)
    if not linearization.controllable():
        raise SynthesisError("linearized stride map is not controllable")
    p = solve_dare(linearization.jx, linearization.ju, q, r)
    k = lqr_gain(p, linearization.jx, linearization.ju, r)
    eigs = np.linalg.eigvals(linearization.jx + linearization.ju @ k)
    return LqrSolution(q=q, r=r, p=p, k=k, linearization=linearization, closed_loop_eigs=eigs)


def control_law(n: int, x: np.ndarray, gait: PeriodicGait, k: np.ndarray) -> np.ndarray:
    """Step-to-step feedback in physical (unreflected) coordinates.

    u_n = u_n* + B^n K A^n (x_n - x_n*), with x_n* = A^n x0* and
    u_n* = B^n u0*. For even n this is the side-normalized law
    u0* + K (x - x0*); odd steps wrap it in the mirror bookkeeping.
    """
    x = np.asarray(x, dtype=float)
    if n % 2 == 0:
        return gait.u0 + k @ (x - gait.x0)
    du = k @ (mirror_state(x) - gait.x0)
    return mirror_control(gait.u0 + du)
