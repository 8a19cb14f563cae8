"""Quarter-period search for periodic, left-right symmetric walking gaits.

A gait is periodic with left-right symmetry when, at the lowest-height event,
the body's ground projection sits exactly on the midpoint between the two
feet (with the midstance state restricted to zero fore-aft offset and zero
lateral velocity). The search integrates only from midstance to the first
lowest-height event and drives that two-component midpoint error to zero over
the decision variables (apex height, both touchdown angles, leg stiffness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .leastsq import InfeasiblePoint, levenberg_marquardt
from .model import ModelParams, Terrain, ground_damping
from .sim import (
    EVENT_LH,
    EVENT_TD,
    SimSettings,
    Surface,
    _failure_surfaces,
    _leg_length_fn,
    _rhs_ds_rigid,
    _rhs_ds_soft,
    _rhs_ss_rigid,
    _rhs_ss_soft,
    _run_phase,
    stride_map_normalized,
    touchdown_placement,
)

# the quarter-period symmetry degrades on soft ground; refuse the search there
MIN_SEARCH_GROUND_STIFFNESS = 1e6


class GaitSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaitSearchSpec:
    """Target velocity, fixed midstance fields, seeds and bounds.

    The quarter-period condition is two equations in four unknowns, so the
    converged gait depends on the seed: it is the family member nearest the
    seeded gait shape. Defaults seed the human-like reference shape for an
    80 kg, 1 m walker (leg stiffness ~14 kN/m, apex just below rest length,
    touchdown ~17 deg ahead of vertical).
    """

    forward_velocity: float
    x_offset: float = 0.0
    y_offset: float = 0.05
    lateral_velocity: float = 0.0
    z0_seed: float = 0.99
    z0_bounds: tuple[float, float] = (0.9, 1.0)
    theta_seed: float = math.radians(107.0)
    theta_bounds: tuple[float, float] = (math.radians(95.0), math.radians(125.0))
    phi_seed: float = math.radians(11.0)
    phi_bounds: tuple[float, float] = (math.radians(2.0), math.radians(25.0))
    k_seed: float = 14e3
    k_bounds: tuple[float, float] = (5e3, 50e3)


@dataclass
class PeriodicGait:
    """A converged gait: the midstance fixed point and its controls."""

    x0: np.ndarray  # [x-xf, y-yf, z, vx, vy] at midstance
    u0: np.ndarray  # [theta, phi, k], radians
    residual_norm: float
    forward_velocity: float
    periodicity_error: float = math.nan  # |stride(x0,u0) - A x0|_inf, filled by verify

    def midstance_error(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.x0

    def control_error(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) - self.u0


def _check_terrain(terrain: Terrain) -> None:
    if terrain.compliant and min(terrain.kg_support, terrain.kg_landing) < MIN_SEARCH_GROUND_STIFFNESS:
        raise GaitSearchError(
            "quarter-period gait search needs near-rigid ground "
            f"(stiffness >= {MIN_SEARCH_GROUND_STIFFNESS:.0e}); got "
            f"{min(terrain.kg_support, terrain.kg_landing):.3g}"
        )


def quarter_period_residual(
    z0: float,
    u0: np.ndarray,
    spec: GaitSearchSpec,
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
) -> np.ndarray:
    """Midpoint error at the first lowest-height event.

    Components: ((x_fA + x_fB)/2 - x_c, (y_fA + y_fB)/2 - y_c) at that event,
    with the support foot A at the origin. Raises :class:`InfeasiblePoint`
    when touchdown or lowest height is never reached.
    """
    _check_terrain(terrain)
    theta, phi, k = float(u0[0]), float(u0[1]), float(u0[2])
    l0 = params.rest_length
    z_th = l0 * math.sin(theta)
    if z0 <= z_th:
        raise InfeasiblePoint(f"apex {z0} below touchdown height {z_th}")
    compliant = terrain.compliant
    bg_sup = ground_damping(terrain.kg_support, terrain.damping_ratio)
    bg_land = ground_damping(terrain.kg_landing, terrain.damping_ratio)
    length_sup = _leg_length_fn(0.0, 0.0, 6 if compliant else None)
    if compliant:
        rhs = _rhs_ss_soft(0.0, 0.0, k, terrain.kg_support, bg_sup, params)
        y = np.array([spec.x_offset, spec.y_offset, z0,
                      spec.forward_velocity, spec.lateral_velocity, 0.0, 0.0, 0.0])
    else:
        rhs = _rhs_ss_rigid(0.0, 0.0, k, params)
        y = np.array([spec.x_offset, spec.y_offset, z0,
                      spec.forward_velocity, spec.lateral_velocity, 0.0])
    td = Surface(EVENT_TD, lambda y: y[2] - z_th, -1,
                 guard=lambda y: y[5] < 0.0 and length_sup(y) <= l0)
    hit, t, y = _run_phase(rhs, 0.0, y, [td] + _failure_surfaces(params, [length_sup]), settings)
    if hit is None or hit.failure:
        raise InfeasiblePoint("no touchdown event")

    fbx, fby, _ = touchdown_placement((y[0], y[1], y[2]), theta, phi, +1, l0)
    length_land = _leg_length_fn(fbx, fby, 8 if compliant else None)
    if compliant:
        rhs = _rhs_ds_soft(0.0, 0.0, k, terrain.kg_support, bg_sup,
                           fbx, fby, k, terrain.kg_landing, bg_land, params)
        y = np.concatenate([y, [0.0, 0.0]])
    else:
        rhs = _rhs_ds_rigid(0.0, 0.0, k, fbx, fby, k, params)
    lh = Surface(EVENT_LH, lambda y: y[5], +1,
                 guard=lambda y: y[2] < z_th and length_sup(y) <= l0)
    hit, t, y = _run_phase(
        rhs, t, y, [lh] + _failure_surfaces(params, [length_sup, length_land]), settings
    )
    if hit is None or hit.failure:
        raise InfeasiblePoint("no lowest-height event")
    return np.array([0.5 * fbx - y[0], 0.5 * fby - y[1]])


def find_periodic_gait(
    spec: GaitSearchSpec,
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
    ftol: float = 1e-9,
    verify_tol: float = 1e-3,
) -> PeriodicGait:
    """Solve for a periodic gait at the commanded forward velocity.

    The four decision variables are searched with damped least squares from
    the configured seeds; the converged point is then verified through a full
    stride against the mirrored-fixed-point condition.
    """
    _check_terrain(terrain)

    def residual(v):
        return quarter_period_residual(v[0], v[1:4], spec, terrain, params, settings)

    seed = np.array([spec.z0_seed, spec.theta_seed, spec.phi_seed, spec.k_seed])
    bounds = [spec.z0_bounds, spec.theta_bounds, spec.phi_bounds, spec.k_bounds]
    scale = np.array([1.0, 1.0, 1.0, 1e4])
    result = levenberg_marquardt(residual, seed, bounds=bounds, scale=scale, ftol=ftol)
    z0, theta, phi, k = result.x
    gait = PeriodicGait(
        x0=np.array([spec.x_offset, spec.y_offset, z0,
                     spec.forward_velocity, spec.lateral_velocity]),
        u0=np.array([theta, phi, k]),
        residual_norm=result.residual_norm,
        forward_velocity=spec.forward_velocity,
    )
    x_next, record = stride_map_normalized(gait.x0, gait.u0, terrain, params, settings)
    if x_next is None:
        raise GaitSearchError(f"converged gait does not complete a stride: {record.outcome}")
    gait.periodicity_error = float(np.abs(x_next - gait.x0).max())
    if terrain.compliant is False and gait.periodicity_error > verify_tol:
        raise GaitSearchError(
            f"periodicity check failed: |f(x0,u0) - A x0| = {gait.periodicity_error:.2e}"
        )
    return gait
