"""Force and acceleration primitives for the 3D dual-leg spring walker.

The walker is a point mass on two prismatic spring legs. On rigid ground the
legs are massless and the feet are pinned; on compliant ground each foot
carries a small point mass that moves vertically against a nonlinear
viscoelastic (Hertz-type) contact force. All quantities are SI; angles are
radians everywhere inside the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

GRAVITY_Z = -9.81
CONTACT_EXPONENT = 1.5
CONTACT_DAMPING_RATIO = 0.2
RIGID_EQUIV_STIFFNESS = 50e6  # ground stiffness treated as "rigid" (N/m^1.5)

SS_A, SS_B, DS = "SS_A", "SS_B", "DS"


class ModelError(ValueError):
    """Invalid physical configuration or state."""


@dataclass(frozen=True)
class ModelParams:
    """Masses and geometry of the walker.

    ``foot_mass`` only enters the compliant-ground dynamics; it must be small
    against ``mass`` so the feet carry negligible energy.
    """

    mass: float = 80.0
    rest_length: float = 1.0
    foot_mass: float = 1.0
    gravity_z: float = GRAVITY_Z
    contact_exponent: float = CONTACT_EXPONENT
    damping_ratio: float = CONTACT_DAMPING_RATIO

    def __post_init__(self) -> None:
        if self.mass <= 0.0:
            raise ModelError(f"body mass must be positive, got {self.mass}")
        if self.rest_length <= 0.0:
            raise ModelError(f"rest length must be positive, got {self.rest_length}")
        if not 0.0 < self.foot_mass < self.mass:
            raise ModelError(
                f"foot mass must be in (0, mass), got {self.foot_mass}"
            )
        if self.gravity_z >= 0.0:
            raise ModelError("gravity_z must point down (negative)")


@dataclass(frozen=True)
class Terrain:
    """Ground model for one step.

    ``compliant`` selects the foot-mass contact dynamics; the two stiffness
    values belong to the leg in support at the start of the step and to the
    leg that lands during it. Contact damping is tied to stiffness as
    ``b = 1.5 * damping_ratio * k``.
    """

    compliant: bool
    kg_support: float = RIGID_EQUIV_STIFFNESS
    kg_landing: float = RIGID_EQUIV_STIFFNESS
    damping_ratio: float = CONTACT_DAMPING_RATIO

    def __post_init__(self) -> None:
        if self.compliant and (self.kg_support <= 0.0 or self.kg_landing <= 0.0):
            raise ModelError("ground stiffness must be positive")

    @staticmethod
    def rigid() -> "Terrain":
        return Terrain(compliant=False)

    @staticmethod
    def uniform(kg: float, damping_ratio: float = CONTACT_DAMPING_RATIO) -> "Terrain":
        return Terrain(True, kg_support=kg, kg_landing=kg, damping_ratio=damping_ratio)

    def damping(self, kg: float) -> float:
        return 1.5 * self.damping_ratio * kg


def ground_damping(kg: float, damping_ratio: float = CONTACT_DAMPING_RATIO) -> float:
    """Contact damping coefficient derived from ground stiffness."""
    return 1.5 * damping_ratio * kg


@dataclass(frozen=True)
class LegState:
    """One leg: horizontal foot anchor, vertical foot state, spring stiffness."""

    foot_x: float
    foot_y: float
    foot_z: float = 0.0
    foot_vz: float = 0.0
    stiffness: float = 0.0
    in_stance: bool = False


@dataclass(frozen=True)
class HybridState:
    """Full continuous state between gait events."""

    com: tuple[float, float, float]
    com_vel: tuple[float, float, float]
    leg_a: LegState
    leg_b: LegState
    support_mode: str
    time: float = 0.0

    def stance_legs(self) -> tuple[LegState, ...]:
        return tuple(leg for leg in (self.leg_a, self.leg_b) if leg.in_stance)


def spring_force(
    leg_vec: tuple[float, float, float], rest_length: float, stiffness: float
) -> tuple[float, float, float]:
    """Spring force on the body from one stance leg.

    ``leg_vec`` points from the foot to the body. The force is
    ``k * (l0 - |l|) * l_hat``: positive along the leg when compressed.
    """
    lx, ly, lz = leg_vec
    norm = math.sqrt(lx * lx + ly * ly + lz * lz)
    if norm <= 0.0:
        raise ModelError("zero-length leg vector")
    c = stiffness * (rest_length - norm) / norm
    return (c * lx, c * ly, c * lz)


def ground_force(
    foot_z: float,
    foot_vz: float,
    kg: float,
    bg: float,
    exponent: float = CONTACT_EXPONENT,
) -> float:
    """Vertical contact force on a foot penetrating compliant ground.

    Both the elastic and the damping term scale with penetration depth to the
    contact exponent, so the force is zero and continuous at zero depth.
    Clamped at zero from below: the ground cannot pull the foot down.
    """
    if foot_z >= 0.0:
        return 0.0
    depth = -foot_z
    scale = depth**exponent
    force = scale * (kg - bg * foot_vz)
    return force if force > 0.0 else 0.0


def com_accel(state: HybridState, params: ModelParams) -> tuple[float, float, float]:
    """Body acceleration: sum of stance spring forces over mass, plus gravity."""
    ax = ay = az = 0.0
    cx, cy, cz = state.com
    for leg in state.stance_legs():
        fx, fy, fz = spring_force(
            (cx - leg.foot_x, cy - leg.foot_y, cz - leg.foot_z),
            params.rest_length,
            leg.stiffness,
        )
        ax += fx
        ay += fy
        az += fz
    inv_m = 1.0 / params.mass
    return (ax * inv_m, ay * inv_m, az * inv_m + params.gravity_z)


def foot_accel(
    spring_fz: float, ground_fz: float, params: ModelParams
) -> float:
    """Vertical acceleration of a stance foot mass.

    The spring reaction pushes the foot down with the force it applies to the
    body; the contact force pushes it up. Horizontal motion is constrained.
    """
    if params.foot_mass <= 0.0:
        raise ModelError("foot mass must be positive")
    return (ground_fz - spring_fz) / params.foot_mass + params.gravity_z


def leg_length(state: HybridState, leg: LegState) -> float:
    cx, cy, cz = state.com
    dx, dy, dz = cx - leg.foot_x, cy - leg.foot_y, cz - leg.foot_z
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def mechanical_energy(state: HybridState, params: ModelParams) -> float:
    """Total energy of the body on rigid ground (kinetic + gravity + springs)."""
    vx, vy, vz = state.com_vel
    e = 0.5 * params.mass * (vx * vx + vy * vy + vz * vz)
    e += params.mass * (-params.gravity_z) * state.com[2]
    for leg in state.stance_legs():
        compression = params.rest_length - leg_length(state, leg)
        e += 0.5 * leg.stiffness * compression * compression
    return e
