"""Leg-stiffness scheduling around an expected one-step soft-ground landing.

Before the perturbation both legs track the feedback controller's stiffness
output. At touchdown of the perturbation step the landing leg is amplified by
``k1`` and the supporting leg by ``k2``; on the following step the perturbed
leg keeps its amplification (applied to the fresh controller output) until it
leaves the ground, after which everything returns to the baseline law. The
ground under the perturbed leg is soft for exactly that one stance phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import RIGID_EQUIV_STIFFNESS, Terrain
from .sim import EVENT_MS, EVENT_TD, StepStiffness


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationSpec:
    """One-step unilateral ground-stiffness drop.

    The perturbed leg is the one landing at step ``step``; its ground is
    ``ground_stiffness`` from that touchdown until its lift-off, then rigid
    again. The other leg stays on rigid-equivalent ground throughout.
    """

    step: int
    ground_stiffness: float
    rigid_stiffness: float = RIGID_EQUIV_STIFFNESS

    def __post_init__(self) -> None:
        if self.step < 1:
            raise ScheduleError(f"perturbation step must be >= 1, got {self.step}")
        if not 0.0 < self.ground_stiffness <= self.rigid_stiffness:
            raise ScheduleError(
                "perturbation ground stiffness must be in (0, rigid], got "
                f"{self.ground_stiffness}"
            )


@dataclass(frozen=True)
class StiffnessGains:
    """Amplification factors for the perturbed (k1) and supporting (k2) legs.

    ``anchor_power`` fixes what amplifying a loaded spring means: the rest
    length re-anchors by that power of the stiffness ratio. The default 0.5
    preserves the stored elastic energy (the switch does no work on the
    leg); 0 rescales the force outright, 1 keeps the force continuous. Only
    the supporting leg is ever amplified while loaded, so the landing leg is
    unaffected by this choice.
    """

    k1: float = 1.0
    k2: float = 1.0
    anchor_power: float = 0.5

    def __post_init__(self) -> None:
        if self.k1 < 1.0 or self.k2 < 1.0:
            raise ScheduleError(f"stiffness gains must be >= 1, got ({self.k1}, {self.k2})")
        if not 0.0 <= self.anchor_power <= 1.0:
            raise ScheduleError(f"anchor power must be in [0, 1], got {self.anchor_power}")

    @property
    def enabled(self) -> bool:
        return self.k1 > 1.0 or self.k2 > 1.0


def leg_stiffness_schedule(
    n: int,
    event: str,
    k_n: float,
    spec: PerturbationSpec | None,
    gains: StiffnessGains,
) -> tuple[float, float]:
    """Stiffness of (perturbed leg, other leg) after ``event`` of step ``n``.

    A pure function of the step index and the controller's stiffness output
    for that step, so replaying a trial reproduces identical assignments.
    """
    if k_n <= 0.0:
        raise ScheduleError(f"controller stiffness must be positive, got {k_n}")
    if event not in (EVENT_MS, EVENT_TD):
        raise ScheduleError(f"schedule is defined at MS and TD only, got {event!r}")
    if spec is None:
        return (k_n, k_n)
    if n == spec.step and event == EVENT_TD:
        return (gains.k1 * k_n, gains.k2 * k_n)
    if n == spec.step + 1:
        return (gains.k1 * k_n, k_n)
    return (k_n, k_n)


def step_stiffness(
    n: int,
    k_n: float,
    spec: PerturbationSpec | None,
    gains: StiffnessGains,
) -> StepStiffness:
    """Per-phase stiffness for one step of the closed-loop runner.

    Maps the (perturbed, other) pair onto the step's support/landing roles:
    the perturbed leg lands at the perturbation step and supports the next.
    """
    a_ms, b_ms = leg_stiffness_schedule(n, EVENT_MS, k_n, spec, gains)
    a_td, b_td = leg_stiffness_schedule(n, EVENT_TD, k_n, spec, gains)
    if spec is not None and n == spec.step:
        power = gains.anchor_power if gains.enabled else 0.0
        return StepStiffness(
            support_before_td=b_ms, support_after_td=b_td, landing=a_td,
            anchor_power=power,
        )
    if spec is not None and n == spec.step + 1:
        return StepStiffness(
            support_before_td=a_ms, support_after_td=a_td, landing=b_td
        )
    return StepStiffness(support_before_td=a_ms, support_after_td=a_td, landing=a_td)


def ground_stiffness_schedule(
    n: int,
    spec: PerturbationSpec | None,
    rigid_stiffness: float = RIGID_EQUIV_STIFFNESS,
) -> tuple[float, float]:
    """Ground stiffness (support leg, landing leg) for step ``n``.

    The drop applies from the perturbed leg's touchdown through its stance
    into the next step; every other stance is rigid-equivalent.
    """
    if spec is None:
        return (rigid_stiffness, rigid_stiffness)
    if n == spec.step:
        return (spec.rigid_stiffness, spec.ground_stiffness)
    if n == spec.step + 1:
        return (spec.ground_stiffness, spec.rigid_stiffness)
    return (spec.rigid_stiffness, spec.rigid_stiffness)


def step_terrain(
    n: int,
    spec: PerturbationSpec | None,
    compliant: bool,
    rigid_stiffness: float = RIGID_EQUIV_STIFFNESS,
    damping_ratio: float | None = None,
) -> Terrain:
    """Terrain for one step of a trial; rigid model when ``compliant`` is off."""
    if not compliant:
        if spec is not None:
            raise ScheduleError("ground-stiffness perturbations need the compliant model")
        return Terrain.rigid()
    kg_sup, kg_land = ground_stiffness_schedule(n, spec, rigid_stiffness)
    kwargs = {} if damping_ratio is None else {"damping_ratio": damping_ratio}
    return Terrain(True, kg_support=kg_sup, kg_landing=kg_land, **kwargs)


@dataclass
class GainSearchResult:
    gains: StiffnessGains
    score: float
    max_penetration_depth: float
    table: list  # (k1, k2, completed, score, depth) per grid point


def default_gain_grid() -> list[tuple[float, float]]:
    """Coarse tuning grid: k1 in 1.0..8.0 by 0.25, k2 in 1.0..3.5 by 0.05."""
    k1s = [1.0 + 0.25 * i for i in range(29)]
    k2s = [1.0 + 0.05 * j for j in range(51)]
    return [(k1, k2) for k1 in k1s for k2 in k2s]


def find_gains(
    run_trial,
    grid: list[tuple[float, float]] | None = None,
    refine: bool = True,
) -> GainSearchResult:
    """Grid-search the gain pair minimizing the steady-state error score.

    ``run_trial(k1, k2)`` must return ``(completed, score, depth)``; failed
    trials score infinity. One half-spacing refinement pass runs around the
    best coarse cell. Ties break toward the earlier grid point, so results
    do not depend on evaluation order.
    """
    if grid is None:
        grid = default_gain_grid()
    if not grid:
        raise ScheduleError("empty gain grid")

    def sweep(points):
        rows = []
        for k1, k2 in points:
            completed, score, depth = run_trial(k1, k2)
            rows.append((k1, k2, completed, score if completed else math.inf, depth))
        return rows

    table = sweep(grid)
    best = min(table, key=lambda r: r[3])
    if not best[2]:
        raise ScheduleError(
            "no gain pair in the grid completed the trial; best partial survivor: "
            f"k1={best[0]}, k2={best[1]}"
        )
    if refine:
        k1s = sorted({k1 for k1, _ in grid})
        k2s = sorted({k2 for _, k2 in grid})
        d1 = min((b - a for a, b in zip(k1s, k1s[1:])), default=0.0)
        d2 = min((b - a for a, b in zip(k2s, k2s[1:])), default=0.0)
        fine = []
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                k1 = best[0] + 0.5 * d1 * i
                k2 = best[1] + 0.5 * d2 * j
                if (i or j) and k1 >= 1.0 and k2 >= 1.0:
                    fine.append((round(k1, 6), round(k2, 6)))
        if fine:
            fine_rows = sweep(fine)
            table = table + fine_rows
            best = min([best] + fine_rows, key=lambda r: r[3])
    return GainSearchResult(
        gains=StiffnessGains(best[0], best[1]),
        score=best[3],
        max_penetration_depth=best[4],
        table=table,
    )
