"""Event-driven stride integration: midstance to midstance.

A step chains four phases through the gait events

    MS --(single support)--> TD --(double support)--> LH
       --(double support)--> LO --(single support)--> next MS

Events are localized by bracketing sign changes of the event-surface
functions on the integrator's dense output and refining with Brent's method;
inequality guards are checked at the localized point so spurious crossings
are skipped and integration continues.

Steps are integrated in a side-normalized frame: the support foot anchors the
horizontal origin and the nominal gait keeps the body on the +y side of it.
Lateral left/right alternation is pure bookkeeping (a sign reflection between
steps), carried by the sign matrices of :func:`mirror_state` and
:func:`mirror_control`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.optimize import brentq

from .model import (
    HybridState,
    ModelError,
    ModelParams,
    Terrain,
    ground_damping,
)

EVENT_MS = "MS"
EVENT_TD = "TD"
EVENT_LH = "LH"
EVENT_LO = "LO"

FAIL_FELL = "fell_below_height"
FAIL_OVERCOMPRESSED = "leg_overcompressed"
FAIL_NO_EVENT = "no_event"
FAIL_NUMERIC = "numeric"
FAIL_BACKWARD = "backward"

# MS-state reflection diag(1,-1,1,1,-1) and control reflection diag(-1,1,1):
# lateral quantities flip between successive steps of a symmetric gait.
MIRROR_STATE_SIGNS = np.array([1.0, -1.0, 1.0, 1.0, -1.0])
MIRROR_CONTROL_SIGNS = np.array([-1.0, 1.0, 1.0])

_METHODS = {"DOP853": DOP853, "RK45": RK45}
_NSUB = 8


class PhaseError(RuntimeError):
    """Integrator breakdown inside one phase."""


@dataclass(frozen=True)
class SimSettings:
    """Integration and event-localization tolerances."""

    rtol: float = 1e-9
    atol: float = 1e-9
    max_step: float = 0.02
    event_time_tol: float = 1e-10
    max_phase_time: float = 2.0
    method: str = "DOP853"
    sample_dt: float = 1e-3


@dataclass(frozen=True)
class StepStiffness:
    """Leg spring stiffness over one step, by role and phase.

    The support leg may change stiffness at TD (the stiffness controller
    amplifies it there); the landing leg has a single value from its TD on.
    A support-leg stiffness change at TD can amplify the slope of the
    force-length law about the operating point instead of rescaling the
    whole force: ``anchor_power`` re-anchors the rest length by that power
    of the stiffness ratio (0 jumps the force by the full ratio, 1 keeps it
    continuous, 0.5 preserves the stored elastic energy), with the spring
    slack beyond the new rest length. A landing leg touches down at zero
    force, so every reading agrees there.
    """

    support_before_td: float
    support_after_td: float
    landing: float
    anchor_power: float = 0.0

    @staticmethod
    def uniform(k: float) -> "StepStiffness":
        return StepStiffness(k, k, k)


@dataclass
class StepRecord:
    """Everything observed during one MS-to-MS step."""

    step: int
    x_in: np.ndarray
    control: np.ndarray  # (theta, phi, k) as applied, theta > 0, radians
    stiffness: StepStiffness
    terrain: Terrain
    side: int
    outcome: str = "completed"
    x_out: np.ndarray | None = None
    event_times: dict[str, float] = field(default_factory=dict)
    landing_foot_xy: tuple[float, float] | None = None
    support_foot_in: tuple[float, float] = (0.0, 0.0)
    landing_foot_out: tuple[float, float] | None = None
    support_min_z: float = 0.0
    landing_min_z: float = 0.0

    @property
    def completed(self) -> bool:
        return self.outcome == "completed"

    @property
    def failure_reason(self) -> str | None:
        if self.completed:
            return None
        return self.outcome.split(":", 1)[1]


def mirror_state(x: np.ndarray) -> np.ndarray:
    """Reflect an MS state across the sagittal plane."""
    return np.asarray(x, dtype=float) * MIRROR_STATE_SIGNS


def mirror_control(u: np.ndarray) -> np.ndarray:
    """Flip the side-bookkeeping sign of a control triple."""
    return np.asarray(u, dtype=float) * MIRROR_CONTROL_SIGNS


def touchdown_placement(
    com: tuple[float, float, float],
    theta: float,
    phi: float,
    side: int,
    rest_length: float,
) -> tuple[float, float, float]:
    """Foot position for a leg touching down at full rest length.

    ``theta`` is the angle from the forward (+x) axis to the foot-to-body
    vector in the vertical plane, so theta > 90 deg lands the foot ahead of
    the body; ``phi`` rotates the horizontal offset toward the landing side
    (``side=+1`` is +y).
    """
    if not 0.0 < theta < math.pi:
        raise ModelError(f"touchdown angle must be in (0, pi), got {theta}")
    ct, st = math.cos(theta), math.sin(theta)
    return (
        com[0] - rest_length * ct * math.cos(phi),
        com[1] - side * rest_length * ct * math.sin(phi),
        com[2] - rest_length * st,
    )


@dataclass(frozen=True)
class Surface:
    """Signed event function with a crossing direction and optional guard."""

    name: str
    fn: object  # callable(y) -> float
    direction: int  # -1: + to -, +1: - to +
    guard: object | None = None  # callable(y) -> bool
    failure: bool = False


def _crosses(ga: float, gb: float, direction: int) -> bool:
    if direction < 0:
        return ga > 0.0 and gb <= 0.0
    return ga < 0.0 and gb >= 0.0


def _scan_interval(surfaces, t_lo, t_hi, interp, settings):
    """Earliest guard-accepted surface crossing in (t_lo, t_hi], or None."""
    ts = np.linspace(t_lo, t_hi, _NSUB + 1)
    ys = interp(ts)
    best = None
    for s in surfaces:
        gs = [s.fn(ys[:, j]) for j in range(_NSUB + 1)]
        for j in range(_NSUB):
            if not _crosses(gs[j], gs[j + 1], s.direction):
                continue
            t_ev = brentq(
                lambda t: s.fn(interp(t)),
                ts[j],
                ts[j + 1],
                xtol=settings.event_time_tol,
            )
            y_ev = interp(t_ev)
            if s.guard is not None and not s.guard(y_ev):
                continue  # spurious crossing; keep scanning
            if best is None or t_ev < best[0]:
                best = (t_ev, s)
            break  # earliest valid crossing of this surface found
    return best


def _run_phase(rhs, t0, y0, surfaces, settings, observers=()):
    """Integrate one phase until the first accepted surface crossing.

    Returns ``(surface | None, t, y)``; ``surface`` is None when
    ``max_phase_time`` elapses without an accepted crossing.
    """
    method = _METHODS[settings.method]
    y0 = np.asarray(y0, dtype=float)
    solver = method(
        rhs,
        t0,
        y0,
        t0 + settings.max_phase_time,
        rtol=settings.rtol,
        atol=settings.atol,
        max_step=settings.max_step,
    )
    t_prev, y_prev = t0, y0
    g_prev = [s.fn(y0) for s in surfaces]
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise PhaseError(f"integrator step failed at t={solver.t}: {msg}")
        t_new, y_new = solver.t, solver.y
        g_new = [s.fn(y_new) for s in surfaces]

        interp_box = []

        def get_interp():
            if not interp_box:
                interp_box.append(solver.dense_output())
            return interp_box[0]

        hit = None
        if any(_crosses(ga, gb, s.direction) for ga, gb, s in zip(g_prev, g_new, surfaces)):
            hit = _scan_interval(surfaces, t_prev, t_new, get_interp(), settings)
        if hit is not None:
            t_ev, s_ev = hit
            y_ev = np.asarray(get_interp()(t_ev), dtype=float)
            for obs in observers:
                obs(t_prev, y_prev, t_ev, y_ev, get_interp)
            return s_ev, t_ev, y_ev
        for obs in observers:
            obs(t_prev, y_prev, t_new, y_new, get_interp)
        t_prev, y_prev, g_prev = t_new, y_new, g_new
    return None, t_prev, y_prev


# --- phase right-hand sides (hot path: scalar math only) ---


def _rhs_ss_rigid(fx, fy, k, params):
    inv_m = 1.0 / params.mass
    gz = params.gravity_z
    l0 = params.rest_length

    def rhs(t, y):
        lx = y[0] - fx
        ly = y[1] - fy
        lz = y[2]
        ln = math.sqrt(lx * lx + ly * ly + lz * lz)
        c = k * (l0 - ln) / ln * inv_m
        return [y[3], y[4], y[5], c * lx, c * ly, c * lz + gz]

    return rhs


def _rhs_ds_rigid(fxa, fya, ka, fxb, fyb, kb, params, la0=None, slack_a=False):
    inv_m = 1.0 / params.mass
    gz = params.gravity_z
    l0 = params.rest_length
    la0 = l0 if la0 is None else la0

    def rhs(t, y):
        lax = y[0] - fxa
        lay = y[1] - fya
        laz = y[2]
        lan = math.sqrt(lax * lax + lay * lay + laz * laz)
        comp_a = la0 - lan
        if slack_a and comp_a < 0.0:
            comp_a = 0.0
        ca = ka * comp_a / lan * inv_m
        lbx = y[0] - fxb
        lby = y[1] - fyb
        lbz = y[2]
        lbn = math.sqrt(lbx * lbx + lby * lby + lbz * lbz)
        cb = kb * (l0 - lbn) / lbn * inv_m
        return [
            y[3],
            y[4],
            y[5],
            ca * lax + cb * lbx,
            ca * lay + cb * lby,
            ca * laz + cb * lbz + gz,
        ]

    return rhs


def _rhs_ss_soft(fx, fy, k, kg, bg, params):
    inv_m = 1.0 / params.mass
    inv_mf = 1.0 / params.foot_mass
    gz = params.gravity_z
    l0 = params.rest_length

    def rhs(t, y):
        zf = y[6]
        vzf = y[7]
        lx = y[0] - fx
        ly = y[1] - fy
        lz = y[2] - zf
        ln = math.sqrt(lx * lx + ly * ly + lz * lz)
        c = k * (l0 - ln) / ln
        fsz = c * lz
        if zf < 0.0:
            pen = -zf
            fg = pen * math.sqrt(pen) * (kg - bg * vzf)
            if fg < 0.0:
                fg = 0.0
        else:
            fg = 0.0
        return [
            y[3],
            y[4],
            y[5],
            c * lx * inv_m,
            c * ly * inv_m,
            fsz * inv_m + gz,
            vzf,
            (fg - fsz) * inv_mf + gz,
        ]

    return rhs


def _rhs_ds_soft(fxa, fya, ka, kga, bga, fxb, fyb, kb, kgb, bgb, params, la0=None, slack_a=False):
    inv_m = 1.0 / params.mass
    inv_mf = 1.0 / params.foot_mass
    gz = params.gravity_z
    l0 = params.rest_length
    la0 = l0 if la0 is None else la0

    def rhs(t, y):
        zfa = y[6]
        vzfa = y[7]
        zfb = y[8]
        vzfb = y[9]
        lax = y[0] - fxa
        lay = y[1] - fya
        laz = y[2] - zfa
        lan = math.sqrt(lax * lax + lay * lay + laz * laz)
        comp_a = la0 - lan
        if slack_a and comp_a < 0.0:
            comp_a = 0.0
        ca = ka * comp_a / lan
        faz = ca * laz
        lbx = y[0] - fxb
        lby = y[1] - fyb
        lbz = y[2] - zfb
        lbn = math.sqrt(lbx * lbx + lby * lby + lbz * lbz)
        cb = kb * (l0 - lbn) / lbn
        fbz = cb * lbz
        if zfa < 0.0:
            pen = -zfa
            fga = pen * math.sqrt(pen) * (kga - bga * vzfa)
            if fga < 0.0:
                fga = 0.0
        else:
            fga = 0.0
        if zfb < 0.0:
            pen = -zfb
            fgb = pen * math.sqrt(pen) * (kgb - bgb * vzfb)
            if fgb < 0.0:
                fgb = 0.0
        else:
            fgb = 0.0
        return [
            y[3],
            y[4],
            y[5],
            (ca * lax + cb * lbx) * inv_m,
            (ca * lay + cb * lby) * inv_m,
            (faz + fbz) * inv_m + gz,
            vzfa,
            (fga - faz) * inv_mf + gz,
            vzfb,
            (fgb - fbz) * inv_mf + gz,
        ]

    return rhs


def _leg_length_fn(fx, fy, zf_index):
    if zf_index is None:

        def length(y):
            lx = y[0] - fx
            ly = y[1] - fy
            return math.sqrt(lx * lx + ly * ly + y[2] * y[2])

    else:

        def length(y):
            lx = y[0] - fx
            ly = y[1] - fy
            lz = y[2] - y[zf_index]
            return math.sqrt(lx * lx + ly * ly + lz * lz)

    return length


def _failure_surfaces(params, leg_lengths):
    surfaces = [
        Surface(FAIL_FELL, lambda y: y[2] - 0.4 * params.rest_length, -1, failure=True)
    ]
    for length in leg_lengths:
        surfaces.append(
            Surface(
                FAIL_OVERCOMPRESSED,
                lambda y, fn=length: fn(y) - 0.5 * params.rest_length,
                -1,
                failure=True,
            )
        )
    return surfaces


class _GridSampler:
    """Collects states on the fixed output time grid within each segment."""

    def __init__(self, dt: float):
        self.dt = dt
        self.rows: list[tuple[float, np.ndarray]] = []

    def __call__(self, t_lo, y_lo, t_hi, y_hi, get_interp):
        dt = self.dt
        j = math.floor((t_lo + 1e-12) / dt) + 1
        j_hi = math.floor((t_hi + 1e-12) / dt)
        if j > j_hi:
            return
        times = np.arange(j, j_hi + 1) * dt
        vals = get_interp()(times)
        for i, t in enumerate(times):
            self.rows.append((float(t), np.array(vals[:, i])))


class _FootMinTracker:
    """Tracks the minimum of one foot-height component across a phase.

    The depth extremum satisfies vzf = 0, so segments where the foot velocity
    crosses from falling to rising are refined with a root solve.
    """

    def __init__(self, zf_index: int, start_z: float):
        self.iz = zf_index
        self.min_z = start_z

    def __call__(self, t_lo, y_lo, t_hi, y_hi, get_interp):
        iz, iv = self.iz, self.iz + 1
        self.min_z = min(self.min_z, y_lo[iz], y_hi[iz])
        if y_lo[iv] < 0.0 <= y_hi[iv]:
            interp = get_interp()
            t_min = brentq(lambda t: interp(t)[iv], t_lo, t_hi, xtol=1e-9)
            self.min_z = min(self.min_z, float(interp(t_min)[iz]))


def advance_step(
    x5: np.ndarray,
    control: np.ndarray,
    stiffness: StepStiffness,
    side: int,
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
    support_foot: tuple[float, float] = (0.0, 0.0),
    t0: float = 0.0,
    step: int = 0,
    collect: bool = False,
):
    """Integrate one full step from an MS slice.

    ``x5`` is the MS state relative to the support foot, whose horizontal
    anchor is the origin; ``support_foot`` carries its vertical state on
    compliant ground. Returns ``(StepRecord, samples)``; samples are
    ``(t, com, vel, support_foot_row, landing_foot_row, mode)`` tuples on the
    output grid when ``collect`` is set, with foot rows as (x, y, z, vz).
    """
    x5 = np.asarray(x5, dtype=float)
    theta, phi, k_control = float(control[0]), float(control[1]), float(control[2])
    record = StepRecord(
        step=step,
        x_in=x5.copy(),
        control=np.array([theta, phi, k_control]),
        stiffness=stiffness,
        terrain=terrain,
        side=side,
        support_foot_in=tuple(support_foot),
        event_times={EVENT_MS: t0},
    )
    samples: list = [] if collect else None
    if not 0.0 < theta < math.pi:
        raise ModelError(f"touchdown angle must be in (0, pi), got {theta}")
    l0 = params.rest_length
    z_th = l0 * math.sin(theta)
    if x5[2] <= z_th:
        record.outcome = f"failed:{FAIL_NO_EVENT}"
        return record, samples

    compliant = terrain.compliant
    bg_sup = ground_damping(terrain.kg_support, terrain.damping_ratio)
    bg_land = ground_damping(terrain.kg_landing, terrain.damping_ratio)

    def emit(phase_samples, sup_anchor, land_anchor, mode):
        # translate packed rows into canonical trajectory tuples
        for t, y in phase_samples.rows:
            com = (y[0], y[1], y[2])
            vel = (y[3], y[4], y[5])
            sup_row = None
            land_row = None
            if sup_anchor is not None:
                fx, fy, iz = sup_anchor
                if iz is None:
                    sup_row = (fx, fy, 0.0, 0.0)
                else:
                    sup_row = (fx, fy, y[iz], y[iz + 1])
            if land_anchor is not None:
                fx, fy, iz = land_anchor
                if iz is None:
                    land_row = (fx, fy, 0.0, 0.0)
                else:
                    land_row = (fx, fy, y[iz], y[iz + 1])
            samples.append((t, com, vel, sup_row, land_row, mode))

    # ---- phase 1: single support until touchdown ----
    length_sup = _leg_length_fn(0.0, 0.0, 6 if compliant else None)
    if compliant:
        rhs = _rhs_ss_soft(0.0, 0.0, stiffness.support_before_td, terrain.kg_support, bg_sup, params)
        y = np.array([x5[0], x5[1], x5[2], x5[3], x5[4], 0.0, support_foot[0], support_foot[1]])
        min_sup = _FootMinTracker(6, support_foot[0])
    else:
        rhs = _rhs_ss_rigid(0.0, 0.0, stiffness.support_before_td, params)
        y = np.array([x5[0], x5[1], x5[2], x5[3], x5[4], 0.0])
        min_sup = None
    td_surface = Surface(
        EVENT_TD,
        lambda y: y[2] - z_th,
        -1,
        guard=lambda y: y[5] < 0.0 and length_sup(y) <= l0,
    )
    surfaces = [td_surface] + _failure_surfaces(params, [length_sup])
    observers = []
    if min_sup is not None:
        observers.append(min_sup)
    if collect:
        grid = _GridSampler(settings.sample_dt)
        observers.append(grid)
        samples.append(
            (
                t0,
                (y[0], y[1], y[2]),
                (y[3], y[4], y[5]),
                (0.0, 0.0, y[6] if compliant else 0.0, y[7] if compliant else 0.0),
                None,
                "SS_sup",
            )
        )

    def finish(reason):
        if min_sup is not None:
            record.support_min_z = min(record.support_min_z, min_sup.min_z)
        record.outcome = f"failed:{reason}"
        return record, samples

    sup_anchor = (0.0, 0.0, 6 if compliant else None)
    try:
        hit, t, y = _run_phase(rhs, t0, y, surfaces, settings, observers)
    except PhaseError:
        return finish(FAIL_NUMERIC)
    if collect:
        emit(grid, sup_anchor, None, "SS_sup")
    if hit is None:
        return finish(FAIL_NO_EVENT)
    if hit.failure:
        return finish(hit.name)
    record.event_times[EVENT_TD] = t

    # ---- touchdown: place the landing foot at rest length ----
    fbx, fby, _ = touchdown_placement((y[0], y[1], y[2]), theta, phi, side, l0)
    record.landing_foot_xy = (fbx, fby)
    length_land = _leg_length_fn(fbx, fby, 8 if compliant else None)
    la0 = None
    slack_a = False
    if stiffness.anchor_power != 0.0 and stiffness.support_after_td != stiffness.support_before_td:
        # slope amplification about the operating point: re-anchor the rest
        # length (power 1 keeps the force continuous, 0.5 keeps the stored
        # energy), slack beyond it
        l_td = length_sup(y)
        ratio = stiffness.support_before_td / stiffness.support_after_td
        la0 = l_td + (l0 - l_td) * ratio**stiffness.anchor_power
        slack_a = True
    if compliant:
        rhs = _rhs_ds_soft(
            0.0, 0.0, stiffness.support_after_td, terrain.kg_support, bg_sup,
            fbx, fby, stiffness.landing, terrain.kg_landing, bg_land, params,
            la0=la0, slack_a=slack_a,
        )
        y = np.concatenate([y, [0.0, 0.0]])  # landing foot starts on the surface
        min_land = _FootMinTracker(8, 0.0)
    else:
        rhs = _rhs_ds_rigid(
            0.0, 0.0, stiffness.support_after_td, fbx, fby, stiffness.landing, params,
            la0=la0, slack_a=slack_a,
        )
        min_land = None
    land_anchor = (fbx, fby, 8 if compliant else None)

    # ---- phase 2: double support until lowest height ----
    lh_surface = Surface(
        EVENT_LH,
        lambda y: y[5],
        +1,
        guard=lambda y: y[2] < z_th and length_sup(y) <= l0,
    )
    surfaces = [lh_surface] + _failure_surfaces(params, [length_sup, length_land])
    observers = [o for o in (min_sup, min_land) if o is not None]
    if collect:
        grid = _GridSampler(settings.sample_dt)
        observers.append(grid)

    def finish_ds(reason):
        if min_land is not None:
            record.landing_min_z = min(record.landing_min_z, min_land.min_z)
        return finish(reason)

    try:
        hit, t, y = _run_phase(rhs, t, y, surfaces, settings, observers)
    except PhaseError:
        return finish_ds(FAIL_NUMERIC)
    if collect:
        emit(grid, sup_anchor, land_anchor, "DS")
    if hit is None:
        return finish_ds(FAIL_NO_EVENT)
    if hit.failure:
        return finish_ds(hit.name)
    record.event_times[EVENT_LH] = t

    # ---- phase 3: double support until the trailing leg lifts off ----
    lo_surface = Surface(
        EVENT_LO,
        lambda y: length_sup(y) - l0,
        +1,
        guard=lambda y: y[5] > 0.0,
    )
    surfaces = [lo_surface] + _failure_surfaces(params, [length_sup, length_land])
    observers = [o for o in (min_sup, min_land) if o is not None]
    if collect:
        grid = _GridSampler(settings.sample_dt)
        observers.append(grid)
    try:
        hit, t, y = _run_phase(rhs, t, y, surfaces, settings, observers)
    except PhaseError:
        return finish_ds(FAIL_NUMERIC)
    if collect:
        emit(grid, sup_anchor, land_anchor, "DS")
    if hit is None:
        return finish_ds(FAIL_NO_EVENT)
    if hit.failure:
        return finish_ds(hit.name)
    record.event_times[EVENT_LO] = t
    if min_sup is not None:
        record.support_min_z = min(record.support_min_z, min_sup.min_z)

    # ---- phase 4: single support on the landing leg until the next MS ----
    if compliant:
        rhs = _rhs_ss_soft(fbx, fby, stiffness.landing, terrain.kg_landing, bg_land, params)
        y = np.concatenate([y[:6], y[8:10]])
        length_land = _leg_length_fn(fbx, fby, 6)
        min_land_ss = _FootMinTracker(6, min_land.min_z)
        land_anchor = (fbx, fby, 6)
    else:
        rhs = _rhs_ss_rigid(fbx, fby, stiffness.landing, params)
        y = y[:6].copy()
        length_land = _leg_length_fn(fbx, fby, None)
        min_land_ss = None
    # MS: falling vertical-velocity zero with the apex above the touchdown
    # threshold and the leg compressed. The guards reject below-threshold
    # emergency apexes; relaxing them dissolves the feedback controller's
    # soft-ground failure boundary, so they are part of the model.
    ms_surface = Surface(
        EVENT_MS,
        lambda y: y[5],
        -1,
        guard=lambda y: y[2] > z_th and length_land(y) < l0,
    )
    surfaces = [ms_surface] + _failure_surfaces(params, [length_land])
    observers = [o for o in (min_land_ss,) if o is not None]
    if collect:
        grid = _GridSampler(settings.sample_dt)
        observers.append(grid)

    def finish_ss2(reason):
        if min_land_ss is not None:
            record.landing_min_z = min(record.landing_min_z, min_land_ss.min_z)
        elif min_land is not None:
            record.landing_min_z = min(record.landing_min_z, min_land.min_z)
        record.outcome = f"failed:{reason}"
        return record, samples

    try:
        hit, t, y = _run_phase(rhs, t, y, surfaces, settings, observers)
    except PhaseError:
        return finish_ss2(FAIL_NUMERIC)
    if collect:
        emit(grid, None, land_anchor, "SS_land")
    if hit is None:
        return finish_ss2(FAIL_NO_EVENT)
    if hit.failure:
        return finish_ss2(hit.name)
    record.event_times["MS_next"] = t
    if min_land_ss is not None:
        record.landing_min_z = min(record.landing_min_z, min_land_ss.min_z)
    elif min_land is not None:
        record.landing_min_z = min(record.landing_min_z, min_land.min_z)

    if y[3] <= 0.0:
        record.outcome = f"failed:{FAIL_BACKWARD}"
        return record, samples

    record.x_out = np.array([y[0] - fbx, y[1] - fby, y[2], y[3], y[4]])
    record.landing_foot_out = (y[6], y[7]) if compliant else (0.0, 0.0)
    return record, samples


def stride_map(
    x5: np.ndarray,
    u: np.ndarray,
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
    stiffness: StepStiffness | None = None,
    support_foot: tuple[float, float] = (0.0, 0.0),
):
    """One application of the MS-to-MS stride map.

    The sign of the touchdown angle in ``u`` is the side-alternation flag
    (a negated angle means a mirrored step); the physical angle is its
    magnitude. Fails are reported through the record's outcome, with
    ``x_next`` None.
    """
    u = np.asarray(u, dtype=float)
    side = 1 if u[0] > 0.0 else -1
    control = np.array([abs(u[0]), u[1], u[2]])
    if stiffness is None:
        stiffness = StepStiffness.uniform(control[2])
    record, _ = advance_step(
        x5, control, stiffness, side, terrain, params, settings, support_foot=support_foot
    )
    return record.x_out, record


def stride_map_normalized(
    x5: np.ndarray,
    u: np.ndarray,
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
    stiffness: StepStiffness | None = None,
    support_foot: tuple[float, float] = (0.0, 0.0),
):
    """Side-normalized stride map: reflects the next MS state back into the
    frame where the nominal gait is a fixed point."""
    x_next, record = stride_map(
        x5, u, terrain, params, settings, stiffness=stiffness, support_foot=support_foot
    )
    if x_next is None:
        return None, record
    return mirror_state(x_next), record


# --- generic single-phase integration on the full hybrid state ---


def _pack_phase(state: HybridState, terrain: Terrain, params: ModelParams):
    legs = state.stance_legs()
    if not 1 <= len(legs) <= 2:
        raise ModelError("phase needs one or two stance legs")
    y = list(state.com) + list(state.com_vel)
    anchors = []
    kgs = (terrain.kg_support, terrain.kg_landing)
    if terrain.compliant:
        for i, leg in enumerate(legs):
            anchors.append((leg.foot_x, leg.foot_y, 6 + 2 * i))
            y.extend([leg.foot_z, leg.foot_vz])
        if len(legs) == 1:
            leg = legs[0]
            rhs = _rhs_ss_soft(
                leg.foot_x, leg.foot_y, leg.stiffness, kgs[0],
                ground_damping(kgs[0], terrain.damping_ratio), params,
            )
        else:
            a, b = legs
            rhs = _rhs_ds_soft(
                a.foot_x, a.foot_y, a.stiffness, kgs[0],
                ground_damping(kgs[0], terrain.damping_ratio),
                b.foot_x, b.foot_y, b.stiffness, kgs[1],
                ground_damping(kgs[1], terrain.damping_ratio), params,
            )
    else:
        for leg in legs:
            anchors.append((leg.foot_x, leg.foot_y, None))
        if len(legs) == 1:
            leg = legs[0]
            rhs = _rhs_ss_rigid(leg.foot_x, leg.foot_y, leg.stiffness, params)
        else:
            a, b = legs
            rhs = _rhs_ds_rigid(a.foot_x, a.foot_y, a.stiffness, b.foot_x, b.foot_y, b.stiffness, params)
    return rhs, np.array(y, dtype=float), anchors


def _unpack_phase(state: HybridState, y: np.ndarray, t: float, compliant: bool) -> HybridState:
    legs = []
    i = 6
    for leg in (state.leg_a, state.leg_b):
        if leg.in_stance and compliant:
            legs.append(replace(leg, foot_z=float(y[i]), foot_vz=float(y[i + 1])))
            i += 2
        else:
            legs.append(leg)
    return replace(
        state,
        com=(float(y[0]), float(y[1]), float(y[2])),
        com_vel=(float(y[3]), float(y[4]), float(y[5])),
        leg_a=legs[0],
        leg_b=legs[1],
        time=t,
    )


@dataclass
class GaitEvent:
    kind: str
    time: float
    state: HybridState


def integrate_phase(
    state: HybridState,
    theta: float,
    targets: set[str],
    terrain: Terrain,
    params: ModelParams,
    settings: SimSettings,
    collect: bool = False,
):
    """Integrate the current phase until the first event in ``targets``.

    ``theta`` fixes the touchdown-height threshold used by the MS/TD/LH
    guards. Returns ``(GaitEvent, samples)``; the event kind is the failure
    name when a failure surface fired first, or "no_event" on timeout.
    """
    rhs, y0, anchors = _pack_phase(state, terrain, params)
    l0 = params.rest_length
    z_th = l0 * math.sin(theta)
    lengths = [_leg_length_fn(ax, ay, iz) for ax, ay, iz in anchors]
    surfaces = []
    if EVENT_TD in targets:
        surfaces.append(
            Surface(EVENT_TD, lambda y: y[2] - z_th, -1,
                    guard=lambda y: y[5] < 0.0 and lengths[0](y) <= l0)
        )
    if EVENT_MS in targets:
        surfaces.append(
            Surface(EVENT_MS, lambda y: y[5], -1,
                    guard=lambda y: y[2] > z_th and lengths[0](y) < l0)
        )
    if EVENT_LH in targets:
        surfaces.append(
            Surface(EVENT_LH, lambda y: y[5], +1,
                    guard=lambda y: y[2] < z_th and lengths[0](y) <= l0)
        )
    if EVENT_LO in targets:
        surfaces.append(
            Surface(EVENT_LO, lambda y: lengths[0](y) - l0, +1,
                    guard=lambda y: y[5] > 0.0)
        )
    surfaces.extend(_failure_surfaces(params, lengths))
    observers = []
    grid = None
    if collect:
        grid = _GridSampler(settings.sample_dt)
        observers.append(grid)
    hit, t, y = _run_phase(rhs, state.time, y0, surfaces, settings, observers)
    end_state = _unpack_phase(state, y, t, terrain.compliant)
    kind = FAIL_NO_EVENT if hit is None else hit.name
    samples = None
    if collect:
        samples = [(t_s, _unpack_phase(state, y_s, t_s, terrain.compliant)) for t_s, y_s in grid.rows]
    return GaitEvent(kind, t, end_state), samples
