"""Dual-leg spring walker: compliant-ground simulation and step-to-step control.

The package covers the full pipeline: periodic-gait search, stride-map
linearization and discrete LQR synthesis, event-driven hybrid simulation on
rigid or compliant (nonlinear viscoelastic) terrain, and the leg-stiffness
amplification controller for one-step soft-ground landings.
"""

from .experiment import (
    PLAIN_LQR,
    PROPOSED,
    TrialResult,
    TrialSetup,
    perturbation_trial,
    reproduce_table1,
    robustness_sweep,
    run_walk,
    tune_gains,
)
from .gait import (
    GaitSearchError,
    GaitSearchSpec,
    PeriodicGait,
    find_periodic_gait,
    quarter_period_residual,
)
from .lqr import (
    LqrSolution,
    StrideLinearization,
    SynthesisError,
    control_law,
    dare_residual,
    lqr_gain,
    numeric_jacobians,
    solve_dare,
    synthesize,
)
from .model import (
    RIGID_EQUIV_STIFFNESS,
    HybridState,
    LegState,
    ModelError,
    ModelParams,
    Terrain,
    com_accel,
    foot_accel,
    ground_force,
    mechanical_energy,
    spring_force,
)
from .sim import (
    GaitEvent,
    SimSettings,
    StepRecord,
    StepStiffness,
    advance_step,
    integrate_phase,
    mirror_control,
    mirror_state,
    stride_map,
    stride_map_normalized,
    touchdown_placement,
)
from .stiffness import (
    PerturbationSpec,
    ScheduleError,
    StiffnessGains,
    find_gains,
    ground_stiffness_schedule,
    leg_stiffness_schedule,
    step_stiffness,
    step_terrain,
)

__version__ = "0.1.0"
