"""Command-line interface for gait search, synthesis, trials, and sweeps.

Exit codes: 0 success, 1 trial failure, 2 configuration error, 3 numeric
error. Scripted sweeps rely on them.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import experiment as xp
from .config import (
    ConfigError,
    ExperimentConfig,
    load_config,
    load_gains,
    load_gait,
    save_gains,
    save_gait,
)
from .experiment import PROPOSED, TrialSetup
from .gait import GaitSearchError, find_periodic_gait
from .leastsq import SolverError
from .lqr import SynthesisError, numeric_jacobians, synthesize
from .model import ModelError, Terrain
from .sim import SimSettings
from .stiffness import PerturbationSpec, ScheduleError, StiffnessGains

EXIT_OK = 0
EXIT_TRIAL_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

RAD2DEG = 180.0 / math.pi


def _fmt(value: float) -> str:
    return repr(float(value))


def _default_r(config: ExperimentConfig) -> np.ndarray:
    if config.r_diag is not None:
        return np.diag(config.r_diag)
    # identity weights on the control vector in display units (deg, deg, kN/m)
    return np.diag([RAD2DEG**2, RAD2DEG**2, 1e-6])


def _load_pipeline(config: ExperimentConfig, need_gains: bool = True):
    gait_path = config.resolve(config.gait_file)
    if gait_path is None:
        raise ConfigError("[gait.file]: required for this command")
    gait = load_gait(gait_path)
    solution = None
    if need_gains:
        gains_path = config.resolve(config.gains_file)
        if gains_path is None:
            raise ConfigError("[controller.gains_file]: required for this command")
        solution = load_gains(gains_path)
    return gait, solution


def _setup_from(config: ExperimentConfig, gait, solution, collect=False) -> TrialSetup:
    return TrialSetup(
        gait=gait,
        feedback_gain=solution.k,
        params=config.model,
        settings=config.settings,
        compliant=config.compliant,
        rigid_stiffness=config.rigid_stiffness,
        contact_damping_ratio=config.contact_damping_ratio,
        perturbation=config.perturbation,
        gains=config.gains if config.controller == PROPOSED else StiffnessGains(),
        max_steps=config.max_steps,
        collect_trajectory=collect,
    )


def _out_dir(config: ExperimentConfig, override: str | None) -> Path:
    out = Path(override) if override else config.resolve(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_trajectory_csv(path: Path, rows) -> None:
    cols = (
        "t,com_x,com_y,com_z,com_vx,com_vy,com_vz,"
        "foot_a_x,foot_a_y,foot_a_z,foot_a_vz,"
        "foot_b_x,foot_b_y,foot_b_z,foot_b_vz,support_mode"
    )
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        for t, com, vel, fa, fb, mode in rows:
            foot_cols = []
            for foot in (fa, fb):
                if foot is None:
                    foot_cols.extend(["nan"] * 4)
                else:
                    foot_cols.extend(_fmt(v) for v in foot)
            fh.write(
                ",".join(
                    [_fmt(t)]
                    + [_fmt(v) for v in com]
                    + [_fmt(v) for v in vel]
                    + foot_cols
                    + [mode]
                )
                + "\n"
            )


def write_steps_csv(path: Path, result) -> None:
    cols = (
        "step,outcome,t_ms,t_td,t_lh,t_lo,t_ms_next,theta_deg,phi_deg,k,"
        "k_support_before_td,k_support_after_td,k_landing,kg_support,kg_landing,"
        "support_min_z,landing_min_z,state_error,control_error,"
        "x_in_0,x_in_1,x_in_2,x_in_3,x_in_4,x_out_0,x_out_1,x_out_2,x_out_3,x_out_4"
    )
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        for rec, ex, eu in zip(result.records, result.state_errors, result.control_errors):
            ev = rec.event_times
            xo = rec.x_out if rec.x_out is not None else [math.nan] * 5
            row = [
                str(rec.step),
                rec.outcome,
                _fmt(ev.get("MS", math.nan)),
                _fmt(ev.get("TD", math.nan)),
                _fmt(ev.get("LH", math.nan)),
                _fmt(ev.get("LO", math.nan)),
                _fmt(ev.get("MS_next", math.nan)),
                _fmt(math.degrees(rec.control[0])),
                _fmt(math.degrees(rec.control[1])),
                _fmt(rec.control[2]),
                _fmt(rec.stiffness.support_before_td),
                _fmt(rec.stiffness.support_after_td),
                _fmt(rec.stiffness.landing),
                _fmt(rec.terrain.kg_support if rec.terrain.compliant else math.inf),
                _fmt(rec.terrain.kg_landing if rec.terrain.compliant else math.inf),
                _fmt(rec.support_min_z),
                _fmt(rec.landing_min_z),
                _fmt(ex),
                _fmt(eu),
            ]
            row.extend(_fmt(v) for v in rec.x_in)
            row.extend(_fmt(v) for v in xo)
            fh.write(",".join(row) + "\n")


def write_summary(path: Path, fields: dict) -> None:
    """Structured-text report: one `key = value` line per entry."""
    with open(path, "w") as fh:
        for key, value in fields.items():
            if isinstance(value, float):
                value = _fmt(value)
            fh.write(f"{key} = {value}\n")


def _trial_summary(result, setup) -> dict:
    fields = {
        "steps_completed": result.steps_completed,
        "max_steps": setup.max_steps,
        "outcome": "completed" if result.completed else f"failed:{result.failure_reason}",
        "max_penetration_depth_m": result.max_penetration_depth,
        "steady_state_score": result.steady_state_score(),
        "final_state_error": result.state_errors[-1] if result.state_errors else math.nan,
    }
    if setup.perturbation is not None:
        fields["perturbation_step"] = setup.perturbation.step
        fields["perturbation_ground_stiffness"] = setup.perturbation.ground_stiffness
        recovery = result.recovery_steps()
        fields["recovery_steps"] = "" if recovery is None else recovery
    return fields


def _write_trial_outputs(config, out, name, result, setup) -> None:
    write_steps_csv(out / f"{name}_steps.csv", result)
    write_summary(out / f"{name}_summary.txt", _trial_summary(result, setup))
    if result.trajectory is not None:
        write_trajectory_csv(out / f"{name}_trajectory.csv", result.trajectory)


def cmd_find_gait(args) -> int:
    config = load_config(args.config)
    search = config.gait_search
    if search is None:
        raise ConfigError("[gait_search]: section required for find-gait")
    terrain = (
        Terrain.rigid()
        if not config.compliant
        else Terrain.uniform(config.rigid_stiffness, config.contact_damping_ratio)
    )
    gait = find_periodic_gait(search, terrain, config.model, config.settings)
    path = config.resolve(config.gait_file) or _out_dir(config, args.output_dir) / "gait.json"
    save_gait(path, gait, config.model)
    print(f"periodic gait at {gait.forward_velocity} m/s:")
    print(f"  apex height   z0    = {gait.x0[2]:.6f} m")
    print(f"  touchdown     theta = {math.degrees(gait.u0[0]):.4f} deg")
    print(f"  lateral       phi   = {math.degrees(gait.u0[1]):.4f} deg")
    print(f"  leg stiffness k     = {gait.u0[2]:.2f} N/m")
    print(f"  residual norm {gait.residual_norm:.3e}, periodicity error {gait.periodicity_error:.3e}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_linearize(args) -> int:
    config = load_config(args.config)
    gait, _ = _load_pipeline(config, need_gains=False)
    terrain = (
        Terrain.rigid()
        if not config.compliant
        else Terrain.uniform(config.rigid_stiffness, config.contact_damping_ratio)
    )
    probe = SimSettings(
        rtol=config.probe_rtol,
        atol=config.probe_rtol,
        max_step=config.settings.max_step,
        event_time_tol=config.settings.event_time_tol,
        max_phase_time=config.settings.max_phase_time,
        method=config.settings.method,
    )
    lin = numeric_jacobians(gait, terrain, config.model, probe, fd_step=config.fd_step)
    solution = synthesize(lin, q=np.diag(config.q_diag), r=_default_r(config))
    path = config.resolve(config.gains_file) or _out_dir(config, args.output_dir) / "gains.json"
    save_gains(path, solution)
    rho = float(np.abs(solution.closed_loop_eigs).max())
    print(f"linearized stride map; closed-loop spectral radius {rho:.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_walk(args) -> int:
    config = load_config(args.config)
    gait, solution = _load_pipeline(config)
    setup = _setup_from(config, gait, solution, collect=config.write_trajectory or args.trajectory)
    result = xp.run_walk(setup)
    out = _out_dir(config, args.output_dir)
    _write_trial_outputs(config, out, "walk", result, setup)
    print(f"completed {result.steps_completed}/{setup.max_steps} steps")
    if not result.completed:
        print(f"trial failed: {result.failure_reason}")
        return EXIT_TRIAL_FAILED
    return EXIT_OK


def cmd_perturb(args) -> int:
    config = load_config(args.config)
    if config.perturbation is None:
        raise ConfigError("[perturbation]: section required for perturb")
    gait, solution = _load_pipeline(config)
    setup = _setup_from(config, gait, solution, collect=config.write_trajectory or args.trajectory)
    result = xp.perturbation_trial(setup)
    out = _out_dir(config, args.output_dir)
    _write_trial_outputs(config, out, "perturb", result, setup)
    depth = result.max_penetration_depth
    print(
        f"completed {result.steps_completed}/{setup.max_steps} steps; "
        f"max penetration depth {depth * 100:.2f} cm"
    )
    rec = result.recovery_steps()
    if rec is not None:
        print(f"error back under 5% of its post-perturbation peak in {rec} steps")
    if not result.completed:
        print(f"trial failed: {result.failure_reason}")
        return EXIT_TRIAL_FAILED
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    gait, solution = _load_pipeline(config)
    setup = _setup_from(config, gait, solution)
    if setup.perturbation is None:
        setup.perturbation = PerturbationSpec(10, config.rigid_stiffness, config.rigid_stiffness)
    values = [float(v) for v in args.stiffness]
    rows = xp.robustness_sweep(
        setup,
        values,
        controller=config.controller,
        gains_for=lambda kg: config.gains,
        workers=args.workers,
    )
    out = _out_dir(config, args.output_dir)
    path = out / "sweep.csv"
    with open(path, "w") as fh:
        fh.write(
            "ground_stiffness,controller,k1,k2,completed,steps,failure_reason,"
            "max_depth_m,recovery_steps,steady_state_score\n"
        )
        for r in rows:
            fh.write(
                ",".join(
                    [
                        _fmt(r.ground_stiffness),
                        r.controller,
                        _fmt(r.gains.k1),
                        _fmt(r.gains.k2),
                        str(r.completed),
                        str(r.steps_completed),
                        r.failure_reason or "",
                        _fmt(r.max_penetration_depth),
                        "" if r.recovery_steps is None else str(r.recovery_steps),
                        _fmt(r.steady_state_score),
                    ]
                )
                + "\n"
            )
    for r in rows:
        status = "completed" if r.completed else f"failed ({r.failure_reason})"
        print(
            f"kg={r.ground_stiffness:12.0f} N/m: {status}, "
            f"depth {r.max_penetration_depth * 100:.2f} cm"
        )
    floor = xp.min_surviving_stiffness(rows)
    if floor is not None:
        print(f"minimum surviving stiffness of this sweep: {floor:.0f} N/m")
    write_summary(
        out / "sweep_summary.txt",
        {
            "controller": config.controller,
            "trials": len(rows),
            "survived": sum(1 for r in rows if r.completed),
            "min_surviving_stiffness": "" if floor is None else _fmt(floor),
        },
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tune_gains(args) -> int:
    config = load_config(args.config)
    if config.perturbation is None:
        raise ConfigError("[perturbation]: section required for tune-gains")
    gait, solution = _load_pipeline(config)
    setup = _setup_from(config, gait, solution)
    grid = None
    if args.k1 and args.k2:
        grid = [(float(a), float(b)) for a in args.k1 for b in args.k2]
    result = xp.tune_gains(setup, grid=grid, refine=not args.no_refine, workers=args.workers)
    out = _out_dir(config, args.output_dir)
    path = out / "tuning.csv"
    with open(path, "w") as fh:
        fh.write("k1,k2,completed,steady_state_score,max_depth_m\n")
        for k1, k2, completed, score, depth in result.table:
            fh.write(
                f"{_fmt(k1)},{_fmt(k2)},{completed},{_fmt(score)},{_fmt(depth)}\n"
            )
    print(
        f"best gains k1={result.gains.k1:g}, k2={result.gains.k2:g} "
        f"(score {result.score:.5f}, depth {result.max_penetration_depth * 100:.2f} cm)"
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reproduce_table1(args) -> int:
    config = load_config(args.config)
    gait, solution = _load_pipeline(config)
    setup = _setup_from(config, gait, solution)
    if setup.perturbation is None:
        setup.perturbation = PerturbationSpec(10, config.rigid_stiffness, config.rigid_stiffness)
    rows = xp.reproduce_table1(setup, workers=args.workers)
    out = _out_dir(config, args.output_dir)
    path = out / "table1.csv"
    failed = False
    with open(path, "w") as fh:
        fh.write(
            "ground_stiffness,k1,k2,completed,steps,measured_depth_cm,"
            "reference_depth_cm,relative_error\n"
        )
        for r in rows:
            fh.write(
                ",".join(
                    [
                        _fmt(r.ground_stiffness),
                        _fmt(r.gains.k1),
                        _fmt(r.gains.k2),
                        str(r.completed),
                        str(r.steps_completed),
                        _fmt(r.measured_depth_cm),
                        _fmt(r.reference_depth_cm),
                        _fmt(r.relative_error),
                    ]
                )
                + "\n"
            )
    print("ground stiffness | gains (k1, k2) | measured depth | reference | rel. error")
    for r in rows:
        if r.completed:
            print(
                f"{r.ground_stiffness / 1e3:12.0f} kN/m | ({r.gains.k1:g}, {r.gains.k2:g}) | "
                f"{r.measured_depth_cm:10.2f} cm | {r.reference_depth_cm:5.2f} cm | "
                f"{r.relative_error:+.1%}"
            )
        else:
            failed = True
            print(
                f"{r.ground_stiffness / 1e3:12.0f} kN/m | ({r.gains.k1:g}, {r.gains.k2:g}) | "
                f"FAILED after {r.steps_completed} steps"
            )
    print(f"wrote {path}")
    return EXIT_TRIAL_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualslip",
        description="Spring-legged walker simulation and step-to-step control toolkit",
    )
    parser.add_argument("--config", "-c", required=True, help="experiment TOML file")
    parser.add_argument("--output-dir", "-o", default=None, help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("find-gait", help="search a periodic gait and write the gait file")
    sub.add_parser("linearize", help="linearize the stride map and write the gains file")
    p = sub.add_parser("walk", help="closed-loop walking trial")
    p.add_argument("--trajectory", action="store_true", help="write the trajectory CSV")
    p = sub.add_parser("perturb", help="one-step low-stiffness perturbation trial")
    p.add_argument("--trajectory", action="store_true", help="write the trajectory CSV")
    p = sub.add_parser("sweep", help="robustness sweep over ground stiffness values")
    p.add_argument("stiffness", nargs="+", help="ground stiffness values (N/m)")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p = sub.add_parser("tune-gains", help="grid-search the stiffness gains")
    p.add_argument("--k1", nargs="+", default=None, help="k1 grid values")
    p.add_argument("--k2", nargs="+", default=None, help="k2 grid values")
    p.add_argument("--no-refine", action="store_true", help="skip the refinement pass")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p = sub.add_parser("reproduce-table1", help="run the reference gain rows and compare depths")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    return parser


COMMANDS = {
    "find-gait": cmd_find_gait,
    "linearize": cmd_linearize,
    "walk": cmd_walk,
    "perturb": cmd_perturb,
    "sweep": cmd_sweep,
    "tune-gains": cmd_tune_gains,
    "reproduce-table1": cmd_reproduce_table1,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ModelError, ScheduleError, GaitSearchError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SynthesisError, SolverError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
