"""Experiment configuration (TOML) and the gait/gains file formats (JSON).

The config file is human-edited; validation reports the exact key path of
any offense. Gait and gains files are written by the CLI and round-trip
floats exactly. Angles are degrees in every file and radians inside the
library.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .gait import GaitSearchSpec, PeriodicGait
from .lqr import LqrSolution, StrideLinearization
from .model import ModelParams, RIGID_EQUIV_STIFFNESS
from .sim import SimSettings
from .stiffness import PerturbationSpec, StiffnessGains

PLAIN_LQR = "plain_lqr"
PROPOSED = "proposed"


class ConfigError(ValueError):
    """Config file problem, reported with the offending key path."""


def _get(table: dict, path: str, kind, default=None, required=False):
    node = table
    parts = path.split(".")
    for p in parts[:-1]:
        node = node.get(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"[{path}]: parent section is not a table")
    if parts[-1] not in node:
        if required:
            raise ConfigError(f"[{path}]: required key missing")
        return default
    value = node[parts[-1]]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(
            f"[{path}]: expected {kind.__name__}, got {type(value).__name__} ({value!r})"
        )
    return value


@dataclass
class ExperimentConfig:
    """Validated contents of an experiment file."""

    model: ModelParams
    compliant: bool
    rigid_stiffness: float
    contact_damping_ratio: float
    controller: str
    gains: StiffnessGains
    gait_file: str | None
    gains_file: str | None
    q_diag: list[float]
    r_diag: list[float] | None  # None -> identity weights in display units
    perturbation: PerturbationSpec | None
    max_steps: int
    settings: SimSettings
    output_dir: str
    write_trajectory: bool
    gait_search: GaitSearchSpec | None
    fd_step: float
    probe_rtol: float
    base_dir: Path = field(default_factory=Path)

    def resolve(self, name: str | None) -> Path | None:
        if name is None:
            return None
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None

    model = ModelParams(
        mass=_get(raw, "model.mass", float, 80.0),
        rest_length=_get(raw, "model.rest_length", float, 1.0),
        foot_mass=_get(raw, "model.foot_mass", float, 1.0),
        gravity_z=_get(raw, "model.gravity_z", float, -9.81),
        contact_exponent=_get(raw, "model.contact_exponent", float, 1.5),
        damping_ratio=_get(raw, "model.damping_ratio", float, 0.2),
    )
    compliant = _get(raw, "terrain.compliant", bool, True)
    rigid_stiffness = _get(raw, "terrain.rigid_stiffness", float, RIGID_EQUIV_STIFFNESS)
    if rigid_stiffness <= 0:
        raise ConfigError("[terrain.rigid_stiffness]: must be positive")
    # Contact damping during trials; the reference behavior corresponds to
    # zero (see README), the textbook Hunt-Crossley value is model.damping_ratio.
    contact_damping = _get(raw, "terrain.contact_damping_ratio", float, 0.0)
    if contact_damping < 0:
        raise ConfigError("[terrain.contact_damping_ratio]: must be >= 0")

    controller = _get(raw, "controller.kind", str, PLAIN_LQR)
    if controller not in (PLAIN_LQR, PROPOSED):
        raise ConfigError(
            f"[controller.kind]: must be '{PLAIN_LQR}' or '{PROPOSED}', got {controller!r}"
        )
    k1 = _get(raw, "controller.k1", float, 1.0)
    k2 = _get(raw, "controller.k2", float, 1.0)
    anchor_power = _get(raw, "controller.anchor_power", float, 0.5)
    try:
        gains = (
            StiffnessGains(k1, k2, anchor_power)
            if controller == PROPOSED
            else StiffnessGains()
        )
    except ValueError as err:
        raise ConfigError(f"[controller.k1/k2/anchor_power]: {err}") from None
    q_diag = _get(raw, "controller.q_diag", list, [1.0] * 5)
    if len(q_diag) != 5 or any(v <= 0 for v in q_diag):
        raise ConfigError("[controller.q_diag]: need 5 positive entries")
    r_diag = _get(raw, "controller.r_diag", list, None)
    if r_diag is not None and (len(r_diag) != 3 or any(v <= 0 for v in r_diag)):
        raise ConfigError("[controller.r_diag]: need 3 positive entries")

    pert = None
    if "perturbation" in raw:
        try:
            pert = PerturbationSpec(
                step=_get(raw, "perturbation.step", int, 10),
                ground_stiffness=_get(
                    raw, "perturbation.ground_stiffness", float, required=True
                ),
                rigid_stiffness=rigid_stiffness,
            )
        except ValueError as err:
            raise ConfigError(f"[perturbation]: {err}") from None

    max_steps = _get(raw, "simulation.max_steps", int, 100)
    if max_steps < 1:
        raise ConfigError(f"[simulation.max_steps]: must be >= 1, got {max_steps}")
    settings = SimSettings(
        rtol=_get(raw, "simulation.rtol", float, 1e-9),
        atol=_get(raw, "simulation.atol", float, 1e-9),
        max_step=_get(raw, "simulation.max_step", float, 0.02),
        event_time_tol=_get(raw, "simulation.event_time_tol", float, 1e-10),
        max_phase_time=_get(raw, "simulation.max_phase_time", float, 2.0),
        method=_get(raw, "simulation.method", str, "DOP853"),
        sample_dt=_get(raw, "simulation.sample_dt", float, 1e-3),
    )
    if settings.method not in ("DOP853", "RK45"):
        raise ConfigError(f"[simulation.method]: unknown integrator {settings.method!r}")

    search = None
    if "gait_search" in raw:
        search = GaitSearchSpec(
            forward_velocity=_get(raw, "gait_search.forward_velocity", float, 1.0),
            y_offset=_get(raw, "gait_search.y_offset", float, 0.05),
            z0_seed=_get(raw, "gait_search.z0_seed", float, 0.99),
            theta_seed=math.radians(_get(raw, "gait_search.theta_seed_deg", float, 107.0)),
            phi_seed=math.radians(_get(raw, "gait_search.phi_seed_deg", float, 11.0)),
            k_seed=_get(raw, "gait_search.k_seed", float, 14e3),
        )

    return ExperimentConfig(
        model=model,
        compliant=compliant,
        rigid_stiffness=rigid_stiffness,
        contact_damping_ratio=contact_damping,
        controller=controller,
        gains=gains,
        gait_file=_get(raw, "gait.file", str, None),
        gains_file=_get(raw, "controller.gains_file", str, None),
        q_diag=[float(v) for v in q_diag],
        r_diag=None if r_diag is None else [float(v) for v in r_diag],
        perturbation=pert,
        max_steps=max_steps,
        settings=settings,
        output_dir=_get(raw, "output.directory", str, "out"),
        write_trajectory=_get(raw, "output.trajectory", bool, False),
        gait_search=search,
        fd_step=_get(raw, "linearization.fd_step", float, 1e-6),
        probe_rtol=_get(raw, "linearization.rtol", float, 1e-12),
        base_dir=path.parent,
    )


# --- gait and gains files ---


def save_gait(path: str | Path, gait: PeriodicGait, model: ModelParams) -> None:
    data = {
        "forward_velocity": gait.forward_velocity,
        "model": {
            "mass": model.mass,
            "rest_length": model.rest_length,
            "foot_mass": model.foot_mass,
        },
        "midstance": {
            "x_offset": gait.x0[0],
            "y_offset": gait.x0[1],
            "apex_height": gait.x0[2],
            "forward_velocity": gait.x0[3],
            "lateral_velocity": gait.x0[4],
        },
        "controls": {
            "theta_deg": math.degrees(gait.u0[0]),
            "phi_deg": math.degrees(gait.u0[1]),
            "leg_stiffness": gait.u0[2],
        },
        "residual_norm": gait.residual_norm,
        "periodicity_error": gait.periodicity_error,
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_gait(path: str | Path) -> PeriodicGait:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"gait file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"gait file {path}: {err}") from None
    try:
        ms = data["midstance"]
        u = data["controls"]
        return PeriodicGait(
            x0=np.array(
                [
                    ms["x_offset"],
                    ms["y_offset"],
                    ms["apex_height"],
                    ms["forward_velocity"],
                    ms["lateral_velocity"],
                ]
            ),
            u0=np.array(
                [
                    math.radians(u["theta_deg"]),
                    math.radians(u["phi_deg"]),
                    u["leg_stiffness"],
                ]
            ),
            residual_norm=data.get("residual_norm", math.nan),
            forward_velocity=data.get("forward_velocity", math.nan),
            periodicity_error=data.get("periodicity_error", math.nan),
        )
    except KeyError as err:
        raise ConfigError(f"gait file {path}: missing key {err}") from None


def save_gains(path: str | Path, solution: LqrSolution) -> None:
    lin = solution.linearization
    data = {
        "jx": lin.jx.tolist() if lin else None,
        "ju": lin.ju.tolist() if lin else None,
        "fd_step": lin.fd_step if lin else None,
        "q": solution.q.tolist(),
        "r": solution.r.tolist(),
        "p": solution.p.tolist(),
        "k": solution.k.tolist(),
        "closed_loop_eigs": [
            {"real": z.real, "imag": z.imag} for z in solution.closed_loop_eigs
        ],
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_gains(path: str | Path) -> LqrSolution:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"gains file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"gains file {path}: {err}") from None
    try:
        lin = None
        if data.get("jx") is not None:
            lin = StrideLinearization(
                jx=np.array(data["jx"]),
                ju=np.array(data["ju"]),
                gait=None,
                fd_step=data.get("fd_step", math.nan),
            )
        return LqrSolution(
            q=np.array(data["q"]),
            r=np.array(data["r"]),
            p=np.array(data["p"]),
            k=np.array(data["k"]),
            linearization=lin,
            closed_loop_eigs=np.array(
                [complex(z["real"], z["imag"]) for z in data["closed_loop_eigs"]]
            ),
        )
    except KeyError as err:
        raise ConfigError(f"gains file {path}: missing key {err}") from None
