import math

import numpy as np
import pytest

from dualslip.gait import GaitSearchSpec, find_periodic_gait
from dualslip.lqr import numeric_jacobians, synthesize
from dualslip.model import ModelParams, Terrain
from dualslip.sim import SimSettings

RAD2DEG = 180.0 / math.pi
# identity control weights in display units (deg, deg, kN/m)
R_DISPLAY = np.diag([RAD2DEG**2, RAD2DEG**2, 1e-6])


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def settings():
    return SimSettings()


@pytest.fixture(scope="session")
def probe_settings():
    # tighter integration for finite-difference probes
    return SimSettings(rtol=1e-12, atol=1e-12)


@pytest.fixture(scope="session")
def nominal_gait(params, settings):
    return find_periodic_gait(GaitSearchSpec(forward_velocity=1.0), Terrain.rigid(), params, settings)


@pytest.fixture(scope="session")
def linearization(nominal_gait, params, probe_settings):
    return numeric_jacobians(
        nominal_gait, Terrain.uniform(50e6, damping_ratio=0.0), params, probe_settings
    )


@pytest.fixture(scope="session")
def lqr_solution(linearization):
    return synthesize(linearization, q=np.eye(5), r=R_DISPLAY)
