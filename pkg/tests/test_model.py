import math

import pytest
from hypothesis import given, strategies as st

from dualslip.model import (
    HybridState,
    LegState,
    ModelError,
    ModelParams,
    Terrain,
    com_accel,
    foot_accel,
    ground_damping,
    ground_force,
    mechanical_energy,
    spring_force,
)


class TestSpringForce:
    def test_at_rest_length_vertical(self):
        assert spring_force((0.0, 0.0, 1.0), 1.0, 14164.54) == (0.0, 0.0, 0.0)

    def test_compressed_vertical(self):
        # k (l0 - |l|) lhat = 10000 * 0.1 * (0,0,1)
        f = spring_force((0.0, 0.0, 0.9), 1.0, 10000.0)
        assert f[0] == 0.0 and f[1] == 0.0
        assert f[2] == pytest.approx(1000.0, rel=1e-12)

    def test_at_rest_length_oblique(self):
        f = spring_force((0.6, 0.0, 0.8), 1.0, 31337.0)
        assert all(abs(c) < 1e-9 for c in f)

    def test_zero_length_rejected(self):
        with pytest.raises(ModelError):
            spring_force((0.0, 0.0, 0.0), 1.0, 1e4)

    def test_compression_pushes_body_away_from_foot(self):
        f = spring_force((0.3, -0.2, 0.8), 1.0, 1e4)
        # force is parallel to the leg vector, same direction when compressed
        assert f[0] > 0 and f[1] < 0 and f[2] > 0

    @given(
        ux=st.floats(-1, 1),
        uy=st.floats(-1, 1),
        uz=st.floats(0.1, 1),
    )
    def test_vanishes_exactly_on_rest_sphere(self, ux, uy, uz):
        norm = math.sqrt(ux * ux + uy * uy + uz * uz)
        leg = (ux / norm, uy / norm, uz / norm)  # unit length = rest length
        f = spring_force(leg, 1.0, 2e4)
        assert max(abs(c) for c in f) < 1e-9


class TestGroundForce:
    def test_zero_penetration_zero_force(self):
        assert ground_force(0.0, -0.3, 1e5, 3e4) == 0.0

    def test_elastic_term(self):
        # 1e5 * 0.01^1.5 = 100 N
        assert ground_force(-0.01, 0.0, 1e5, 3e4) == pytest.approx(100.0, rel=1e-12)

    def test_elastic_plus_damping(self):
        # 100 + 3e4 * 0.1 * 1e-3 = 103 N
        assert ground_force(-0.01, -0.1, 1e5, 3e4) == pytest.approx(103.0, rel=1e-12)

    def test_clamped_at_zero_during_fast_retraction(self):
        # kg - bg*vz < 0 -> tensile prediction clamped
        assert ground_force(-0.01, 10.0, 1e5, 3e4) == 0.0

    def test_above_ground_is_free(self):
        assert ground_force(0.02, -5.0, 1e5, 3e4) == 0.0

    @given(
        zf=st.floats(-0.5, 0.1),
        vzf=st.floats(-10.0, 10.0),
        kg=st.floats(1e3, 1e8),
    )
    def test_never_adhesive(self, zf, vzf, kg):
        assert ground_force(zf, vzf, kg, ground_damping(kg)) >= 0.0

    @given(vzf=st.floats(-10.0, 10.0))
    def test_continuous_at_contact(self, vzf):
        eps = 1e-9
        assert ground_force(-eps, vzf, 1e6, 3e5) < 1e-6

    def test_damping_coefficient(self):
        assert ground_damping(1e5, 0.2) == pytest.approx(3e4)
        terrain = Terrain.uniform(1e5)
        assert terrain.damping(terrain.kg_support) == pytest.approx(3e4)


def _single_support_state(leg_len, stiffness, params):
    return HybridState(
        com=(0.0, 0.0, leg_len),
        com_vel=(0.0, 0.0, 0.0),
        leg_a=LegState(0.0, 0.0, stiffness=stiffness, in_stance=True),
        leg_b=LegState(10.0, 10.0, in_stance=False),
        support_mode="SS_A",
    )


class TestComAccel:
    def test_rest_length_gives_gravity_only(self, params):
        state = _single_support_state(params.rest_length, 1.4e4, params)
        ax, ay, az = com_accel(state, params)
        assert (ax, ay) == (0.0, 0.0)
        assert az == pytest.approx(params.gravity_z)

    def test_double_support_static_balance(self, params):
        # both legs vertical, each compressed to carry half the weight
        k = 10000.0
        compression = params.mass * 9.81 / 2.0 / k
        z = params.rest_length - compression
        state = HybridState(
            com=(0.0, 0.0, z),
            com_vel=(0.0, 0.0, 0.0),
            leg_a=LegState(0.0, 0.0, stiffness=k, in_stance=True),
            leg_b=LegState(0.0, 0.0, stiffness=k, in_stance=True),
            support_mode="DS",
        )
        acc = com_accel(state, params)
        assert max(abs(a) for a in acc) < 1e-12

    def test_ds_is_sum_of_ss_contributions(self, params):
        leg_a = LegState(0.1, -0.02, stiffness=12e3, in_stance=True)
        leg_b = LegState(0.4, 0.05, stiffness=17e3, in_stance=True)
        com = (0.25, 0.0, 0.93)
        ds = HybridState(com, (0, 0, 0), leg_a, leg_b, "DS")
        ss_a = HybridState(com, (0, 0, 0), leg_a, LegState(9, 9), "SS_A")
        ss_b = HybridState(com, (0, 0, 0), LegState(9, 9), leg_b, "SS_B")
        a_ds = com_accel(ds, params)
        a_a = com_accel(ss_a, params)
        a_b = com_accel(ss_b, params)
        for i in range(3):
            expected = a_a[i] + a_b[i] - (params.gravity_z if i == 2 else 0.0)
            assert a_ds[i] == pytest.approx(expected, abs=1e-12)


class TestFootAccel:
    def test_force_balance(self, params):
        fg = 480.0 - params.foot_mass * params.gravity_z
        assert foot_accel(480.0, fg, params) == pytest.approx(0.0, abs=1e-12)

    def test_free_fall(self, params):
        assert foot_accel(0.0, 0.0, params) == pytest.approx(params.gravity_z)

    def test_hand_evaluated(self, params):
        # (500 - 480)/1 - 9.81 = 10.19
        assert foot_accel(480.0, 500.0, params) == pytest.approx(10.19, rel=1e-12)

    def test_bad_foot_mass_rejected(self):
        with pytest.raises(ModelError):
            ModelParams(foot_mass=0.0)


class TestParams:
    def test_defaults(self, params):
        assert params.mass == 80.0
        assert params.rest_length == 1.0
        assert params.foot_mass == 1.0
        assert params.gravity_z == -9.81
        assert params.contact_exponent == 1.5
        assert params.damping_ratio == 0.2

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mass": -1.0},
            {"rest_length": 0.0},
            {"foot_mass": 100.0},
            {"gravity_z": 9.81},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ModelError):
            ModelParams(**kwargs)

    def test_terrain_validation(self):
        with pytest.raises(ModelError):
            Terrain(True, kg_support=-1.0)
        assert not Terrain.rigid().compliant


def test_mechanical_energy_accounts_spring(params):
    state = _single_support_state(0.95, 2e4, params)
    e = mechanical_energy(state, params)
    expected = params.mass * 9.81 * 0.95 + 0.5 * 2e4 * 0.05**2
    assert e == pytest.approx(expected, rel=1e-12)
