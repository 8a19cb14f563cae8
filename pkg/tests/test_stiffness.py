import math

import pytest

from dualslip.model import RIGID_EQUIV_STIFFNESS, Terrain
from dualslip.sim import EVENT_MS, EVENT_TD, StepStiffness
from dualslip.stiffness import (
    PerturbationSpec,
    ScheduleError,
    StiffnessGains,
    default_gain_grid,
    find_gains,
    ground_stiffness_schedule,
    leg_stiffness_schedule,
    step_stiffness,
    step_terrain,
)

SPEC = PerturbationSpec(step=10, ground_stiffness=90e3)
GAINS = StiffnessGains(k1=4.0, k2=1.61)


class TestLegSchedule:
    def test_amplified_at_perturbation_touchdown(self):
        # reference gains for the 90 kN/m case
        k_a, k_b = leg_stiffness_schedule(10, EVENT_TD, 14000.0, SPEC, GAINS)
        assert k_a == pytest.approx(56000.0)
        assert k_b == pytest.approx(22540.0)

    def test_unchanged_before_perturbation(self):
        for event in (EVENT_MS, EVENT_TD):
            assert leg_stiffness_schedule(9, event, 14000.0, SPEC, GAINS) == (14000.0, 14000.0)

    def test_midstance_of_perturbation_step_unchanged(self):
        assert leg_stiffness_schedule(10, EVENT_MS, 14000.0, SPEC, GAINS) == (14000.0, 14000.0)

    def test_following_step_keeps_perturbed_leg_amplified(self):
        k_a, k_b = leg_stiffness_schedule(11, EVENT_MS, 15000.0, SPEC, GAINS)
        assert k_a == pytest.approx(60000.0)
        assert k_b == pytest.approx(15000.0)
        # touchdown does not alter them
        assert leg_stiffness_schedule(11, EVENT_TD, 15000.0, SPEC, GAINS) == (k_a, k_b)

    def test_back_to_baseline_after(self):
        assert leg_stiffness_schedule(12, EVENT_MS, 14500.0, SPEC, GAINS) == (14500.0, 14500.0)

    def test_unit_gains_reduce_to_baseline(self):
        unit = StiffnessGains(1.0, 1.0)
        for n in (9, 10, 11, 12):
            for event in (EVENT_MS, EVENT_TD):
                k_a, k_b = leg_stiffness_schedule(n, event, 14164.54, SPEC, unit)
                assert k_a == 14164.54 and k_b == 14164.54

    def test_pure_function_replays_identically(self):
        first = [leg_stiffness_schedule(n, EVENT_TD, 14000.0, SPEC, GAINS) for n in range(1, 20)]
        second = [leg_stiffness_schedule(n, EVENT_TD, 14000.0, SPEC, GAINS) for n in range(1, 20)]
        assert first == second

    def test_validation(self):
        with pytest.raises(ScheduleError):
            leg_stiffness_schedule(10, "LH", 14000.0, SPEC, GAINS)
        with pytest.raises(ScheduleError):
            leg_stiffness_schedule(10, EVENT_MS, -1.0, SPEC, GAINS)
        with pytest.raises(ScheduleError):
            StiffnessGains(0.9, 1.2)
        with pytest.raises(ScheduleError):
            PerturbationSpec(step=0, ground_stiffness=90e3)
        with pytest.raises(ScheduleError):
            PerturbationSpec(step=10, ground_stiffness=-5.0)


class TestStepStiffness:
    def test_perturbation_step_roles(self):
        s = step_stiffness(10, 14000.0, SPEC, GAINS)
        assert s == StepStiffness(
            support_before_td=14000.0,
            support_after_td=22540.0,
            landing=56000.0,
            anchor_power=GAINS.anchor_power,
        )

    def test_following_step_roles(self):
        s = step_stiffness(11, 15000.0, SPEC, GAINS)
        assert s == StepStiffness(
            support_before_td=60000.0, support_after_td=60000.0, landing=15000.0
        )

    def test_plain_everywhere_else(self):
        assert step_stiffness(5, 14100.0, SPEC, GAINS) == StepStiffness.uniform(14100.0)
        assert step_stiffness(5, 14100.0, None, GAINS) == StepStiffness.uniform(14100.0)


class TestGroundSchedule:
    def test_rigid_before_perturbation(self):
        assert ground_stiffness_schedule(9, SPEC) == (
            RIGID_EQUIV_STIFFNESS,
            RIGID_EQUIV_STIFFNESS,
        )

    def test_perturbed_stance_spans_two_steps(self):
        # landing on soft ground, then supporting on it until lift-off
        assert ground_stiffness_schedule(10, SPEC) == (RIGID_EQUIV_STIFFNESS, 90e3)
        assert ground_stiffness_schedule(11, SPEC) == (90e3, RIGID_EQUIV_STIFFNESS)
        assert ground_stiffness_schedule(12, SPEC) == (
            RIGID_EQUIV_STIFFNESS,
            RIGID_EQUIV_STIFFNESS,
        )

    def test_null_perturbation_constant(self):
        null = PerturbationSpec(step=10, ground_stiffness=RIGID_EQUIV_STIFFNESS)
        for n in (9, 10, 11, 12):
            assert ground_stiffness_schedule(n, null) == (
                RIGID_EQUIV_STIFFNESS,
                RIGID_EQUIV_STIFFNESS,
            )

    def test_step_terrain(self):
        terr = step_terrain(10, SPEC, compliant=True, damping_ratio=0.0)
        assert terr == Terrain(True, RIGID_EQUIV_STIFFNESS, 90e3, damping_ratio=0.0)
        assert step_terrain(3, None, compliant=False) == Terrain.rigid()
        with pytest.raises(ScheduleError):
            step_terrain(3, SPEC, compliant=False)


class TestFindGains:
    def test_picks_the_surviving_minimum(self):
        def run_trial(k1, k2):
            # synthetic landscape: survival needs k1 >= 2; score is a bowl
            completed = k1 >= 2.0
            score = (k1 - 3.0) ** 2 + (k2 - 1.5) ** 2
            return completed, score, 0.01 * k1

        grid = [(k1, k2) for k1 in (1.0, 2.0, 3.0, 4.0) for k2 in (1.0, 1.5, 2.0)]
        result = find_gains(run_trial, grid=grid, refine=False)
        assert result.gains == StiffnessGains(3.0, 1.5)

    def test_refinement_improves_the_cell(self):
        def run_trial(k1, k2):
            return True, (k1 - 2.7) ** 2 + (k2 - 1.7) ** 2, 0.0

        grid = [(k1, k2) for k1 in (2.0, 2.5, 3.0) for k2 in (1.0, 1.5, 2.0)]
        coarse = find_gains(run_trial, grid=grid, refine=False)
        fine = find_gains(run_trial, grid=grid, refine=True)
        assert fine.score < coarse.score
        assert fine.gains.k1 == pytest.approx(2.75)
        assert fine.gains.k2 == pytest.approx(1.75)

    def test_all_failures_raise_with_best_partial(self):
        def run_trial(k1, k2):
            return False, math.inf, 0.0

        with pytest.raises(ScheduleError, match="best partial survivor"):
            find_gains(run_trial, grid=[(1.0, 1.0), (2.0, 1.0)], refine=False)

    def test_default_grid_shape(self):
        grid = default_gain_grid()
        k1s = sorted({a for a, _ in grid})
        k2s = sorted({b for _, b in grid})
        assert k1s[0] == 1.0 and k1s[-1] == 8.0 and len(k1s) == 29
        assert k2s[0] == 1.0 and k2s[-1] == pytest.approx(3.5) and len(k2s) == 51

    def test_deterministic_under_reordering(self):
        def run_trial(k1, k2):
            return True, round(abs(k1 - 2.0) + abs(k2 - 1.2), 6), 0.0

        grid = [(k1, k2) for k1 in (1.0, 2.0, 3.0) for k2 in (1.0, 1.2)]
        a = find_gains(run_trial, grid=grid, refine=False)
        b = find_gains(run_trial, grid=list(reversed(grid)), refine=False)
        assert a.gains == b.gains
