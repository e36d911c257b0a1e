import math

import numpy as np
import pytest

from sdattack.schedules import ScheduleSpec, normalized_schedule, raw_sequence

ALL_FAMILIES = ("constant", "log", "linear", "power", "exp")
DIRECTED_FAMILIES = ("log", "linear", "power", "exp")


class TestRawSequence:
    def test_linear_decreasing(self):
        seq = raw_sequence(ScheduleSpec("linear", 4, 1.0, "decreasing"))
        np.testing.assert_array_equal(seq, [4.0, 3.0, 2.0, 1.0])

    def test_power_decreasing(self):
        seq = raw_sequence(ScheduleSpec("power", 3, 1.0, "decreasing"))
        np.testing.assert_array_equal(seq, [9.0, 4.0, 1.0])

    def test_log_increasing_is_reversed_decreasing(self):
        # natural log over 2..T+1 so that no step degenerates to zero
        seq = raw_sequence(ScheduleSpec("log", 3, 1.0, "increasing"))
        np.testing.assert_allclose(seq, [math.log(2), math.log(3), math.log(4)], atol=1e-15)
        dec = raw_sequence(ScheduleSpec("log", 3, 1.0, "decreasing"))
        np.testing.assert_array_equal(seq, dec[::-1])

    def test_constant_all_ones(self):
        np.testing.assert_array_equal(raw_sequence(ScheduleSpec("constant", 5, 1.0)), np.ones(5))

    def test_exp_decreasing(self):
        seq = raw_sequence(ScheduleSpec("exp", 3, 1.0, "decreasing"))
        np.testing.assert_allclose(seq, [math.e**3, math.e**2, math.e], rtol=1e-15)

    @pytest.mark.parametrize("family", DIRECTED_FAMILIES)
    @pytest.mark.parametrize("steps", [2, 3, 10, 50])
    def test_strictly_monotone(self, family, steps):
        if family == "exp" and steps > 50:
            return
        dec = raw_sequence(ScheduleSpec(family, steps, 1.0, "decreasing"))
        inc = raw_sequence(ScheduleSpec(family, steps, 1.0, "increasing"))
        assert np.all(np.diff(dec) < 0)
        assert np.all(np.diff(inc) > 0)

    @pytest.mark.parametrize("family", ALL_FAMILIES)
    def test_all_steps_positive(self, family):
        for steps in (1, 2, 7):
            seq = raw_sequence(ScheduleSpec(family, steps, 1.0, "decreasing"))
            assert len(seq) == steps
            assert np.all(seq > 0)

    def test_zero_steps_rejected(self):
        with pytest.raises(ValueError, match="steps"):
            raw_sequence(ScheduleSpec("linear", 0, 1.0))

    def test_bad_log_base_rejected(self):
        with pytest.raises(ValueError, match="log_base"):
            raw_sequence(ScheduleSpec("log", 3, 1.0, log_base=1.0))

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="family"):
            raw_sequence(ScheduleSpec("cubic", 3, 1.0))

    def test_exp_overflow_rejected(self):
        with pytest.raises(ValueError, match="overflow"):
            raw_sequence(ScheduleSpec("exp", 800, 1.0))


class TestNormalizedSchedule:
    def test_paper_default_constant(self):
        # T=10 with a 16/255 budget: every step is 1.6/255
        alpha = normalized_schedule(ScheduleSpec("constant", 10, 16.0 / 255.0))
        np.testing.assert_allclose(alpha, np.full(10, 1.6 / 255.0), rtol=1e-15)

    def test_linear_decreasing_worked_example(self):
        alpha = normalized_schedule(ScheduleSpec("linear", 4, 0.8, "decreasing"))
        np.testing.assert_allclose(alpha, [0.32, 0.24, 0.16, 0.08], atol=1e-15)

    def test_power_increasing_worked_example(self):
        alpha = normalized_schedule(ScheduleSpec("power", 3, 1.4, "increasing"))
        np.testing.assert_allclose(alpha, [0.1, 0.4, 0.9], atol=1e-15)

    @pytest.mark.parametrize("family", ALL_FAMILIES)
    @pytest.mark.parametrize("direction", ["increasing", "decreasing"])
    @pytest.mark.parametrize("steps", [1, 2, 3, 10, 50])
    def test_sums_to_epsilon(self, family, direction, steps):
        eps = 16.0 / 255.0
        alpha = normalized_schedule(ScheduleSpec(family, steps, eps, direction))
        assert len(alpha) == steps
        assert np.all(alpha >= 0)
        assert abs(float(np.sum(alpha)) - eps) <= 1e-12

    @pytest.mark.parametrize("family", DIRECTED_FAMILIES)
    def test_reversal_identity(self, family):
        for steps in (2, 5, 12):
            inc = normalized_schedule(ScheduleSpec(family, steps, 0.3, "increasing"))
            dec = normalized_schedule(ScheduleSpec(family, steps, 0.3, "decreasing"))
            np.testing.assert_array_equal(inc, dec[::-1])

    def test_epsilon_scaling_is_proportional(self):
        base = normalized_schedule(ScheduleSpec("power", 6, 0.1, "increasing"))
        doubled = normalized_schedule(ScheduleSpec("power", 6, 0.2, "increasing"))
        np.testing.assert_array_equal(doubled, 2.0 * base)

    @pytest.mark.parametrize("steps", [1, 2, 3, 10, 50])
    def test_log_base_invariance(self, steps):
        eps = 0.25
        reference = normalized_schedule(ScheduleSpec("log", steps, eps, "increasing"))
        for base in (2.0, 5.0, 10.0, 123.0):
            alt = normalized_schedule(
                ScheduleSpec("log", steps, eps, "increasing", log_base=base)
            )
            np.testing.assert_allclose(alt, reference, atol=1e-12, rtol=0)

    def test_single_step_gets_whole_budget_exactly(self):
        for family in ALL_FAMILIES:
            alpha = normalized_schedule(ScheduleSpec(family, 1, 0.123))
            assert alpha.shape == (1,)
            assert alpha[0] == 0.123

    def test_zero_epsilon_gives_zero_steps(self):
        alpha = normalized_schedule(ScheduleSpec("linear", 5, 0.0, "decreasing"))
        np.testing.assert_array_equal(alpha, np.zeros(5))
