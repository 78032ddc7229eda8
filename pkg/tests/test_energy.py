from fractions import Fraction

import numpy as np
import pytest

from soundsieve.energy_model import (
    SENSE,
    SKIP,
    cis1_sampler,
    make_state,
    periodic_period,
    periodic_sampler,
    replay,
    step,
    vanilla_sampler,
)


class TestStep:
    def test_skip_recharges_one_over_c(self):
        state = make_state(capacity=4, charge_ratio=1.0, budget=2)
        assert step(state, SKIP).budget == 3

    def test_skip_caps_at_capacity(self):
        state = make_state(capacity=5, charge_ratio=1.0)  # already full
        assert step(state, SKIP).budget == 5

    def test_four_skips_at_c3_give_four_thirds(self):
        state = make_state(capacity=5, charge_ratio=3.0, budget=0)
        for _ in range(4):
            state = step(state, SKIP)
        assert state.budget == Fraction(4, 3)  # exact, no float drift

    def test_sense_costs_one(self):
        state = make_state(capacity=5, charge_ratio=2.0)
        assert step(state, SENSE).budget == 4

    def test_sense_without_budget_is_a_scheduler_bug(self):
        state = make_state(capacity=5, charge_ratio=1.0, budget=Fraction(1, 2))
        with pytest.raises(ValueError, match="budget"):
            step(state, SENSE)

    def test_three_skips_at_c15_reach_exactly_two(self):
        # 3 * (2/3) must equal 2 exactly; float accumulation would fall short
        state = make_state(capacity=2, charge_ratio=1.5, budget=0)
        for _ in range(3):
            state = step(state, SKIP)
        assert state.full


class TestVanilla:
    def test_b4_c1_alternating_bursts(self):
        trace = vanilla_sampler(16, make_state(capacity=4, charge_ratio=1.0))
        actions = [s.action for s in trace.steps]
        expected = [SENSE] * 4 + [SKIP] * 4 + [SENSE] * 4 + [SKIP] * 4
        assert actions == expected
        assert trace.sensed_fraction == 0.5

    def test_c3_long_clip_approaches_quarter_duty(self):
        trace = vanilla_sampler(400, make_state(capacity=5, charge_ratio=3.0))
        assert abs(trace.sensed_fraction - 0.25) < 0.02

    def test_budget_surplus_senses_everything(self):
        trace = vanilla_sampler(10, make_state(capacity=20, charge_ratio=2.0))
        assert trace.mask.all()

    def test_duty_cycle_mapping_on_40_segments(self):
        # the paper's C -> missing-fraction mapping, measured on a small
        # buffer so the full-start transient cannot bias a 40-segment window
        expected = {1.0: 0.50, 1.5: 0.40, 2.0: 1 / 3, 3.0: 0.25}
        for c, duty in expected.items():
            trace = vanilla_sampler(40, make_state(capacity=2, charge_ratio=c))
            assert abs(trace.sensed_fraction - duty) <= 0.02


class TestPeriodic:
    def test_period_values(self):
        assert periodic_period(1.0) == 2
        assert periodic_period(1.5) == 3
        assert periodic_period(2.0) == 3
        assert periodic_period(3.0) == 4

    def test_c1_alternates(self):
        trace = periodic_sampler(10, make_state(capacity=5, charge_ratio=1.0))
        assert [s.action for s in trace.steps] == [SENSE, SKIP] * 5

    def test_forced_skip_recorded_when_budget_short(self):
        trace = periodic_sampler(8, make_state(capacity=5, charge_ratio=1.0, budget=0))
        assert trace.steps[0].action == SKIP  # position 0 is due but starved
        assert trace.steps[2].action == SENSE

    def test_sustainable_at_every_default_c(self):
        for c in (1.0, 1.5, 2.0, 3.0):
            trace = periodic_sampler(60, make_state(capacity=5, charge_ratio=c))
            due = [i for i in range(60) if i % periodic_period(c) == 0]
            sensed = [i for i, s in enumerate(trace.steps) if s.action == SENSE]
            assert sensed == due  # never starved at the sustainable period


class TestCis1:
    def test_b3_c1_pattern(self):
        trace = cis1_sampler(12, make_state(capacity=3, charge_ratio=1.0))
        actions = [s.action for s in trace.steps]
        assert actions == ([SENSE] * 3 + [SKIP] * 3) * 2

    def test_b3_c2_waits_six(self):
        trace = cis1_sampler(18, make_state(capacity=3, charge_ratio=2.0))
        actions = [s.action for s in trace.steps]
        assert actions[:9] == [SENSE] * 3 + [SKIP] * 6
        assert actions[9:12] == [SENSE] * 3

    def test_three_segments_full_budget_all_sensed(self):
        trace = cis1_sampler(3, make_state(capacity=3, charge_ratio=1.0))
        assert trace.mask.all()

    def test_small_buffer_rejected(self):
        with pytest.raises(ValueError, match="capacity"):
            cis1_sampler(10, make_state(capacity=2, charge_ratio=1.0))


class TestInvariants:
    def test_all_traces_replay_within_bounds(self):
        for c in (1.0, 1.5, 2.0, 3.0):
            for capacity in (3, 5, 8):
                for budget in (0, capacity // 2, capacity):
                    state0 = make_state(capacity, c, budget)
                    for sampler in (vanilla_sampler, periodic_sampler, cis1_sampler):
                        trace = sampler(50, state0)
                        replay(trace, state0)  # raises on any violation
                        for rec in trace.steps:
                            assert 0 <= rec.budget_after <= capacity

    def test_samplers_deterministic(self):
        state0 = make_state(5, 1.5)
        a = vanilla_sampler(30, state0)
        b = vanilla_sampler(30, state0)
        assert [s.action for s in a.steps] == [s.action for s in b.steps]
