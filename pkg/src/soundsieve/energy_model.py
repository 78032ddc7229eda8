"""Discrete-time intermittence model and the naive baseline samplers.

One simulation step is one 100 ms segment.  Sensing a segment costs one
unit of a real-valued budget capped at the buffer capacity B; skipping a
segment recharges 1/C units, where C is the charge-to-discharge time
ratio of the harvester (C = 1 means one skipped segment pays for one
sensed segment).  Sensing requires a whole unit of budget.

Budgets are `fractions.Fraction` internally: thresholds like "budget has
reached B after k skips of 1/C" must be exact, and repeated float addition
of 1/3 or 2/3 lands just below them and flips decisions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

SENSE = "sense"
SKIP = "skip"


@dataclass(frozen=True)
class EnergyState:
    """Budget in [0, B] evolving under sense-cost 1 and skip-gain 1/C."""

    budget: Fraction
    capacity: int
    charge_ratio: Fraction

    @property
    def full(self) -> bool:
        return self.budget == self.capacity

    @property
    def can_sense(self) -> bool:
        return self.budget >= 1


def make_state(capacity: int = 5, charge_ratio=1.0, budget=None) -> EnergyState:
    """Initial state; the budget defaults to a full buffer."""
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    c = Fraction(charge_ratio)
    if c <= 0:
        raise ValueError(f"charge ratio must be > 0, got {charge_ratio}")
    b = Fraction(capacity) if budget is None else Fraction(budget)
    if not 0 <= b <= capacity:
        raise ValueError(f"budget {budget} outside [0, {capacity}]")
    return EnergyState(budget=b, capacity=capacity, charge_ratio=c)


def step(state: EnergyState, action: str) -> EnergyState:
    """Advance one segment: sense costs 1, skip recharges 1/C capped at B."""
    if action == SENSE:
        if not state.can_sense:
            raise ValueError(
                f"scheduler bug: sense requested with budget {float(state.budget):.4f} < 1"
            )
        return replace(state, budget=state.budget - 1)
    if action == SKIP:
        return replace(
            state,
            budget=min(Fraction(state.capacity), state.budget + 1 / state.charge_ratio),
        )
    raise ValueError(f"unknown action {action!r}")


@dataclass(frozen=True)
class TraceStep:
    index: int
    action: str
    budget_after: Fraction


@dataclass
class SimTrace:
    """Per-segment decision log of one simulated run."""

    steps: list
    capacity: int
    charge_ratio: Fraction

    @property
    def mask(self) -> np.ndarray:
        return np.array([s.action == SENSE for s in self.steps], dtype=bool)

    @property
    def n_segments(self) -> int:
        return len(self.steps)

    @property
    def sensed_fraction(self) -> float:
        if not self.steps:
            return 0.0
        return float(self.mask.sum()) / len(self.steps)


def replay(trace: SimTrace, state0: EnergyState) -> None:
    """Re-run a trace through `step`, checking budgets; raises on any violation."""
    state = state0
    for i, rec in enumerate(trace.steps):
        if rec.index != i:
            raise AssertionError(f"trace indices not contiguous at {i}")
        state = step(state, rec.action)
        if state.budget != rec.budget_after:
            raise AssertionError(
                f"segment {i}: recorded budget {rec.budget_after} != replayed {state.budget}"
            )
        if not 0 <= state.budget <= state.capacity:
            raise AssertionError(f"segment {i}: budget {state.budget} left [0, B]")


def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "action", "budget_after"])
        for rec in trace.steps:
            writer.writerow([rec.index, rec.action, repr(float(rec.budget_after))])


def _run(n_segments: int, state0: EnergyState, decide) -> SimTrace:
    """Drive `decide(i, state) -> action` over n segments, recording each step."""
    state = state0
    steps = []
    for i in range(n_segments):
        action = decide(i, state)
        state = step(state, action)
        steps.append(TraceStep(i, action, state.budget))
    return SimTrace(steps=steps, capacity=state0.capacity, charge_ratio=state0.charge_ratio)


def vanilla_sampler(n_segments: int, state0: EnergyState) -> SimTrace:
    """Sense until the buffer is exhausted, then sleep until it is full again."""
    charging = False

    def decide(i, state):
        nonlocal charging
        if charging and state.full:
            charging = False
        if not charging and state.can_sense:
            return SENSE
        charging = True
        return SKIP

    return _run(n_segments, state0, decide)


def periodic_period(charge_ratio) -> int:
    """Sustainable sampling period: sense every ceil(1+C)-th segment."""
    return math.ceil(1 + Fraction(charge_ratio))


def periodic_sampler(n_segments: int, state0: EnergyState) -> SimTrace:
    """Sense segment i iff i mod ceil(1+C) == 0, budget permitting."""
    p = periodic_period(state0.charge_ratio)

    def decide(i, state):
        if i % p == 0 and state.can_sense:
            return SENSE
        return SKIP

    return _run(n_segments, state0, decide)


def cis1_sampler(n_segments: int, state0: EnergyState) -> SimTrace:
    """Sense bursts of 3 consecutive segments, recharging to full in between."""
    if state0.capacity < 3:
        raise ValueError(f"burst sampler needs capacity >= 3, got {state0.capacity}")
    burst_left = 0
    started = False

    def decide(i, state):
        nonlocal burst_left, started
        if not started or (burst_left == 0 and state.full):
            started = True
            burst_left = 3
        if burst_left > 0 and state.can_sense:
            burst_left -= 1
            return SENSE
        burst_left = 0
        return SKIP

    return _run(n_segments, state0, decide)
