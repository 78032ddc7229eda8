"""Content- and energy-aware sampling of one audio event.

An initial plan marks the budget-feasible, globally most important
segments for the clip's energy conditions.  At runtime the plan is
adapted after every sensed segment: the importance predictor may promote
a nearby segment whose predicted score clears the threshold, and a system
sitting at full charge never idles more than `t_idle_max` segments before
sensing the best global candidate within reach.  Every deviation is
re-checked against the budget before it is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .audio_core import AudioClip, analyze_clip, segment_features
from .classifier import forward
from .energy_model import SENSE, SKIP, EnergyState, SimTrace, TraceStep, step
from .imputation import impute
from .predictor import predict_next, runtime_input

PROV_GLOBAL = "global"
PROV_LOCAL = "local-override"
PROV_FORCED = "forced-skip"


@dataclass
class SchedulerConfig:
    tau: float  # local-importance override threshold
    t_idle_max: int = 2  # max tolerated full-charge idle, in segments
    horizon: int = 5

    def __post_init__(self):
        if not -1.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (-1, 1), got {self.tau}")
        if self.t_idle_max < 0:
            raise ValueError(f"t_idle_max must be >= 0, got {self.t_idle_max}")


@dataclass
class SamplingPlan:
    mask: np.ndarray  # intended sense/skip bits
    t_max: int
    tau: float
    scores: np.ndarray  # the global scores the plan was built from
    provenance: dict  # position -> PROV_* for bits touched during planning


@dataclass
class Models:
    """Trained artifacts the runtime sampler needs."""

    classifier: object
    predictor: object
    global_importance: object


def plan_t_max(n_segments: int, state0: EnergyState) -> int:
    """Best-case number of sensable segments.

    The sustainable duty cycle admits ceil(n / (1 + C)) senses; a full
    buffer can additionally front a burst of floor(budget) senses.  The
    forward feasibility repair below is the authoritative check.
    """
    sustainable = math.ceil(Fraction(n_segments) / (1 + state0.charge_ratio))
    burst = math.floor(state0.budget)
    return min(n_segments, max(sustainable, burst))


def _mask_feasible(mask, state0: EnergyState) -> bool:
    budget = state0.budget
    gain = 1 / state0.charge_ratio
    cap = Fraction(state0.capacity)
    for wanted in mask:
        if wanted:
            if budget < 1:
                return False
            budget -= 1
        else:
            budget = min(cap, budget + gain)
    return True


def initial_plan(global_importance, n_segments: int, state0: EnergyState,
                 tau: float = 0.0) -> SamplingPlan:
    """Mark the t_max most important positions, then repair for feasibility.

    Repair simulates the mask forward, clearing any bit that would be
    sensed with budget < 1, and refills the allowance with the
    next-highest-scoring positions that keep the mask feasible.  Ties
    break toward the earlier index throughout.
    """
    if hasattr(global_importance, "scores_for"):
        scores = global_importance.scores_for(n_segments)
    else:
        scores = np.zeros(n_segments)
        given = np.asarray(global_importance, dtype=np.float64)
        scores[: min(n_segments, given.size)] = given[:n_segments]
    t_max = plan_t_max(n_segments, state0)
    order = sorted(range(n_segments), key=lambda i: (-scores[i], i))
    mask = np.zeros(n_segments, dtype=bool)
    provenance = {}
    for pos in order[:t_max]:
        mask[pos] = True
        provenance[pos] = PROV_GLOBAL

    # clear marks that run out of budget when played forward
    budget = state0.budget
    gain = 1 / state0.charge_ratio
    cap = Fraction(state0.capacity)
    for i in range(n_segments):
        if mask[i]:
            if budget < 1:
                mask[i] = False
                provenance[i] = PROV_FORCED
                budget = min(cap, budget + gain)
            else:
                budget -= 1
        else:
            budget = min(cap, budget + gain)

    # spend the remaining allowance on the best still-feasible positions
    promoted = True
    while mask.sum() < t_max and promoted:
        promoted = False
        for pos in order:
            if mask[pos] or provenance.get(pos) == PROV_FORCED:
                continue
            mask[pos] = True
            if _mask_feasible(mask, state0):
                provenance[pos] = PROV_GLOBAL
                promoted = True
                break
            mask[pos] = False
    return SamplingPlan(mask=mask, t_max=t_max, tau=tau, scores=scores,
                        provenance=provenance)


def _budget_at(target: int, current: int, state: EnergyState) -> Fraction:
    """Budget on arrival at `target` if every segment before it is skipped."""
    budget = state.budget
    gain = 1 / state.charge_ratio
    cap = Fraction(state.capacity)
    for _ in range(current + 1, target):
        budget = min(cap, budget + gain)
    return budget


def _next_planned(plan: SamplingPlan, current: int, state: EnergyState):
    for j in range(current + 1, len(plan.mask)):
        if plan.mask[j] and _budget_at(j, current, state) >= 1:
            return j
    return None


def _idle_candidate(plan: SamplingPlan, current: int, state: EnergyState,
                    t_idle_max: int):
    stop = min(current + t_idle_max, len(plan.mask) - 1)
    best = None
    for j in range(current + 1, stop + 1):
        if _budget_at(j, current, state) < 1:
            continue
        if best is None or plan.scores[j] > plan.scores[best]:
            best = j
    return best


def adapt(plan: SamplingPlan, current_index: int, predicted, state: EnergyState,
          cfg: SchedulerConfig):
    """Choose the next segment to sense after `current_index`.

    Returns (index or None, provenance).  The earliest feasible upcoming
    segment whose predicted score clears tau is taken, but never by
    jumping past a planned sense that comes sooner; negatively scored
    candidates are never promoted.  With a full buffer and the next
    planned sense more than t_idle_max away, the best global candidate
    within t_idle_max is sensed instead of idling.
    """
    n = len(plan.mask)
    predicted = np.asarray(predicted, dtype=np.float64)
    local = None
    for offset in range(1, min(cfg.horizon, predicted.size) + 1):
        j = current_index + offset
        if j >= n:
            break
        score = predicted[offset - 1]
        if score > plan.tau and score >= 0.0 and _budget_at(j, current_index, state) >= 1:
            local = j
            break
    planned = _next_planned(plan, current_index, state)
    if local is not None and (planned is None or local < planned):
        return local, PROV_LOCAL
    if state.full:
        horizon_next = planned if planned is not None else n
        if horizon_next - current_index > cfg.t_idle_max:
            promoted = _idle_candidate(plan, current_index, state, cfg.t_idle_max)
            if promoted is not None:
                return promoted, PROV_LOCAL
    if planned is not None:
        return planned, PROV_GLOBAL
    return None, None


def run_soundsieve(clip: AudioClip, models: Models, state0: EnergyState,
                   cfg: SchedulerConfig, n_mel: int = 32):
    """Simulate one clip segment by segment; classify the imputed result.

    Returns (trace, predicted_label, plan).  Segment 0 is always sensed
    (the microphone wake-up is what starts the clip), features of sensed
    segments feed the predictor, and the mask's gaps are imputed before
    classification.
    """
    mel, view = analyze_clip(clip, n_mel)
    n = view.n_segments
    plan = initial_plan(models.global_importance, n, state0, tau=cfg.tau)
    feats = segment_features(
        mel, view, models.classifier.conv1_w, models.classifier.conv1_b
    )
    state = state0
    steps = []
    sensed = np.zeros(n, dtype=bool)
    provenance = {}
    target = 0
    target_prov = PROV_GLOBAL if plan.mask[0] else PROV_LOCAL
    for i in range(n):
        if target == i and state.can_sense:
            state = step(state, SENSE)
            sensed[i] = True
            provenance[i] = target_prov
            target, target_prov = None, None
            if i < n - 1:
                prediction = predict_next(
                    models.predictor, runtime_input(feats[i], i, n)
                )
                target, target_prov = adapt(plan, i, prediction, state, cfg)
        else:
            if target == i:  # planned sense starved of budget: record and replan
                provenance[i] = PROV_FORCED
                target, target_prov = None, None
            state = step(state, SKIP)
            if target is None and i < n - 1:
                nxt = _next_planned(plan, i, state)
                target, target_prov = (nxt, PROV_GLOBAL) if nxt is not None else (None, None)
            if state.full:
                horizon_next = target if target is not None else n
                if horizon_next - i > cfg.t_idle_max:
                    promoted = _idle_candidate(plan, i, state, cfg.t_idle_max)
                    if promoted is not None:
                        target, target_prov = promoted, PROV_LOCAL
        steps.append(TraceStep(i, SENSE if sensed[i] else SKIP, state.budget))
    trace = SimTrace(steps=steps, capacity=state0.capacity,
                     charge_ratio=state0.charge_ratio)
    if sensed.all():
        spec = mel
    else:
        spec = impute(mel, sensed, view)
    label = int(np.argmax(forward(models.classifier, spec)))
    return trace, label, plan
