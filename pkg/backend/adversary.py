from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional, Sequence, Tuple

import numpy as np

from backend.config import SlotStructure
from backend.neural import Classifier, Dataset, Hyperparams, train_classifier, windowed_dataset

# Role of this module:
# Everything A does. A only listens and detects ACKs. From ACK timing it recovers the
# slot length and the sensing/data split, from its own sensed powers and the ACKs it
# trains a surrogate C_A of "would T succeed in this slot", and from changes in what it
# observes it estimates when T retrains. With C_A it plans per-slot actions: transmit in
# the sensing period (evasion / causative poisoning) or in the data period (jamming).

logger = logging.getLogger(__name__)

NONE, POISON, JAM = 0, 1, 2


# =====================================================================
# Slot structure inference
# =====================================================================

@dataclass(frozen=True)
class AckTimeline:
    intervals: Tuple[float, ...]
    epsilon: float = 0.0

    def __post_init__(self):
        if any(not t > 0 for t in self.intervals):
            raise ValueError("ACK inter-arrival times must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


def build_ack_timeline(
    ack_slots: Sequence[int],
    slot_duration: float = 1.0,
    jitter: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> AckTimeline:
    """
    ACK instants at the end of each ACK-bearing slot, optionally jittered by up to
    `jitter` slot lengths, turned into inter-arrival times.
    """
    slots = np.sort(np.asarray(ack_slots, dtype=float))
    if len(slots) < 2:
        raise ValueError("at least two ACKs are needed to form an inter-arrival time")
    instants = (slots + 1.0) * slot_duration
    if jitter > 0:
        if rng is None:
            raise ValueError("a generator is required for jittered timelines")
        instants = instants + rng.uniform(-jitter, jitter, size=len(instants)) * slot_duration
    intervals = np.diff(instants)
    intervals = intervals[intervals > 0]
    return AckTimeline(intervals=tuple(float(t) for t in intervals), epsilon=2.0 * jitter * slot_duration)


def infer_slot_length(timeline: AckTimeline, max_rounds: int = 10_000) -> float:
    """
    Repeated reduction modulo the smallest interval.

    Every other interval is replaced by its residue modulo the current minimum; residues
    within epsilon of 0 or of the minimum are treated as exact multiples and dropped.
    On exact integer multiples this is the GCD.
    """
    if not timeline.intervals:
        raise ValueError("empty ACK timeline")
    eps = timeline.epsilon * (1.0 + 1e-9) + 1e-12
    values = list(timeline.intervals)
    for _ in range(max_rounds):
        if len(values) == 1:
            break
        t_min = min(values)
        rest = list(values)
        rest.remove(t_min)
        reduced = [t_min]
        for v in rest:
            r = math.fmod(v, t_min)
            if r <= eps or t_min - r <= eps:
                continue
            reduced.append(r)
        values = reduced
    return min(values)


def synthesize_ack_slot_trace(
    background_power: float,
    rx_power: float,
    sensing_fraction: float,
    ticks: int,
    rng: Optional[np.random.Generator] = None,
    noise_std: float = 0.0,
) -> np.ndarray:
    """Sub-slot power at A in an ACK-bearing slot: background while T senses, then T's data."""
    start = int(round(sensing_fraction * ticks))
    trace = np.full(ticks, float(background_power))
    trace[start:] += rx_power
    if rng is not None and noise_std > 0:
        trace = np.maximum(trace + rng.normal(0.0, noise_std, size=ticks), 0.0)
    return trace


def identify_slot_phases(slot_traces: Sequence[Sequence[float]], min_step_ratio: float = 2.0) -> SlotStructure:
    """
    Median sensing/data split over ACK-bearing slots.

    The split is the first tick above the midpoint between the slot's min and max power.
    Slots whose max is not at least min_step_ratio times the min have no step and are skipped.
    """
    if len(slot_traces) == 0:
        raise ValueError("no ACK-bearing slot observed")
    fractions = []
    for trace in slot_traces:
        trace = np.asarray(trace, dtype=float)
        lo, hi = trace.min(), trace.max()
        if hi < min_step_ratio * max(lo, 1e-12):
            continue
        step = int(np.argmax(trace > 0.5 * (lo + hi)))
        fractions.append(step / len(trace))
    if not fractions:
        raise ValueError("no power step found in any ACK-bearing slot")
    sensing = float(np.median(fractions))
    return SlotStructure(sensing_fraction=sensing, data_fraction=1.0 - sensing, feedback_fraction=0.0)


# =====================================================================
# Exploratory attack
# =====================================================================

@dataclass
class AdversaryState:
    classifier: Classifier
    n_new: int
    transmit_power: float = 1000.0
    attack: Optional[str] = None
    window: Deque[float] = field(default_factory=deque)

    def __post_init__(self):
        self.window = deque(self.window, maxlen=self.n_new)

    def push(self, p_t: float) -> None:
        self.window.append(float(p_t))

    def prime(self, powers: Sequence[float]) -> None:
        for p in list(powers)[-self.n_new:]:
            self.push(p)

    def history(self) -> np.ndarray:
        return np.asarray(self.window, dtype=float)


def collect_training_data(
    powers_at_A: Sequence[float],
    acks: Sequence[bool],
    n_new: int,
    log_power: bool = False,
) -> Dataset:
    """
    (window of A's sensed powers, ACK present) per slot.

    The powers are what A senses from background traffic only, so slots where A itself
    transmitted carry no self-interference.
    """
    if len(powers_at_A) < n_new:
        raise ValueError(f"trace too short: {len(powers_at_A)} slots for a window of {n_new}")
    return windowed_dataset(powers_at_A, np.asarray(acks, dtype=int), n_new, log_power=log_power)


def train_surrogate(
    data: Dataset,
    hyperparams: Hyperparams,
    rng: np.random.Generator,
    transmit_power: float = 1000.0,
) -> AdversaryState:
    classifier = train_classifier(data, hyperparams, rng)
    n0, n1 = data.class_counts()
    logger.info("trained C_A on %d samples (%d ACK / %d no-ACK)", len(data), n1, n0)
    return AdversaryState(classifier=classifier, n_new=data.n_features, transmit_power=transmit_power)


def predict_ack(state: AdversaryState, p_t: float) -> bool:
    state.push(p_t)
    if len(state.window) < state.n_new:
        raise ValueError("sensing window is not full yet")
    return state.classifier.score_one(state.history()) >= state.classifier.tau


def ack_scores(state: AdversaryState, windows: np.ndarray) -> np.ndarray:
    if len(windows) == 0:
        return np.empty(0)
    return state.classifier.scores(windows)


# =====================================================================
# Retraining detection
# =====================================================================

@dataclass(frozen=True)
class RetrainEstimate:
    period: float
    lower: float
    upper: float
    step: float
    length: float
    instants: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("bisection step must be > 0")
        if not self.lower <= self.length <= self.upper:
            raise ValueError("resolved length must lie within its bounds")


def detect_accuracy_changes(
    correct: Sequence[float],
    window: int,
    threshold: float,
    positions: Optional[Sequence[int]] = None,
) -> List[int]:
    """
    Change points of a windowed accuracy.

    The indicator sequence is cut into consecutive blocks of `window` observations; an
    instant is reported at the first observation of every block whose mean differs from
    the previous block's by more than `threshold`.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    values = np.asarray(correct, dtype=float)
    positions = np.arange(len(values)) if positions is None else np.asarray(positions)
    n_blocks = len(values) // window
    instants: List[int] = []
    previous = None
    for b in range(n_blocks):
        acc = values[b * window:(b + 1) * window].mean()
        if previous is not None and abs(acc - previous) > threshold:
            instants.append(int(positions[b * window]))
        previous = acc
    return instants


def accuracy_shift(baseline: Sequence[float], block: Sequence[float], threshold: float, z: float = 2.5) -> int:
    """
    Two-proportion test of a block of 0/1 indicators against a pooled baseline.

    Returns +1 or -1 when the block's mean moved up or down by more than `threshold`
    with a z statistic of at least `z`, else 0. Either side empty gives 0.
    """
    baseline = np.asarray(baseline, dtype=float)
    block = np.asarray(block, dtype=float)
    if len(baseline) == 0 or len(block) == 0:
        return 0
    p0, p1 = baseline.mean(), block.mean()
    diff = p1 - p0
    if abs(diff) <= threshold:
        return 0
    pooled = (baseline.sum() + block.sum()) / (len(baseline) + len(block))
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / len(baseline) + 1.0 / len(block)))
    if abs(diff) / se >= z:
        return 1 if diff > 0 else -1
    return 0


def estimate_retrain_period(instants: Sequence[float]) -> float:
    """Least-squares Δ for t_i ≈ t_1 + (i-1)Δ with t_1 held fixed."""
    t = np.asarray(instants, dtype=float)
    if len(t) < 2:
        raise ValueError("at least two change instants are needed")
    i = np.arange(len(t), dtype=float)
    return float(np.sum(i * (t - t[0])) / np.sum(i * i))


def resolve_retrain_length(
    lower: float,
    upper: float,
    step: float,
    impact: Callable[[float], float],
    tolerance: float = 0.01,
    max_rounds: int = 64,
) -> float:
    """
    Bisection on the retraining collection length.

    impact(l) is the effect of poisoning the last l slots before a retraining. If
    poisoning l and l+step slots has the same impact (within tolerance), l already
    covers the whole collection window and the upper bound moves down; otherwise the
    lower bound moves up. Returns the lower bound once the bracket is within `step`.
    """
    if not lower < upper:
        raise ValueError("lower bound must be below the upper bound")
    if not step > 0:
        raise ValueError("bisection step must be > 0")
    lo, hi = float(lower), float(upper)
    for _ in range(max_rounds):
        if hi - lo <= step:
            break
        mid = 0.5 * (lo + hi)
        if abs(impact(mid) - impact(mid + step)) <= tolerance:
            hi = mid
        else:
            lo = mid
    return lo


# =====================================================================
# Attack planning
# =====================================================================

@dataclass
class AttackPlan:
    """Per-slot actions (NONE / POISON / JAM) with the slot structure that prices them."""

    actions: np.ndarray
    slot_structure: SlotStructure = SlotStructure()

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=int)

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def idle(cls, n: int, slot_structure: SlotStructure = SlotStructure()) -> "AttackPlan":
        return cls(np.zeros(n, dtype=int), slot_structure)

    @property
    def poisoned(self) -> int:
        return int(np.sum(self.actions == POISON))

    @property
    def jammed(self) -> int:
        return int(np.sum(self.actions == JAM))

    @property
    def energy(self) -> float:
        """Transmit time in slot lengths."""
        return self.poisoned * self.slot_structure.sensing_fraction + self.jammed * self.slot_structure.data_fraction


def plan_evasion(state: AdversaryState, windows: np.ndarray, slot_structure: SlotStructure = SlotStructure()) -> AttackPlan:
    """Poison T's sensing in every slot where C_A expects an ACK."""
    predicted = ack_scores(state, windows) >= state.classifier.tau
    return AttackPlan(np.where(predicted, POISON, NONE), slot_structure)


def plan_causative(
    state: AdversaryState,
    windows: np.ndarray,
    in_retraining: np.ndarray,
    slot_structure: SlotStructure = SlotStructure(),
) -> AttackPlan:
    """Evasion-style poisoning confined to the slots A believes T is collecting retraining data in."""
    in_retraining = np.asarray(in_retraining, dtype=bool)
    if len(in_retraining) != len(windows):
        raise ValueError("retraining mask must cover every slot")
    predicted = ack_scores(state, windows) >= state.classifier.tau
    return AttackPlan(np.where(predicted & in_retraining, POISON, NONE), slot_structure)


def energy_budget(reference: AttackPlan, slot_structure: SlotStructure) -> float:
    """Jam-slot quota with the same transmit time as the reference poisoning plan."""
    if not slot_structure.data_fraction > 0:
        raise ValueError("data_fraction must be > 0")
    return reference.poisoned * slot_structure.sensing_fraction / slot_structure.data_fraction


def plan_jamming(
    state: AdversaryState,
    quota: float,
    windows: np.ndarray,
    slot_structure: SlotStructure = SlotStructure(),
) -> AttackPlan:
    """
    Jam the data period of the floor(quota) predicted-ACK slots with the highest ACK
    scores. Equal scores go to the earlier slot.
    """
    if quota < 0:
        raise ValueError("quota must be >= 0")
    scores = ack_scores(state, windows)
    actions = np.zeros(len(scores), dtype=int)
    candidates = np.flatnonzero(scores >= state.classifier.tau)
    k = min(int(math.floor(quota + 1e-9)), len(candidates))
    if k > 0:
        order = candidates[np.argsort(-scores[candidates], kind="stable")]
        actions[order[:k]] = JAM
    return AttackPlan(actions, slot_structure)
