from __future__ import annotations

import copy
import logging
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from backend.adversary import (
    JAM,
    POISON,
    AdversaryState,
    AttackPlan,
    RetrainEstimate,
    accuracy_shift,
    ack_scores,
    build_ack_timeline,
    collect_training_data as adversary_training_data,
    energy_budget,
    estimate_retrain_period,
    identify_slot_phases,
    infer_slot_length,
    plan_causative,
    plan_evasion,
    plan_jamming,
    resolve_retrain_length,
    synthesize_ack_slot_trace,
    train_surrogate,
)
from backend.channel import CHANNEL_KINDS
from backend.config import (
    ATTACK_KINDS,
    DefenseConfig,
    ScenarioConfig,
    SeedStreams,
    SlotStructure,
    multi_source_default,
    validate,
)
from backend.environment import Environment, EnvironmentTrace
from backend.hyperopt import SearchSpace, sequential_fixing
from backend.neural import Dataset, Hyperparams
from backend.transmitter import (
    ClassifierMetrics,
    Mode,
    TransmitterState,
    collect_training_data,
    decide_batch,
    deploy,
    evaluate,
    fit_defense,
    retrain,
    sensing_windows,
)

# Role of this module:
# Runs the whole protocol. One replication (seed) goes through T's listening phase,
# deployment, A's observation and surrogate training, operation up to a retraining
# boundary (poisoned in causative cells) and a test phase in which the attack of each
# cell is applied. Every cell of a seed is branched from a deep copy of the shared
# prefix, so all cells see the same traffic and channel realization.

logger = logging.getLogger(__name__)

CLEAN_FAMILY = ("none", "evasion", "jamming")
CAUSATIVE_FAMILY = ("causative", "causative+evasion", "causative+jamming")
BASELINE = "baseline"

Planner = Callable[["World", EnvironmentTrace, np.ndarray], AttackPlan]


# =====================================================================
# Slot records
# =====================================================================

@dataclass
class SlotRecords:
    """Column-wise slot records of one phase (one row per slot)."""

    phase: str
    index: np.ndarray
    status: np.ndarray
    power_T_clean: np.ndarray
    power_T: np.ndarray
    power_A: np.ndarray
    rx_TA: np.ndarray
    score: np.ndarray
    label: np.ndarray
    flipped: np.ndarray
    transmit: np.ndarray
    success: np.ndarray
    ack: np.ndarray
    action: np.ndarray
    ack_score: np.ndarray
    mode: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    @classmethod
    def empty(cls, phase: str) -> "SlotRecords":
        kwargs = {f.name: np.empty(0) for f in fields(cls) if f.name != "phase"}
        return cls(phase=phase, **kwargs)

    @staticmethod
    def concat(parts: Sequence["SlotRecords"], phase: Optional[str] = None) -> "SlotRecords":
        if not parts:
            raise ValueError("nothing to concatenate")
        kwargs = {
            f.name: np.concatenate([getattr(p, f.name) for p in parts])
            for f in fields(SlotRecords) if f.name != "phase"
        }
        return SlotRecords(phase=phase or parts[0].phase, **kwargs)

    def energy(self, slot_structure: SlotStructure) -> float:
        return AttackPlan(self.action, slot_structure).energy

    def to_frame(self) -> pd.DataFrame:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "phase"}
        frame = pd.DataFrame(data)
        frame.insert(0, "phase", self.phase)
        return frame


# =====================================================================
# Run state
# =====================================================================

@dataclass
class World:
    """Everything that evolves during one replication."""

    config: ScenarioConfig
    streams: SeedStreams
    env: Environment
    defense_rng: np.random.Generator
    retrain_rng: np.random.Generator
    transmitter: Optional[TransmitterState] = None
    adversary: Optional[AdversaryState] = None
    defense: Optional[DefenseConfig] = None
    deployed_at: Optional[int] = None
    a_history: Deque[float] = field(default_factory=deque)
    retrain_powers: List[np.ndarray] = field(default_factory=list)
    retrain_status: List[np.ndarray] = field(default_factory=list)
    retrain_events: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.a_history = deque(self.a_history, maxlen=self.config.n_new)

    @property
    def slot(self) -> int:
        return self.env.slot

    @property
    def mode(self) -> Mode:
        return Mode.TRAINING_COLLECTION if self.transmitter is None else self.transmitter.mode

    def next_boundary(self, after: Optional[int] = None) -> Optional[int]:
        """First retraining boundary strictly after `after` (default: now)."""
        rc = self.config.retraining
        if not rc.enabled or self.deployed_at is None:
            return None
        after = self.slot if after is None else after
        k = (after - self.deployed_at) // rc.period + 1
        return self.deployed_at + k * rc.period

    def in_retraining_window(self, index: np.ndarray) -> np.ndarray:
        rc = self.config.retraining
        if not rc.enabled or self.deployed_at is None:
            return np.zeros(len(index), dtype=bool)
        rel = index - self.deployed_at
        return (rel >= 0) & ((rel % rc.period) >= rc.period - rc.window)

    def next_mode_change(self) -> Optional[int]:
        """Next slot where T may switch mode: a collection-window start or a retraining boundary."""
        boundary = self.next_boundary()
        if boundary is None:
            return None
        window_start = boundary - self.config.retraining.window
        return window_start if window_start > self.slot else boundary

    def sync_mode(self) -> None:
        """Put a deployed T in the mode of the current slot."""
        if self.transmitter is None:
            return
        collecting = bool(self.in_retraining_window(np.array([self.slot]))[0])
        self.transmitter.mode = Mode.RETRAINING_COLLECTION if collecting else Mode.TEST


def new_world(config: ScenarioConfig) -> World:
    streams = SeedStreams(config.seed)
    return World(
        config=config,
        streams=streams,
        env=Environment(config, streams),
        defense_rng=streams.stream("defense"),
        retrain_rng=streams.stream("retrain:transmitter"),
    )


def _simulate(world: World, phase: str, trace: EnvironmentTrace, planner: Optional[Planner]) -> SlotRecords:
    n = len(trace)
    cfg = world.config
    nan = np.full(n, np.nan)
    a_windows = sensing_windows(world.a_history, trace.power_A, cfg.n_new) if len(world.a_history) >= cfg.n_new - 1 else None

    if world.transmitter is None:
        # T only listens before deployment
        actions = np.zeros(n, dtype=int)
        power_T = trace.power_T
        score, label = nan, np.zeros(n, dtype=int)
        flipped = np.zeros(n, dtype=bool)
        transmit = np.zeros(n, dtype=bool)
        success = np.zeros(n, dtype=bool)
    else:
        plan = planner(world, trace, a_windows) if planner is not None else AttackPlan.idle(n, cfg.slot_structure)
        actions = plan.actions
        power_T = trace.power_T + (actions == POISON) * trace.poison_T
        score, flipped, transmit = decide_batch(world.transmitter, power_T, world.defense, world.defense_rng)
        label = (score >= world.transmitter.classifier.tau).astype(int)
        interference = trace.interference_R + (actions == JAM) * trace.jam_R
        gamma = trace.signal_TR / (trace.noise_R + interference)
        success = transmit & (gamma >= cfg.sinr_threshold)

    if world.adversary is not None and a_windows is not None:
        a_score = ack_scores(world.adversary, a_windows)
    else:
        a_score = nan

    for p in trace.power_A[-cfg.n_new:]:
        world.a_history.append(float(p))

    if world.mode is Mode.RETRAINING_COLLECTION:
        world.retrain_powers.append(power_T)
        world.retrain_status.append(trace.status)

    return SlotRecords(
        phase=phase,
        index=trace.index,
        status=trace.status.astype(int),
        power_T_clean=trace.power_T,
        power_T=power_T,
        power_A=trace.power_A,
        rx_TA=trace.rx_TA,
        score=score,
        label=label,
        flipped=flipped,
        transmit=transmit,
        success=success,
        ack=success.copy(),
        action=actions,
        ack_score=a_score,
        mode=np.full(n, world.mode.value),
    )


def _retrain_now(world: World) -> None:
    powers = np.concatenate(world.retrain_powers) if world.retrain_powers else np.empty(0)
    status = np.concatenate(world.retrain_status) if world.retrain_status else np.empty(0, dtype=int)
    world.retrain_powers, world.retrain_status = [], []
    world.retrain_events.append(world.slot)
    try:
        world.transmitter = retrain(world.transmitter, powers, status, world.retrain_rng)
    except ValueError as exc:
        # too short or single-class buffer: keep the incumbent classifier
        logger.warning("retraining at slot %d skipped: %s", world.slot, exc)


def run_phase(world: World, phase: str, n_slots: int, planner: Optional[Planner] = None) -> SlotRecords:
    """
    Simulate n_slots of one phase on `world` (mutated in place).

    Per slot: traffic and gains, T's sensed power (plus poisoning if planned), T's
    decision (with defense if fitted), SINR at R (plus jamming if planned), ACK, A's
    observation. Chunks are split where T changes mode: at the start of a collection
    window T buffers what it senses, and at the boundary it retrains on that buffer.
    """
    if n_slots < 0:
        raise ValueError("slot count must be >= 0")
    parts: List[SlotRecords] = []
    remaining = n_slots
    while remaining > 0:
        world.sync_mode()
        boundary = world.next_boundary()
        stop = world.next_mode_change()
        chunk = remaining if stop is None else min(remaining, stop - world.slot)
        trace = world.env.advance(chunk)
        parts.append(_simulate(world, phase, trace, planner))
        remaining -= chunk
        if boundary is not None and world.slot == boundary:
            _retrain_now(world)
    world.sync_mode()
    if not parts:
        return SlotRecords.empty(phase)
    return SlotRecords.concat(parts, phase)


# =====================================================================
# Metrics
# =====================================================================

@dataclass
class RunMetrics:
    successes: int
    transmissions: int
    idle_slots: int
    total_slots: int
    transmitter: Optional[ClassifierMetrics] = None
    adversary: Optional[ClassifierMetrics] = None
    energy: float = 0.0

    @property
    def M_Th(self) -> Optional[float]:
        return self.successes / self.idle_slots if self.idle_slots else None

    @property
    def M_Sr(self) -> Optional[float]:
        return self.successes / self.transmissions if self.transmissions else None

    @property
    def M_Tr(self) -> float:
        return self.transmissions / self.total_slots

    def as_dict(self) -> Dict[str, Optional[float]]:
        row: Dict[str, Optional[float]] = {
            "successes": self.successes,
            "transmissions": self.transmissions,
            "idle_slots": self.idle_slots,
            "total_slots": self.total_slots,
            "M_Th": self.M_Th,
            "M_Sr": self.M_Sr,
            "M_Tr": self.M_Tr,
            "energy": self.energy,
        }
        for prefix, metrics in (("T", self.transmitter), ("A", self.adversary)):
            row[f"{prefix}_e_MD"] = metrics.e_MD if metrics else None
            row[f"{prefix}_e_FA"] = metrics.e_FA if metrics else None
        return row


def compute_metrics(
    records: SlotRecords,
    adversary: Optional[ClassifierMetrics] = None,
    slot_structure: SlotStructure = SlotStructure(),
) -> RunMetrics:
    """Throughput, success and transmission ratios plus T's error counts over the records."""
    if len(records) == 0:
        raise ValueError("cannot compute metrics of an empty record")
    transmitter = None
    if not np.all(np.isnan(np.asarray(records.score, dtype=float))):
        transmitter = evaluate(records.label, records.status)
    return RunMetrics(
        successes=int(np.sum(records.success)),
        transmissions=int(np.sum(records.transmit)),
        idle_slots=int(np.sum(records.status == 0)),
        total_slots=len(records),
        transmitter=transmitter,
        adversary=adversary,
        energy=records.energy(slot_structure),
    )


# =====================================================================
# Planners
# =====================================================================

def evasion_planner(world: World, trace: EnvironmentTrace, windows: np.ndarray) -> AttackPlan:
    return plan_evasion(world.adversary, windows, world.config.slot_structure)


def jamming_planner(world: World, trace: EnvironmentTrace, windows: np.ndarray) -> AttackPlan:
    structure = world.config.slot_structure
    if world.config.jamming_budget_reference == "evasion_plan":
        reference = plan_evasion(world.adversary, windows, structure)
    else:
        reference = AttackPlan(np.full(len(trace), POISON), structure)
    return plan_jamming(world.adversary, energy_budget(reference, structure), windows, structure)


def causative_planner(window_start: int, boundary: int) -> Planner:
    """Poison predicted-ACK slots inside [window_start, boundary) in global slot indices."""

    def planner(world: World, trace: EnvironmentTrace, windows: np.ndarray) -> AttackPlan:
        index = trace.index
        mask = (index >= window_start) & (index < boundary)
        return plan_causative(world.adversary, windows, mask, world.config.slot_structure)

    return planner


TEST_PLANNERS: Dict[str, Optional[Planner]] = {
    "none": None,
    "evasion": evasion_planner,
    "jamming": jamming_planner,
    "causative": None,
    "causative+evasion": evasion_planner,
    "causative+jamming": jamming_planner,
}


# =====================================================================
# Adversary-side inference
# =====================================================================

@dataclass(frozen=True)
class SlotEstimate:
    slot_length: Optional[float]
    slot_structure: Optional[SlotStructure]
    acks: int


def observe_slot_structure(records: SlotRecords, config: ScenarioConfig, rng: np.random.Generator) -> SlotEstimate:
    """Slot length from ACK timing and the sensing/data split from sub-slot power at A."""
    ack_slots = records.index[records.ack.astype(bool)]
    slot_length = None
    structure = None
    if len(ack_slots) >= 2:
        timeline = build_ack_timeline(ack_slots, config.slot_duration, config.ack_jitter, rng)
        if timeline.intervals:
            slot_length = infer_slot_length(timeline)
    if len(ack_slots) >= 1:
        ack_mask = records.ack.astype(bool)
        traces = [
            synthesize_ack_slot_trace(p, rx, config.slot_structure.sensing_fraction, config.subslot_ticks,
                                      rng, config.noise_relative_std * config.noise_power)
            for p, rx in zip(records.power_A[ack_mask], records.rx_TA[ack_mask])
        ]
        try:
            structure = identify_slot_phases(traces)
        except ValueError as exc:
            logger.warning("slot phases not identified: %s", exc)
    return SlotEstimate(slot_length=slot_length, slot_structure=structure, acks=int(len(ack_slots)))


def _change_indicator(records: SlotRecords, poisoning: bool, tau: float) -> np.ndarray:
    """
    What A watches for a retraining, one 0/1 value per relevant slot.

    While A poisons: whether T still transmitted in a poisoned slot. A model retrained on
    poisoned data takes the poisoned level for idle, so this rate jumps up. While A stays
    quiet: whether T transmitted in a slot where C_A expects no ACK. A model retrained on
    clean data again holds back in busy slots, so this rate drops.
    """
    if poisoning:
        mask = records.action == POISON
    else:
        mask = records.ack_score < tau
    return records.transmit[mask].astype(float)


def infer_retraining_schedule(
    world: World,
    changes: int = 3,
    max_periods: int = 6,
) -> Optional[Tuple[RetrainEstimate, int]]:
    """
    A's estimate of T's retraining schedule, run on `world` (advanced in place).

    A poisons every slot it expects an ACK in until T's behavior shifts, then stays
    quiet until it shifts back, and so on. Each block of change_window slots is tested
    against the pooled blocks since the last change; a shift confirmed by the next block
    marks a retraining at the first block's start. The instants give the period; the
    collection length is then bisected on copies of the world by poisoning the last l
    slots before a predicted boundary and measuring T afterwards.

    Returns:
        (estimate, next boundary in global slots) or None if too few changes were seen
    """
    rc = world.config.retraining
    tau = world.adversary.classifier.tau
    start = world.slot
    poisoning = True
    baseline: List[np.ndarray] = []
    pending: Optional[Tuple[int, np.ndarray, int]] = None
    instants: List[int] = []
    while len(instants) < changes and world.slot - start < max_periods * rc.period:
        records = run_phase(world, "inference", rc.change_window, evasion_planner if poisoning else None)
        block = _change_indicator(records, poisoning, tau)
        if len(block) == 0:
            continue
        pooled = np.concatenate(baseline) if baseline else np.empty(0)
        direction = accuracy_shift(pooled, block, rc.change_threshold, rc.change_z)
        if pending is not None:
            candidate_start, candidate, candidate_direction = pending
            pending = None
            if direction == candidate_direction:
                instants.append(candidate_start)
                logger.debug("retraining detected at slot %d (%s)", candidate_start,
                             "poisoning" if poisoning else "quiet")
                poisoning = not poisoning
                baseline = []
                continue
            baseline.append(candidate)
        if direction != 0:
            pending = (int(records.index[0]), block, direction)
        else:
            baseline.append(block)
    if len(instants) < 2:
        logger.warning("retraining schedule not inferred: %d change(s) in %d slots", len(instants), world.slot - start)
        return None

    period = estimate_retrain_period(instants)
    if not period >= 1:
        logger.warning("retraining schedule not inferred: degenerate period %.2f", period)
        return None
    step = max(1.0, rc.change_window / 4.0)
    boundary = instants[-1] + period
    while boundary - period < world.slot:
        boundary += period
    boundary = int(round(boundary))
    measure = max(rc.change_window, world.config.test_slots)
    impacts: Dict[int, float] = {}

    def impact(length: float) -> float:
        key = int(round(length))
        if key not in impacts:
            branch = copy.deepcopy(world)
            run_phase(branch, "inference", max(0, boundary - key - branch.slot))
            run_phase(branch, "inference", boundary - branch.slot, evasion_planner)
            after = _change_indicator(run_phase(branch, "inference", measure, evasion_planner), True, tau)
            impacts[key] = float(after.mean()) if len(after) else 0.0
        return impacts[key]

    length = resolve_retrain_length(0.0, period, step, impact, tolerance=rc.impact_tolerance)
    estimate = RetrainEstimate(period=period, lower=0.0, upper=period, step=step, length=length,
                               instants=tuple(float(t) for t in instants))
    logger.info("inferred retraining: period %.1f, collection length %.1f, next boundary %d", period, length, boundary)
    return estimate, boundary


# =====================================================================
# Experiments
# =====================================================================

@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    attacks: Tuple[str, ...] = ("none",)
    defense_levels: Tuple[float, ...] = (0.0,)
    seeds: Tuple[int, ...] = (0,)

    def __post_init__(self):
        errors = []
        for attack in self.attacks:
            if attack not in ATTACK_KINDS:
                errors.append(f"attacks: unknown attack '{attack}'")
        if not self.attacks:
            errors.append("attacks: at least one attack cell is required")
        if not self.defense_levels:
            errors.append("defense_levels: at least one P_d is required")
        if any(not 0.0 <= p <= 1.0 for p in self.defense_levels):
            errors.append("defense_levels: P_d out of [0,1]")
        if len(self.seeds) < 1:
            errors.append("seeds: replication count must be >= 1")
        if errors:
            raise ValueError("; ".join(errors))
        validate(self.scenario)

    @property
    def replications(self) -> int:
        return len(self.seeds)


@dataclass
class SeedResult:
    seed: int
    cells: Dict[Tuple[str, float], RunMetrics]
    transmitter_validation: ClassifierMetrics
    slot_estimates: Dict[float, SlotEstimate] = field(default_factory=dict)
    retrain_estimates: Dict[float, Optional[RetrainEstimate]] = field(default_factory=dict)


def _tuned_hyperparams(config: ScenarioConfig, train, validation, streams: SeedStreams) -> Hyperparams:
    h = config.transmitter_hyperparams
    if not config.tune_transmitter:
        return h
    result = sequential_fixing(SearchSpace.around(h), train, validation, streams.stream("tune:transmitter"))
    logger.info("tuned C_T: %s (e=%.4f)", result.hyperparams, result.objective)
    return result.hyperparams


def collect_transmitter_data(config: ScenarioConfig) -> Tuple[World, SlotRecords, Dataset, Dataset]:
    """T's listening phase: (world, collection records, training split, validation split)."""
    world = new_world(config)
    collection = run_phase(world, "collection", config.n_new + config.num_train_slots + config.num_test_slots)
    data = collect_training_data(collection.power_T, collection.status, config.n_new, log_power=config.log_power)
    train, validation = data.split(config.num_train_slots)
    return world, collection, train, validation


def prepare_transmitter(config: ScenarioConfig) -> Tuple[World, ClassifierMetrics, np.ndarray]:
    """
    T's listening phase and deployment.

    Returns:
        (world right after deployment, C_T's validation metrics, C_T's validation scores)
    """
    world, collection, train, validation = collect_transmitter_data(config)
    h = _tuned_hyperparams(config, train, validation, world.streams)
    world.transmitter = deploy(train, h, world.streams.stream("init:transmitter"))
    world.transmitter.prime(collection.power_T)
    world.deployed_at = world.slot
    metrics = evaluate(world.transmitter.classifier.predict(validation.X), validation.y)
    scores = world.transmitter.classifier.scores(validation.X)
    return world, metrics, scores


def _observe(world: World, config: ScenarioConfig) -> Tuple[ClassifierMetrics, SlotRecords]:
    """
    A's observation phase and surrogate training.

    Returns:
        (C_A's metrics on the held-out half of A's samples, the observation records)
    """
    observation = run_phase(world, "observation", config.adversary_observation_slots)
    data = adversary_training_data(observation.power_A, observation.ack, config.n_new, log_power=config.log_power)
    train, held_out = data.split(len(data) // 2)
    world.adversary = train_surrogate(train, config.adversary_hyperparams, world.streams.stream("init:adversary"),
                                      config.adversary.transmit_power)
    world.adversary.prime(observation.power_A)
    metrics = evaluate(world.adversary.classifier.predict(held_out.X), held_out.y)
    return metrics, observation


def _test_boundary(world: World, inferred: Optional[Tuple[World, int]]) -> Optional[int]:
    """
    Slot where the test phase starts: a true retraining boundary.

    Without schedule inference it is the first boundary whose collection window lies
    entirely ahead. With inference it is the boundary nearest A's estimate that has
    not passed yet.
    """
    rc = world.config.retraining
    if not rc.enabled:
        return None
    if inferred is None:
        return world.next_boundary(world.slot + rc.window - 1)
    inferred_world, estimated = inferred
    k = max(1, int(round((estimated - world.deployed_at) / rc.period)))
    boundary = world.deployed_at + k * rc.period
    if boundary < inferred_world.slot:
        boundary = inferred_world.next_boundary()
    return boundary


def _run_cells(
    world: World,
    attacks: Sequence[str],
    adversary_metrics: ClassifierMetrics,
    estimate: Optional[RetrainEstimate] = None,
    inferred: Optional[Tuple[World, int]] = None,
) -> Dict[str, RunMetrics]:
    config = world.config
    structure = config.slot_structure
    rc = config.retraining
    boundary = _test_boundary(world, inferred)

    branches: Dict[str, Tuple[World, float]] = {}
    if any(a in CLEAN_FAMILY for a in attacks):
        w = copy.deepcopy(world)
        if boundary is not None:
            run_phase(w, "operation", boundary - w.slot)
        branches["clean"] = (w, 0.0)
    if any(a in CAUSATIVE_FAMILY for a in attacks):
        w = copy.deepcopy(inferred[0] if inferred is not None else world)
        energy = 0.0
        if boundary is not None:
            if estimate is not None:
                attack_end = inferred[1]
                attack_start = int(round(attack_end - estimate.length - estimate.step))
            else:
                attack_end, attack_start = boundary, boundary - rc.window
            prefix = run_phase(w, "operation", boundary - w.slot, causative_planner(attack_start, attack_end))
            energy = prefix.energy(structure)
        branches["causative"] = (w, energy)

    results: Dict[str, RunMetrics] = {}
    for attack in attacks:
        base, energy = branches["causative" if attack in CAUSATIVE_FAMILY else "clean"]
        w = copy.deepcopy(base)
        test = run_phase(w, "test", config.test_slots, TEST_PLANNERS[attack])
        metrics = compute_metrics(test, adversary_metrics, structure)
        metrics.energy += energy
        results[attack] = metrics
    return results


def run_seed(scenario: ScenarioConfig, seed: int, attacks: Sequence[str], defense_levels: Sequence[float]) -> SeedResult:
    """All attack/defense cells of one replication, plus the no-attack, no-defense baseline."""
    config = validate(replace(scenario, seed=seed))
    deployed, t_metrics, val_scores = prepare_transmitter(config)
    tau = deployed.transmitter.classifier.tau
    flip = config.defense.flip_probability if config.defense is not None else 0.5

    levels = list(dict.fromkeys(defense_levels))
    if 0.0 not in levels:
        levels.append(0.0)
    result = SeedResult(seed=seed, cells={}, transmitter_validation=t_metrics)

    for pd_level in levels:
        world = copy.deepcopy(deployed)
        world.defense = fit_defense(DefenseConfig(max_ratio=pd_level, flip_probability=flip), val_scores, tau)
        a_metrics, observation = _observe(world, config)
        result.slot_estimates[pd_level] = observe_slot_structure(
            observation, config, world.streams.stream("adversary:timing"))

        wanted = list(attacks) if pd_level in defense_levels else []
        if pd_level == 0.0 and "none" not in wanted:
            wanted.append("none")

        estimate, inferred = None, None
        rc = config.retraining
        if rc.enabled and rc.infer_schedule and any(a in CAUSATIVE_FAMILY for a in wanted):
            inferred_world = copy.deepcopy(world)
            outcome = infer_retraining_schedule(inferred_world)
            if outcome is not None:
                estimate, inferred = outcome[0], (inferred_world, outcome[1])
            result.retrain_estimates[pd_level] = estimate

        cells = _run_cells(world, wanted, a_metrics, estimate, inferred)
        for attack, metrics in cells.items():
            if pd_level in defense_levels and attack in attacks:
                result.cells[(attack, pd_level)] = metrics
            if pd_level == 0.0 and attack == "none":
                result.cells[(BASELINE, 0.0)] = metrics
    return result


METRIC_COLUMNS = ("M_Th", "M_Sr", "M_Tr", "T_e_MD", "T_e_FA", "A_e_MD", "A_e_FA", "energy")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    seeds: List[SeedResult]

    def runs(self) -> pd.DataFrame:
        """One row per (attack, P_d, seed)."""
        rows = []
        for seed_result in self.seeds:
            for (attack, pd_level), metrics in seed_result.cells.items():
                rows.append({"attack": attack, "P_d": pd_level, "seed": seed_result.seed, **metrics.as_dict()})
        frame = pd.DataFrame(rows)
        for col in METRIC_COLUMNS:
            frame[col] = pd.to_numeric(frame[col], errors="coerce")
        return frame

    def summary(self) -> pd.DataFrame:
        """Mean/std over seeds per (attack, P_d); baseline first, then attacks in canonical order."""
        runs = self.runs()
        grouped = runs.groupby(["attack", "P_d"], sort=False)
        table = grouped.size().rename("seeds").to_frame()
        for col in ("M_Th", "M_Sr", "M_Tr"):
            table[f"{col}_mean"] = grouped[col].mean()
            table[f"{col}_std"] = grouped[col].std(ddof=0)
        for col in ("T_e_MD", "T_e_FA", "A_e_MD", "A_e_FA", "energy"):
            table[col] = grouped[col].mean()
        table = table.reset_index()
        order = {name: i for i, name in enumerate((BASELINE,) + ATTACK_KINDS)}
        table["_order"] = table["attack"].map(order)
        table = table.sort_values(["_order", "P_d"], kind="stable").drop(columns="_order").reset_index(drop=True)
        return table

    def mean(self, column: str, attack: str, pd_level: float) -> Optional[float]:
        runs = self.runs()
        cell = runs[(runs["attack"] == attack) & (runs["P_d"] == pd_level)][column]
        value = cell.mean()
        return None if pd.isna(value) else float(value)


def run_experiment(spec: ExperimentSpec, progress: Optional[Callable[[int, int], None]] = None) -> ExperimentResult:
    """Every cell for every seed; cells of one seed share the traffic and channel realization."""
    seeds = []
    for i, seed in enumerate(spec.seeds):
        logger.info("seed %d (%d/%d)", seed, i + 1, spec.replications)
        seeds.append(run_seed(spec.scenario, seed, spec.attacks, spec.defense_levels))
        if progress is not None:
            progress(i + 1, spec.replications)
    return ExperimentResult(spec=spec, seeds=seeds)


def search_defense_level(
    spec: ExperimentSpec,
    evaluator: Optional[Callable[[float], Optional[float]]] = None,
) -> float:
    """
    P_d on the grid with the highest mean throughput; ties go to the smaller P_d.

    The default evaluator runs the experiment under the first attack listed
    other than "none" (or "none" when there is none).
    """
    grid = sorted(spec.defense_levels)
    if evaluator is None:
        attack = next((a for a in spec.attacks if a != "none"), "none")
        result = run_experiment(replace(spec, attacks=(attack,)))
        evaluator = lambda level: result.mean("M_Th", attack, level)  # noqa: E731
    best_level, best_value = grid[0], -math.inf
    for level in grid:
        value = evaluator(level)
        value = -math.inf if value is None else value
        if value > best_value:
            best_level, best_value = level, value
    return best_level


def run_defense_sweep(
    scenario: ScenarioConfig,
    pd_grid: Sequence[float] = (0.0, 0.1, 0.2, 0.4, 0.6, 0.8),
    seeds: Sequence[int] = tuple(range(20)),
    progress: Optional[Callable[[int, int], None]] = None,
) -> Tuple[ExperimentResult, float]:
    """Evasion attack over a P_d grid; returns the results and the best P_d."""
    spec = ExperimentSpec(scenario=scenario, attacks=("evasion",), defense_levels=tuple(pd_grid), seeds=tuple(seeds))
    result = run_experiment(spec, progress)
    best = search_defense_level(spec, lambda level: result.mean("M_Th", "evasion", level))
    return result, best


# =====================================================================
# Transmitter-only sweeps
# =====================================================================

def transmitter_errors(config: ScenarioConfig, relocate_to: Optional[Tuple[float, float]] = None) -> ClassifierMetrics:
    """
    C_T's error on fresh data. Without relocation this is the validation split; with
    relocation the first background source moves after training and C_T is tested on
    a new trace at the new location (no retraining).
    """
    world, metrics, _ = prepare_transmitter(config)
    if relocate_to is None:
        return metrics
    world.env.relocate(config.sources[0].id, relocate_to)
    trace = world.env.advance(config.n_new + config.num_test_slots)
    data = collect_training_data(trace.power_T, trace.status, config.n_new, log_power=config.log_power)
    return evaluate(world.transmitter.classifier.predict(data.X), data.y)


def _error_table(rows: List[dict], key: str) -> pd.DataFrame:
    frame = pd.DataFrame(rows)
    for col in ("e_MD", "e_FA", "e"):
        frame[col] = pd.to_numeric(frame[col], errors="coerce")
    grouped = frame.groupby(key, sort=False)
    table = grouped[["e_MD", "e_FA", "e"]].mean()
    table["e_std"] = grouped["e"].std(ddof=0)
    table["seeds"] = grouped.size()
    return table.reset_index()


def _sweep(configs: Dict[str, ScenarioConfig], seeds: Sequence[int], key: str,
           relocate: Optional[Dict[str, Tuple[float, float]]] = None) -> pd.DataFrame:
    rows = []
    for name, config in configs.items():
        for seed in seeds:
            target = relocate.get(name) if relocate else None
            m = transmitter_errors(validate(replace(config, seed=seed)), target)
            rows.append({key: name, "seed": seed, "e_MD": m.e_MD, "e_FA": m.e_FA, "e": m.e})
    return _error_table(rows, key)


def run_channel_sweep(scenario: ScenarioConfig, seeds: Sequence[int], kinds: Sequence[str] = CHANNEL_KINDS) -> pd.DataFrame:
    configs = {
        kind: replace(scenario, channel_model=replace(scenario.channel_model, kind=kind)) for kind in kinds
    }
    return _sweep(configs, seeds, "channel_model")


def _position_key(position: Tuple[float, float]) -> str:
    return f"({position[0]:g},{position[1]:g})"


def run_location_sweep(
    scenario: ScenarioConfig,
    seeds: Sequence[int],
    positions: Sequence[Tuple[float, float]] = ((0, 5), (0, 10), (0, 15), (0, 20)),
) -> pd.DataFrame:
    """T trained and tested with the first background source at each position."""
    configs = {}
    for pos in positions:
        sources = (replace(scenario.sources[0], position=tuple(pos)),) + tuple(scenario.sources[1:])
        configs[_position_key(pos)] = replace(scenario, sources=sources)
    return _sweep(configs, seeds, "source_position")


def run_mobility_sweep(
    scenario: ScenarioConfig,
    seeds: Sequence[int],
    positions: Sequence[Tuple[float, float]] = ((0, 5), (0, 10), (0, 15), (0, 20)),
) -> pd.DataFrame:
    """T trained with the source at its configured position, tested after it moves."""
    configs = {_position_key(pos): scenario for pos in positions}
    relocate = {_position_key(pos): tuple(pos) for pos in positions}
    return _sweep(configs, seeds, "source_position", relocate)


def run_multisource_comparison(scenario: ScenarioConfig, seeds: Sequence[int]) -> pd.DataFrame:
    """Single source at the scenario's rate against three sources at lambda 0.4."""
    multi = multi_source_default(
        transmitter=scenario.transmitter,
        receiver=scenario.receiver,
        adversary=scenario.adversary,
        channel_model=scenario.channel_model,
        n_new=scenario.n_new,
        num_train_slots=scenario.num_train_slots,
        num_test_slots=scenario.num_test_slots,
        transmitter_hyperparams=scenario.transmitter_hyperparams,
        feature_scale=scenario.feature_scale,
    )
    return _sweep({"single": scenario, "multi": multi}, seeds, "scenario")
