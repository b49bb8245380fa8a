from __future__ import annotations

import json
import logging
import math
import os
import zlib
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from backend.channel import ChannelModel
from backend.neural import Hyperparams

# --- CONFIG ROOT DEFINITION ---
CONFIG_DIR = Path(__file__).parent
PROJECT_ROOT = CONFIG_DIR.parent
SCENARIO_DIR = PROJECT_ROOT / "scenarios"
# ------------------------------

ATTACK_KINDS = ("none", "evasion", "jamming", "causative", "causative+evasion", "causative+jamming")
JAMMING_REFERENCES = ("all_slots", "evasion_plan")
FEATURE_SCALES = ("db", "linear")

LOG_LEVEL_ENV = "SPECTRUM_SIM_LOG_LEVEL"
LOG_FORMAT = "[%(name)s] %(message)s"

Position = Tuple[float, float]


class ConfigError(ValueError):
    """Scenario failed validation; `violations` lists every broken constraint with its field path."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# ---------------- Node placement ----------------

@dataclass(frozen=True)
class NodeSpec:
    id: str
    position: Position = (0.0, 0.0)
    transmit_power: float = 0.0

    def violations(self, path: str) -> List[str]:
        errors = []
        if len(self.position) != 2 or not all(math.isfinite(c) for c in self.position):
            errors.append(f"{path}.position: must be two finite coordinates")
        if not self.transmit_power >= 0:
            errors.append(f"{path}.transmit_power: must be >= 0")
        return errors


def distance(a: Position, b: Position) -> float:
    """Euclidean distance; co-located nodes have no defined path loss."""
    if not all(math.isfinite(c) for c in (*a, *b)):
        raise ValueError("positions must be finite")
    d = math.hypot(a[0] - b[0], a[1] - b[1])
    if d == 0:
        raise ValueError(f"nodes at {tuple(a)} and {tuple(b)} are co-located")
    return d


# ---------------- Slot / defense / retraining ----------------

@dataclass(frozen=True)
class SlotStructure:
    sensing_fraction: float = 0.1
    data_fraction: float = 0.9
    feedback_fraction: float = 0.0

    def violations(self, path: str = "slot_structure") -> List[str]:
        errors = []
        parts = (self.sensing_fraction, self.data_fraction, self.feedback_fraction)
        if any(not p >= 0 for p in parts):
            errors.append(f"{path}: fractions must be >= 0")
        total = sum(parts)
        if abs(total - 1.0) > 1e-12:
            errors.append(f"{path}: fractions sum to {round(total, 12):g}")
        return errors


@dataclass(frozen=True)
class DefenseConfig:
    """
    Score-gated label flipping at T.

    max_ratio is P_d. tau0/tau1 stay None until fitted on reference scores; tie0/tie1 are
    the shares of scores sitting exactly on a threshold that count as eligible.
    """

    max_ratio: float = 0.0
    flip_probability: float = 0.5
    tau0: Optional[float] = None
    tau1: Optional[float] = None
    tie0: float = 0.0
    tie1: float = 0.0

    @property
    def fitted(self) -> bool:
        return self.tau0 is not None and self.tau1 is not None

    def violations(self, path: str = "defense", tau: Optional[float] = None) -> List[str]:
        errors = []
        if not 0.0 <= self.max_ratio <= 1.0:
            errors.append(f"{path}.max_ratio: P_d out of [0,1]")
        if not 0.0 < self.flip_probability <= 1.0:
            errors.append(f"{path}.flip_probability: out of (0,1]")
        if not (0.0 <= self.tie0 <= 1.0 and 0.0 <= self.tie1 <= 1.0):
            errors.append(f"{path}: tie shares out of [0,1]")
        if self.fitted and self.tau0 > self.tau1:
            errors.append(f"{path}: tau0 must not exceed tau1")
        if self.fitted and tau is not None and not self.tau0 <= tau <= self.tau1:
            errors.append(f"{path}: thresholds must bracket the decision boundary")
        return errors


@dataclass(frozen=True)
class RetrainingConfig:
    """Periodic retraining of T: windows [k*period - window, k*period) after deployment."""

    enabled: bool = True
    period: int = 2000
    window: int = 500
    infer_schedule: bool = True
    change_window: int = 200
    change_threshold: float = 0.03
    change_z: float = 2.5
    impact_tolerance: float = 0.01

    def violations(self, path: str = "retraining") -> List[str]:
        errors = []
        if self.period < 1:
            errors.append(f"{path}.period: must be >= 1")
        if not 1 <= self.window <= self.period:
            errors.append(f"{path}.window: must be in [1, period]")
        if self.change_window < 1:
            errors.append(f"{path}.change_window: must be >= 1")
        if not self.change_threshold > 0:
            errors.append(f"{path}.change_threshold: must be > 0")
        if not self.change_z > 0:
            errors.append(f"{path}.change_z: must be > 0")
        if not self.impact_tolerance >= 0:
            errors.append(f"{path}.impact_tolerance: must be >= 0")
        return errors


def _default_sources() -> Tuple[NodeSpec, ...]:
    return (NodeSpec("B0", (0.0, 10.0), 1000.0),)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Global configuration object for one simulated scenario.

    Defaults reproduce the reference topology: T(0,0), R(10,0), A(10,10), B(0,10),
    all powers 1000, lambda 0.8, gamma_min 3, 10-sample windows, 500/500 slots.
    """

    # ---------------- Topology ----------------
    transmitter: NodeSpec = NodeSpec("T", (0.0, 0.0), 1000.0)
    receiver: NodeSpec = NodeSpec("R", (10.0, 0.0), 0.0)
    adversary: NodeSpec = NodeSpec("A", (10.0, 10.0), 1000.0)
    sources: Tuple[NodeSpec, ...] = field(default_factory=_default_sources)

    # ---------------- Physical layer ----------------
    noise_power: float = 1.0
    noise_relative_std: float = 0.2
    sinr_threshold: float = 3.0
    channel_model: ChannelModel = ChannelModel()

    # ---------------- Background traffic ----------------
    arrival_rate: float = 0.8
    activation_probability: float = 0.2

    # ---------------- Sensing / slots ----------------
    n_new: int = 10
    slot_structure: SlotStructure = SlotStructure()
    slot_duration: float = 1.0
    subslot_ticks: int = 100
    ack_jitter: float = 0.0

    # ---------------- Phase lengths ----------------
    num_train_slots: int = 500
    num_test_slots: int = 500
    adversary_observation_slots: int = 1000

    # ---------------- Learning ----------------
    transmitter_hyperparams: Hyperparams = Hyperparams()
    adversary_hyperparams: Hyperparams = Hyperparams()
    tune_transmitter: bool = False
    feature_scale: str = "db"

    # ---------------- Attack / defense ----------------
    seed: int = 0
    defense: Optional[DefenseConfig] = None
    attack: Optional[str] = None
    jamming_budget_reference: str = "all_slots"
    retraining: RetrainingConfig = RetrainingConfig()

    @property
    def nodes(self) -> Tuple[NodeSpec, ...]:
        return (self.transmitter, self.receiver, self.adversary, *self.sources)

    @property
    def test_slots(self) -> int:
        return self.num_test_slots

    @property
    def log_power(self) -> bool:
        """Whether both classifiers learn on dB powers."""
        return self.feature_scale == "db"

    def source_ids(self) -> List[str]:
        return [s.id for s in self.sources]


# =====================================================================
# Validation
# =====================================================================

def _collect_violations(config: ScenarioConfig) -> List[str]:
    errors: List[str] = []
    for name in ("transmitter", "receiver", "adversary"):
        errors.extend(getattr(config, name).violations(name))
    if not config.sources:
        errors.append("sources: at least one background source is required")
    for i, src in enumerate(config.sources):
        errors.extend(src.violations(f"sources.{i}"))
    ids = [n.id for n in config.nodes]
    if len(set(ids)) != len(ids):
        errors.append("nodes: ids must be unique")

    # co-location makes d^-2 undefined on links the simulator uses
    links = [("transmitter", config.transmitter, "receiver", config.receiver),
             ("adversary", config.adversary, "transmitter", config.transmitter),
             ("adversary", config.adversary, "receiver", config.receiver)]
    for i, src in enumerate(config.sources):
        links.append((f"sources.{i}", src, "transmitter", config.transmitter))
        links.append((f"sources.{i}", src, "receiver", config.receiver))
        links.append((f"sources.{i}", src, "adversary", config.adversary))
    for name_a, a, name_b, b in links:
        if a.position == b.position:
            errors.append(f"{name_a}.position: co-located with {name_b}")

    if not config.noise_power > 0:
        errors.append("noise_power: must be > 0")
    if not config.noise_relative_std >= 0:
        errors.append("noise_relative_std: must be >= 0")
    if not config.sinr_threshold > 0:
        errors.append("sinr_threshold: must be > 0")
    errors.extend(config.channel_model.violations("channel_model"))
    if not 0.0 <= config.arrival_rate <= 1.0:
        errors.append("arrival_rate out of [0,1]")
    if not 0.0 <= config.activation_probability <= 1.0:
        errors.append("activation_probability out of [0,1]")
    if config.n_new < 1:
        errors.append("n_new: must be >= 1")
    if config.num_train_slots <= config.n_new:
        errors.append("num_train_slots: must exceed n_new")
    if config.num_test_slots < 0:
        errors.append("num_test_slots: must be >= 0")
    if config.adversary_observation_slots <= 2 * config.n_new:
        errors.append("adversary_observation_slots: must exceed 2 * n_new")
    errors.extend(config.slot_structure.violations("slot_structure"))
    if not config.slot_duration > 0:
        errors.append("slot_duration: must be > 0")
    if config.subslot_ticks < 2:
        errors.append("subslot_ticks: must be >= 2")
    if not 0.0 <= config.ack_jitter < 0.5:
        errors.append("ack_jitter: must be in [0, 0.5)")
    errors.extend(config.transmitter_hyperparams.violations("transmitter_hyperparams"))
    errors.extend(config.adversary_hyperparams.violations("adversary_hyperparams"))
    if config.feature_scale not in FEATURE_SCALES:
        errors.append(f"feature_scale: expected one of {', '.join(FEATURE_SCALES)}")
    if config.defense is not None:
        errors.extend(config.defense.violations("defense", config.transmitter_hyperparams.decision_boundary))
    if config.attack is not None and config.attack not in ATTACK_KINDS:
        errors.append(f"attack: unknown attack '{config.attack}' (expected one of {', '.join(ATTACK_KINDS)})")
    if config.jamming_budget_reference not in JAMMING_REFERENCES:
        errors.append(f"jamming_budget_reference: expected one of {', '.join(JAMMING_REFERENCES)}")
    errors.extend(config.retraining.violations("retraining"))
    if not 0 <= config.seed < 2 ** 64:
        errors.append("seed: must be a 64-bit unsigned integer")
    return errors


def validate(config: ScenarioConfig) -> ScenarioConfig:
    """Return the config unchanged if every invariant holds, else raise ConfigError with all violations."""
    errors = _collect_violations(config)
    if errors:
        raise ConfigError(errors)
    return config


# =====================================================================
# JSON mapping
# =====================================================================

_NESTED = {
    "transmitter": NodeSpec,
    "receiver": NodeSpec,
    "adversary": NodeSpec,
    "channel_model": ChannelModel,
    "slot_structure": SlotStructure,
    "transmitter_hyperparams": Hyperparams,
    "adversary_hyperparams": Hyperparams,
    "defense": DefenseConfig,
    "retraining": RetrainingConfig,
}

_TUPLE_FIELDS = {"position", "neurons_per_layer"}


def _to_plain(value: Any) -> Any:
    if is_dataclass(value):
        return {f.name: _to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def scenario_to_dict(config: ScenarioConfig) -> Dict[str, Any]:
    return _to_plain(config)


def _build(cls, raw: Any, path: str, errors: List[str]):
    if not isinstance(raw, dict):
        errors.append(f"{path}: expected an object")
        return None
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            errors.append(f"{path}.{key}: unknown key" if path else f"{key}: unknown key")
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            continue
        sub = f"{path}.{key}" if path else key
        if cls is ScenarioConfig and key == "sources":
            if not isinstance(value, list):
                errors.append(f"{sub}: expected a list")
                continue
            built = [_build(NodeSpec, v, f"{sub}.{i}", errors) for i, v in enumerate(value)]
            kwargs[key] = tuple(b for b in built if b is not None)
        elif cls is ScenarioConfig and key in _NESTED:
            kwargs[key] = None if value is None else _build(_NESTED[key], value, sub, errors)
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{path or 'scenario'}: {exc}")
        return None


def scenario_from_dict(raw: Dict[str, Any]) -> ScenarioConfig:
    """Field-for-field inverse of scenario_to_dict; unknown keys are rejected, the result is validated."""
    errors: List[str] = []
    config = _build(ScenarioConfig, raw, "", errors)
    if errors:
        raise ConfigError(errors)
    return validate(config)


def load_scenario(path: str | Path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return scenario_from_dict(raw)


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(config), f, indent=2)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: ScenarioConfig, overrides: Sequence[str]) -> ScenarioConfig:
    """
    Apply `key=value` overrides with dotted paths, e.g. `sources.0.position=[0,20]`.

    Values are parsed as JSON and fall back to a bare string.
    """
    raw = scenario_to_dict(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"{item}: expected key=value"])
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        target = raw
        for part in parts[:-1]:
            if isinstance(target, list):
                if not part.isdigit() or int(part) >= len(target):
                    raise ConfigError([f"{key}: index '{part}' out of range"])
                target = target[int(part)]
            elif isinstance(target, dict):
                if part not in target:
                    raise ConfigError([f"{key}: unknown key '{part}'"])
                if target[part] is None:
                    # optional nested object (e.g. defense) created on demand
                    target[part] = {}
                target = target[part]
            else:
                raise ConfigError([f"{key}: '{part}' is not a container"])
        last = parts[-1]
        value = _parse_value(text.strip())
        if isinstance(target, list):
            if not last.isdigit() or int(last) >= len(target):
                raise ConfigError([f"{key}: index '{last}' out of range"])
            target[int(last)] = value
        else:
            target[last] = value
    return scenario_from_dict(raw)


# =====================================================================
# Named scenarios
# =====================================================================

def reference_default(**changes) -> ScenarioConfig:
    return validate(replace(ScenarioConfig(), **changes))


def multi_source_default(**changes) -> ScenarioConfig:
    """Three background sources at lambda 0.4 each, keeping the idle-slot count comparable."""
    sources = (
        NodeSpec("B0", (0.0, 10.0), 1000.0),
        NodeSpec("B1", (-5.0, 10.0), 1000.0),
        NodeSpec("B2", (5.0, 10.0), 1000.0),
    )
    base = replace(ScenarioConfig(), sources=sources, arrival_rate=0.4)
    return validate(replace(base, **changes))


# =====================================================================
# Seeding
# =====================================================================

class SeedStreams:
    """
    Independent numpy generators per named purpose, derived from one master seed.

    The same (seed, name) pair always yields the same stream, regardless of which
    other streams were requested.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)

    def sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))

    def stream(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name))


# =====================================================================
# Logging
# =====================================================================

def configure_logging(level: Optional[str] = None) -> None:
    """Entry-point logging setup (CLI and dashboard); reads SPECTRUM_SIM_LOG_LEVEL from .env."""
    load_dotenv()
    name = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format=LOG_FORMAT, force=True)
