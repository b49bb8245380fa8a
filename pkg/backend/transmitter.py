from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Deque, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from backend.config import DefenseConfig
from backend.neural import Classifier, Dataset, Hyperparams, train_classifier, windowed_dataset

# Role of this module:
# T's side of the protocol. T collects (window, S_t) samples while it only listens,
# trains C_T, and then for every slot senses, classifies the last n_new powers and
# transmits iff the channel looks idle. Optionally it retrains on a fresh (possibly
# poisoned) trace, and it can apply a score-gated defense that flips a fraction of
# its most confident decisions to mislead an eavesdropping adversary.

logger = logging.getLogger(__name__)

IDLE, BUSY = 0, 1


class Mode(str, Enum):
    TRAINING_COLLECTION = "training-collection"
    TEST = "test"
    RETRAINING_COLLECTION = "retraining-collection"


@dataclass
class TransmitterState:
    classifier: Classifier
    hyperparams: Hyperparams
    n_new: int
    window: Deque[float] = field(default_factory=deque)
    mode: Mode = Mode.TEST

    def __post_init__(self):
        self.window = deque(self.window, maxlen=self.n_new)

    @property
    def window_full(self) -> bool:
        return len(self.window) == self.n_new

    def push(self, p_t: float) -> None:
        self.window.append(float(p_t))

    def prime(self, powers: Sequence[float]) -> None:
        """Fill the sensing window from the tail of an earlier trace."""
        for p in list(powers)[-self.n_new:]:
            self.push(p)

    def history(self) -> np.ndarray:
        return np.asarray(self.window, dtype=float)


@dataclass(frozen=True)
class ClassifierMetrics:
    n_MD: int
    n_FA: int
    n_busy: int
    n_idle: int

    @property
    def e_MD(self) -> Optional[float]:
        return self.n_MD / self.n_busy if self.n_busy else None

    @property
    def e_FA(self) -> Optional[float]:
        return self.n_FA / self.n_idle if self.n_idle else None

    @property
    def e(self) -> Optional[float]:
        defined = [r for r in (self.e_MD, self.e_FA) if r is not None]
        return max(defined) if defined else None

    def as_dict(self) -> dict:
        return {"n_MD": self.n_MD, "n_FA": self.n_FA, "n_busy": self.n_busy, "n_idle": self.n_idle,
                "e_MD": self.e_MD, "e_FA": self.e_FA, "e": self.e}


class Decision(NamedTuple):
    transmit: bool
    score: float
    flipped: bool = False


# ---------------- Data collection and training ----------------

def collect_training_data(
    powers: Sequence[float],
    status: Sequence[int],
    n_new: int,
    log_power: bool = False,
) -> Dataset:
    """
    Build (F_t, S_t) samples from a listening trace.

    A trace shorter than the window cannot produce a single feature vector and is rejected;
    a trace of exactly n_new slots yields an empty dataset.
    """
    if len(powers) < n_new:
        raise ValueError(f"trace too short: {len(powers)} slots for a window of {n_new}")
    return windowed_dataset(powers, status, n_new, log_power=log_power)


def deploy(train: Dataset, hyperparams: Hyperparams, rng: np.random.Generator) -> TransmitterState:
    """Train C_T on the collected samples and switch T to operation."""
    classifier = train_classifier(train, hyperparams, rng)
    logger.info("deployed C_T on %d samples (tau=%.2f)", len(train), classifier.tau)
    return TransmitterState(classifier=classifier, hyperparams=hyperparams, n_new=train.n_features, mode=Mode.TEST)


def retrain(
    state: TransmitterState,
    powers: Sequence[float],
    status: Sequence[int],
    rng: np.random.Generator,
) -> TransmitterState:
    """
    Retrain from scratch on a new trace with the incumbent hyperparameters.

    Labels stay the true S_t; features are whatever T sensed, poisoned or not.
    """
    if len(powers) <= state.n_new:
        raise ValueError(f"trace too short for retraining: {len(powers)} slots for a window of {state.n_new}")
    data = collect_training_data(powers, status, state.n_new, log_power=state.classifier.model.scaler.log_power)
    classifier = train_classifier(data, state.hyperparams, rng)
    logger.info("retrained C_T on %d samples", len(data))
    new_state = TransmitterState(classifier=classifier, hyperparams=state.hyperparams, n_new=state.n_new,
                                 window=state.window, mode=Mode.TEST)
    return new_state


# ---------------- Per-slot decisions ----------------

def predict(state: TransmitterState, p_t: float) -> Decision:
    """Push p_t and decide: transmit iff C_T labels the window idle."""
    state.push(p_t)
    if not state.window_full:
        raise ValueError("sensing window is not full yet")
    score = state.classifier.score_one(state.history())
    return Decision(transmit=score < state.classifier.tau, score=score)


def decide_with_defense(
    state: TransmitterState,
    p_t: float,
    defense: Optional[DefenseConfig],
    rng: np.random.Generator,
) -> Decision:
    """
    Like predict, but a confident decision (score outside [tau0, tau1]) has its label
    flipped with the defense's flip probability, scaled by the tie share for a score
    sitting exactly on a threshold. One uniform is drawn per slot.
    """
    plain = predict(state, p_t)
    u = rng.random()
    if defense is None or not defense.fitted:
        return plain
    if u < defense.flip_probability * float(defense_weights(defense, plain.score)):
        return Decision(transmit=not plain.transmit, score=plain.score, flipped=True)
    return plain


# ---------------- Batch decisions ----------------

def sensing_windows(history: Sequence[float], powers: Sequence[float], n_new: int) -> np.ndarray:
    """Windows ending at each new slot, using earlier powers as lead-in."""
    history = np.asarray(history, dtype=float)[-(n_new - 1):] if n_new > 1 else np.empty(0)
    powers = np.asarray(powers, dtype=float)
    if len(powers) == 0:
        return np.empty((0, n_new))
    if len(history) < n_new - 1:
        raise ValueError("not enough history to form full sensing windows")
    full = np.concatenate([history, powers])
    return np.lib.stride_tricks.sliding_window_view(full, n_new).copy()


def classify_window_batch(state: TransmitterState, windows: np.ndarray) -> np.ndarray:
    """Scores p(s) for a stack of windows."""
    if len(windows) == 0:
        return np.empty(0)
    return state.classifier.scores(windows)


def decide_batch(
    state: TransmitterState,
    powers: Sequence[float],
    defense: Optional[DefenseConfig],
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized decide_with_defense over a run of slots; advances the window.

    Returns:
        (scores, flipped, transmit) arrays
    """
    powers = np.asarray(powers, dtype=float)
    windows = sensing_windows(state.history(), powers, state.n_new)
    scores = classify_window_batch(state, windows)
    u = rng.random(len(powers))
    transmit = scores < state.classifier.tau
    flipped = np.zeros(len(powers), dtype=bool)
    if defense is not None and defense.fitted:
        flipped = u < defense.flip_probability * defense_weights(defense, scores)
        transmit = transmit ^ flipped
    for p in powers[-state.n_new:]:
        state.push(p)
    return scores, flipped, transmit


# ---------------- Metrics ----------------

def evaluate(predictions: Sequence[int], truth: Sequence[int]) -> ClassifierMetrics:
    """
    Misdetection / false-alarm counts of busy(1)/idle(0) predictions.

    Ratios whose class is absent are None.
    """
    predictions = np.asarray(predictions, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if len(predictions) != len(truth):
        raise ValueError("predictions and ground truth must have equal length")
    if len(truth) == 0:
        raise ValueError("cannot evaluate an empty trace")
    return ClassifierMetrics(
        n_MD=int(np.sum((predictions == IDLE) & (truth == BUSY))),
        n_FA=int(np.sum((predictions == BUSY) & (truth == IDLE))),
        n_busy=int(np.sum(truth == BUSY)),
        n_idle=int(np.sum(truth == IDLE)),
    )


# ---------------- Defense ----------------

def _quantile_cut(ascending: np.ndarray, k: int, cap: float) -> Tuple[float, float]:
    """
    Cut with k of the ascending values strictly below it, ties filled by rank.

    Returns (cut, tie): tie is the share of values equal to the cut that completes the
    count of k when the k-th and (k+1)-th values coincide.
    """
    if k == 0:
        return -math.inf, 0.0
    if k >= len(ascending):
        return cap, 0.0
    cut = float(ascending[k])
    strictly = int(np.searchsorted(ascending, cut, side="left"))
    tied = int(np.searchsorted(ascending, cut, side="right")) - strictly
    return cut, (k - strictly) / tied


def _fit_thresholds(scores: Sequence[float], tau: float, max_ratio: float) -> Tuple[float, float, float, float]:
    scores = np.asarray(scores, dtype=float)
    if len(scores) == 0:
        raise ValueError("no reference scores to fit defense thresholds")
    if not 0.0 <= max_ratio <= 1.0:
        raise ValueError("P_d out of [0,1]")
    below = np.sort(scores[scores < tau])
    above = np.sort(-scores[scores > tau])
    tau0, tie0 = _quantile_cut(below, math.floor(max_ratio * len(below)), tau)
    neg_tau1, tie1 = _quantile_cut(above, math.floor(max_ratio * len(above)), -tau)
    return tau0, -neg_tau1, tie0, tie1


def select_defense_thresholds(scores: Sequence[float], tau: float, max_ratio: float) -> Tuple[float, float]:
    """
    Empirical-quantile thresholds (tau0, tau1) with tau0 <= tau <= tau1.

    floor(max_ratio * n) of the n scores below tau fall below tau0, and symmetrically
    above tau1, when the scores are distinct. Tied scores at a cut are shared out by
    rank through defense_weights. No eligible slot on a side yields -inf / +inf.
    """
    tau0, tau1, _, _ = _fit_thresholds(scores, tau, max_ratio)
    return tau0, tau1


def defense_weights(defense: DefenseConfig, scores: Sequence[float]) -> np.ndarray:
    """
    Eligibility of each score for a flip: 1 beyond the thresholds, the tie share exactly
    on one, 0 inside [tau0, tau1].
    """
    scores = np.asarray(scores, dtype=float)
    if not defense.fitted:
        return np.zeros(scores.shape)
    weights = np.where(scores < defense.tau0, 1.0, np.where(scores == defense.tau0, defense.tie0, 0.0))
    weights = weights + np.where(scores > defense.tau1, 1.0, np.where(scores == defense.tau1, defense.tie1, 0.0))
    return weights


def fit_defense(defense: DefenseConfig, scores: Sequence[float], tau: float) -> DefenseConfig:
    tau0, tau1, tie0, tie1 = _fit_thresholds(scores, tau, defense.max_ratio)
    logger.info("defense P_d=%.2f fitted: tau0=%.4g tau1=%.4g", defense.max_ratio, tau0, tau1)
    return replace(defense, tau0=tau0, tau1=tau1, tie0=tie0, tie1=tie1)
