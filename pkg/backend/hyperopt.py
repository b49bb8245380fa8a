from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from backend.neural import Classifier, Dataset, Hyperparams, train_classifier
from backend.transmitter import evaluate as evaluate_predictions

# Role of this module:
# Hyperparameter search for the sensing classifiers. The objective is the worse of
# the misdetection and false-alarm probabilities on validation data. Two searches:
# greedy sequential fixing (one knob at a time from the defaults) and a single
# successive-halving bracket that trains many random settings briefly and keeps
# the best third each round.

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    hidden_layers: Tuple[int, ...] = (1, 2, 3, 5, 10)
    neurons: Tuple[int, ...] = (20, 50, 89, 100, 109, 119, 200)
    batch_size: Tuple[int, ...] = (50, 100, 200)
    training_steps: Tuple[int, ...] = (250, 500, 1000, 2000)
    learning_rate: Tuple[float, ...] = (0.01, 0.05, 0.1)
    decision_boundary: Tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)
    defaults: Hyperparams = Hyperparams()

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    @classmethod
    def singleton(cls, h: Hyperparams) -> "SearchSpace":
        """Space whose only point is h."""
        return cls(
            hidden_layers=(h.hidden_layers,),
            neurons=tuple(sorted(set(h.neurons_per_layer))),
            batch_size=(h.batch_size,),
            training_steps=(h.training_steps,),
            learning_rate=(h.learning_rate,),
            decision_boundary=(h.decision_boundary,),
            defaults=h,
        )

    @classmethod
    def around(cls, h: Hyperparams) -> "SearchSpace":
        """The default grid widened so that it contains every value of h, with h as the start point."""
        base = cls()

        def merged(values, extra):
            return tuple(sorted(set(values) | set(extra)))

        return cls(
            hidden_layers=merged(base.hidden_layers, [h.hidden_layers]),
            neurons=merged(base.neurons, h.neurons_per_layer),
            batch_size=merged(base.batch_size, [h.batch_size]),
            training_steps=merged(base.training_steps, [h.training_steps]),
            learning_rate=merged(base.learning_rate, [h.learning_rate]),
            decision_boundary=merged(base.decision_boundary, [h.decision_boundary]),
            defaults=h,
        )

    def violations(self) -> List[str]:
        errors = []
        d = self.defaults
        lists = {
            "hidden_layers": (self.hidden_layers, [d.hidden_layers]),
            "neurons": (self.neurons, list(d.neurons_per_layer)),
            "batch_size": (self.batch_size, [d.batch_size]),
            "training_steps": (self.training_steps, [d.training_steps]),
            "learning_rate": (self.learning_rate, [d.learning_rate]),
            "decision_boundary": (self.decision_boundary, [d.decision_boundary]),
        }
        for name, (values, needed) in lists.items():
            if not values:
                errors.append(f"search_space.{name}: must be nonempty")
            elif any(v not in values for v in needed):
                errors.append(f"search_space.{name}: default value missing")
        errors.extend(d.violations("search_space.defaults"))
        return errors

    def sample(self, rng: np.random.Generator) -> Hyperparams:
        """Random setting; neuron counts are drawn independently per layer."""
        layers = int(rng.choice(self.hidden_layers))
        neurons = tuple(int(rng.choice(self.neurons)) for _ in range(layers))
        return Hyperparams(
            hidden_layers=layers,
            neurons_per_layer=neurons,
            batch_size=int(rng.choice(self.batch_size)),
            training_steps=int(rng.choice(self.training_steps)),
            learning_rate=float(rng.choice(self.learning_rate)),
            decision_boundary=float(rng.choice(self.decision_boundary)),
        )


@dataclass
class CandidateResult:
    hyperparams: Hyperparams
    objective: float
    model: Optional[Classifier] = None
    steps: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.objective <= 1.0:
            raise ValueError(f"objective must be in [0,1], got {self.objective}")


Evaluator = Callable[[Hyperparams, int], CandidateResult]


def objective(model: Classifier, validation: Dataset) -> float:
    """e(C) = max(e_MD, e_FA) on validation data."""
    if not validation.has_both_classes():
        raise ValueError("validation data must contain both classes")
    metrics = evaluate_predictions(model.predict(validation.X), validation.y)
    return metrics.e


class ValidationEvaluator:
    """
    Train on the training split, score on validation. Models are cached by the
    training-relevant part of H and the step budget, so a τ change never retrains.

    Each training run gets its own generator derived from (seed, setting), which keeps
    results independent of the order in which a search visits settings.
    """

    def __init__(self, train: Dataset, validation: Dataset, seed: int):
        self.train = train
        self.validation = validation
        self.seed = int(seed)
        self._models: Dict[tuple, Classifier] = {}
        self.trainings = 0

    def _rng(self, key: tuple) -> np.random.Generator:
        spawn = zlib.crc32(repr(key).encode("utf-8"))
        return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(spawn,)))

    def __call__(self, h: Hyperparams, steps: int) -> CandidateResult:
        key = (h.training_key(), steps)
        if key not in self._models:
            self._models[key] = train_classifier(self.train, h, self._rng(key), steps=steps)
            self.trainings += 1
        base = self._models[key]
        model = Classifier(model=base.model, tau=h.decision_boundary)
        return CandidateResult(hyperparams=h, objective=objective(model, self.validation), model=model, steps=steps)


def _resolve_evaluator(
    evaluate: Optional[Evaluator],
    train: Optional[Dataset],
    validation: Optional[Dataset],
    rng: Optional[np.random.Generator],
) -> Evaluator:
    if evaluate is not None:
        return evaluate
    if train is None or validation is None or rng is None:
        raise ValueError("either an evaluate callable or train/validation data with a generator is required")
    return ValidationEvaluator(train, validation, seed=int(rng.integers(0, 2 ** 63)))


# ---------------- Sequential fixing ----------------

def _sweep_candidates(space: SearchSpace, name: str, incumbent: Hyperparams) -> List[Hyperparams]:
    if name == "hidden_layers":
        width = incumbent.neurons_per_layer[0]
        return [replace(incumbent, hidden_layers=n, neurons_per_layer=(width,) * n) for n in space.hidden_layers]
    if name == "neurons":
        return [replace(incumbent, neurons_per_layer=(n,) * incumbent.hidden_layers) for n in space.neurons]
    values = getattr(space, name)
    return [replace(incumbent, **{name: v}) for v in values]


SWEEP_ORDER = ("hidden_layers", "neurons", "batch_size", "training_steps", "learning_rate", "decision_boundary")


def sequential_fixing(
    space: SearchSpace,
    train: Optional[Dataset] = None,
    validation: Optional[Dataset] = None,
    rng: Optional[np.random.Generator] = None,
    evaluate: Optional[Evaluator] = None,
) -> CandidateResult:
    """
    Greedy one-pass search from the defaults.

    For each hyperparameter in turn, every candidate value is tried with the others
    held at the incumbent; the argmin becomes the new incumbent. Ties keep the incumbent.
    """
    evaluate = _resolve_evaluator(evaluate, train, validation, rng)
    seen: Dict[Hyperparams, CandidateResult] = {}

    def score(h: Hyperparams) -> CandidateResult:
        if h not in seen:
            seen[h] = evaluate(h, h.training_steps)
        return seen[h]

    best = score(space.defaults)
    for name in SWEEP_ORDER:
        for h in _sweep_candidates(space, name, best.hyperparams):
            result = score(h)
            if result.objective < best.objective:
                best = result
        logger.info("fixed %s -> e=%.4f", name, best.objective)
    logger.info("sequential fixing visited %d settings", len(seen))
    return best


# ---------------- Successive halving ----------------

def hyperband(
    space: SearchSpace,
    train: Optional[Dataset] = None,
    validation: Optional[Dataset] = None,
    rng: Optional[np.random.Generator] = None,
    evaluate: Optional[Evaluator] = None,
    n0: int = 27,
    eta: int = 3,
    include_default: bool = True,
) -> CandidateResult:
    """
    Single successive-halving bracket.

    Args:
        space: where random settings are drawn from
        train, validation, rng: data for the default evaluator (rng also drives sampling)
        evaluate: optional evaluate(H, steps) override
        n0: number of random settings
        eta: keep the best 1/eta each round and multiply the budget by eta
        include_default: add the default setting to the pool and to the final comparison

    Returns:
        best CandidateResult, always trained at the full step budget
    """
    if n0 < 1 or eta < 2:
        raise ValueError("n0 must be >= 1 and eta >= 2")
    if rng is None:
        raise ValueError("hyperband needs a generator to sample settings")
    evaluate = _resolve_evaluator(evaluate, train, validation, rng)

    pool = [space.sample(rng) for _ in range(n0)]
    if include_default:
        pool.append(space.defaults)

    rounds = 0
    size = len(pool)
    while size > 1:
        size = max(1, size // eta)
        rounds += 1

    for r in range(rounds):
        fraction = float(eta) ** -(rounds - r)
        results = [evaluate(h, max(1, int(round(h.training_steps * fraction)))) for h in pool]
        order = sorted(range(len(pool)), key=lambda i: results[i].objective)
        keep = max(1, len(pool) // eta)
        logger.info("halving round %d: %d settings at %.3f budget, best e=%.4f",
                    r, len(pool), fraction, results[order[0]].objective)
        pool = [pool[i] for i in order[:keep]]

    best = evaluate(pool[0], pool[0].training_steps)
    if include_default and pool[0] != space.defaults:
        default = evaluate(space.defaults, space.defaults.training_steps)
        if default.objective < best.objective:
            best = default
    return best


def tune(
    space: SearchSpace,
    train: Dataset,
    validation: Dataset,
    rng: np.random.Generator,
    method: str = "sequential",
) -> CandidateResult:
    """Run one of the two searches on shared train/validation data."""
    if method == "sequential":
        return sequential_fixing(space, train, validation, rng)
    if method == "hyperband":
        return hyperband(space, train, validation, rng)
    raise ValueError(f"unknown tuning method '{method}' (expected 'sequential' or 'hyperband')")
