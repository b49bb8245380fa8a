import copy
import math

import numpy as np
import pytest

from backend.config import DefenseConfig
from backend.neural import Classifier, Hyperparams, Mlp
from backend.transmitter import (
    Mode,
    TransmitterState,
    collect_training_data,
    decide_batch,
    decide_with_defense,
    defense_weights,
    evaluate,
    fit_defense,
    predict,
    retrain,
    select_defense_thresholds,
    sensing_windows,
)

N_NEW = 3


def constant_state(logit_gap: float) -> TransmitterState:
    """T whose C_T scores sigmoid(logit_gap) on every window, window already primed."""
    model = Mlp(weights=[np.zeros((N_NEW, 2))], biases=[np.array([0.0, logit_gap])])
    state = TransmitterState(classifier=Classifier(model, tau=0.5), hyperparams=Hyperparams(), n_new=N_NEW)
    state.prime([1.0] * (N_NEW - 1))
    return state


FITTED = DefenseConfig(max_ratio=0.2, flip_probability=1.0, tau0=0.1, tau1=0.9)


def test_training_samples_from_a_listening_trace():
    powers = np.ones(1000)
    status = np.zeros(1000, dtype=int)
    data = collect_training_data(powers, status, 10)
    assert len(data) == 990
    assert data.class_counts() == (990, 0)
    assert len(collect_training_data(powers[:10], status[:10], 10)) == 0
    with pytest.raises(ValueError, match="too short"):
        collect_training_data(powers[:9], status[:9], 10)


def test_deployed_classifier_separates_idle_from_busy(deployed):
    world, metrics, scores = deployed
    assert world.transmitter.mode is Mode.TEST
    assert metrics.e <= 0.05
    assert len(scores) == metrics.n_busy + metrics.n_idle


def test_predict_after_a_busy_run(deployed):
    world, _, _ = deployed
    state = world.transmitter
    state.prime([11.0] * 9)
    assert predict(state, 1.0).transmit
    assert not predict(state, 11.0).transmit


def test_predict_needs_a_full_window():
    model = Mlp(weights=[np.zeros((N_NEW, 2))], biases=[np.zeros(2)])
    state = TransmitterState(classifier=Classifier(model), hyperparams=Hyperparams(), n_new=N_NEW)
    with pytest.raises(ValueError, match="not full"):
        predict(state, 1.0)


def test_untrained_zero_network_holds():
    # score 0.5 == tau counts as busy
    decision = predict(constant_state(0.0), 1.0)
    assert decision.score == 0.5
    assert not decision.transmit


def test_confident_decision_is_flipped():
    decision = decide_with_defense(constant_state(5.0), 1.0, FITTED, np.random.default_rng(0))
    assert decision.flipped
    assert decision.transmit


def test_uncertain_decisions_are_never_flipped():
    state = constant_state(0.0)
    rng = np.random.default_rng(1)
    assert not any(decide_with_defense(state, 1.0, FITTED, rng).flipped for _ in range(1000))


def test_flip_frequency_matches_probability():
    defense = DefenseConfig(max_ratio=0.2, flip_probability=0.5, tau0=0.1, tau1=0.9)
    scores, flipped, transmit = decide_batch(constant_state(5.0), np.ones(10_000), defense, np.random.default_rng(2))
    assert np.all(scores > 0.9)
    assert flipped.mean() == pytest.approx(0.5, abs=0.02)
    assert np.array_equal(transmit, flipped)


def test_missing_defense_still_draws_one_uniform_per_slot():
    rng = np.random.default_rng(3)
    decision = decide_with_defense(constant_state(5.0), 1.0, None, rng)
    assert not decision.flipped
    reference = np.random.default_rng(3)
    reference.random()
    assert rng.random() == reference.random()


def test_unfitted_defense_is_inert():
    decision = decide_with_defense(constant_state(5.0), 1.0, DefenseConfig(max_ratio=0.5), np.random.default_rng(0))
    assert not decision.flipped and not decision.transmit


def test_batch_matches_slot_by_slot_decisions(deployed):
    world, _, _ = deployed
    powers = np.random.default_rng(4).uniform(0.5, 14.0, size=200)
    defense = DefenseConfig(max_ratio=0.3, flip_probability=0.5, tau0=0.2, tau1=0.8)

    batch_state = copy.deepcopy(world.transmitter)
    scores, flipped, transmit = decide_batch(batch_state, powers, defense, np.random.default_rng(5))

    single_state = copy.deepcopy(world.transmitter)
    rng = np.random.default_rng(5)
    decisions = [decide_with_defense(single_state, p, defense, rng) for p in powers]

    assert np.allclose(scores, [d.score for d in decisions])
    assert np.array_equal(flipped, [d.flipped for d in decisions])
    assert np.array_equal(transmit, [d.transmit for d in decisions])
    assert list(batch_state.window) == list(single_state.window)


def test_sensing_windows_use_history_as_lead_in():
    windows = sensing_windows([1.0, 2.0, 3.0], [4.0, 5.0], 3)
    assert windows.tolist() == [[2.0, 3.0, 4.0], [3.0, 4.0, 5.0]]
    assert sensing_windows([1.0, 2.0], [], 3).shape == (0, 3)
    with pytest.raises(ValueError):
        sensing_windows([1.0], [4.0], 3)


def test_retraining_replaces_the_classifier(deployed):
    world, _, _ = deployed
    old = world.transmitter
    trace = world.env.advance(300)
    new = retrain(old, trace.power_T, trace.status, np.random.default_rng(6))
    assert new.classifier is not old.classifier
    assert list(new.window) == list(old.window)
    assert new.mode is Mode.TEST
    with pytest.raises(ValueError, match="too short"):
        retrain(old, trace.power_T[:old.n_new], trace.status[:old.n_new], np.random.default_rng(6))


def test_error_counts():
    m = evaluate([1, 0, 1, 0, 0], [1, 1, 0, 0, 1])
    assert (m.n_MD, m.n_FA, m.n_busy, m.n_idle) == (2, 1, 3, 2)
    assert m.e_MD == pytest.approx(2 / 3)
    assert m.e_FA == 0.5
    assert m.e == pytest.approx(2 / 3)


def test_absent_class_leaves_its_ratio_undefined():
    m = evaluate([1, 0, 1], [1, 1, 1])
    assert m.e_FA is None
    assert m.e == pytest.approx(1 / 3)
    assert m.as_dict()["e_FA"] is None


def test_evaluate_rejects_bad_input():
    with pytest.raises(ValueError):
        evaluate([], [])
    with pytest.raises(ValueError):
        evaluate([1, 0], [1])


def test_defense_thresholds_select_the_most_confident_fraction():
    scores = np.random.default_rng(7).uniform(0.0, 1.0, size=1000)
    tau0, tau1 = select_defense_thresholds(scores, 0.5, 0.2)
    n_below = int(np.sum(scores < 0.5))
    n_above = int(np.sum(scores > 0.5))
    assert tau0 <= 0.5 <= tau1
    assert int(np.sum(scores < tau0)) == math.floor(0.2 * n_below)
    assert int(np.sum(scores > tau1)) == math.floor(0.2 * n_above)


def test_defense_threshold_extremes():
    scores = np.linspace(0.01, 0.99, 50)
    assert select_defense_thresholds(scores, 0.5, 0.0) == (-math.inf, math.inf)
    assert select_defense_thresholds(scores, 0.5, 1.0) == (0.5, 0.5)
    with pytest.raises(ValueError):
        select_defense_thresholds([], 0.5, 0.2)
    with pytest.raises(ValueError):
        select_defense_thresholds(scores, 0.5, 1.5)


def test_fit_defense_keeps_the_policy():
    fitted = fit_defense(DefenseConfig(max_ratio=0.4, flip_probability=0.3), np.linspace(0, 1, 101), 0.5)
    assert fitted.fitted
    assert fitted.flip_probability == 0.3
    assert fitted.violations(tau=0.5) == []


def test_tied_scores_are_shared_out_by_rank():
    scores = np.full(10, 0.1)
    fitted = fit_defense(DefenseConfig(max_ratio=0.5, flip_probability=1.0), scores, 0.5)
    assert fitted.tau0 == 0.1
    assert fitted.tie0 == pytest.approx(0.5)
    assert fitted.tau1 == math.inf
    assert defense_weights(fitted, scores).sum() == pytest.approx(5.0)
    assert fitted.violations(tau=0.5) == []


def test_partially_tied_cuts():
    scores = np.array([0.05, 0.1, 0.1, 0.1, 0.2, 0.3, 0.7, 0.8, 0.8, 0.9])
    fitted = fit_defense(DefenseConfig(max_ratio=0.5), scores, 0.5)
    # three of six below tau: 0.05 and two of the three 0.1s
    assert (fitted.tau0, fitted.tie0) == (0.1, pytest.approx(2 / 3))
    # two of four above tau: 0.9 and one of the two 0.8s
    assert (fitted.tau1, fitted.tie1) == (0.8, pytest.approx(0.5))
    assert defense_weights(fitted, scores).tolist() == pytest.approx([1, 2 / 3, 2 / 3, 2 / 3, 0, 0, 0, 0.5, 0.5, 1])
    assert select_defense_thresholds(scores, 0.5, 0.5) == (0.1, 0.8)


def test_tied_scores_flip_at_their_share():
    state = constant_state(-3.0)
    reference, _, _ = decide_batch(copy.deepcopy(state), np.ones(10), None, np.random.default_rng(8))
    fitted = fit_defense(DefenseConfig(max_ratio=0.5, flip_probability=1.0), reference, 0.5)
    scores, flipped, transmit = decide_batch(state, np.ones(10_000), fitted, np.random.default_rng(9))
    assert np.all(scores == fitted.tau0)
    assert flipped.mean() == pytest.approx(0.5, abs=0.02)
    assert np.array_equal(transmit, ~flipped)


def test_unfitted_defense_weighs_nothing():
    assert defense_weights(DefenseConfig(max_ratio=0.5), [0.0, 1.0]).tolist() == [0.0, 0.0]
