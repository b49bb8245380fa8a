import numpy as np
import pytest

from backend.adversary import (
    JAM,
    NONE,
    POISON,
    AckTimeline,
    AdversaryState,
    AttackPlan,
    RetrainEstimate,
    accuracy_shift,
    build_ack_timeline,
    collect_training_data,
    detect_accuracy_changes,
    energy_budget,
    estimate_retrain_period,
    identify_slot_phases,
    infer_slot_length,
    plan_causative,
    plan_evasion,
    plan_jamming,
    predict_ack,
    resolve_retrain_length,
    synthesize_ack_slot_trace,
)
from backend.config import SlotStructure
from backend.neural import Classifier, Mlp


def linear_state() -> AdversaryState:
    """One-feature C_A with ACK score sigmoid(x)."""
    model = Mlp(weights=[np.array([[0.0, 1.0]])], biases=[np.zeros(2)])
    return AdversaryState(classifier=Classifier(model, tau=0.5), n_new=1)


def windows(*values):
    return np.array(values, dtype=float)[:, None]


# ---------------- slot structure ----------------

def test_slot_length_is_the_gcd_of_exact_intervals():
    assert infer_slot_length(AckTimeline((3.0, 6.0, 9.0))) == 3.0
    assert infer_slot_length(AckTimeline((4.0, 6.0))) == 2.0
    assert infer_slot_length(AckTimeline((5.0,))) == 5.0


def test_slot_length_matches_the_gcd_of_random_timelines():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        unit = int(rng.integers(1, 8))
        duration = float(rng.choice([0.25, 0.5, 1.0, 2.0]))
        slots = unit * np.unique(rng.integers(0, 200, size=int(rng.integers(2, 30))))
        if len(slots) < 2:
            continue
        expected = int(np.gcd.reduce(np.diff(slots))) * duration
        assert infer_slot_length(build_ack_timeline(slots, slot_duration=duration)) == expected


def test_slot_length_tolerates_jitter():
    estimate = infer_slot_length(AckTimeline((4.01, 5.99), epsilon=0.05))
    assert estimate == pytest.approx(2.0, abs=0.05)


def test_ack_timeline_from_slots():
    timeline = build_ack_timeline([5, 0, 2], slot_duration=0.5)
    assert timeline.intervals == (1.0, 1.5)
    assert timeline.epsilon == 0.0
    assert infer_slot_length(build_ack_timeline([3, 7, 13, 14])) == 1.0
    with pytest.raises(ValueError):
        build_ack_timeline([4])
    with pytest.raises(ValueError):
        build_ack_timeline([1, 3], jitter=0.1)


@pytest.mark.parametrize("fraction", [0.1, 0.2])
def test_sensing_fraction_from_power_steps(fraction):
    rng = np.random.default_rng(2)
    traces = [synthesize_ack_slot_trace(1.0, 10.0, fraction, 100, rng, 0.2) for _ in range(20)]
    structure = identify_slot_phases(traces)
    assert structure.sensing_fraction == pytest.approx(fraction, abs=0.01)
    assert structure.sensing_fraction + structure.data_fraction == pytest.approx(1.0)


def test_flat_slots_are_skipped():
    flat = np.full(100, 3.0)
    step = synthesize_ack_slot_trace(1.0, 5.0, 0.1, 100)
    assert identify_slot_phases([flat, step]).sensing_fraction == pytest.approx(0.1)
    with pytest.raises(ValueError, match="no power step"):
        identify_slot_phases([flat, flat])
    with pytest.raises(ValueError):
        identify_slot_phases([])


# ---------------- surrogate ----------------

def test_training_samples_align_with_acks():
    powers = np.arange(1000, dtype=float)
    acks = np.arange(1000) % 3 == 0
    data = collect_training_data(powers, acks, 10)
    assert len(data) == 990
    assert np.array_equal(data.y, acks[10:].astype(int))
    with pytest.raises(ValueError):
        collect_training_data(powers[:5], acks[:5], 10)


def test_predict_ack_needs_a_full_window():
    model = Mlp(weights=[np.zeros((2, 2))], biases=[np.zeros(2)])
    state = AdversaryState(classifier=Classifier(model), n_new=2)
    with pytest.raises(ValueError):
        predict_ack(state, 1.0)
    assert predict_ack(state, 1.0)


# ---------------- planning ----------------

def test_evasion_poisons_predicted_acks_only():
    plan = plan_evasion(linear_state(), windows(-2.0, 1.0, 3.0, 0.5, -1.0))
    assert plan.actions.tolist() == [NONE, POISON, POISON, POISON, NONE]
    assert plan.energy == pytest.approx(0.3)


def test_evasion_without_expected_acks_spends_nothing():
    plan = plan_evasion(linear_state(), windows(-2.0, -1.0, -3.0))
    assert plan.poisoned == 0
    assert plan.energy == 0.0


def test_causative_is_confined_to_the_mask():
    mask = np.array([True, True, False, False, True])
    plan = plan_causative(linear_state(), windows(-2.0, 1.0, 3.0, 0.5, -1.0), mask)
    assert plan.actions.tolist() == [NONE, POISON, NONE, NONE, NONE]
    with pytest.raises(ValueError):
        plan_causative(linear_state(), windows(1.0, 2.0), mask)


def test_jamming_takes_the_highest_scores():
    w = windows(-2.0, 1.0, 3.0, 0.5, -1.0)
    plan = plan_jamming(linear_state(), 2.0, w)
    assert plan.actions.tolist() == [NONE, JAM, JAM, NONE, NONE]
    assert plan.energy == pytest.approx(1.8)


def test_jamming_quota_extremes():
    w = windows(-2.0, 1.0, 3.0, 0.5, -1.0)
    assert plan_jamming(linear_state(), 0.0, w).jammed == 0
    assert plan_jamming(linear_state(), 0.99, w).jammed == 0
    # a quota larger than the candidate set jams every predicted ACK and nothing else
    assert plan_jamming(linear_state(), 10.0, w).actions.tolist() == [NONE, JAM, JAM, JAM, NONE]
    with pytest.raises(ValueError):
        plan_jamming(linear_state(), -1.0, w)


def test_jamming_ties_go_to_the_earlier_slot():
    plan = plan_jamming(linear_state(), 1.0, windows(2.0, 2.0, 2.0))
    assert plan.actions.tolist() == [JAM, NONE, NONE]


def test_energy_budget_matches_poisoning_time():
    structure = SlotStructure(0.1, 0.9)
    plan = AttackPlan(np.full(900, POISON), structure)
    assert energy_budget(plan, structure) == pytest.approx(100.0)
    assert plan.energy == pytest.approx(90.0)

    wide = SlotStructure(0.2, 0.8)
    assert energy_budget(AttackPlan(np.full(100, POISON), wide), wide) == pytest.approx(25.0)
    with pytest.raises(ValueError):
        energy_budget(plan, SlotStructure(1.0, 0.0))


def test_idle_plan():
    plan = AttackPlan.idle(4)
    assert len(plan) == 4 and plan.energy == 0.0


# ---------------- retraining schedule ----------------

def test_accuracy_changes_are_reported_per_block():
    correct = [1.0] * 10 + [0.0] * 10 + [1.0] * 10
    assert detect_accuracy_changes(correct, 5, 0.1) == [10, 20]
    assert detect_accuracy_changes(correct, 5, 0.1, positions=np.arange(30) + 100) == [110, 120]
    assert detect_accuracy_changes([1.0] * 30, 5, 0.1) == []
    with pytest.raises(ValueError):
        detect_accuracy_changes(correct, 0, 0.1)


def test_accuracy_shift_needs_size_and_significance():
    baseline = [0.0] * 190 + [1.0] * 10
    assert accuracy_shift(baseline, [1.0] * 80 + [0.0] * 120, 0.03) == 1
    assert accuracy_shift(baseline, [0.0] * 200, 0.03) == -1
    # a 2-point move is below the threshold, a lone hit in a short block is not significant
    assert accuracy_shift(baseline, [1.0] * 14 + [0.0] * 186, 0.03) == 0
    assert accuracy_shift(baseline, [1.0] + [0.0] * 9, 0.03) == 0
    assert accuracy_shift([], [1.0] * 10, 0.03) == 0
    assert accuracy_shift(baseline, [], 0.03) == 0


def test_retrain_period_matches_a_grid_search():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        period = rng.uniform(100.0, 3000.0)
        t = rng.uniform(0.0, 5000.0) + period * np.arange(n) + rng.uniform(-50.0, 50.0, size=n)
        i = np.arange(n)

        def cost(deltas):
            residual = (t - t[0])[None, :] - deltas[:, None] * i[None, :]
            return np.sum(residual ** 2, axis=1)

        coarse = np.arange(0.0, 4000.0, 1.0)
        centre = coarse[np.argmin(cost(coarse))]
        fine = np.arange(centre - 1.0, centre + 1.0, 1e-4)
        best = fine[np.argmin(cost(fine))]
        assert estimate_retrain_period(t) == pytest.approx(best, abs=1e-3)


def test_retrain_period_least_squares():
    assert estimate_retrain_period([0, 10, 20, 30]) == pytest.approx(10.0)
    assert estimate_retrain_period([0, 9, 21, 30]) == pytest.approx(141 / 14)
    assert estimate_retrain_period([5, 15]) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        estimate_retrain_period([5])


def test_collection_length_bisection_saturating_impact():
    length = resolve_retrain_length(0, 128, 8, lambda l: min(l, 40.0) / 40.0, tolerance=0.0)
    assert 32 <= length <= 40


def test_collection_length_covering_the_whole_period():
    length = resolve_retrain_length(0, 128, 8, lambda l: min(l, 128.0) / 128.0, tolerance=0.0)
    assert length >= 120


def test_constant_impact_collapses_to_the_lower_bound():
    calls = []

    def impact(l):
        calls.append(l)
        return 0.5

    assert resolve_retrain_length(0, 128, 8, impact) == 0.0
    # 128 -> 64 -> 32 -> 16 -> 8, two evaluations per round
    assert len(calls) == 8


def test_bisection_rejects_bad_brackets():
    with pytest.raises(ValueError):
        resolve_retrain_length(10, 10, 1, lambda l: 0.0)
    with pytest.raises(ValueError):
        resolve_retrain_length(0, 10, 0, lambda l: 0.0)


def test_retrain_estimate_bounds():
    estimate = RetrainEstimate(period=400.0, lower=0.0, upper=400.0, step=50.0, length=150.0)
    assert estimate.length == 150.0
    with pytest.raises(ValueError):
        RetrainEstimate(period=400.0, lower=0.0, upper=400.0, step=50.0, length=500.0)
    with pytest.raises(ValueError):
        RetrainEstimate(period=400.0, lower=0.0, upper=400.0, step=0.0, length=100.0)
