import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from backend.config import (
    SCENARIO_DIR,
    ConfigError,
    DefenseConfig,
    NodeSpec,
    SeedStreams,
    SlotStructure,
    apply_overrides,
    configure_logging,
    distance,
    load_scenario,
    multi_source_default,
    reference_default,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)


def test_reference_scenario_is_valid():
    config = reference_default()
    assert validate(config) is config
    assert config.transmitter.position == (0.0, 0.0)
    assert config.receiver.position == (10.0, 0.0)
    assert config.adversary.position == (10.0, 10.0)
    assert [s.position for s in config.sources] == [(0.0, 10.0)]
    assert config.arrival_rate == 0.8
    assert config.sinr_threshold == 3.0
    assert config.n_new == 10


def test_arrival_rate_out_of_range_is_reported():
    with pytest.raises(ConfigError) as exc:
        validate(replace(reference_default(), arrival_rate=1.5))
    assert "arrival_rate out of [0,1]" in exc.value.violations


def test_slot_fractions_must_sum_to_one():
    bad = SlotStructure(sensing_fraction=0.1, data_fraction=0.85)
    with pytest.raises(ConfigError) as exc:
        validate(replace(reference_default(), slot_structure=bad))
    assert "slot_structure: fractions sum to 0.95" in exc.value.violations


def test_every_violation_is_collected():
    config = replace(reference_default(), arrival_rate=-0.1, noise_power=0.0, n_new=0)
    with pytest.raises(ConfigError) as exc:
        validate(config)
    joined = str(exc.value)
    assert "arrival_rate" in joined
    assert "noise_power" in joined
    assert "n_new" in joined
    assert len(exc.value.violations) >= 3


def test_colocated_nodes_are_rejected():
    config = replace(reference_default(), adversary=NodeSpec("A", (10.0, 0.0), 1000.0))
    with pytest.raises(ConfigError, match="co-located"):
        validate(config)


def test_unknown_attack_is_rejected():
    with pytest.raises(ConfigError, match="unknown attack"):
        validate(replace(reference_default(), attack="spoofing"))


def test_defense_thresholds_must_bracket_tau():
    defense = DefenseConfig(max_ratio=0.2, tau0=0.6, tau1=0.9)
    with pytest.raises(ConfigError, match="bracket"):
        validate(replace(reference_default(), defense=defense))


def test_feature_scale_choices():
    assert reference_default().log_power
    assert not replace(reference_default(), feature_scale="linear").log_power
    with pytest.raises(ConfigError, match="feature_scale"):
        validate(replace(reference_default(), feature_scale="log2"))


def test_defense_tie_shares_and_change_test_are_checked():
    assert DefenseConfig(tie0=1.5).violations() == ["defense: tie shares out of [0,1]"]
    retraining = replace(reference_default().retraining, change_z=0.0)
    with pytest.raises(ConfigError, match="change_z"):
        validate(replace(reference_default(), retraining=retraining))


def test_distance_examples():
    assert distance((0, 0), (10, 0)) == 10.0
    assert distance((10, 10), (0, 0)) == pytest.approx(math.sqrt(200))
    with pytest.raises(ValueError):
        distance((1, 1), (1, 1))
    with pytest.raises(ValueError):
        distance((0, math.inf), (0, 0))


def test_dict_round_trip_is_field_for_field():
    config = reference_default(defense=DefenseConfig(max_ratio=0.4), attack="evasion")
    assert scenario_from_dict(scenario_to_dict(config)) == config


def test_unknown_key_reports_its_path():
    raw = scenario_to_dict(reference_default())
    raw["channel_model"]["fading"] = 1
    with pytest.raises(ConfigError) as exc:
        scenario_from_dict(raw)
    assert "channel_model.fading: unknown key" in exc.value.violations


def test_shipped_scenarios_load():
    assert load_scenario(SCENARIO_DIR / "reference.json") == reference_default()
    assert load_scenario(SCENARIO_DIR / "multi_source.json") == multi_source_default()


def test_save_and_load(tmp_path):
    config = multi_source_default(seed=7)
    path = tmp_path / "nested" / "scenario.json"
    save_scenario(config, path)
    assert load_scenario(path) == config


def test_invalid_json_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_scenario(path)


def test_overrides_follow_dotted_paths():
    config = apply_overrides(reference_default(), [
        "channel_model.kind=rayleigh",
        "sources.0.position=[0,20]",
        "arrival_rate=0.5",
        "defense.max_ratio=0.2",
    ])
    assert config.channel_model.kind == "rayleigh"
    assert config.sources[0].position == (0, 20)
    assert config.arrival_rate == 0.5
    assert config.defense == DefenseConfig(max_ratio=0.2)


@pytest.mark.parametrize("override", ["arrival_rate", "bogus=1", "sources.3.position=[0,1]"])
def test_malformed_overrides(override):
    with pytest.raises(ConfigError):
        apply_overrides(reference_default(), [override])


def test_override_result_is_validated():
    with pytest.raises(ConfigError, match="arrival_rate"):
        apply_overrides(reference_default(), ["arrival_rate=1.5"])


def test_seed_streams_are_reproducible_and_independent():
    a, b = SeedStreams(42), SeedStreams(42)
    assert np.array_equal(a.stream("traffic:B0").random(5), b.stream("traffic:B0").random(5))
    # requesting other streams first does not shift a named stream
    b.stream("noise:T").random(100)
    assert np.array_equal(a.stream("gain:T->R").random(5), b.stream("gain:T->R").random(5))
    assert not np.array_equal(a.stream("noise:T").random(5), a.stream("noise:R").random(5))
    assert not np.array_equal(SeedStreams(1).stream("x").random(5), SeedStreams(2).stream("x").random(5))


def test_configure_logging_levels(monkeypatch):
    monkeypatch.setenv("SPECTRUM_SIM_LOG_LEVEL", "WARNING")
    configure_logging()
    assert logging.getLogger().level == logging.WARNING
    configure_logging("debug")
    assert logging.getLogger().level == logging.DEBUG
    configure_logging("INFO")
