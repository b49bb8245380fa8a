import copy
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from backend.config import RetrainingConfig, reference_default, save_scenario
from backend.harness import prepare_transmitter
from backend.neural import Hyperparams

SMALL_NET = Hyperparams.uniform(1, 20, batch_size=50, training_steps=300, learning_rate=0.1)


@pytest.fixture(scope="session")
def small_config():
    """Reference topology with short phases and a small network, for fast end-to-end runs."""
    return reference_default(
        transmitter_hyperparams=SMALL_NET,
        adversary_hyperparams=SMALL_NET,
        num_train_slots=200,
        num_test_slots=200,
        adversary_observation_slots=300,
        retraining=RetrainingConfig(period=400, window=150, change_window=100),
    )


@pytest.fixture(scope="session")
def _deployed(small_config):
    return prepare_transmitter(small_config)


@pytest.fixture
def deployed(_deployed):
    """(world right after deployment, validation metrics, validation scores); the world is a fresh copy."""
    world, metrics, scores = _deployed
    return copy.deepcopy(world), metrics, scores


@pytest.fixture
def scenario_file(small_config, tmp_path):
    path = tmp_path / "small.json"
    save_scenario(small_config, path)
    return path


