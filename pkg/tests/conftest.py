"""Shared fixtures: a small synthetic beat set and exit models on the default backbone."""
import pytest

from beatset import generate_synthetic, normalize_beats
from exit_graph import ExitPlacement, attach_exits, partition
from nn_core import default_model, init_params


@pytest.fixture(scope="session")
def beats():
    """Twenty z-scored synthetic beats, four per AAMI class."""
    return normalize_beats(generate_synthetic(4, seed=0))


@pytest.fixture(scope="session")
def backbone():
    model = default_model()
    return model, init_params(model, seed=0)


@pytest.fixture(scope="session")
def single_exit(backbone):
    model, params = backbone
    return attach_exits(model, params, ExitPlacement((2,)), bottleneck_size=16, seed=0)


@pytest.fixture(scope="session")
def dual_exit(backbone):
    model, params = backbone
    return attach_exits(model, params, ExitPlacement((2, 4)), bottleneck_size=16, seed=0)


@pytest.fixture(scope="session")
def single_plan(single_exit):
    exit_model, _ = single_exit
    return partition(exit_model)


@pytest.fixture(scope="session")
def dual_plan(dual_exit):
    exit_model, _ = dual_exit
    return partition(exit_model)
