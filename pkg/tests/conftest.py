"""Session-scoped pipeline fixtures shared by the heavier test modules.

Training the toy and gridworld world models once per session keeps the suite
tractable; everything downstream (distillation, analysis, RL, planning,
acceptance) reuses these artifacts. All fixtures are deterministic: fixed
master seeds, fixed budgets.
"""
import numpy as np
import pytest

from cslab.envs import GridWorld, ToyProcess, ToyProcessConfig, rollout_random
from cslab.envs.grid import LAYOUT_1, grid_trajectory_labels
from cslab.envs.toy import toy_trajectory_labels
from cslab.discretizer import (
    QbnConfig,
    StateMapper,
    fit_minibatch_kmeans,
    fit_state_map,
    train_qbn_distill,
)
from cslab.world_model import (
    TrainSettings,
    WorldModelConfig,
    export_hidden_dataset,
    train_world_model,
)

TOY22 = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75)


@pytest.fixture(scope="session")
def toy22_cfg():
    return TOY22


@pytest.fixture(scope="session")
def toy22_train_trajs():
    return rollout_random(ToyProcess(TOY22), 500, master_seed=0)


@pytest.fixture(scope="session")
def toy22_held_trajs():
    return rollout_random(ToyProcess(TOY22), 100, master_seed=777)


@pytest.fixture(scope="session")
def toy22_model(toy22_train_trajs):
    """(model, training history) for the standard toy setting."""
    cfg = WorldModelConfig(obs_kind=("categorical", 2), n_actions=2)
    return train_world_model(toy22_train_trajs, cfg,
                             TrainSettings(epochs=30, batch_size=100, lr=2e-3, seed=0))


@pytest.fixture(scope="session")
def toy22_big_trajs():
    """1000 episodes = 1e5 labeled steps for analysis-grade estimates."""
    return rollout_random(ToyProcess(TOY22), 1000, master_seed=10)


@pytest.fixture(scope="session")
def toy22_hidden(toy22_model, toy22_big_trajs):
    model, _ = toy22_model
    labels = [toy_trajectory_labels(t, TOY22) for t in toy22_big_trajs]
    return export_hidden_dataset(model, toy22_big_trajs, labels=labels)


@pytest.fixture(scope="session")
def toy22_qbn(toy22_model, toy22_hidden):
    """(qbn, history) distilled at the default bottleneck width."""
    model, _ = toy22_model
    return train_qbn_distill(model, toy22_hidden,
                             QbnConfig(bottleneck=8, epochs=15, seed=0))


@pytest.fixture(scope="session")
def toy22_qbn_mapper(toy22_qbn, toy22_hidden):
    qbn, _ = toy22_qbn
    return StateMapper("qbn", qbn=qbn, state_map=fit_state_map(qbn, toy22_hidden))


@pytest.fixture(scope="session")
def toy22_kmeans_mapper(toy22_hidden):
    model = fit_minibatch_kmeans(toy22_hidden.states, k=32, seed=0)
    return StateMapper("kmeans", kmeans=model)


# ---------------------------------------------------------------------------
# Gridworld (corridor layout, discrete observations)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def grid1_trajs():
    return rollout_random(GridWorld(LAYOUT_1), 1000, master_seed=20)


@pytest.fixture(scope="session")
def grid1_model(grid1_trajs):
    cfg = WorldModelConfig(obs_kind=("categorical", 36), n_actions=4)
    return train_world_model(grid1_trajs, cfg,
                             TrainSettings(epochs=30, batch_size=100, lr=2e-3, seed=1))


@pytest.fixture(scope="session")
def grid1_hidden(grid1_model, grid1_trajs):
    """Includes final hidden states so the door's code exists in the map."""
    model, _ = grid1_model
    labels = [grid_trajectory_labels(t, LAYOUT_1, include_final=True)
              for t in grid1_trajs]
    return export_hidden_dataset(model, grid1_trajs, labels=labels,
                                 include_final=True)


@pytest.fixture(scope="session")
def grid1_qbn_mapper(grid1_model, grid1_hidden):
    model, _ = grid1_model
    qbn, _ = train_qbn_distill(model, grid1_hidden,
                               QbnConfig(bottleneck=16, epochs=15, seed=1))
    return StateMapper("qbn", qbn=qbn, state_map=fit_state_map(qbn, grid1_hidden))


@pytest.fixture(scope="session")
def grid1_kmeans_mapper(grid1_hidden):
    """Cluster over all_states: the door sink must own a centroid for planning."""
    model = fit_minibatch_kmeans(grid1_hidden.all_states, k=32, seed=0)
    return StateMapper("kmeans", kmeans=model)
