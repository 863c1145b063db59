"""Trajectory container and JSONL round-trip tests."""
import json

import numpy as np
import pytest

from cslab.envs import (
    GridWorld,
    ToyProcess,
    ToyProcessConfig,
    read_jsonl,
    rollout_random,
    write_jsonl,
)
from cslab.envs.grid import LAYOUT_1
from cslab.envs.trajectory import Trajectory
from cslab.errors import ShapeError


def test_validate_counts():
    t = Trajectory(observations=[0, 1], actions=[1], rewards=[1.0])
    t.validate()
    with pytest.raises(ShapeError):
        Trajectory(observations=[0], actions=[1], rewards=[1.0]).validate()
    with pytest.raises(ShapeError):
        Trajectory(observations=[0, 1], actions=[1], rewards=[float("nan")]).validate()


def test_rollout_random_toy_shapes():
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75, episode_length=100)
    trajs = rollout_random(ToyProcess(cfg), n_episodes=3, master_seed=0)
    assert len(trajs) == 3
    for t in trajs:
        assert t.length == 100
        assert len(t.observations) == 101
        assert 0.0 <= t.total_reward <= 100.0


def test_rollout_random_is_deterministic():
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75, episode_length=20)
    a = rollout_random(ToyProcess(cfg), 2, master_seed=5)
    b = rollout_random(ToyProcess(cfg), 2, master_seed=5)
    assert [t.observations for t in a] == [t.observations for t in b]
    c = rollout_random(ToyProcess(cfg), 2, master_seed=6)
    assert [t.observations for t in a] != [t.observations for t in c]


def test_jsonl_roundtrip_discrete(tmp_path):
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75, episode_length=10)
    trajs = rollout_random(ToyProcess(cfg), 4, master_seed=1)
    path = tmp_path / "episodes.jsonl"
    n = write_jsonl(path, trajs)
    assert n == 4 * 11
    back = read_jsonl(path)
    assert len(back) == 4
    for t0, t1 in zip(trajs, back):
        assert t0.observations == t1.observations
        assert t0.actions == t1.actions
        assert t0.rewards == t1.rewards


def test_jsonl_record_shape(tmp_path):
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75, episode_length=3)
    path = tmp_path / "one.jsonl"
    write_jsonl(path, rollout_random(ToyProcess(cfg), 1, master_seed=0))
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["t"] for r in records] == [0, 1, 2, 3]
    assert records[0]["reward"] == 0.0
    assert records[-1]["action"] is None
    assert [r["done"] for r in records] == [False, False, False, True]


def test_jsonl_roundtrip_vector_obs(tmp_path):
    env = GridWorld(LAYOUT_1)
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75, episode_length=5,
                           obs_mode="gaussian")
    trajs = rollout_random(ToyProcess(cfg), 2, master_seed=2)
    path = tmp_path / "vec.jsonl"
    write_jsonl(path, trajs)
    back = read_jsonl(path)
    for t0, t1 in zip(trajs, back):
        for o0, o1 in zip(t0.observations, t1.observations):
            np.testing.assert_allclose(o0, o1, rtol=0, atol=0)


def test_gridworld_rollout_episodes_terminate(tmp_path):
    trajs = rollout_random(GridWorld(LAYOUT_1), 5, master_seed=3)
    for t in trajs:
        assert t.length <= LAYOUT_1.step_limit
