"""Trajectory container and JSONL serialization.

A trajectory of T steps stores T+1 observations, T actions, and T rewards.
On disk it is one JSON record per observation:

    {"t": 0, "obs": 0, "action": 1, "reward": 0.0, "done": false}

The final record carries action null and done true; reward at index t is the
reward earned by the step that produced obs_t (0 at t=0). A new episode
starts whenever t returns to 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..seeding import episode_seed


@dataclass(frozen=True)
class Step:
    """One environment transition as seen by the agent.

    done ends the episode either way; truncated marks the subset of endings
    imposed by a step budget rather than the environment itself. Value
    bootstrapping should only stop at genuine termination.
    """
    obs: object
    reward: float
    done: bool
    truncated: bool = False


@dataclass
class Trajectory:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    seed: int | None = None

    @property
    def length(self) -> int:
        """Number of steps (= number of actions)."""
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def validate(self) -> None:
        if len(self.observations) != len(self.actions) + 1:
            raise ShapeError("need exactly one more observation than actions")
        if len(self.rewards) != len(self.actions):
            raise ShapeError("need one reward per action")
        if not all(np.isfinite(r) for r in self.rewards):
            raise ShapeError("non-finite reward")


def _obs_to_json(obs):
    if isinstance(obs, (int, np.integer)):
        return int(obs)
    return [float(v) for v in np.asarray(obs).ravel()]


def _obs_from_json(o):
    if isinstance(o, list):
        return np.asarray(o, dtype=np.float64)
    return int(o)


def write_jsonl(path, trajectories) -> int:
    """Write trajectories as JSONL records; returns the record count."""
    n = 0
    with open(path, "w") as fh:
        for traj in trajectories:
            traj.validate()
            T = traj.length
            for t in range(T + 1):
                rec = {
                    "t": t,
                    "obs": _obs_to_json(traj.observations[t]),
                    "action": int(traj.actions[t]) if t < T else None,
                    "reward": float(traj.rewards[t - 1]) if t > 0 else 0.0,
                    "done": t == T,
                }
                fh.write(json.dumps(rec) + "\n")
                n += 1
    return n


def read_jsonl(path) -> list[Trajectory]:
    trajectories: list[Trajectory] = []
    current: Trajectory | None = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec["t"] == 0:
                current = Trajectory()
                trajectories.append(current)
            if current is None:
                raise ShapeError(f"{path}: record before episode start")
            current.observations.append(_obs_from_json(rec["obs"]))
            if rec["action"] is not None:
                current.actions.append(int(rec["action"]))
            if rec["t"] > 0:
                current.rewards.append(float(rec["reward"]))
    for traj in trajectories:
        traj.validate()
    return trajectories


def rollout_random(env, n_episodes: int, master_seed: int, stage: str = "collect"):
    """Roll uniformly random actions; one derived seed per episode."""
    out = []
    for ep in range(n_episodes):
        seed = episode_seed(master_seed, stage, ep)
        rng = np.random.default_rng(seed)
        traj = Trajectory(seed=seed)
        obs = env.reset(seed=seed)
        traj.observations.append(obs)
        done = False
        while not done:
            action = int(rng.integers(env.n_actions))
            step = env.step(action)
            traj.actions.append(action)
            traj.rewards.append(step.reward)
            traj.observations.append(step.obs)
            done = step.done
        out.append(traj)
    return out
