"""Environments and trajectory containers.

Both environments share one stepping protocol: reset(seed) -> first
observation, step(action) -> Step(obs, reward, done, truncated), plus obs_kind /
n_actions / metric properties and a ground_truth_state() accessor used by
oracle featurizers and purity analysis.
"""
from .trajectory import Step, Trajectory, read_jsonl, rollout_random, write_jsonl
from .toy import (
    ToyProcess,
    ToyProcessConfig,
    causal_state_count,
    optimal_expected_reward,
    render_gaussian,
    toy_causal_state,
    toy_optimal_action,
)
from .grid import (
    GridWorld,
    GridWorldConfig,
    LAYOUTS,
    generate_maze_layout,
    grid_optimal_values,
    load_layout,
    parse_layout,
    serialize_layout,
    shortest_path_steps,
)

__all__ = [
    "Step", "Trajectory", "read_jsonl", "write_jsonl", "rollout_random",
    "ToyProcess", "ToyProcessConfig", "causal_state_count",
    "optimal_expected_reward", "render_gaussian", "toy_causal_state",
    "toy_optimal_action",
    "GridWorld", "GridWorldConfig", "LAYOUTS", "generate_maze_layout",
    "grid_optimal_values", "load_layout", "parse_layout", "serialize_layout",
    "shortest_path_steps",
]
