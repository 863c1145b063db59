"""Deterministic seed derivation for pipeline stages.

A single master seed fans out into independent streams via
numpy.random.SeedSequence spawn keys. Each stage owns a fixed index, so adding
a stage later never perturbs the streams of existing ones, and unit indices
(episode number, RL seed slot, ...) extend the key. Same master seed, same
stage, same unit -> bit-identical random draws.
"""
from __future__ import annotations

import numpy as np

# Fixed stage table. Append only; never renumber.
STAGE_INDEX = {
    "collect": 0,
    "world_model": 1,
    "distill": 2,
    "analyze": 3,
    "rl": 4,
    "plan": 5,
    "report": 6,
    "eval": 7,
}


def stage_sequence(master_seed: int, stage: str, *units: int) -> np.random.SeedSequence:
    """Return the SeedSequence for a (stage, unit...) slot under a master seed."""
    if stage not in STAGE_INDEX:
        raise KeyError(f"unknown stage {stage!r}; add it to STAGE_INDEX")
    key = (STAGE_INDEX[stage],) + tuple(int(u) for u in units)
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)


def stage_rng(master_seed: int, stage: str, *units: int) -> np.random.Generator:
    """Generator seeded for a (stage, unit...) slot."""
    return np.random.default_rng(stage_sequence(master_seed, stage, *units))


def episode_seed(master_seed: int, stage: str, episode: int) -> int:
    """A plain integer seed for one episode, derived from the stage stream."""
    seq = stage_sequence(master_seed, stage, episode)
    return int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63))
