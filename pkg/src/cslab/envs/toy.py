"""A controllable discrete process with hidden k-step memory.

The next symbol depends on the symbol emitted k steps ago: action 0 draws
o_{t+1} toward o_{t-k} itself, action 1 toward (o_{t-k} + 1) mod |O|. The
chosen target appears with probability p; the remaining mass spreads evenly
over the other symbols. Reward is 1 whenever the new symbol equals 1, so an
agent must remember k+1 symbols back to steer reward reliably, while any
memoryless policy is stuck near episode_length / |O|.

The minimal sufficient statistic of the history is the window of the last
k+1 symbols; toy_causal_state encodes it as an integer (oldest symbol most
significant), giving a ground-truth state oracle for analysis and RL.

Observations are either the symbol itself ("discrete") or a noisy vector
rendering ("gaussian"): k blocks of |O| slots, where every block's slot for
the current symbol has mean 4 and everything else mean 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, EpisodeDoneError
from .trajectory import Step

N_ACTIONS = 2
PAD_SYMBOL = 0
MAX_ORACLE_STATES = 10 ** 6
_RENDER_MEAN = 4.0


@dataclass(frozen=True)
class ToyProcessConfig:
    alphabet_size: int = 2
    memory: int = 2
    p: float = 0.75
    obs_mode: str = "discrete"  # "discrete" | "gaussian"
    episode_length: int = 100
    gaussian_noise_std: float = 1.0

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ConfigError("alphabet_size must be >= 2")
        if self.memory < 1:
            raise ConfigError("memory must be >= 1")
        if not (1.0 / self.alphabet_size < self.p < 1.0):
            raise ConfigError(f"p must lie in (1/{self.alphabet_size}, 1), got {self.p}")
        if self.obs_mode not in ("discrete", "gaussian"):
            raise ConfigError(f"unknown obs_mode {self.obs_mode!r}")
        if self.episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        if self.gaussian_noise_std < 0:
            raise ConfigError("gaussian_noise_std must be >= 0")

    @property
    def window_size(self) -> int:
        return self.memory + 1

    @property
    def obs_dim(self) -> int:
        """Vector length in gaussian mode: memory blocks of alphabet_size slots."""
        return self.memory * self.alphabet_size


def render_gaussian(symbol: int, config: ToyProcessConfig, rng: np.random.Generator) -> np.ndarray:
    """Noisy vector code of a symbol: mean 4 at the symbol's slot in every block."""
    means = np.zeros(config.obs_dim)
    for block in range(config.memory):
        means[block * config.alphabet_size + symbol] = _RENDER_MEAN
    if config.gaussian_noise_std == 0:
        return means
    return means + rng.normal(0.0, config.gaussian_noise_std, size=config.obs_dim)


def toy_causal_state(history, config: ToyProcessConfig) -> int:
    """Integer id of the last window_size symbols, padded with 0 on the left.

    Base-|O| positional code, oldest symbol most significant: for |O|=2 the
    history (..., 1, 0, 1) with memory 2 maps to 1*4 + 0*2 + 1 = 5.
    """
    w = config.window_size
    padded = [PAD_SYMBOL] * w + [int(s) for s in history]
    window = padded[-w:]
    state = 0
    for s in window:
        if not 0 <= s < config.alphabet_size:
            raise ConfigError(f"symbol {s} outside alphabet")
        state = state * config.alphabet_size + s
    return state


def causal_state_count(config: ToyProcessConfig) -> int:
    return config.alphabet_size ** config.window_size


def toy_optimal_action(window, config: ToyProcessConfig) -> int:
    """Greedy reward-seeking action given the current symbol window.

    Pick the action whose target symbol is 1 when possible (oldest symbol 1
    -> action 0, oldest 0 -> action 1); otherwise both actions put the same
    (1-p)/(|O|-1) mass on symbol 1 and the tie resolves to action 0.
    """
    oldest = int(window[0])
    if oldest == 1:
        return 0
    if (oldest + 1) % config.alphabet_size == 1:
        return 1
    return 0


def next_symbol_distribution(window, action: int, config: ToyProcessConfig) -> np.ndarray:
    """P(o_{t+1} | window, action): p on the target, uniform elsewhere."""
    n = config.alphabet_size
    target = (int(window[0]) + int(action)) % n
    probs = np.full(n, (1.0 - config.p) / (n - 1))
    probs[target] = config.p
    return probs


def oracle_successor(state: int, symbol: int, config: ToyProcessConfig) -> int:
    """Deterministic causal-state update: drop the oldest symbol, append the new one."""
    base = config.alphabet_size ** config.memory
    return (state % base) * config.alphabet_size + symbol


class ToyProcess:
    """Stepping interface over the process; episodes run a fixed horizon."""

    n_actions = N_ACTIONS
    metric = "episode_reward"

    def __init__(self, config: ToyProcessConfig):
        self.config = config
        self._window: list[int] = []
        self._t = 0
        self._done = True
        self._rng = np.random.default_rng()

    @property
    def obs_kind(self):
        if self.config.obs_mode == "discrete":
            return ("categorical", self.config.alphabet_size)
        return ("real", self.config.obs_dim)

    def reset(self, seed: int | None = None):
        self._rng = np.random.default_rng(seed)
        self._window = [PAD_SYMBOL] * self.config.window_size
        self._t = 0
        self._done = False
        return self._render(PAD_SYMBOL)

    def step(self, action: int) -> Step:
        if self._done:
            raise EpisodeDoneError("episode is over; call reset()")
        if action not in (0, 1):
            raise ConfigError(f"action must be 0 or 1, got {action}")
        probs = next_symbol_distribution(self._window, action, self.config)
        symbol = int(self._rng.choice(self.config.alphabet_size, p=probs))
        self._window = self._window[1:] + [symbol]
        self._t += 1
        self._done = self._t >= self.config.episode_length
        reward = 1.0 if symbol == 1 else 0.0
        # the process itself never ends; episodes are finite-length excerpts
        return Step(self._render(symbol), reward, self._done, truncated=self._done)

    def causal_state(self) -> int:
        """Ground-truth causal state of the current history."""
        return toy_causal_state(self._window, self.config)

    # Shared name across environments for oracle featurizers.
    ground_truth_state = causal_state

    @property
    def ground_truth_state_count(self) -> int:
        return causal_state_count(self.config)

    @property
    def window(self) -> tuple[int, ...]:
        return tuple(self._window)

    def _render(self, symbol: int):
        if self.config.obs_mode == "discrete":
            return int(symbol)
        return render_gaussian(symbol, self.config, self._rng)


def toy_trajectory_labels(trajectory, config: ToyProcessConfig,
                          include_final: bool = False) -> np.ndarray:
    """Ground-truth causal-state id at each step t of a discrete trajectory.

    Label t is the state after consuming o_0..o_t, aligned with the world
    model's hidden state s_t. include_final appends the state after the last
    observation as well (T+1 labels), for transition extraction that must see
    final states as successors.
    """
    if config.obs_mode != "discrete":
        raise ConfigError("ground-truth labels need discrete observations")
    state = toy_causal_state(trajectory.observations[:1], config)
    labels = []
    for t in range(trajectory.length):
        labels.append(state)
        state = oracle_successor(state, int(trajectory.observations[t + 1]), config)
    if include_final:
        labels.append(state)
    return np.asarray(labels, dtype=np.int64)


def optimal_expected_reward(config: ToyProcessConfig) -> float:
    """Exact optimal expected episode reward by backward induction.

    The window of the last k+1 symbols is a sufficient state, so induction
    over all |O|^(k+1) windows for episode_length steps is exact. Refuses
    absurdly large state spaces rather than thrash.
    """
    n = config.alphabet_size
    m = causal_state_count(config)
    if m > MAX_ORACLE_STATES:
        raise ConfigError(f"window state space {m} exceeds {MAX_ORACLE_STATES}")
    base = n ** config.memory

    states = np.arange(m)
    oldest = states // base
    # successor[w, o'] and reward[o'] define the whole chain.
    succ = (states % base)[:, None] * n + np.arange(n)[None, :]
    sym_reward = (np.arange(n) == 1).astype(np.float64)

    off = (1.0 - config.p) / (n - 1)
    v = np.zeros(m)
    for _ in range(config.episode_length):
        best = None
        for action in (0, 1):
            target = (oldest + action) % n
            probs = np.full((m, n), off)
            probs[states, target] = config.p
            q = (probs * (sym_reward[None, :] + v[succ])).sum(axis=1)
            best = q if best is None else np.maximum(best, q)
        v = best
    start = toy_causal_state([], config)
    return float(v[start])
