"""Policy learning on interchangeable state representations.

A featurizer turns the online observation stream into either a discrete
state id or a fixed-size vector. Tabular Q-learning consumes ids, DQN
consumes vectors (ids become one-hot rows), and DRQN consumes raw
observations through its own recurrence. All trainers share the linear
epsilon schedule, gamma, and a periodic greedy evaluation that becomes the
learning curve; toy processes score total episode reward, gridworlds score
mean reward per step.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .discretizer import StateMapper
from .errors import ConfigError, ShapeError, TrainingError
from .numerics import (
    GradientTape,
    RmspropState,
    Tensor,
    add,
    concat,
    load_checkpoint,
    matmul,
    mse,
    mul,
    one_hot,
    relu,
    rmsprop_step,
    save_checkpoint,
    select_columns,
    uniform_init,
)
from .seeding import episode_seed, stage_rng
from .world_model import HiddenStateTracker, WorldModel, gru_step, gru_step_np

FEATURIZER_KINDS = ("raw", "window", "hidden", "discrete", "ground-truth")
Q_DIVERGENCE_LIMIT = 1e8


def epsilon_at(episode: int, n_episodes: int,
               start: float = 1.0, end: float = 0.05) -> float:
    """Linear anneal over the first half of training, flat afterwards."""
    horizon = max(1, n_episodes // 2)
    frac = min(1.0, episode / horizon)
    return start + frac * (end - start)


# ---------------------------------------------------------------------------
# Featurizers
# ---------------------------------------------------------------------------

@dataclass
class Featurizer:
    """Online state representation with a shared reset/update protocol.

    kind selects the strategy: "raw" passes the current observation through
    (categorical observations double as tabular ids), "window" stacks the
    last `window` observations with zero padding at episode start, "hidden"
    tracks the world model's recurrent state, "discrete" maps that state to
    an id (optionally relabeled, e.g. by a state-merging map), and
    "ground-truth" reads the environment's latent state directly (relabel
    applies there too).

    Call bind(env) before sizing networks; reset/update return the
    representation of the state after consuming the given observation.
    """
    kind: str
    window: int = 1
    model: WorldModel | None = None
    mapper: StateMapper | None = None
    relabel: np.ndarray | None = None
    _obs_kind: tuple | None = field(default=None, repr=False)
    _gt_states: int | None = field(default=None, repr=False)
    _env: object = field(default=None, repr=False)
    _tracker: HiddenStateTracker | None = field(default=None, repr=False)
    _buf: deque | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in FEATURIZER_KINDS:
            raise ConfigError(f"unknown featurizer kind {self.kind!r}")
        if self.kind in ("hidden", "discrete") and self.model is None:
            raise ConfigError(f"{self.kind} featurizer needs a world model")
        if self.kind == "discrete" and self.mapper is None:
            raise ConfigError("discrete featurizer needs a state mapper")
        if self.kind == "window" and self.window < 1:
            raise ConfigError("window length must be >= 1")
        if self.relabel is not None:
            self.relabel = np.asarray(self.relabel, dtype=np.int64)

    def bind(self, env) -> "Featurizer":
        self._obs_kind = tuple(env.obs_kind)
        self._env = env
        if self.kind == "ground-truth":
            self._gt_states = int(env.ground_truth_state_count)
        if self.model is not None:
            cfg = self.model.config
            if tuple(cfg.obs_kind) != self._obs_kind:
                raise ConfigError(f"world model expects {cfg.obs_kind}, "
                                  f"environment emits {self._obs_kind}")
            if cfg.n_actions != env.n_actions:
                raise ConfigError("world model and environment disagree on actions")
            self._tracker = HiddenStateTracker(self.model)
        return self

    def _require_bound(self):
        if self._obs_kind is None:
            raise ConfigError("featurizer not bound; call bind(env) first")

    @property
    def discrete(self) -> bool:
        """Whether reset/update return tabular ids rather than vectors."""
        if self.kind in ("discrete", "ground-truth"):
            return True
        if self.kind == "raw":
            self._require_bound()
            return self._obs_kind[0] == "categorical"
        return False

    @property
    def n_states(self) -> int:
        if self.kind == "discrete":
            if self.relabel is not None:
                return int(self.relabel.max()) + 1
            return self.mapper.n_states
        if self.kind == "ground-truth":
            if self.relabel is not None:
                return int(self.relabel.max()) + 1
            self._require_bound()
            return self._gt_states
        if self.kind == "raw" and self.discrete:
            return self._obs_kind[1]
        raise ConfigError(f"{self.kind} featurizer has no discrete state space")

    @property
    def dim(self) -> int:
        """Vector width seen by a DQN (ids count their one-hot width)."""
        if self.discrete:
            return self.n_states
        self._require_bound()
        per_slot = self._obs_kind[1]
        if self.kind == "raw":
            return per_slot
        if self.kind == "window":
            return self.window * per_slot
        return self.model.config.hidden_dim

    def reset(self, env, obs):
        if self._env is not env or self._obs_kind is None:
            self.bind(env)
        if self.kind == "window":
            self._buf = deque(maxlen=self.window)
            self._buf.append(obs)
            return self._window_vec()
        if self.kind in ("hidden", "discrete"):
            h = self._tracker.begin(obs)
            return h if self.kind == "hidden" else self._map_id(h)
        if self.kind == "ground-truth":
            return self._gt_id()
        return self._raw(obs)

    def update(self, obs, prev_action):
        if self.kind == "window":
            self._buf.append(obs)
            return self._window_vec()
        if self.kind in ("hidden", "discrete"):
            h = self._tracker.update(obs, prev_action)
            return h if self.kind == "hidden" else self._map_id(h)
        if self.kind == "ground-truth":
            return self._gt_id()
        return self._raw(obs)

    def as_vector(self, rep) -> np.ndarray:
        if self.discrete:
            return one_hot([int(rep)], self.n_states)[0]
        return np.asarray(rep, dtype=np.float64)

    def _raw(self, obs):
        if self.discrete:
            return int(obs)
        return np.asarray(obs, dtype=np.float64)

    def _map_id(self, h: np.ndarray) -> int:
        sid = int(self.mapper.assign(h.reshape(1, -1))[0])
        if self.relabel is not None:
            sid = int(self.relabel[sid])
        return sid

    def _gt_id(self) -> int:
        sid = int(self._env.ground_truth_state())
        if self.relabel is not None:
            sid = int(self.relabel[sid])
        return sid

    def _window_vec(self) -> np.ndarray:
        kind, per_slot = self._obs_kind
        out = np.zeros(self.window * per_slot)
        offset = self.window - len(self._buf)
        for i, obs in enumerate(self._buf):
            j = (offset + i) * per_slot
            if kind == "categorical":
                out[j + int(obs)] = 1.0
            else:
                out[j:j + per_slot] = np.asarray(obs, dtype=np.float64)
        return out


def make_featurizer(kind: str, window: int = 1, model: WorldModel | None = None,
                    mapper: StateMapper | None = None,
                    relabel: np.ndarray | None = None) -> Featurizer:
    return Featurizer(kind=kind, window=window, model=model, mapper=mapper,
                      relabel=relabel)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalResult:
    """Greedy-rollout score: mean and population std over per-seed means."""
    mean: float
    std: float
    per_seed: tuple
    metric: str
    n_episodes: int

    def __post_init__(self):
        if self.std < 0:
            raise ShapeError("negative std")


def _episode_metric(env, total_reward: float, steps: int) -> float:
    if env.metric == "reward_per_step":
        return total_reward / max(1, steps)
    return total_reward


def _greedy_scores(policy, env, n_episodes: int, seed: int) -> list[float]:
    scores = []
    for ep in range(n_episodes):
        obs = env.reset(seed=episode_seed(int(seed), "eval", ep))
        action = policy.begin(env, obs)
        total, steps, done = 0.0, 0, False
        while not done:
            step = env.step(action)
            total += step.reward
            steps += 1
            done = step.done
            if not done:
                action = policy.step(step.obs, action)
        scores.append(_episode_metric(env, total, steps))
    return scores


def evaluate(policy, env, n_episodes: int, seeds) -> EvalResult:
    """Greedy rollouts; per-seed episode means aggregated to mean and std."""
    per_seed = [float(np.mean(_greedy_scores(policy, env, n_episodes, s)))
                for s in seeds]
    return EvalResult(mean=float(np.mean(per_seed)), std=float(np.std(per_seed)),
                      per_seed=tuple(per_seed), metric=env.metric,
                      n_episodes=n_episodes)


class GreedyPolicy:
    """Greedy argmax over a Q function applied to featurized states."""

    def __init__(self, featurizer: Featurizer, q_fn):
        self.featurizer = featurizer
        self.q_fn = q_fn

    def begin(self, env, obs) -> int:
        rep = self.featurizer.reset(env, obs)
        return int(np.argmax(self.q_fn(rep)))

    def step(self, obs, prev_action) -> int:
        rep = self.featurizer.update(obs, prev_action)
        return int(np.argmax(self.q_fn(rep)))


# ---------------------------------------------------------------------------
# Learning curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    step: int
    episode: int
    train_reward: float
    eval_reward_mean: float
    eval_reward_std: float
    seed: int


CURVE_HEADER = ("step", "episode", "train_reward",
                "eval_reward_mean", "eval_reward_std", "seed")


def write_curve_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for p in points:
            writer.writerow([p.step, p.episode, p.train_reward,
                             p.eval_reward_mean, p.eval_reward_std, p.seed])


def read_curve_csv(path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVE_HEADER:
        raise ShapeError(f"{path}: expected header {','.join(CURVE_HEADER)}")
    return [CurvePoint(step=int(r[0]), episode=int(r[1]), train_reward=float(r[2]),
                       eval_reward_mean=float(r[3]), eval_reward_std=float(r[4]),
                       seed=int(r[5]))
            for r in rows[1:]]


def _log_point(curve, policy, env, step, episode, recent, eval_episodes, seed):
    scores = _greedy_scores(policy, env, eval_episodes, seed)
    curve.append(CurvePoint(step=step, episode=episode,
                            train_reward=float(np.mean(recent)),
                            eval_reward_mean=float(np.mean(scores)),
                            eval_reward_std=float(np.std(scores)),
                            seed=seed))


# ---------------------------------------------------------------------------
# Tabular Q-learning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QLearnConfig:
    n_episodes: int = 1000
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    eval_every: int = 100
    eval_episodes: int = 30
    seed: int = 0


@dataclass
class QTable:
    n_actions: int
    alpha: float = 0.1
    gamma: float = 0.99
    values: dict = field(default_factory=dict)

    def q(self, state) -> np.ndarray:
        # unseen states read as zeros without being materialized
        v = self.values.get(int(state))
        return np.zeros(self.n_actions) if v is None else v

    def best_action(self, state) -> int:
        return int(np.argmax(self.q(state)))

    def update(self, s, a, reward, s2, done) -> None:
        v = self.values.setdefault(int(s), np.zeros(self.n_actions))
        bootstrap = 0.0 if done else float(self.q(s2).max())
        v[a] += self.alpha * (reward + self.gamma * bootstrap - v[a])


def tabular_q_learning(env, featurizer: Featurizer,
                       config: QLearnConfig = QLearnConfig()):
    """Online Q-learning over featurized ids; returns (QTable, curve)."""
    featurizer.bind(env)
    if not featurizer.discrete:
        raise ConfigError("tabular learning needs a featurizer that yields ids")
    table = QTable(n_actions=env.n_actions, alpha=config.alpha, gamma=config.gamma)
    policy = GreedyPolicy(featurizer, table.q)
    rng = stage_rng(config.seed, "rl")
    curve, recent, step = [], [], 0
    for ep in range(config.n_episodes):
        eps = epsilon_at(ep, config.n_episodes,
                         config.epsilon_start, config.epsilon_end)
        obs = env.reset(seed=episode_seed(config.seed, "rl", ep))
        s = featurizer.reset(env, obs)
        total, steps, done = 0.0, 0, False
        while not done:
            if rng.random() < eps:
                a = int(rng.integers(env.n_actions))
            else:
                a = table.best_action(s)
            stp = env.step(a)
            s2 = featurizer.update(stp.obs, a)
            # bootstrap through step-budget truncations; cut only at true ends
            table.update(s, a, stp.reward, s2, stp.done and not stp.truncated)
            total += stp.reward
            steps += 1
            done = stp.done
            s = s2
        recent.append(_episode_metric(env, total, steps))
        step += steps
        if (ep + 1) % config.eval_every == 0 or ep + 1 == config.n_episodes:
            _log_point(curve, policy, env, step, ep, recent,
                       config.eval_episodes, config.seed)
            recent = []
    return table, curve


def save_qtable(path, table: QTable) -> None:
    states = np.array(sorted(table.values), dtype=np.float64)
    stacked = (np.stack([table.values[int(s)] for s in states])
               if len(states) else np.zeros((0, table.n_actions)))
    save_checkpoint(path, {"states": states, "values": stacked,
                           "alpha": np.array([table.alpha]),
                           "gamma": np.array([table.gamma]),
                           "n_actions": np.array([float(table.n_actions)])})


def load_qtable(path) -> QTable:
    arrays = load_checkpoint(path)
    table = QTable(n_actions=int(arrays["n_actions"][0]),
                   alpha=float(arrays["alpha"][0]),
                   gamma=float(arrays["gamma"][0]))
    for sid, row in zip(arrays["states"], arrays["values"]):
        table.values[int(sid)] = np.asarray(row, dtype=np.float64)
    return table


# ---------------------------------------------------------------------------
# DQN
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DqnConfig:
    """Two fully-connected layers with a ReLU between; squared TD loss."""
    n_episodes: int = 1000
    hidden_dim: int = 64
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 500
    lr: float = 1e-3
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    eval_every: int = 100
    eval_episodes: int = 30
    seed: int = 0


@dataclass
class DqnNet:
    params: dict
    in_dim: int
    n_actions: int
    hidden_dim: int

    def params_np(self):
        return {k: v.data for k, v in self.params.items()}


def init_dqn(in_dim: int, n_actions: int, hidden_dim: int,
             rng: np.random.Generator) -> DqnNet:
    def t(shape, fan_in=None):
        return Tensor(uniform_init(rng, shape, fan_in))

    params = {"W1": t((in_dim, hidden_dim)), "b1": t((hidden_dim,), fan_in=in_dim),
              "W2": t((hidden_dim, n_actions)), "b2": t((n_actions,), fan_in=hidden_dim)}
    return DqnNet(params=params, in_dim=in_dim, n_actions=n_actions,
                  hidden_dim=hidden_dim)


def dqn_values_np(params_np, x: np.ndarray) -> np.ndarray:
    h = np.maximum(x @ params_np["W1"] + params_np["b1"], 0.0)
    return h @ params_np["W2"] + params_np["b2"]


def _dqn_forward(params, x: np.ndarray) -> Tensor:
    h = relu(add(matmul(Tensor(x), params["W1"]), params["b1"]))
    return add(matmul(h, params["W2"]), params["b2"])


def _check_divergence(loss: float, q_max: float, what: str) -> None:
    if not np.isfinite(loss) or q_max > Q_DIVERGENCE_LIMIT:
        raise TrainingError(f"{what} diverged: loss={loss!r}, max|Q|={q_max!r}")


def dqn_train(env, featurizer: Featurizer, config: DqnConfig = DqnConfig()):
    """Experience-replay DQN over featurized vectors; returns (DqnNet, curve).

    One gradient step per environment step once the buffer holds a batch;
    the target network syncs every `target_sync` updates.
    """
    featurizer.bind(env)
    rng = stage_rng(config.seed, "rl")
    net = init_dqn(featurizer.dim, env.n_actions, config.hidden_dim, rng)
    target = {k: v.data.copy() for k, v in net.params.items()}
    opt = RmspropState(lr=config.lr)
    buffer = deque(maxlen=config.replay_capacity)
    policy = GreedyPolicy(
        featurizer,
        lambda rep: dqn_values_np(net.params_np(),
                                  featurizer.as_vector(rep)[None, :])[0])
    curve, recent, step, updates = [], [], 0, 0
    for ep in range(config.n_episodes):
        eps = epsilon_at(ep, config.n_episodes,
                         config.epsilon_start, config.epsilon_end)
        obs = env.reset(seed=episode_seed(config.seed, "rl", ep))
        x = featurizer.as_vector(featurizer.reset(env, obs))
        total, steps, done = 0.0, 0, False
        while not done:
            if rng.random() < eps:
                a = int(rng.integers(env.n_actions))
            else:
                a = int(np.argmax(dqn_values_np(net.params_np(), x[None, :])[0]))
            stp = env.step(a)
            x2 = featurizer.as_vector(featurizer.update(stp.obs, a))
            terminal = stp.done and not stp.truncated
            buffer.append((x, a, stp.reward, x2, float(terminal)))
            total += stp.reward
            steps += 1
            done = stp.done
            x = x2
            if len(buffer) >= config.batch_size:
                idx = rng.integers(len(buffer), size=config.batch_size)
                batch = [buffer[i] for i in idx]
                bx = np.stack([b[0] for b in batch])
                ba = np.array([b[1] for b in batch], dtype=np.int64)
                br = np.array([b[2] for b in batch])
                bx2 = np.stack([b[3] for b in batch])
                bdone = np.array([b[4] for b in batch])
                boot = dqn_values_np(target, bx2).max(axis=1)
                targets = br + config.gamma * (1.0 - bdone) * boot
                with GradientTape() as tape:
                    q = _dqn_forward(net.params, bx)
                    loss = mse(select_columns(q, ba), targets)
                tape.backward(loss)
                grads = tape.grads(net.params)
                rmsprop_step(net.params, grads, opt)
                updates += 1
                _check_divergence(float(loss.data), float(np.abs(q.data).max()),
                                  "DQN")
                if updates % config.target_sync == 0:
                    target = {k: v.data.copy() for k, v in net.params.items()}
        recent.append(_episode_metric(env, total, steps))
        step += steps
        if (ep + 1) % config.eval_every == 0 or ep + 1 == config.n_episodes:
            _log_point(curve, policy, env, step, ep, recent,
                       config.eval_episodes, config.seed)
            recent = []
    return net, curve


def dqn_policy(net: DqnNet, featurizer: Featurizer) -> GreedyPolicy:
    return GreedyPolicy(
        featurizer,
        lambda rep: dqn_values_np(net.params_np(),
                                  featurizer.as_vector(rep)[None, :])[0])


def save_dqn(path, net: DqnNet) -> None:
    save_checkpoint(path, net.params_np())


def load_dqn(path) -> DqnNet:
    arrays = load_checkpoint(path)
    params = {k: Tensor(v) for k, v in arrays.items()}
    w1, w2 = params["W1"].data, params["W2"].data
    return DqnNet(params=params, in_dim=w1.shape[0], n_actions=w2.shape[1],
                  hidden_dim=w1.shape[1])


# ---------------------------------------------------------------------------
# DRQN
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DrqnConfig:
    n_episodes: int = 1000
    hidden_dim: int = 64
    embed_dim: int = 64
    replay_episodes: int = 500
    batch_episodes: int = 8
    updates_per_episode: int = 4
    target_sync: int = 100
    lr: float = 1e-3
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    eval_every: int = 100
    eval_episodes: int = 30
    seed: int = 0


@dataclass
class DrqnNet:
    params: dict
    obs_kind: tuple
    n_actions: int
    hidden_dim: int

    def params_np(self):
        return {k: v.data for k, v in self.params.items()}


def _obs_rows(obs_kind, obs_batch: np.ndarray) -> np.ndarray:
    if obs_kind[0] == "categorical":
        return one_hot(obs_batch, obs_kind[1])
    return np.asarray(obs_batch, dtype=np.float64)


def init_drqn(obs_kind, n_actions: int, hidden_dim: int, embed_dim: int,
              rng: np.random.Generator) -> DrqnNet:
    in_dim = obs_kind[1]

    def t(shape, fan_in=None):
        return Tensor(uniform_init(rng, shape, fan_in))

    params = {
        "enc/W": t((in_dim, embed_dim)), "enc/b": t((embed_dim,), fan_in=in_dim),
        "gru/Wz": t((embed_dim, hidden_dim)), "gru/Uz": t((hidden_dim, hidden_dim)),
        "gru/bz": t((hidden_dim,), fan_in=embed_dim),
        "gru/Wr": t((embed_dim, hidden_dim)), "gru/Ur": t((hidden_dim, hidden_dim)),
        "gru/br": t((hidden_dim,), fan_in=embed_dim),
        "gru/Wh": t((embed_dim, hidden_dim)), "gru/Uh": t((hidden_dim, hidden_dim)),
        "gru/bh": t((hidden_dim,), fan_in=embed_dim),
        "head/W": t((hidden_dim, n_actions)), "head/b": t((n_actions,), fan_in=hidden_dim),
    }
    return DrqnNet(params=params, obs_kind=tuple(obs_kind), n_actions=n_actions,
                   hidden_dim=hidden_dim)


def _drqn_hidden_np(net: DrqnNet, p, h: np.ndarray, obs) -> np.ndarray:
    row = (np.array([obs]) if net.obs_kind[0] == "categorical"
           else np.asarray(obs, dtype=np.float64).reshape(1, -1))
    x = np.maximum(_obs_rows(net.obs_kind, row) @ p["enc/W"] + p["enc/b"], 0.0)
    return gru_step_np(h, x, p)


def _drqn_q_np(p, h: np.ndarray) -> np.ndarray:
    return h @ p["head/W"] + p["head/b"]


class DrqnPolicy:
    """Greedy policy that carries the GRU state across an episode."""

    def __init__(self, net: DrqnNet):
        self.net = net
        self._h = None

    def begin(self, env, obs) -> int:
        del env
        p = self.net.params_np()
        self._h = _drqn_hidden_np(self.net, p,
                                  np.zeros((1, self.net.hidden_dim)), obs)
        return int(np.argmax(_drqn_q_np(p, self._h)[0]))

    def step(self, obs, prev_action) -> int:
        del prev_action  # recurrence conditions on observations only
        p = self.net.params_np()
        self._h = _drqn_hidden_np(self.net, p, self._h, obs)
        return int(np.argmax(_drqn_q_np(p, self._h)[0]))


def _pad_episodes(episodes, obs_kind):
    """Stack (obs, actions, rewards, terminal) tuples into padded arrays.

    Terminal episodes cut the bootstrap at their last step; truncated ones
    bootstrap through their final observation. Padded steps are masked out
    of the loss entirely.
    """
    B = len(episodes)
    T = max(len(e[1]) for e in episodes)
    if obs_kind[0] == "categorical":
        obs = np.zeros((B, T + 1), dtype=np.int64)
    else:
        obs = np.zeros((B, T + 1, obs_kind[1]))
    actions = np.zeros((B, T), dtype=np.int64)
    rewards = np.zeros((B, T))
    mask = np.zeros((B, T))
    done = np.zeros((B, T))
    for i, (o, a, r, terminal) in enumerate(episodes):
        n = len(a)
        obs[i, :n + 1] = o
        actions[i, :n] = a
        rewards[i, :n] = r
        mask[i, :n] = 1.0
        if terminal:
            done[i, n - 1] = 1.0
    return obs, actions, rewards, mask, done


def _drqn_unroll_np(net: DrqnNet, p, obs: np.ndarray) -> np.ndarray:
    """Q values (B, T+1, A) after consuming each observation, numpy only."""
    B = obs.shape[0]
    T1 = obs.shape[1]
    h = np.zeros((B, net.hidden_dim))
    out = np.empty((B, T1, net.n_actions))
    for t in range(T1):
        x = np.maximum(_obs_rows(net.obs_kind, obs[:, t]) @ p["enc/W"] + p["enc/b"], 0.0)
        h = gru_step_np(h, x, p)
        out[:, t] = _drqn_q_np(p, h)
    return out


def _drqn_update(net: DrqnNet, target_p, episodes, config: DrqnConfig,
                 opt: RmspropState) -> float:
    obs, actions, rewards, mask, done = _pad_episodes(episodes, net.obs_kind)
    B, T = actions.shape
    boot = _drqn_unroll_np(net, target_p, obs)[:, 1:].max(axis=2)
    targets = rewards + config.gamma * (1.0 - done) * boot       # (B, T)
    with GradientTape() as tape:
        h = Tensor(np.zeros((B, net.hidden_dim)))
        step_q = []
        for t in range(T):
            x = relu(add(matmul(Tensor(_obs_rows(net.obs_kind, obs[:, t])),
                                net.params["enc/W"]), net.params["enc/b"]))
            h = gru_step(h, x, net.params)
            step_q.append(add(matmul(h, net.params["head/W"]), net.params["head/b"]))
        q_all = concat(step_q, axis=0)                           # t-major (T*B, A)
        qa = select_columns(q_all, actions.T.reshape(-1))
        # padded steps are zeroed on both sides, contributing no gradient
        m = mask.T.reshape(-1)
        loss = mse(mul(qa, Tensor(m)), targets.T.reshape(-1) * m)
    tape.backward(loss)
    grads = tape.grads(net.params)
    rmsprop_step(net.params, grads, opt)
    _check_divergence(float(loss.data), float(np.abs(q_all.data).max()), "DRQN")
    return float(loss.data)


def drqn_train(env, config: DrqnConfig = DrqnConfig()):
    """Recurrent DQN on raw observations with whole-episode replay."""
    obs_kind = tuple(env.obs_kind)
    rng = stage_rng(config.seed, "rl")
    net = init_drqn(obs_kind, env.n_actions, config.hidden_dim,
                    config.embed_dim, rng)
    target_p = {k: v.data.copy() for k, v in net.params.items()}
    opt = RmspropState(lr=config.lr)
    buffer = deque(maxlen=config.replay_episodes)
    policy = DrqnPolicy(net)
    curve, recent, step, update_count = [], [], 0, 0
    for ep in range(config.n_episodes):
        eps = epsilon_at(ep, config.n_episodes,
                         config.epsilon_start, config.epsilon_end)
        obs = env.reset(seed=episode_seed(config.seed, "rl", ep))
        p = net.params_np()
        h = _drqn_hidden_np(net, p, np.zeros((1, net.hidden_dim)), obs)
        ep_obs, ep_act, ep_rew = [obs], [], []
        total, steps, done, terminal = 0.0, 0, False, False
        while not done:
            if rng.random() < eps:
                a = int(rng.integers(env.n_actions))
            else:
                a = int(np.argmax(_drqn_q_np(p, h)[0]))
            stp = env.step(a)
            h = _drqn_hidden_np(net, p, h, stp.obs)
            ep_obs.append(stp.obs)
            ep_act.append(a)
            ep_rew.append(stp.reward)
            total += stp.reward
            steps += 1
            done = stp.done
            terminal = stp.done and not stp.truncated
        if obs_kind[0] == "categorical":
            packed_obs = np.asarray(ep_obs, dtype=np.int64)
        else:
            packed_obs = np.stack([np.asarray(o, dtype=np.float64) for o in ep_obs])
        buffer.append((packed_obs, np.asarray(ep_act, dtype=np.int64),
                       np.asarray(ep_rew), terminal))
        if len(buffer) >= config.batch_episodes:
            for _ in range(config.updates_per_episode):
                idx = rng.integers(len(buffer), size=config.batch_episodes)
                _drqn_update(net, target_p, [buffer[i] for i in idx], config, opt)
                update_count += 1
                if update_count % config.target_sync == 0:
                    target_p = {k: v.data.copy() for k, v in net.params.items()}
        recent.append(_episode_metric(env, total, steps))
        step += steps
        if (ep + 1) % config.eval_every == 0 or ep + 1 == config.n_episodes:
            _log_point(curve, policy, env, step, ep, recent,
                       config.eval_episodes, config.seed)
            recent = []
    return net, curve


def save_drqn(path, net: DrqnNet) -> None:
    arrays = dict(net.params_np())
    arrays["meta/obs"] = np.array([1.0 if net.obs_kind[0] == "categorical" else 0.0,
                                   float(net.obs_kind[1])])
    save_checkpoint(path, arrays)


def load_drqn(path) -> DrqnNet:
    arrays = load_checkpoint(path)
    meta = arrays.pop("meta/obs")
    obs_kind = ("categorical" if meta[0] == 1.0 else "real", int(meta[1]))
    params = {k: Tensor(v) for k, v in arrays.items()}
    return DrqnNet(params=params, obs_kind=obs_kind,
                   n_actions=params["head/W"].data.shape[1],
                   hidden_dim=params["head/W"].data.shape[0])
