"""Recurrent next-step world model.

An observation encoder (3 dense layers, ReLU) and a previous-action embedding
feed a single GRU layer; its hidden state, concatenated with the embedding of
the current action, drives a 2-layer predictor of the next observation.
Categorical observations train with softmax cross-entropy (nats), real-valued
ones with mean squared error. Optimization is RMSprop over padded episode
batches with per-step masks, so variable-length episodes contribute exactly
their own steps.

Timing convention: the hidden state s_t incorporates (o_0 ... o_t) and
(a_0 ... a_{t-1}); paired with a_t it predicts o_{t+1}. A trajectory of T
steps therefore yields T (s_t, a_t, o_{t+1}) records.

Two forward implementations exist on purpose: the Tensor path used for
training and a plain-numpy path used for inference, export, and the online
tracker. Tests pin them to each other bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError
from .numerics import (
    GradientTape,
    RmspropState,
    Tensor,
    _sigmoid_np,
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
    scale,
    sigmoid,
    softmax_cross_entropy,
    softmax_np,
    tanh,
    uniform_init,
)

_CONFIG_KEY = "meta/config_json"


@dataclass(frozen=True)
class WorldModelConfig:
    obs_kind: tuple  # ("categorical", n) | ("real", d)
    n_actions: int
    obs_embed_dim: int = 64
    action_embed_dim: int = 64
    hidden_dim: int = 64
    predictor_hidden_dim: int = 64

    def __post_init__(self):
        kind, size = self.obs_kind
        if kind not in ("categorical", "real") or int(size) < 1:
            raise ConfigError(f"bad obs_kind {self.obs_kind!r}")
        if kind == "categorical" and int(size) < 2:
            raise ConfigError("categorical observations need >= 2 classes")
        if self.n_actions < 1:
            raise ConfigError("n_actions must be >= 1")

    @property
    def obs_input_dim(self) -> int:
        kind, size = self.obs_kind
        return int(size)

    @property
    def output_dim(self) -> int:
        return int(self.obs_kind[1])

    @property
    def is_categorical(self) -> bool:
        return self.obs_kind[0] == "categorical"

    @property
    def null_action(self) -> int:
        """Embedding row used before the first action of an episode."""
        return self.n_actions


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 40
    batch_size: int = 100
    lr: float = 1e-3
    seed: int = 0


@dataclass
class WorldModel:
    config: WorldModelConfig
    params: dict[str, Tensor]

    def params_np(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}


def init_world_model(config: WorldModelConfig, seed: int = 0) -> WorldModel:
    rng = np.random.default_rng(seed)
    F = config.obs_input_dim
    E = config.obs_embed_dim
    A = config.action_embed_dim
    H = config.hidden_dim
    P = config.predictor_hidden_dim
    C = config.output_dim
    X = E + A  # GRU input

    def t(shape, fan_in=None):
        return Tensor(uniform_init(rng, shape, fan_in))

    params = {
        "obs_mlp/W1": t((F, E)), "obs_mlp/b1": t((E,), fan_in=F),
        "obs_mlp/W2": t((E, E)), "obs_mlp/b2": t((E,), fan_in=E),
        "obs_mlp/W3": t((E, E)), "obs_mlp/b3": t((E,), fan_in=E),
        "act_embed/E": t((config.n_actions + 1, A), fan_in=config.n_actions + 1),
        "gru/Wz": t((X, H)), "gru/Uz": t((H, H)), "gru/bz": t((H,), fan_in=X),
        "gru/Wr": t((X, H)), "gru/Ur": t((H, H)), "gru/br": t((H,), fan_in=X),
        "gru/Wh": t((X, H)), "gru/Uh": t((H, H)), "gru/bh": t((H,), fan_in=X),
        "pred/W1": t((H + A, P)), "pred/b1": t((P,), fan_in=H + A),
        "pred/W2": t((P, C)), "pred/b2": t((C,), fan_in=P),
    }
    return WorldModel(config=config, params=params)


# ---------------------------------------------------------------------------
# Tensor forward (training path)
# ---------------------------------------------------------------------------

def gru_step(h: Tensor, x: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One gated update: z and r gates, candidate, convex mix with h.

    With all parameters zero this reduces to h' = 0.5 * h.
    """
    z = sigmoid(add(add(matmul(x, params["gru/Wz"]), matmul(h, params["gru/Uz"])),
                    params["gru/bz"]))
    r = sigmoid(add(add(matmul(x, params["gru/Wr"]), matmul(h, params["gru/Ur"])),
                    params["gru/br"]))
    hh = tanh(add(add(matmul(x, params["gru/Wh"]),
                      matmul(mul(r, h), params["gru/Uh"])),
                  params["gru/bh"]))
    # h + z * (hh - h) == (1 - z) * h + z * hh
    return add(h, mul(z, add(hh, scale(h, -1.0))))


def _mlp3(x: Tensor, params, prefix: str) -> Tensor:
    h = relu(add(matmul(x, params[f"{prefix}/W1"]), params[f"{prefix}/b1"]))
    h = relu(add(matmul(h, params[f"{prefix}/W2"]), params[f"{prefix}/b2"]))
    return relu(add(matmul(h, params[f"{prefix}/W3"]), params[f"{prefix}/b3"]))


def _predictor(h_and_act: Tensor, params) -> Tensor:
    p = relu(add(matmul(h_and_act, params["pred/W1"]), params["pred/b1"]))
    return add(matmul(p, params["pred/W2"]), params["pred/b2"])


def _obs_input(obs_rows: np.ndarray, config: WorldModelConfig) -> np.ndarray:
    if config.is_categorical:
        return one_hot(obs_rows, config.output_dim)
    return np.asarray(obs_rows, dtype=np.float64)


def forward_batch(model: WorldModel, obs: np.ndarray, actions: np.ndarray):
    """Unrolled tensor forward over a padded batch.

    obs: (B, T+1) ints or (B, T+1, d) floats; actions: (B, T) ints.
    Returns (stacked predictions Tensor of shape (T*B, C) ordered t-major,
    list of per-step hidden Tensors). Meant to run under a GradientTape.
    """
    cfg = model.config
    params = model.params
    B, T = actions.shape
    E = params["act_embed/E"]
    h = Tensor(np.zeros((B, cfg.hidden_dim)))
    step_preds = []
    hiddens = []
    null = np.full(B, cfg.null_action, dtype=np.int64)
    for t in range(T):
        prev = null if t == 0 else actions[:, t - 1]
        o_in = Tensor(_obs_input(obs[:, t], cfg))
        x = concat([_mlp3(o_in, params, "obs_mlp"),
                    matmul(Tensor(one_hot(prev, cfg.n_actions + 1)), E)], axis=1)
        h = gru_step(h, x, params)
        hiddens.append(h)
        a_now = matmul(Tensor(one_hot(actions[:, t], cfg.n_actions + 1)), E)
        step_preds.append(_predictor(concat([h, a_now], axis=1), params))
    return concat(step_preds, axis=0), hiddens


def sequence_loss(model: WorldModel, obs: np.ndarray, actions: np.ndarray,
                  mask: np.ndarray) -> Tensor:
    """Masked mean next-step loss over a padded batch (nats for categorical)."""
    cfg = model.config
    B, T = actions.shape
    preds, _ = forward_batch(model, obs, actions)
    if cfg.is_categorical:
        targets = obs[:, 1:].T.reshape(-1)  # t-major to match stacking
        return softmax_cross_entropy(preds, targets.astype(np.int64),
                                     weights=mask.T.reshape(-1))
    targets = obs[:, 1:].transpose(1, 0, 2).reshape(-1, cfg.output_dim)
    return mse(preds, targets, weights=mask.T.reshape(-1))


# ---------------------------------------------------------------------------
# Numpy inference path
# ---------------------------------------------------------------------------

def gru_step_np(h, x, p):
    z = _sigmoid_np(x @ p["gru/Wz"] + h @ p["gru/Uz"] + p["gru/bz"])
    r = _sigmoid_np(x @ p["gru/Wr"] + h @ p["gru/Ur"] + p["gru/br"])
    hh = np.tanh(x @ p["gru/Wh"] + (r * h) @ p["gru/Uh"] + p["gru/bh"])
    return h + z * (hh - h)


def _mlp3_np(x, p, prefix):
    h = np.maximum(x @ p[f"{prefix}/W1"] + p[f"{prefix}/b1"], 0.0)
    h = np.maximum(h @ p[f"{prefix}/W2"] + p[f"{prefix}/b2"], 0.0)
    return np.maximum(h @ p[f"{prefix}/W3"] + p[f"{prefix}/b3"], 0.0)


def predictor_np(p, h, actions, config: WorldModelConfig):
    """Raw predictor outputs (logits or real values) for hidden rows h."""
    a = one_hot(actions, config.n_actions + 1) @ p["act_embed/E"]
    x = np.concatenate([h, a], axis=1)
    ph = np.maximum(x @ p["pred/W1"] + p["pred/b1"], 0.0)
    return ph @ p["pred/W2"] + p["pred/b2"]


def rollout_hidden_np(model: WorldModel, obs: np.ndarray, actions: np.ndarray):
    """Hidden states (B, T, H) for a padded batch, numpy only."""
    cfg = model.config
    p = model.params_np()
    B, T = actions.shape
    h = np.zeros((B, cfg.hidden_dim))
    out = np.empty((B, T, cfg.hidden_dim))
    null = np.full(B, cfg.null_action, dtype=np.int64)
    for t in range(T):
        prev = null if t == 0 else actions[:, t - 1]
        x = np.concatenate([
            _mlp3_np(_obs_input(obs[:, t], cfg), p, "obs_mlp"),
            one_hot(prev, cfg.n_actions + 1) @ p["act_embed/E"],
        ], axis=1)
        h = gru_step_np(h, x, p)
        out[:, t] = h
    return out


class HiddenStateTracker:
    """Online hidden-state updates for one episode at a time."""

    def __init__(self, model: WorldModel):
        self.model = model
        self._p = model.params_np()
        self._h = None

    def begin(self, obs) -> np.ndarray:
        """Consume the first observation (no previous action)."""
        self._h = np.zeros((1, self.model.config.hidden_dim))
        return self.update(obs, None)

    def update(self, obs, prev_action) -> np.ndarray:
        if self._h is None:
            raise TrainingError("tracker used before begin()")
        cfg = self.model.config
        prev = cfg.null_action if prev_action is None else int(prev_action)
        obs_row = (np.array([obs]) if cfg.is_categorical
                   else np.asarray(obs, dtype=np.float64).reshape(1, -1))
        x = np.concatenate([
            _mlp3_np(_obs_input(obs_row, cfg), self._p, "obs_mlp"),
            one_hot([prev], cfg.n_actions + 1) @ self._p["act_embed/E"],
        ], axis=1)
        self._h = gru_step_np(self._h, x, self._p)
        return self._h[0].copy()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _pad_batch(trajs, config: WorldModelConfig):
    B = len(trajs)
    T = max(t.length for t in trajs)
    if config.is_categorical:
        obs = np.zeros((B, T + 1), dtype=np.int64)
    else:
        obs = np.zeros((B, T + 1, config.output_dim))
    actions = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    for i, tr in enumerate(trajs):
        L = tr.length
        if config.is_categorical:
            obs[i, :L + 1] = tr.observations
        else:
            obs[i, :L + 1] = np.stack(tr.observations)
        actions[i, :L] = tr.actions
        mask[i, :L] = 1.0
    return obs, actions, mask


def train_world_model(trajectories, config: WorldModelConfig,
                      settings: TrainSettings = TrainSettings()):
    """Fit the model on next-step prediction; returns (model, epoch losses).

    Raises TrainingError on a non-finite loss or gradient, naming the epoch.
    """
    if not trajectories:
        raise ConfigError("no trajectories to train on")
    for tr in trajectories:
        tr.validate()
    model = init_world_model(config, seed=settings.seed)
    opt = RmspropState(lr=settings.lr)
    order_rng = np.random.default_rng(settings.seed + 1)
    history = []
    idx = np.arange(len(trajectories))
    for epoch in range(settings.epochs):
        order_rng.shuffle(idx)
        total_loss, total_steps = 0.0, 0.0
        for lo in range(0, len(idx), settings.batch_size):
            batch = [trajectories[i] for i in idx[lo:lo + settings.batch_size]]
            obs, actions, mask = _pad_batch(batch, config)
            with GradientTape() as tape:
                loss = sequence_loss(model, obs, actions, mask)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"world model diverged at epoch {epoch}")
            tape.backward(loss)
            rmsprop_step(model.params, tape.grads(model.params), opt)
            steps = mask.sum()
            total_loss += value * steps
            total_steps += steps
        history.append(total_loss / total_steps)
    return model, history


def evaluate_log_loss(model: WorldModel, trajectories) -> float:
    """Mean next-step log-loss (nats) or MSE on held-out trajectories."""
    cfg = model.config
    p = model.params_np()
    total, steps = 0.0, 0
    for tr in trajectories:
        obs, actions, mask = _pad_batch([tr], cfg)
        hidden = rollout_hidden_np(model, obs, actions)[0]
        preds = predictor_np(p, hidden, actions[0], cfg)
        if cfg.is_categorical:
            targets = np.asarray(tr.observations[1:], dtype=np.int64)
            logp = np.log(softmax_np(preds)[np.arange(tr.length), targets])
            total += -logp.sum()
        else:
            targets = np.stack(tr.observations[1:])
            total += ((preds - targets) ** 2).mean(axis=1).sum()
        steps += tr.length
    return total / max(steps, 1)


# ---------------------------------------------------------------------------
# Hidden-state export
# ---------------------------------------------------------------------------

@dataclass
class HiddenDataset:
    """Per-step records aligned with the (s_t, a_t, o_{t+1}) convention.

    final_states optionally holds the hidden state after each episode's last
    observation. Terminal states never occur as regular records (nothing
    follows them to predict), yet a discretizer that never sees their hidden
    vectors will fold them into a neighboring code.
    """
    states: np.ndarray          # (N, H)
    actions: np.ndarray         # (N,)
    next_obs: np.ndarray        # (N,) ints or (N, d)
    obs: np.ndarray             # (N,) or (N, d): the observation consumed at t
    episode: np.ndarray         # (N,) episode index
    step: np.ndarray            # (N,) step index t
    labels: np.ndarray | None = None  # optional ground-truth state per record
    final_states: np.ndarray | None = None  # (n_episodes, H)
    final_labels: np.ndarray | None = None  # (n_episodes,)

    @property
    def n_records(self) -> int:
        return len(self.actions)

    @property
    def all_states(self) -> np.ndarray:
        """Regular and final hidden states stacked, for code-book fitting."""
        if self.final_states is None:
            return self.states
        return np.concatenate([self.states, self.final_states])


def export_hidden_dataset(model: WorldModel, trajectories,
                          labels: list[np.ndarray] | None = None,
                          include_final: bool = False) -> HiddenDataset:
    """Run the model over trajectories and collect one record per step.

    include_final also stores the hidden state after each episode's final
    observation; label arrays must then hold T+1 entries per episode.
    """
    cfg = model.config
    states, acts, nxt, cur, eps, steps = [], [], [], [], [], []
    labs = [] if labels is not None else None
    finals = [] if include_final else None
    final_labs = [] if include_final and labels is not None else None
    for i, tr in enumerate(trajectories):
        obs, actions, mask = _pad_batch([tr], cfg)
        if include_final:
            # one extra step consumes the final observation; the appended
            # action column is never read (step T uses the previous one)
            actions = np.concatenate([actions, actions[:, -1:]], axis=1)
        hidden = rollout_hidden_np(model, obs, actions)[0]
        L = tr.length
        states.append(hidden[:L])
        acts.append(np.asarray(tr.actions, dtype=np.int64))
        if cfg.is_categorical:
            nxt.append(np.asarray(tr.observations[1:], dtype=np.int64))
            cur.append(np.asarray(tr.observations[:-1], dtype=np.int64))
        else:
            nxt.append(np.stack(tr.observations[1:]))
            cur.append(np.stack(tr.observations[:-1]))
        eps.append(np.full(L, i, dtype=np.int64))
        steps.append(np.arange(L, dtype=np.int64))
        if finals is not None:
            finals.append(hidden[L])
        want = L + 1 if include_final else L
        if labs is not None:
            if len(labels[i]) != want:
                raise ShapeError(f"labels for episode {i} have wrong length")
            labs.append(np.asarray(labels[i][:L], dtype=np.int64))
            if final_labs is not None:
                final_labs.append(int(labels[i][L]))
    return HiddenDataset(
        states=np.concatenate(states),
        actions=np.concatenate(acts),
        next_obs=np.concatenate(nxt),
        obs=np.concatenate(cur),
        episode=np.concatenate(eps),
        step=np.concatenate(steps),
        labels=np.concatenate(labs) if labs is not None else None,
        final_states=np.stack(finals) if finals is not None else None,
        final_labels=(np.asarray(final_labs, dtype=np.int64)
                      if final_labs is not None else None),
    )


def teacher_distribution(model: WorldModel, states: np.ndarray,
                         actions: np.ndarray) -> np.ndarray:
    """Soft next-observation distribution the distillation student matches."""
    if not model.config.is_categorical:
        raise ConfigError("soft targets are defined for categorical observations")
    logits = predictor_np(model.params_np(), states, actions, model.config)
    return softmax_np(logits)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_world_model(path, model: WorldModel) -> None:
    arrays = {k: t.data for k, t in model.params.items()}
    meta = {
        "obs_kind": list(model.config.obs_kind),
        "n_actions": model.config.n_actions,
        "obs_embed_dim": model.config.obs_embed_dim,
        "action_embed_dim": model.config.action_embed_dim,
        "hidden_dim": model.config.hidden_dim,
        "predictor_hidden_dim": model.config.predictor_hidden_dim,
    }
    arrays[_CONFIG_KEY] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    save_checkpoint(path, arrays)


def load_world_model(path) -> WorldModel:
    arrays = load_checkpoint(path)
    if _CONFIG_KEY not in arrays:
        raise ConfigError(f"{path} lacks world-model metadata")
    meta = json.loads(arrays.pop(_CONFIG_KEY).tobytes().decode())
    kind, size = meta.pop("obs_kind")
    config = WorldModelConfig(obs_kind=(kind, int(size)), **meta)
    params = {k: Tensor(v) for k, v in arrays.items()}
    return WorldModel(config=config, params=params)
