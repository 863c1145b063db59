"""Hidden-state discretization: ternary bottleneck distillation and k-means.

Three interchangeable routes turn continuous hidden states into discrete ids:

* Qbn: an autoencoder whose bottleneck passes through a ternary activation
  g(x) = 1.5*tanh(x) + 0.5*tanh(-3x), rounded to {-1, 0, 1} with a
  straight-through backward (the gradient of g, ignoring the rounding).
  It trains by distillation against the frozen world model's soft next-step
  predictions plus a reconstruction term that keeps the code faithful to the
  full hidden state, not just its next-step-sufficient part.
* k-means with k-means++ seeding and minibatch updates.
* A codebook with exponential-moving-average updates over the same
  assignments (the vector-quantization flavor).

All three produce a DiscreteStateMap / centroid table that freezes after
fitting; inference maps unseen codes to the nearest known one so downstream
feature dimensions never move.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

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
    one_hot,
    relu,
    rmsprop_step,
    save_checkpoint,
    scale,
    softmax_cross_entropy,
    softmax_np,
    straight_through,
    tanh,
    uniform_init,
)
from .world_model import HiddenDataset, WorldModel, teacher_distribution

_META_KEY = "meta/json"


# ---------------------------------------------------------------------------
# Ternary activation
# ---------------------------------------------------------------------------

def ternary_activation_np(x: np.ndarray) -> np.ndarray:
    """Smooth tri-level squash: saturates near -1, 0, +1 with flat shoulders."""
    return 1.5 * np.tanh(x) + 0.5 * np.tanh(-3.0 * x)


def ternary_quantize_np(x: np.ndarray) -> np.ndarray:
    """Hard codes in {-1, 0, 1}: round the squashed value."""
    return np.round(ternary_activation_np(x))


def ternary_activation(x: Tensor) -> Tensor:
    return add(scale(tanh(x), 1.5), scale(tanh(scale(x, -3.0)), 0.5))


def ternary_bottleneck(x: Tensor) -> Tensor:
    """Quantized forward, straight-through backward (gradient of the squash)."""
    return straight_through(ternary_activation(x), np.round)


# ---------------------------------------------------------------------------
# QBN
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QbnConfig:
    bottleneck: int = 8
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    head_hidden: int = 64
    recon_weight: float = 1.0
    epochs: int = 15
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.bottleneck < 1:
            raise ConfigError("bottleneck must be >= 1")
        if self.recon_weight < 0:
            raise ConfigError("recon_weight must be >= 0")


@dataclass
class Qbn:
    config: QbnConfig
    state_dim: int
    n_actions: int
    n_obs: int
    params: dict[str, Tensor]

    def params_np(self):
        return {k: t.data for k, t in self.params.items()}


def init_qbn(config: QbnConfig, state_dim: int, n_actions: int, n_obs: int) -> Qbn:
    rng = np.random.default_rng(config.seed)
    H, eh, dh, hh = state_dim, config.encoder_hidden, config.decoder_hidden, config.head_hidden
    b, C = config.bottleneck, n_obs
    hin = b + n_actions

    def t(shape, fan_in=None):
        return Tensor(uniform_init(rng, shape, fan_in))

    params = {
        "enc/W1": t((H, eh)), "enc/b1": t((eh,), fan_in=H),
        "enc/W2": t((eh, b)), "enc/b2": t((b,), fan_in=eh),
        "dec/W1": t((b, dh)), "dec/b1": t((dh,), fan_in=b),
        "dec/W2": t((dh, H)), "dec/b2": t((H,), fan_in=dh),
        "head/W1": t((hin, hh)), "head/b1": t((hh,), fan_in=hin),
        "head/W2": t((hh, C)), "head/b2": t((C,), fan_in=hh),
    }
    return Qbn(config=config, state_dim=H, n_actions=n_actions, n_obs=C, params=params)


def _encode_pre(qbn: Qbn, s: Tensor) -> Tensor:
    h = tanh(add(matmul(s, qbn.params["enc/W1"]), qbn.params["enc/b1"]))
    return add(matmul(h, qbn.params["enc/W2"]), qbn.params["enc/b2"])


def _decode(qbn: Qbn, code: Tensor) -> Tensor:
    h = tanh(add(matmul(code, qbn.params["dec/W1"]), qbn.params["dec/b1"]))
    return add(matmul(h, qbn.params["dec/W2"]), qbn.params["dec/b2"])


def _head_logits(qbn: Qbn, code: Tensor, actions: np.ndarray) -> Tensor:
    x = concat([code, Tensor(one_hot(actions, qbn.n_actions))], axis=1)
    h = relu(add(matmul(x, qbn.params["head/W1"]), qbn.params["head/b1"]))
    return add(matmul(h, qbn.params["head/W2"]), qbn.params["head/b2"])


def encode_np(qbn: Qbn, states: np.ndarray) -> np.ndarray:
    """Hard ternary codes (N, b) as int8."""
    p = qbn.params_np()
    h = np.tanh(states @ p["enc/W1"] + p["enc/b1"])
    pre = h @ p["enc/W2"] + p["enc/b2"]
    return ternary_quantize_np(pre).astype(np.int8)


def head_logits_np(qbn: Qbn, codes: np.ndarray, actions: np.ndarray) -> np.ndarray:
    p = qbn.params_np()
    x = np.concatenate([codes.astype(np.float64), one_hot(actions, qbn.n_actions)], axis=1)
    h = np.maximum(x @ p["head/W1"] + p["head/b1"], 0.0)
    return h @ p["head/W2"] + p["head/b2"]


def train_qbn_distill(model: WorldModel, dataset: HiddenDataset,
                      config: QbnConfig = QbnConfig()):
    """Distill the frozen model's soft predictions through the ternary code.

    Loss per batch: cross-entropy(student logits, teacher distribution)
    + recon_weight * ||decode(code) - s||^2. The world model's parameters are
    never handed to the optimizer, so the recurrent core stays untouched.
    Returns (qbn, history) where history rows are (distill_nats, recon_mse).
    """
    if not model.config.is_categorical:
        raise ConfigError("distillation targets need categorical observations")
    qbn = init_qbn(config, state_dim=dataset.states.shape[1],
                   n_actions=model.config.n_actions, n_obs=model.config.output_dim)
    teacher = teacher_distribution(model, dataset.states, dataset.actions)
    # Guard against fp drift in the teacher rows before they become targets.
    teacher = teacher / teacher.sum(axis=1, keepdims=True)
    opt = RmspropState(lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    idx = np.arange(dataset.n_records)
    finals = dataset.final_states
    fin_idx = np.arange(len(finals)) if finals is not None else None
    history = []
    for epoch in range(config.epochs):
        rng.shuffle(idx)
        dist_sum, recon_sum, n = 0.0, 0.0, 0
        for lo in range(0, len(idx), config.batch_size):
            rows = idx[lo:lo + config.batch_size]
            s = Tensor(dataset.states[rows])
            with GradientTape() as tape:
                code = ternary_bottleneck(_encode_pre(qbn, s))
                logits = _head_logits(qbn, code, dataset.actions[rows])
                distill = softmax_cross_entropy(logits, teacher[rows])
                recon = mse(_decode(qbn, code), dataset.states[rows])
                loss = add(distill, scale(recon, config.recon_weight))
            if not np.isfinite(float(loss.data)):
                raise TrainingError(f"distillation diverged at epoch {epoch}")
            tape.backward(loss)
            rmsprop_step(qbn.params, tape.grads(qbn.params), opt)
            dist_sum += float(distill.data) * len(rows)
            recon_sum += float(recon.data) * len(rows)
            n += len(rows)
        if fin_idx is not None:
            # terminal hidden states have no next symbol to distill against;
            # they join training through the reconstruction term alone
            rng.shuffle(fin_idx)
            for lo in range(0, len(fin_idx), config.batch_size):
                rows = fin_idx[lo:lo + config.batch_size]
                with GradientTape() as tape:
                    code = ternary_bottleneck(_encode_pre(qbn, Tensor(finals[rows])))
                    loss = scale(mse(_decode(qbn, code), finals[rows]),
                                 config.recon_weight)
                if not np.isfinite(float(loss.data)):
                    raise TrainingError(f"distillation diverged at epoch {epoch}")
                tape.backward(loss)
                rmsprop_step(qbn.params, tape.grads(qbn.params), opt)
        history.append((dist_sum / n, recon_sum / n))
    return qbn, history


def student_log_loss(qbn: Qbn, dataset: HiddenDataset) -> float:
    """Mean nats of the discrete student against the actually observed next symbol."""
    codes = encode_np(qbn, dataset.states)
    logits = head_logits_np(qbn, codes, dataset.actions)
    probs = softmax_np(logits)
    rows = np.arange(dataset.n_records)
    return float(-np.log(probs[rows, dataset.next_obs.astype(np.int64)]).mean())


# ---------------------------------------------------------------------------
# Discrete state map
# ---------------------------------------------------------------------------

class DiscreteStateMap:
    """Code -> dense id table in first-seen order, with visit counts."""

    def __init__(self):
        self._ids: dict[tuple, int] = {}
        self._codes: list[tuple] = []
        self.counts: list[int] = []

    def __len__(self):
        return len(self._codes)

    @property
    def codes(self) -> list[tuple]:
        return list(self._codes)

    def get_or_add(self, code) -> int:
        key = tuple(int(v) for v in code)
        sid = self._ids.get(key)
        if sid is None:
            sid = len(self._codes)
            self._ids[key] = sid
            self._codes.append(key)
            self.counts.append(0)
        self.counts[sid] += 1
        return sid

    def lookup(self, code) -> int | None:
        return self._ids.get(tuple(int(v) for v in code))

    def nearest(self, code) -> int:
        """Closest known code by Hamming distance; ties pick the lowest id."""
        if not self._codes:
            raise ShapeError("empty state map")
        arr = np.asarray(self._codes)
        dist = (arr != np.asarray(code)[None, :]).sum(axis=1)
        return int(np.argmin(dist))

    def to_arrays(self):
        return np.asarray(self._codes, dtype=np.int64), np.asarray(self.counts, dtype=np.int64)

    @classmethod
    def from_arrays(cls, codes: np.ndarray, counts: np.ndarray) -> "DiscreteStateMap":
        m = cls()
        for code, cnt in zip(codes, counts):
            key = tuple(int(v) for v in code)
            m._ids[key] = len(m._codes)
            m._codes.append(key)
            m.counts.append(int(cnt))
        return m


def fit_state_map(qbn: Qbn, dataset: HiddenDataset) -> DiscreteStateMap:
    """Assign the training set once; every id ends with count >= 1.

    Final hidden states, when the dataset carries them, register their codes
    too, so terminal states get ids of their own."""
    smap = DiscreteStateMap()
    for code in encode_np(qbn, dataset.all_states):
        smap.get_or_add(code)
    return smap


# ---------------------------------------------------------------------------
# k-means and EMA codebook
# ---------------------------------------------------------------------------

@dataclass
class KmeansModel:
    centroids: np.ndarray           # (k, d)
    counts: np.ndarray              # full-data assignment counts
    kind: str = "kmeans"


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers[j] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _nearest(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Ties resolve to the lowest centroid index (argmin semantics).
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _repair_empty(X, centroids, rng):
    """Re-seed empty centroids at the points worst served by their centers."""
    for _ in range(centroids.shape[0]):
        assign = _nearest(X, centroids)
        counts = np.bincount(assign, minlength=len(centroids))
        empty = np.flatnonzero(counts == 0)
        if len(empty) == 0:
            return centroids, counts
        d2 = ((X - centroids[assign]) ** 2).sum(axis=1)
        for e in empty:
            far = int(np.argmax(d2))
            centroids[e] = X[far]
            d2[far] = 0.0
    assign = _nearest(X, centroids)
    return centroids, np.bincount(assign, minlength=len(centroids))


def fit_minibatch_kmeans(X: np.ndarray, k: int, seed: int = 0,
                         batch_size: int = 1024, iterations: int = 200) -> KmeansModel:
    """k-means++ seeding plus per-batch running-mean updates.

    Deterministic for a fixed seed; no centroid is empty after fitting (empty
    ones re-seed to the farthest points).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < k:
        raise ShapeError(f"need at least k={k} samples of equal dimension")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(X, k, rng)
    counts = np.zeros(k)
    for _ in range(iterations):
        rows = rng.integers(0, len(X), size=min(batch_size, len(X)))
        batch = X[rows]
        assign = _nearest(batch, centroids)
        for j in np.unique(assign):
            members = batch[assign == j]
            counts[j] += len(members)
            eta = len(members) / counts[j]
            centroids[j] = (1.0 - eta) * centroids[j] + eta * members.mean(axis=0)
    centroids, full_counts = _repair_empty(X, centroids, rng)
    return KmeansModel(centroids=centroids, counts=full_counts)


def fit_vq_codebook(X: np.ndarray, k: int, seed: int = 0, decay: float = 0.99,
                    batch_size: int = 1024, iterations: int = 200) -> KmeansModel:
    """Codebook learned by EMA over minibatch assignments (VQ-style)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < k:
        raise ShapeError(f"need at least k={k} samples of equal dimension")
    rng = np.random.default_rng(seed)
    codebook = _kmeanspp_init(X, k, rng)
    ema_counts = np.ones(k)
    ema_sums = codebook.copy()
    for _ in range(iterations):
        rows = rng.integers(0, len(X), size=min(batch_size, len(X)))
        batch = X[rows]
        assign = _nearest(batch, codebook)
        bc = np.bincount(assign, minlength=k).astype(np.float64)
        sums = np.zeros_like(codebook)
        np.add.at(sums, assign, batch)
        ema_counts = decay * ema_counts + (1.0 - decay) * bc
        ema_sums = decay * ema_sums + (1.0 - decay) * sums
        codebook = ema_sums / np.maximum(ema_counts, 1e-8)[:, None]
    codebook, counts = _repair_empty(X, codebook, rng)
    return KmeansModel(centroids=codebook, counts=counts, kind="vq")


def kmeans_inertia(model: KmeansModel, X: np.ndarray) -> float:
    assign = _nearest(X, model.centroids)
    return float(((X - model.centroids[assign]) ** 2).sum())


# ---------------------------------------------------------------------------
# Unified assignment interface
# ---------------------------------------------------------------------------

class StateMapper:
    """Maps hidden-state rows to frozen discrete ids.

    QBN route: encode to ternary codes, look up in the fitted map, fall back
    to the nearest known code. Centroid routes: nearest centroid. n_states is
    fixed at freeze time either way.
    """

    def __init__(self, kind: str, qbn: Qbn | None = None,
                 state_map: DiscreteStateMap | None = None,
                 kmeans: KmeansModel | None = None):
        if kind == "qbn":
            if qbn is None or state_map is None or len(state_map) == 0:
                raise ConfigError("qbn mapper needs a fitted qbn and a nonempty map")
        elif kind in ("kmeans", "vq"):
            if kmeans is None:
                raise ConfigError(f"{kind} mapper needs centroids")
        else:
            raise ConfigError(f"unknown mapper kind {kind!r}")
        self.kind = kind
        self.qbn = qbn
        self.state_map = state_map
        self.kmeans = kmeans

    @property
    def n_states(self) -> int:
        if self.kind == "qbn":
            return len(self.state_map)
        return len(self.kmeans.centroids)

    def assign(self, states: np.ndarray) -> np.ndarray:
        """Ids for (N, H) rows; a single row may be passed as (H,)."""
        states = np.asarray(states, dtype=np.float64)
        single = states.ndim == 1
        if single:
            states = states[None, :]
        if self.kind == "qbn":
            ids = np.empty(len(states), dtype=np.int64)
            for i, code in enumerate(encode_np(self.qbn, states)):
                found = self.state_map.lookup(code)
                ids[i] = self.state_map.nearest(code) if found is None else found
        else:
            ids = _nearest(states, self.kmeans.centroids)
        return ids[0] if single else ids


def assign(mapper: StateMapper, states: np.ndarray) -> np.ndarray:
    """Functional alias for StateMapper.assign."""
    return mapper.assign(states)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_discretizer(path, mapper: StateMapper) -> None:
    meta = {"kind": mapper.kind}
    arrays = {}
    if mapper.kind == "qbn":
        q = mapper.qbn
        meta["qbn"] = {"config": vars(q.config), "state_dim": q.state_dim,
                       "n_actions": q.n_actions, "n_obs": q.n_obs}
        for k, t in q.params.items():
            arrays[f"qbn/{k}"] = t.data
        codes, counts = mapper.state_map.to_arrays()
        arrays["map/codes"] = codes
        arrays["map/counts"] = counts
    else:
        arrays["centroids"] = mapper.kmeans.centroids
        arrays["counts"] = mapper.kmeans.counts
    arrays[_META_KEY] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    save_checkpoint(path, arrays)


def load_discretizer(path) -> StateMapper:
    arrays = load_checkpoint(path)
    if _META_KEY not in arrays:
        raise ConfigError(f"{path} lacks discretizer metadata")
    meta = json.loads(arrays.pop(_META_KEY).tobytes().decode())
    kind = meta["kind"]
    if kind == "qbn":
        info = meta["qbn"]
        qbn = Qbn(config=QbnConfig(**info["config"]), state_dim=info["state_dim"],
                  n_actions=info["n_actions"], n_obs=info["n_obs"],
                  params={k[len("qbn/"):]: Tensor(v) for k, v in arrays.items()
                          if k.startswith("qbn/")})
        smap = DiscreteStateMap.from_arrays(arrays["map/codes"], arrays["map/counts"])
        return StateMapper("qbn", qbn=qbn, state_map=smap)
    model = KmeansModel(centroids=arrays["centroids"], counts=arrays["counts"], kind=kind)
    return StateMapper(kind, kmeans=model)
