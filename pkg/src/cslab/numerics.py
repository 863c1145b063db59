"""Minimal reverse-mode autodiff on float64 numpy arrays.

The training stack in this package runs on a small set of hand-written
primitives instead of a framework. Every op computes its forward value
eagerly and, when a GradientTape is active, appends a backward closure to the
tape. Replaying the tape in reverse visits each op exactly once in reverse
topological order (ops are recorded in execution order, so reversal is
enough); gradients accumulate additively when a tensor feeds several
consumers.

Scope is deliberately narrow: 2-d matmul, elementwise arithmetic with bias
broadcasting, the activations the models need, concat, the two losses, a
straight-through wrapper, and RMSprop. No convolutions, no general
broadcasting.
"""
from __future__ import annotations

import zipfile
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointError, ShapeError, TrainingError

CHECKPOINT_MAGIC = "CSLAB-CKPT-1"
_MAGIC_KEY = "__CSLAB_MAGIC__"


# ---------------------------------------------------------------------------
# Tensor and tape
# ---------------------------------------------------------------------------

class Tensor:
    """A float64 array plus the gradient slot filled in by Tape.backward."""

    __slots__ = ("data", "grad", "name")

    def __init__(self, data, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"


# Innermost active tape records ops; with no tape, ops are pure forward.
_TAPE_STACK: list["GradientTape"] = []


class GradientTape:
    """Records ops executed inside a `with` block and replays them backward.

    backward(loss) seeds d(loss)/d(loss) = 1, walks the op list in reverse,
    and writes the accumulated gradient (or None) into .grad of every tensor
    the tape touched. Each call recomputes grads from scratch; nothing
    accumulates across calls.
    """

    def __init__(self):
        # (output, inputs, backward_fn); backward_fn(g_out) returns one
        # gradient array (or None) per input, in order.
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self, "tape stack corrupted"
        return False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.ops.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        gmap: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        touched: dict[int, Tensor] = {id(loss): loss}
        for out, inputs, bwd in reversed(self.ops):
            touched[id(out)] = out
            g = gmap.pop(id(out), None)
            if g is None:
                continue
            for t, gt in zip(inputs, bwd(g)):
                touched[id(t)] = t
                if gt is None:
                    continue
                acc = gmap.get(id(t))
                gmap[id(t)] = gt if acc is None else acc + gt
        for tid, t in touched.items():
            t.grad = gmap.get(tid)

    def grads(self, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradient arrays for a named parameter dict (zeros if untouched)."""
        out = {}
        for name, t in params.items():
            out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return out


def _record(out, inputs, backward):
    if _TAPE_STACK:
        _TAPE_STACK[-1].record(out, inputs, backward)
    return out


def tape_active() -> bool:
    return bool(_TAPE_STACK)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul needs (m,k)@(k,n), got {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), backward)


def _broadcast_ok(sa, sb):
    # Equal shapes, a scalar on either side, or (n,d) against a (d,) row.
    if sa == sb or sa == () or sb == ():
        return True
    if len(sa) == 2 and sb == (sa[1],):
        return True
    if len(sb) == 2 and sa == (sb[1],):
        return True
    return False


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # (d,) operand broadcast against (n,d): sum over rows.
    return g.sum(axis=0)


def add(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcast_ok(a.data.shape, b.data.shape):
        raise ShapeError(f"add shapes {a.data.shape} + {b.data.shape} unsupported")
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if not _broadcast_ok(a.data.shape, b.data.shape):
        raise ShapeError(f"mul shapes {a.data.shape} * {b.data.shape} unsupported")
    out = Tensor(a.data * b.data)

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (no gradient flows into c)."""
    c = float(c)
    out = Tensor(a.data * c)
    return _record(out, (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    return _record(out, (a,), lambda g: (g * (1.0 - out.data ** 2),))


def _sigmoid_np(x):
    # Stable in both tails: never exponentiates a positive number.
    pos = x >= 0
    z = np.empty_like(x)
    z[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    z[~pos] = e / (1.0 + e)
    return z


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(_sigmoid_np(a.data))
    return _record(out, (a,), lambda g: (g * out.data * (1.0 - out.data),))


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    return _record(out, (a,), lambda g: (g * (a.data > 0.0),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    nd = parts[0].data.ndim
    ax = axis % nd
    for p in parts:
        if p.data.ndim != nd:
            raise ShapeError("concat rank mismatch")
        for d in range(nd):
            if d != ax and p.data.shape[d] != parts[0].data.shape[d]:
                raise ShapeError("concat off-axis shape mismatch")
    out = Tensor(np.concatenate([p.data for p in parts], axis=ax))
    sizes = [p.data.shape[ax] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _record(out, tuple(parts), backward)


def select_columns(a: Tensor, idx) -> Tensor:
    """Pick a[i, idx[i]] for each row; backward scatters into the picks."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2 or idx.shape != (a.data.shape[0],):
        raise ShapeError(f"select_columns needs (n,c) and idx (n,), got {a.data.shape}, {idx.shape}")
    if idx.min(initial=0) < 0 or idx.max(initial=-1) >= a.data.shape[1]:
        raise ShapeError("select_columns index out of range")
    rows = np.arange(a.data.shape[0])
    out = Tensor(a.data[rows, idx])

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g
        return (ga,)

    return _record(out, (a,), backward)


def straight_through(a: Tensor, transform: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    """Apply a non-differentiable transform; backward passes gradients through unchanged."""
    out = Tensor(transform(a.data))
    if out.data.shape != a.data.shape:
        raise ShapeError("straight_through transform must preserve shape")
    return _record(out, (a,), lambda g: (g,))


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def softmax_np(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of an (n, c) array; rows sum to 1 exactly up to fp error."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_weights(weights, n):
    if weights is None:
        return None, float(n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ShapeError(f"weights must be ({n},), got {w.shape}")
    if (w < 0).any():
        raise ShapeError("weights must be nonnegative")
    total = float(w.sum())
    if total <= 0:
        raise ShapeError("weights sum to zero")
    return w, total


def softmax_cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Mean cross-entropy in nats between softmax(logits) and targets.

    targets is a constant: either int class ids (n,) or a soft distribution
    (n, c) whose rows must sum to 1 within 1e-6. Optional nonnegative row
    weights turn the plain mean into a weighted mean (used to mask padded
    rows). Gradient w.r.t. logits is (softmax - target) scaled per row.
    """
    if logits.data.ndim != 2 or logits.data.shape[1] < 2:
        raise ShapeError(f"logits must be (n, c>=2), got {logits.data.shape}")
    n, c = logits.data.shape
    t = np.asarray(targets)
    if t.dtype.kind in "iu":
        if t.shape != (n,):
            raise ShapeError(f"class targets must be ({n},), got {t.shape}")
        if t.min(initial=0) < 0 or t.max(initial=-1) >= c:
            raise ShapeError("class target out of range")
        t = np.eye(c, dtype=np.float64)[t]
    else:
        t = t.astype(np.float64)
        if t.shape != (n, c):
            raise ShapeError(f"soft targets must be ({n},{c}), got {t.shape}")
        if np.abs(t.sum(axis=1) - 1.0).max() > 1e-6:
            raise ShapeError("soft target rows must sum to 1 within 1e-6")
    w, total = _check_weights(weights, n)
    logp = log_softmax_np(logits.data)
    per_row = -(t * logp).sum(axis=1)
    loss = (per_row if w is None else per_row * w).sum() / total
    out = Tensor(loss)
    row_scale = (np.full(n, 1.0 / total) if w is None else w / total)

    def backward(g):
        p = softmax_np(logits.data)
        return (g * (p - t) * row_scale[:, None],)

    return _record(out, (logits,), backward)


def mse(pred: Tensor, target, weights=None) -> Tensor:
    """Mean squared error over all elements; gradient 2*(pred-target)/N.

    Optional per-row weights (pred 2-d) reweight rows, keeping the mean
    normalization, so masked rows contribute exactly zero loss and gradient.
    """
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.data.shape:
        raise ShapeError(f"mse shapes differ: {pred.data.shape} vs {t.shape}")
    d = pred.data - t
    if weights is None:
        n = d.size if d.size else 1
        out = Tensor((d ** 2).sum() / n)
        return _record(out, (pred,), lambda g: (g * 2.0 * d / n,))
    if pred.data.ndim != 2:
        raise ShapeError("row weights need 2-d pred")
    w, total = _check_weights(weights, pred.data.shape[0])
    cols = pred.data.shape[1]
    out = Tensor(((d ** 2) * w[:, None]).sum() / (total * cols))
    return _record(out, (pred,), lambda g: (g * 2.0 * d * w[:, None] / (total * cols),))


# ---------------------------------------------------------------------------
# Parameters, initialization, optimizer
# ---------------------------------------------------------------------------

def uniform_init(rng: np.random.Generator, shape, fan_in: int | None = None) -> np.ndarray:
    """Uniform in +-1/sqrt(fan_in); fan_in defaults to the first dimension."""
    if fan_in is None:
        if not shape:
            raise ShapeError("scalar init needs explicit fan_in")
        fan_in = shape[0]
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape)


def one_hot(ids, depth: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.min(initial=0) < 0 or ids.max(initial=-1) >= depth:
        raise ShapeError("one_hot id out of range")
    return np.eye(depth, dtype=np.float64)[ids]


@dataclass
class RmspropState:
    """Squared-gradient accumulators plus hyperparameters."""
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    acc: dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
                 state: RmspropState) -> None:
    """In-place RMSprop update: acc <- rho*acc + (1-rho)*g^2; p -= lr*g/(sqrt(acc)+eps).

    Zero gradient leaves a parameter untouched (acc still decays). Raises
    TrainingError naming the parameter if a gradient is non-finite.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        acc = state.acc.get(name)
        if acc is None:
            acc = np.zeros_like(p.data)
        acc = state.rho * acc + (1.0 - state.rho) * g * g
        state.acc[name] = acc
        p.data -= state.lr * g / (np.sqrt(acc) + state.eps)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float arrays to a single file with a magic version entry."""
    payload = {_MAGIC_KEY: np.frombuffer(CHECKPOINT_MAGIC.encode(), dtype=np.uint8)}
    for name, a in arrays.items():
        if name == _MAGIC_KEY:
            raise CheckpointError(f"array name {name!r} is reserved")
        payload[name] = np.asarray(a)
    # write through a handle so numpy cannot append .npz to the name
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Load a checkpoint; refuses files without the expected magic header."""
    try:
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    magic = data.pop(_MAGIC_KEY, None)
    if magic is None or magic.tobytes().decode(errors="replace") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    return data


def params_fingerprint(params: dict[str, Tensor | np.ndarray]) -> str:
    """Order-independent hash of parameter names and exact byte contents."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(params):
        a = params[name]
        a = a.data if isinstance(a, Tensor) else a
        h.update(name.encode())
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Finite differences (the independent gradient oracle used by the tests)
# ---------------------------------------------------------------------------

def numeric_gradient(f: Callable[[], float], arrays: Sequence[np.ndarray],
                     h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of a scalar function of in-place arrays.

    f() must recompute the loss from the current contents of `arrays`; each
    entry is perturbed elementwise. Deliberately framework-free so it can
    arbitrate the tape's analytic gradients.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom)
