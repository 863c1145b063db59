"""Unit tests for the autodiff core.

Analytic gradients are arbitrated by central finite differences (an
independent oracle that never touches the tape); closed-form values are
checked exactly where they exist.
"""
import numpy as np
import pytest

from cslab.errors import CheckpointError, ShapeError, TrainingError
from cslab.numerics import (
    GradientTape,
    RmspropState,
    Tensor,
    add,
    concat,
    load_checkpoint,
    log_softmax_np,
    matmul,
    mse,
    mul,
    one_hot,
    params_fingerprint,
    relu,
    rmsprop_step,
    save_checkpoint,
    scale,
    select_columns,
    sigmoid,
    softmax_cross_entropy,
    softmax_np,
    straight_through,
    tanh,
    uniform_init,
)

from gradcheck import check_grads

RNG = np.random.default_rng(20260823)
N_DRAWS = 50
TOL = 1e-4


def _rand(*shape):
    return RNG.normal(size=shape)


# ---------------------------------------------------------------------------
# Forward values
# ---------------------------------------------------------------------------

def test_matmul_small_product():
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.shape == (1, 1)
    assert out.data[0, 0] == 11.0


def test_matmul_identity():
    a = _rand(4, 4)
    out = matmul(Tensor(a), Tensor(np.eye(4)))
    np.testing.assert_array_equal(out.data, a)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(Tensor(_rand(2, 3)), Tensor(_rand(2, 3)))


def test_elementwise_values():
    x = Tensor([[1.0, -2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(relu(x).data, [[1.0, 0.0], [0.0, 3.0]])
    assert tanh(Tensor(0.0)).data == 0.0
    assert sigmoid(Tensor(0.0)).data == 0.5


def test_sigmoid_saturated_tails_are_finite():
    out = sigmoid(Tensor([-1000.0, 1000.0])).data
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[1] == 1.0


def test_add_bias_row_broadcast():
    out = add(Tensor(np.zeros((3, 2))), Tensor([1.0, 2.0]))
    np.testing.assert_array_equal(out.data, [[1, 2], [1, 2], [1, 2]])


def test_add_rejects_general_broadcast():
    with pytest.raises(ShapeError):
        add(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 1))))


def test_softmax_rows_normalized():
    for _ in range(20):
        logits = RNG.normal(scale=50.0, size=(6, 5))
        p = softmax_np(logits)
        assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-9
        assert (p >= 0).all()


def test_cross_entropy_uniform_logits():
    n, c = 7, 4
    loss = softmax_cross_entropy(Tensor(np.zeros((n, c))), np.zeros(n, dtype=int))
    assert abs(float(loss.data) - np.log(c)) < 1e-12


def test_cross_entropy_confident_correct_is_tiny():
    logits = np.full((3, 4), -50.0)
    logits[np.arange(3), [1, 2, 3]] = 50.0
    loss = softmax_cross_entropy(Tensor(logits), np.array([1, 2, 3]))
    assert float(loss.data) < 1e-9


def test_cross_entropy_soft_targets_match_entropy():
    logits = _rand(5, 3)
    p = softmax_np(logits)
    loss = softmax_cross_entropy(Tensor(logits), p)
    entropy = -(p * np.log(p)).sum(axis=1).mean()
    assert abs(float(loss.data) - entropy) < 1e-12


def test_cross_entropy_rejects_unnormalized_targets():
    bad = np.full((2, 3), 0.5)
    with pytest.raises(ShapeError):
        softmax_cross_entropy(Tensor(_rand(2, 3)), bad)


def test_cross_entropy_rejects_single_class():
    with pytest.raises(ShapeError):
        softmax_cross_entropy(Tensor(_rand(3, 1)), np.zeros(3, dtype=int))


def test_cross_entropy_row_weights():
    logits = _rand(4, 3)
    targets = np.array([0, 1, 2, 0])
    w = np.array([1.0, 0.0, 2.0, 1.0])
    loss = softmax_cross_entropy(Tensor(logits), targets, weights=w)
    logp = log_softmax_np(logits)
    per_row = -logp[np.arange(4), targets]
    assert abs(float(loss.data) - (per_row * w).sum() / w.sum()) < 1e-12


def test_mse_zero_and_gradient_formula():
    pred = Tensor(_rand(3, 4))
    assert float(mse(pred, pred.data.copy()).data) == 0.0
    target = _rand(3, 4)
    with GradientTape() as tape:
        loss = mse(pred, target)
    tape.backward(loss)
    np.testing.assert_allclose(pred.grad, 2.0 * (pred.data - target) / 12, rtol=0, atol=1e-15)


def test_mse_masked_rows_contribute_nothing():
    pred = Tensor(_rand(4, 3))
    target = np.zeros((4, 3))
    w = np.array([1.0, 1.0, 0.0, 1.0])
    with GradientTape() as tape:
        loss = mse(pred, target, weights=w)
    tape.backward(loss)
    assert np.all(pred.grad[2] == 0.0)
    manual = (pred.data[[0, 1, 3]] ** 2).sum() / (3.0 * 3)
    assert abs(float(loss.data) - manual) < 1e-12


def test_straight_through_round_identity_backward():
    x = Tensor(np.array([-0.7, 0.2, 0.9]))
    with GradientTape() as tape:
        y = straight_through(x, np.round)
        loss = mse(y, np.zeros(3))
    tape.backward(loss)
    np.testing.assert_array_equal(y.data, [-1.0, 0.0, 1.0])
    # Backward treats the rounding as identity: grad = 2*(round(x) - 0)/3.
    np.testing.assert_allclose(x.grad, 2.0 * y.data / 3, atol=1e-15)


def test_select_columns_forward_and_scatter():
    a = Tensor(np.arange(12, dtype=float).reshape(3, 4))
    idx = np.array([1, 0, 3])
    with GradientTape() as tape:
        picked = select_columns(a, idx)
        loss = mse(picked, np.zeros(3))
    tape.backward(loss)
    np.testing.assert_array_equal(picked.data, [1.0, 4.0, 11.0])
    expect = np.zeros((3, 4))
    expect[np.arange(3), idx] = 2.0 * picked.data / 3
    np.testing.assert_allclose(a.grad, expect, atol=1e-15)


def test_gradient_accumulates_across_consumers():
    x = Tensor(np.array([3.0]))
    with GradientTape() as tape:
        y = add(mul(x, x), x)  # y = x^2 + x, dy/dx = 2x + 1
    tape.backward(y)
    np.testing.assert_allclose(x.grad, [7.0], atol=1e-15)


def test_ops_outside_tape_record_nothing():
    with GradientTape() as tape:
        pass
    y = tanh(Tensor(np.ones(3)))
    assert tape.ops == [] and y.grad is None


# ---------------------------------------------------------------------------
# Finite-difference sweeps: every primitive, many random inputs
# ---------------------------------------------------------------------------

def _scalarize(t):
    return mse(t, np.zeros(t.data.shape))


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_matmul(draw):
    arrays = [_rand(3, 4), _rand(4, 2)]
    err = check_grads(lambda ts: _scalarize(matmul(ts[0], ts[1])), arrays)
    assert err < TOL


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_add_mul_broadcast_forms(draw):
    a, b, bias, s = _rand(3, 4), _rand(3, 4), _rand(4), _rand()
    def build(ts):
        ta, tb, tbias, ts_ = ts
        out = add(mul(ta, tb), tbias)
        out = mul(out, ts_)
        return _scalarize(out)
    assert check_grads(build, [a, b, bias, s]) < TOL


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_activations(draw):
    x = _rand(4, 5)
    # relu kinks at 0 break FD; nudge anything too close to the kink.
    x[np.abs(x) < 1e-3] += 0.01
    def build(ts):
        out = concat([tanh(ts[0]), sigmoid(ts[0]), relu(ts[0])], axis=1)
        return _scalarize(out)
    assert check_grads(build, [x]) < TOL


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_concat_axis0(draw):
    arrays = [_rand(2, 3), _rand(4, 3)]
    err = check_grads(lambda ts: _scalarize(concat(ts, axis=0)), arrays)
    assert err < TOL


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_cross_entropy_hard_and_soft(draw):
    logits = _rand(5, 4)
    hard = RNG.integers(0, 4, size=5)
    soft = softmax_np(_rand(5, 4))
    w = RNG.uniform(0.1, 2.0, size=5)
    def build(ts):
        a = softmax_cross_entropy(ts[0], hard)
        b = softmax_cross_entropy(ts[0], soft, weights=w)
        return add(a, b)
    assert check_grads(build, [logits]) < TOL


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_mse_weighted(draw):
    pred, target = _rand(4, 3), _rand(4, 3)
    w = RNG.uniform(0.0, 2.0, size=4)
    w[0] = 0.0
    err = check_grads(lambda ts: mse(ts[0], target, weights=w), [pred])
    assert err < TOL


@pytest.mark.parametrize("draw", range(N_DRAWS))
def test_fd_select_columns(draw):
    a = _rand(6, 5)
    idx = RNG.integers(0, 5, size=6)
    err = check_grads(lambda ts: _scalarize(select_columns(ts[0], idx)), [a])
    assert err < TOL


@pytest.mark.parametrize("draw", range(10))
def test_fd_composite_mlp_chain(draw):
    """A small dense net end to end: matmul/bias/activation/losses together."""
    x = _rand(5, 3)
    w1, b1 = _rand(3, 4), _rand(4)
    w2, b2 = _rand(4, 2), _rand(2)
    targets = RNG.integers(0, 2, size=5)
    def build(ts):
        tx, tw1, tb1, tw2, tb2 = ts
        h = tanh(add(matmul(tx, tw1), tb1))
        logits = add(matmul(h, tw2), tb2)
        return softmax_cross_entropy(logits, targets)
    assert check_grads(build, [x, w1, b1, w2, b2]) < TOL


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def test_rmsprop_zero_gradient_is_noop():
    p = Tensor(np.array([1.0, -2.0]))
    state = RmspropState(lr=0.1)
    rmsprop_step({"p": p}, {"p": np.zeros(2)}, state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_rmsprop_single_step_formula():
    p = Tensor(np.array([1.0]))
    state = RmspropState(lr=0.01, rho=0.9, eps=1e-8)
    g = np.array([1.0])
    rmsprop_step({"p": p}, {"p": g}, state)
    acc = 0.1 * 1.0  # rho*0 + (1-rho)*g^2
    expect = 1.0 - 0.01 * 1.0 / (np.sqrt(acc) + 1e-8)
    np.testing.assert_allclose(p.data, [expect], atol=1e-15)
    np.testing.assert_allclose(state.acc["p"], [acc], atol=1e-15)


def test_rmsprop_descends_quadratic():
    p = Tensor(np.array([5.0]))
    state = RmspropState(lr=0.05)
    for _ in range(200):
        rmsprop_step({"p": p}, {"p": 2.0 * p.data}, state)
    assert abs(float(p.data[0])) < 0.5


def test_rmsprop_rejects_nonfinite_gradient():
    p = Tensor(np.array([1.0]))
    with pytest.raises(TrainingError, match="p"):
        rmsprop_step({"p": p}, {"p": np.array([np.nan])}, RmspropState())


# ---------------------------------------------------------------------------
# Init, fingerprints, checkpoints, determinism
# ---------------------------------------------------------------------------

def test_uniform_init_bounds_and_determinism():
    a = uniform_init(np.random.default_rng(7), (200, 50))
    assert np.abs(a).max() <= 1.0 / np.sqrt(200)
    b = uniform_init(np.random.default_rng(7), (200, 50))
    np.testing.assert_array_equal(a, b)


def test_one_hot_basic():
    np.testing.assert_array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])
    with pytest.raises(ShapeError):
        one_hot([3], 3)


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "model.npz"
    arrays = {"layer/W": np.arange(6.0).reshape(2, 3), "layer/b": np.zeros(3)}
    save_checkpoint(path, arrays)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(arrays)
    for k in arrays:
        np.testing.assert_array_equal(loaded[k], arrays[k])


def test_checkpoint_keeps_exact_filename(tmp_path):
    # numpy would append .npz to a bare string path; the saver must not
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, {"w": np.ones(4)})
    assert path.exists()
    np.testing.assert_array_equal(load_checkpoint(path)["w"], np.ones(4))


def test_checkpoint_refuses_missing_magic(tmp_path):
    path = tmp_path / "plain.npz"
    np.savez(path, w=np.ones(3))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_refuses_garbage(tmp_path):
    path = tmp_path / "junk.npz"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_params_fingerprint_tracks_content():
    p = {"w": Tensor(np.ones(3))}
    before = params_fingerprint(p)
    assert params_fingerprint({"w": np.ones(3)}) == before
    p["w"].data[0] = 2.0
    assert params_fingerprint(p) != before


def test_forward_backward_bit_determinism():
    def run():
        rng = np.random.default_rng(99)
        w = Tensor(uniform_init(rng, (6, 4)))
        x = Tensor(rng.normal(size=(8, 6)))
        with GradientTape() as tape:
            loss = mse(tanh(matmul(x, w)), np.zeros((8, 4)))
        tape.backward(loss)
        return float(loss.data), w.grad.copy()
    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)
