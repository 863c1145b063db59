"""World-model tests: exact GRU algebra, gradient checks against finite
differences, path consistency, and learning behavior on processes with known
entropy floors."""
import numpy as np
import pytest

from cslab.envs import ToyProcess, ToyProcessConfig, rollout_random
from cslab.envs.trajectory import Trajectory
from cslab.errors import ConfigError, TrainingError
from cslab.numerics import GradientTape, Tensor, mse, params_fingerprint
from cslab.world_model import (
    HiddenStateTracker,
    TrainSettings,
    WorldModelConfig,
    evaluate_log_loss,
    export_hidden_dataset,
    forward_batch,
    gru_step,
    init_world_model,
    load_world_model,
    predictor_np,
    rollout_hidden_np,
    save_world_model,
    sequence_loss,
    train_world_model,
)

from gradcheck import check_grads

ENTROPY_22 = 0.5623351446188083  # binary H(0.75) in nats
TINY = WorldModelConfig(obs_kind=("categorical", 2), n_actions=2,
                        obs_embed_dim=5, action_embed_dim=4, hidden_dim=3,
                        predictor_hidden_dim=6)


def _zero_gru_params(x_dim, h_dim):
    shapes = {"Wz": (x_dim, h_dim), "Uz": (h_dim, h_dim), "bz": (h_dim,),
              "Wr": (x_dim, h_dim), "Ur": (h_dim, h_dim), "br": (h_dim,),
              "Wh": (x_dim, h_dim), "Uh": (h_dim, h_dim), "bh": (h_dim,)}
    return {f"gru/{k}": Tensor(np.zeros(s)) for k, s in shapes.items()}


def test_gru_step_zero_params_halves_hidden():
    params = _zero_gru_params(4, 3)
    h = Tensor(np.random.default_rng(0).normal(size=(5, 3)))
    x = Tensor(np.random.default_rng(1).normal(size=(5, 4)))
    out = gru_step(h, x, params)
    np.testing.assert_allclose(out.data, 0.5 * h.data, atol=1e-15)


@pytest.mark.parametrize("draw", range(10))
def test_gru_step_gradients(draw):
    rng = np.random.default_rng(100 + draw)
    x_dim, h_dim, batch = 3, 2, 4
    names = ["Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"]
    arrays = [rng.normal(size=(batch, h_dim)), rng.normal(size=(batch, x_dim))]
    for n in names:
        if n.startswith("W"):
            arrays.append(rng.normal(size=(x_dim, h_dim)))
        elif n.startswith("U"):
            arrays.append(rng.normal(size=(h_dim, h_dim)))
        else:
            arrays.append(rng.normal(size=(h_dim,)))

    def build(ts):
        params = {f"gru/{n}": t for n, t in zip(names, ts[2:])}
        out = gru_step(ts[0], ts[1], params)
        return mse(out, np.zeros((batch, h_dim)))

    assert check_grads(build, arrays) < 1e-4


def _toy_trajs(n, length, seed, cfg=None):
    cfg = cfg or ToyProcessConfig(alphabet_size=2, memory=2, p=0.75,
                                  episode_length=length)
    return rollout_random(ToyProcess(cfg), n, master_seed=seed), cfg


def test_single_step_trajectory_yields_one_prediction():
    model = init_world_model(TINY, seed=0)
    obs = np.array([[1, 0]])
    actions = np.array([[1]])
    preds, hiddens = forward_batch(model, obs, actions)
    assert preds.data.shape == (1, 2)
    assert len(hiddens) == 1


def test_tensor_and_numpy_paths_agree():
    model = init_world_model(TINY, seed=3)
    trajs, _ = _toy_trajs(4, 12, seed=5)
    from cslab.world_model import _pad_batch
    obs, actions, mask = _pad_batch(trajs, TINY)
    preds_t, hiddens_t = forward_batch(model, obs, actions)
    hidden_np = rollout_hidden_np(model, obs, actions)
    stacked_t = np.stack([h.data for h in hiddens_t], axis=1)
    np.testing.assert_allclose(stacked_t, hidden_np, atol=1e-12)
    p = model.params_np()
    for t in range(actions.shape[1]):
        rows = predictor_np(p, hidden_np[:, t], actions[:, t], TINY)
        np.testing.assert_allclose(preds_t.data[t * 4:(t + 1) * 4], rows, atol=1e-12)


def test_tracker_matches_batch_rollout():
    model = init_world_model(TINY, seed=7)
    trajs, _ = _toy_trajs(1, 15, seed=9)
    tr = trajs[0]
    from cslab.world_model import _pad_batch
    obs, actions, _ = _pad_batch([tr], TINY)
    hidden = rollout_hidden_np(model, obs, actions)[0]
    tracker = HiddenStateTracker(model)
    h = tracker.begin(tr.observations[0])
    np.testing.assert_allclose(h, hidden[0], atol=1e-12)
    for t in range(1, tr.length):
        h = tracker.update(tr.observations[t], tr.actions[t - 1])
        np.testing.assert_allclose(h, hidden[t], atol=1e-12)


def test_unrolled_sequence_loss_gradients():
    """End-to-end BPTT gradient vs finite differences on a 5-step episode."""
    rng = np.random.default_rng(17)
    model = init_world_model(TINY, seed=11)
    obs = rng.integers(0, 2, size=(2, 6))
    actions = rng.integers(0, 2, size=(2, 5))
    mask = np.ones((2, 5))
    names = sorted(model.params)
    arrays = [model.params[n].data for n in names]

    def build(ts):
        m = type(model)(config=TINY, params={n: t for n, t in zip(names, ts)})
        return sequence_loss(m, obs, actions, mask)

    assert check_grads(build, arrays, h=1e-5) < 1e-3


def test_training_is_deterministic():
    trajs, _ = _toy_trajs(20, 20, seed=1)
    settings = TrainSettings(epochs=3, batch_size=10, lr=1e-3, seed=4)
    cfg = WorldModelConfig(obs_kind=("categorical", 2), n_actions=2)
    m1, h1 = train_world_model(trajs, cfg, settings)
    m2, h2 = train_world_model(trajs, cfg, settings)
    assert h1 == h2
    assert params_fingerprint(m1.params) == params_fingerprint(m2.params)


def test_training_rejects_empty_input():
    cfg = WorldModelConfig(obs_kind=("categorical", 2), n_actions=2)
    with pytest.raises(ConfigError):
        train_world_model([], cfg)


def test_constant_process_loss_vanishes():
    # All-zero observations: the model should become certain of class 0.
    trajs = [Trajectory(observations=[0] * 11, actions=[0] * 10, rewards=[0.0] * 10)
             for _ in range(30)]
    cfg = WorldModelConfig(obs_kind=("categorical", 2), n_actions=1,
                           obs_embed_dim=8, action_embed_dim=8, hidden_dim=8,
                           predictor_hidden_dim=8)
    _, hist = train_world_model(trajs, cfg, TrainSettings(epochs=40, batch_size=30,
                                                          lr=3e-3, seed=0))
    assert hist[-1] < 0.1


def test_shuffled_observations_stay_at_chance():
    """Permuting observations in time destroys the signal; held-out loss
    should sit at the ln|O| chance floor."""
    rng = np.random.default_rng(23)
    trajs, cfg = _toy_trajs(100, 50, seed=2)
    for tr in trajs:
        rng.shuffle(tr.observations)
    held, _ = _toy_trajs(50, 50, seed=3)
    for tr in held:
        rng.shuffle(tr.observations)
    wm_cfg = WorldModelConfig(obs_kind=("categorical", 2), n_actions=2)
    model, _ = train_world_model(trajs, wm_cfg,
                                 TrainSettings(epochs=10, batch_size=100, lr=2e-3, seed=0))
    loss = evaluate_log_loss(model, held)
    assert abs(loss - np.log(2)) < 0.05


def test_near_deterministic_process_is_memorized():
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.995, episode_length=50)
    trajs = rollout_random(ToyProcess(cfg), 300, master_seed=4)
    wm_cfg = WorldModelConfig(obs_kind=("categorical", 2), n_actions=2)
    model, _ = train_world_model(trajs, wm_cfg,
                                 TrainSettings(epochs=35, batch_size=100, lr=2e-3, seed=0))
    held = rollout_random(ToyProcess(cfg), 30, master_seed=5)
    ds = export_hidden_dataset(model, held)
    p = model.params_np()
    logits = predictor_np(p, ds.states, ds.actions, wm_cfg)
    # The generative rule: target symbol = (o_{t-2} + a_t) mod 2.
    targets = []
    for tr in held:
        padwin = [0, 0, 0]
        for t in range(tr.length):
            win = (padwin + tr.observations[:t + 1])[-3:]
            targets.append((win[0] + tr.actions[t]) % 2)
    targets = np.asarray(targets)
    acc = float((np.argmax(logits, axis=1) == targets).mean())
    assert acc >= 0.99


def test_export_dataset_alignment():
    model = init_world_model(TINY, seed=0)
    trajs, cfg = _toy_trajs(3, 8, seed=6)
    from cslab.envs.toy import toy_trajectory_labels
    labels = [toy_trajectory_labels(t, cfg) for t in trajs]
    ds = export_hidden_dataset(model, trajs, labels=labels)
    assert ds.n_records == sum(t.length for t in trajs)
    assert ds.states.shape == (ds.n_records, TINY.hidden_dim)
    flat_next = [o for t in trajs for o in t.observations[1:]]
    np.testing.assert_array_equal(ds.next_obs, flat_next)
    flat_cur = [o for t in trajs for o in t.observations[:-1]]
    np.testing.assert_array_equal(ds.obs, flat_cur)
    assert ds.labels is not None and len(ds.labels) == ds.n_records
    assert ds.episode[0] == 0 and ds.episode[-1] == 2


def test_export_with_final_states():
    # planning needs the post-terminal hidden state in the dataset too
    model = init_world_model(TINY, seed=0)
    trajs, cfg = _toy_trajs(3, 8, seed=6)
    from cslab.envs.toy import toy_trajectory_labels
    labels = [toy_trajectory_labels(t, cfg, include_final=True) for t in trajs]
    ds = export_hidden_dataset(model, trajs, labels=labels, include_final=True)
    assert ds.final_states.shape == (3, TINY.hidden_dim)
    assert ds.all_states.shape == (ds.n_records + 3, TINY.hidden_dim)
    np.testing.assert_array_equal(ds.all_states[:ds.n_records], ds.states)
    tr = trajs[0]
    tracker = HiddenStateTracker(model)
    h = tracker.begin(tr.observations[0])
    for t, action in enumerate(tr.actions):
        h = tracker.update(tr.observations[t + 1], int(action))
    np.testing.assert_allclose(ds.final_states[0], h, atol=1e-12)
    assert list(ds.final_labels) == [lab[-1] for lab in labels]

    plain = export_hidden_dataset(model, trajs)
    assert plain.final_states is None
    np.testing.assert_array_equal(plain.all_states, plain.states)

    from cslab.errors import ShapeError
    short = [lab[:-1] for lab in labels]
    with pytest.raises(ShapeError):
        export_hidden_dataset(model, trajs, labels=short, include_final=True)


def test_save_load_roundtrip(tmp_path):
    model = init_world_model(TINY, seed=13)
    path = tmp_path / "wm.npz"
    save_world_model(path, model)
    again = load_world_model(path)
    assert again.config == model.config
    assert params_fingerprint(again.params) == params_fingerprint(model.params)
    trajs, _ = _toy_trajs(2, 6, seed=8)
    assert evaluate_log_loss(model, trajs) == evaluate_log_loss(again, trajs)


def test_real_observation_mode_trains():
    cfg = ToyProcessConfig(alphabet_size=2, memory=2, p=0.75, obs_mode="gaussian",
                           episode_length=20)
    trajs = rollout_random(ToyProcess(cfg), 50, master_seed=7)
    wm_cfg = WorldModelConfig(obs_kind=("real", 4), n_actions=2,
                              obs_embed_dim=16, action_embed_dim=16, hidden_dim=16,
                              predictor_hidden_dim=16)
    model, hist = train_world_model(trajs, wm_cfg,
                                    TrainSettings(epochs=10, batch_size=50, lr=1e-3, seed=0))
    assert hist[-1] < hist[0]
    assert np.isfinite(hist).all()


# ---------------------------------------------------------------------------
# Behavior of the session-trained standard model
# ---------------------------------------------------------------------------

def test_trained_model_reaches_entropy_floor(toy22_model, toy22_held_trajs):
    model, history = toy22_model
    assert abs(history[-1] - ENTROPY_22) < 0.02
    held = evaluate_log_loss(model, toy22_held_trajs)
    assert abs(held - ENTROPY_22) < 0.05


def test_training_loss_mostly_nonincreasing(toy22_model):
    _, history = toy22_model
    drops = sum(1 for a, b in zip(history, history[1:]) if b <= a + 1e-3)
    assert drops / (len(history) - 1) >= 0.9


def test_hidden_states_cluster_by_causal_state(toy22_hidden):
    from sklearn.metrics import silhouette_score
    rows = np.random.default_rng(0).choice(toy22_hidden.n_records, 4000, replace=False)
    score = silhouette_score(toy22_hidden.states[rows], toy22_hidden.labels[rows])
    assert score > 0.0


def test_linear_probe_recovers_conditional_distribution(toy22_hidden):
    """A logistic probe on s_hat (x) onehot(a) should reach the analytic
    conditional entropy, while the same probe on the raw observation cannot.
    The target is XOR-like in (oldest symbol, action), hence the per-action
    feature blocks."""
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import log_loss

    ds = toy22_hidden
    half = ds.n_records // 2
    acts = np.eye(2)[ds.actions]
    feats = (ds.states[:, :, None] * acts[:, None, :]).reshape(ds.n_records, -1)
    probe = LogisticRegression(max_iter=500, C=10.0)
    probe.fit(feats[:half], ds.next_obs[:half])
    ce_hidden = log_loss(ds.next_obs[half:], probe.predict_proba(feats[half:]))

    raw = np.eye(2)[ds.obs.astype(int)]
    raw_feats = (raw[:, :, None] * acts[:, None, :]).reshape(ds.n_records, -1)
    probe_raw = LogisticRegression(max_iter=500, C=10.0)
    probe_raw.fit(raw_feats[:half], ds.next_obs[:half])
    ce_raw = log_loss(ds.next_obs[half:], probe_raw.predict_proba(raw_feats[half:]))

    assert abs(ce_hidden - ENTROPY_22) < 0.05
    assert ce_raw - ce_hidden > 0.1
