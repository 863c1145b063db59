"""Empirical state-machine estimation, unifilarity/purity diagnostics,
merging, mutual information, and exports."""
import json

import numpy as np
import pytest

from cslab.analysis import (
    EmpiricalCSM,
    csm_from_json,
    csm_to_dot,
    csm_to_json,
    dataset_transitions,
    estimate_csm,
    load_csm,
    merge_equivalent_states,
    next_step_mi,
    predictive_log_loss,
    refinement_purity,
    save_csm,
    unifilarity_entropy,
)
from cslab.discretizer import QbnConfig, StateMapper, fit_state_map, train_qbn_distill
from cslab.envs.toy import next_symbol_distribution, oracle_successor, toy_trajectory_labels
from cslab.errors import ConfigError, ShapeError
from cslab.world_model import export_hidden_dataset

H_BINARY_075_NATS = 0.5623351446188083
MI_ORACLE_BITS = 0.1887218755408672


# ---------------------------------------------------------------------------
# Shared machines
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def oracle_csm(toy22_hidden):
    ds = toy22_hidden
    s, a, o, s2, _ = dataset_transitions(ds.episode, ds.labels, ds.actions, ds.next_obs)
    return estimate_csm(s, a, o, s2, n_states=8, n_actions=2, n_obs=2)


@pytest.fixture(scope="module")
def micro_machine(toy22_qbn_mapper, toy22_hidden):
    """(micro-state ids, micro CSM) from the distilled bottleneck mapper."""
    ds = toy22_hidden
    ids = toy22_qbn_mapper.assign(ds.states)
    s, a, o, s2, _ = dataset_transitions(ds.episode, ids, ds.actions, ds.next_obs)
    csm = estimate_csm(s, a, o, s2, n_states=toy22_qbn_mapper.n_states,
                       n_actions=2, n_obs=2)
    return ids, csm


@pytest.fixture(scope="module")
def held_micro(toy22_model, toy22_held_trajs, toy22_qbn_mapper, toy22_cfg):
    model, _ = toy22_model
    labels = [toy_trajectory_labels(t, toy22_cfg) for t in toy22_held_trajs]
    ds = export_hidden_dataset(model, toy22_held_trajs, labels=labels)
    ids = toy22_qbn_mapper.assign(ds.states)
    return ds, ids


def _cycle_csm():
    # 0 -> 1 -> 2 -> 0 forever, single action, constant observation
    s = np.arange(300) % 3
    s2 = (s + 1) % 3
    return estimate_csm(s, np.zeros(300, int), np.zeros(300, int), s2)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def test_deterministic_cycle_probs_are_zero_or_one():
    csm = _cycle_csm()
    assert csm.n_states == 3
    for st, a in csm.occupied_rows():
        for p in csm.transition_probs(st, a).values():
            assert p in (0.0, 1.0) or p == pytest.approx(1.0)
    assert csm.max_row_defect() < 1e-9
    assert csm.total_transitions() == 300


def test_estimate_csm_validates_inputs():
    with pytest.raises(ShapeError):
        estimate_csm([0, 1], [0], [0, 0], [1, 0])
    with pytest.raises(ShapeError):
        estimate_csm([], [], [], [])
    with pytest.raises(ShapeError):
        estimate_csm([0, -1], [0, 0], [0, 0], [1, 0])
    with pytest.raises(ShapeError):
        estimate_csm([0.5, 1.0], [0, 0], [0, 0], [1, 0])


def test_dataset_transitions_respects_episode_boundaries():
    ep = np.array([0, 0, 0, 1, 1])
    s = np.array([10, 11, 12, 13, 14])
    a = np.array([0, 1, 0, 1, 0])
    o = np.array([5, 6, 7, 8, 9])
    st, at, ot, s2, keep = dataset_transitions(ep, s, a, o)
    np.testing.assert_array_equal(keep, [0, 1, 3])
    np.testing.assert_array_equal(st, [10, 11, 13])
    np.testing.assert_array_equal(s2, [11, 12, 14])
    np.testing.assert_array_equal(ot, [5, 6, 8])


def test_oracle_machine_matches_generative_rule(oracle_csm, toy22_cfg):
    # 1e5 steps; worst cell over all 32 (state, action, symbol) entries
    worst = 0.0
    for st in range(8):
        window = [(st >> 2) & 1, (st >> 1) & 1, st & 1]
        for a in range(2):
            d = oracle_csm.next_symbol_dist(st, a)
            expect = next_symbol_distribution(window, a, toy22_cfg)
            for sym in range(2):
                worst = max(worst, abs(d.get(sym, 0.0) - expect[sym]))
    assert worst < 0.015
    assert oracle_csm.max_row_defect() < 1e-9
    # every observed successor equals the deterministic window shift
    for (st, _a, o), succ in oracle_csm.contexts():
        assert set(succ) == {oracle_successor(st, o, toy22_cfg)}


# ---------------------------------------------------------------------------
# Unifilarity
# ---------------------------------------------------------------------------

def test_unifilarity_exactly_zero_on_oracle(oracle_csm):
    rep = unifilarity_entropy(oracle_csm)
    assert rep.bits == 0.0
    assert rep.worst_bits == 0.0
    assert rep.contexts_used == 32
    assert rep.contexts_skipped == 0
    assert rep.units == "bits"


def test_unifilarity_fair_coin_is_one_bit():
    csm = EmpiricalCSM(n_states=3, n_actions=1, n_obs=1)
    csm.add(0, 0, 0, 1, 20)
    csm.add(0, 0, 0, 2, 20)
    rep = unifilarity_entropy(csm)
    assert rep.bits == 1.0
    assert rep.worst == (0, 0, 0)


def test_unifilarity_min_visits_guard():
    csm = EmpiricalCSM(n_states=3, n_actions=1, n_obs=2)
    csm.add(0, 0, 0, 1, 100)          # deterministic, heavy
    csm.add(0, 0, 1, 1, 4)            # 50/50 but only 8 visits: skipped
    csm.add(0, 0, 1, 2, 4)
    rep = unifilarity_entropy(csm, min_visits=10)
    assert rep.bits == 0.0
    assert rep.contexts_used == 1
    assert rep.contexts_skipped == 1
    assert unifilarity_entropy(csm, min_visits=1).bits > 0.0


# ---------------------------------------------------------------------------
# Purity
# ---------------------------------------------------------------------------

def test_purity_identity_and_refinement():
    ref = np.array([0, 0, 1, 1, 2, 2])
    assert refinement_purity(ref, ref).purity == 1.0
    # splitting every reference state in two is still a refinement
    split = np.array([0, 1, 2, 3, 4, 5])
    rep = refinement_purity(split, ref)
    assert rep.purity == 1.0
    assert rep.n_learned == 6 and rep.n_reference == 3


def test_purity_random_labels_approach_max_class_frequency(toy22_hidden):
    rng = np.random.default_rng(3)
    ref = toy22_hidden.labels[:10000]
    learned = rng.integers(0, 50, size=10000)
    rep = refinement_purity(learned, ref)
    freq = np.bincount(ref) / len(ref)
    assert abs(rep.purity - freq.max()) < 0.03


def test_purity_rejects_mismatched_lengths():
    with pytest.raises(ShapeError):
        refinement_purity([0, 1], [0, 1, 2])


def test_purity_contingency_counts():
    rep = refinement_purity([0, 0, 1, 1], [5, 5, 5, 7])
    np.testing.assert_array_equal(rep.table, [[2, 0], [1, 1]])
    assert rep.purity == 0.75


# ---------------------------------------------------------------------------
# Merging
# ---------------------------------------------------------------------------

def test_merge_oracle_machine_keeps_eight_states(oracle_csm):
    merged, mapping = merge_equivalent_states(oracle_csm, tol=0.05)
    assert merged.n_states == 8
    np.testing.assert_array_equal(mapping, np.arange(8))
    assert unifilarity_entropy(merged).bits == 0.0


def test_merge_duplicate_rows_collapse():
    csm = EmpiricalCSM(n_states=4, n_actions=1, n_obs=2)
    for src in (0, 3):                 # state 3 duplicates state 0 exactly
        csm.add(src, 0, 0, 1, 60)
        csm.add(src, 0, 1, 2, 40)
    csm.add(1, 0, 1, 2, 100)
    csm.add(2, 0, 1, 0, 100)           # distinct from 1 via successor block
    merged, mapping = merge_equivalent_states(csm, tol=0.05)
    assert merged.n_states == 3
    assert mapping[0] == mapping[3]
    assert len({mapping[0], mapping[1], mapping[2]}) == 3


def test_merge_tol_zero_merges_identical_rows_only(oracle_csm):
    merged, mapping = merge_equivalent_states(oracle_csm, tol=0.0)
    assert merged.n_states == 8        # sampled rows all differ slightly
    csm = EmpiricalCSM(n_states=2, n_actions=1, n_obs=2)
    for src in (0, 1):
        csm.add(src, 0, 0, 0, 30)
        csm.add(src, 0, 1, 1, 30)
    m2, _ = merge_equivalent_states(csm, tol=0.0)
    assert m2.n_states == 1            # exactly identical rows do merge


def test_merge_collapses_learned_micro_machine(micro_machine, toy22_hidden):
    ids, csm = micro_machine
    assert csm.n_states > 100          # long-tailed micro-state map
    merged, mapping = merge_equivalent_states(csm, tol=0.05, noise_scale=1.0)
    assert merged.n_states == 8
    rep = unifilarity_entropy(merged)
    assert rep.bits <= 0.05
    pur = refinement_purity(mapping[ids], toy22_hidden.labels)
    assert pur.purity >= 0.99


def test_merge_is_deterministic(micro_machine):
    _, csm = micro_machine
    a = merge_equivalent_states(csm, tol=0.05, noise_scale=1.0)
    b = merge_equivalent_states(csm, tol=0.05, noise_scale=1.0)
    assert a[0].n_states == b[0].n_states
    np.testing.assert_array_equal(a[1], b[1])


def test_merge_never_hurts_held_out_log_loss(micro_machine, held_micro):
    """Merging may cost at most tol * ln(n_obs) nats of next-step log-loss."""
    _, csm = micro_machine
    ds, ids = held_micro
    merged, mapping = merge_equivalent_states(csm, tol=0.05, noise_scale=1.0)
    s, a, o, _, _ = dataset_transitions(ds.episode, ids, ds.actions, ds.next_obs)
    raw = predictive_log_loss(csm, s, a, o)
    pooled = predictive_log_loss(merged, mapping[s], a, o)
    assert pooled - raw <= 0.05 * np.log(2)


def test_merge_requires_a_supported_state():
    csm = EmpiricalCSM(n_states=2, n_actions=1, n_obs=1)
    csm.add(0, 0, 0, 1, 3)
    with pytest.raises(ConfigError):
        merge_equivalent_states(csm, min_visits=10)


def test_merge_terminal_sinks_keep_their_own_states():
    # a state that is entered but never left has no outgoing signature;
    # folding it into block 0 would hand the goal's reward to a random state
    csm = EmpiricalCSM(n_states=5, n_actions=1, n_obs=3)
    csm.add(0, 0, 0, 1, 50)
    csm.add(1, 0, 1, 2, 50)
    csm.add(1, 0, 2, 4, 50)
    merged, mapping = merge_equivalent_states(csm, tol=0.05, min_visits=1)
    sink_ids = {mapping[2], mapping[4]}
    assert len(sink_ids) == 2
    assert sink_ids.isdisjoint({mapping[0], mapping[1]})
    assert merged.n_states == len({mapping[0], mapping[1]}) + 2
    assert merged.visits(mapping[2]) == 0 and merged.visits(mapping[4]) == 0


def test_purity_monotone_in_bottleneck_width(toy22_model, toy22_hidden):
    model, _ = toy22_model
    ds = toy22_hidden
    purities = []
    for b in (2, 4, 8):
        qbn, _ = train_qbn_distill(model, ds, QbnConfig(bottleneck=b, epochs=15, seed=0))
        mapper = StateMapper("qbn", qbn=qbn, state_map=fit_state_map(qbn, ds))
        ids = mapper.assign(ds.states)
        purities.append(refinement_purity(ids, ds.labels).purity)
    assert purities[0] <= purities[1] + 0.005
    assert purities[1] <= purities[2] + 0.005
    assert purities[2] >= 0.99


# ---------------------------------------------------------------------------
# Mutual information and log-loss
# ---------------------------------------------------------------------------

def test_mi_independent_streams_near_zero():
    rng = np.random.default_rng(7)
    n = 100000
    mi = next_step_mi(rng.integers(0, 8, n), rng.integers(0, 2, n),
                      rng.integers(0, 2, n))
    assert 0 <= mi < 0.02


def test_mi_deterministic_uniform_equals_observation_entropy():
    # balanced enumeration: every (s, a) pair 10 times, o = (s + a) mod 4
    s, a = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    s = np.repeat(s.ravel(), 10)
    a = np.repeat(a.ravel(), 10)
    o = (s + a) % 4
    assert next_step_mi(s, a, o) == pytest.approx(2.0, abs=1e-12)


def test_mi_oracle_states_match_analytic_value(toy22_hidden):
    ds = toy22_hidden
    mi = next_step_mi(ds.labels, ds.actions, ds.next_obs)
    assert abs(mi - MI_ORACLE_BITS) < 0.012


def test_predictive_log_loss_oracle_near_conditional_entropy(oracle_csm, toy22_hidden):
    ds = toy22_hidden
    s, a, o, _, _ = dataset_transitions(ds.episode, ds.labels, ds.actions, ds.next_obs)
    ll = predictive_log_loss(oracle_csm, s, a, o)
    assert abs(ll - H_BINARY_075_NATS) < 0.01


def test_predictive_log_loss_unseen_rows_stay_finite():
    csm = _cycle_csm()
    ll = predictive_log_loss(csm, [0, 2], [0, 0], [0, 0])
    assert np.isfinite(ll)
    # completely unseen state falls back to the smoothed uniform rate
    ll_unseen = predictive_log_loss(csm, [17], [0], [0])
    assert ll_unseen == pytest.approx(0.0, abs=1e-12)  # n_obs == 1


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def test_json_roundtrip(tmp_path, oracle_csm):
    blob = csm_to_json(oracle_csm)
    again = csm_from_json(blob)
    assert again.counts == oracle_csm.counts
    assert (again.n_states, again.n_actions, again.n_obs) == (8, 2, 2)
    path = tmp_path / "csm.json"
    save_csm(path, oracle_csm)
    assert load_csm(path).counts == oracle_csm.counts
    text = path.read_text()
    assert json.loads(text)["units"]["entropy"] == "bits"


def test_dot_export_cycle():
    dot = csm_to_dot(_cycle_csm())
    assert dot.startswith("digraph")
    assert 's0 -> s1 [label="0/0:1.000"];' in dot
    assert 's2 -> s0 [label="0/0:1.000"];' in dot


def test_dot_export_oracle_shape(oracle_csm):
    dot = csm_to_dot(oracle_csm)
    nodes = [ln for ln in dot.splitlines() if "[label=" in ln and "->" not in ln]
    edges = [ln for ln in dot.splitlines() if "->" in ln]
    assert len(nodes) == 8
    assert len(edges) == 32            # 8 states x 2 actions x 2 symbols
    # edge probabilities recompute to 1 per (state, action) row
    bysa = {}
    for ln in edges:
        src = int(ln.strip().split(" ")[0][1:])
        label = ln.split('label="')[1].split('"')[0]
        a, rest = label.split("/")
        o, p = rest.split(":")
        bysa.setdefault((src, a), 0.0)
        bysa[(src, a)] += float(p)
    for total in bysa.values():
        assert total == pytest.approx(1.0, abs=2e-3)


def test_min_prob_filters_edges(oracle_csm):
    dot = csm_to_dot(oracle_csm, min_prob=0.5)
    edges = [ln for ln in dot.splitlines() if "->" in ln]
    assert len(edges) == 16            # only the high-probability symbol rows
