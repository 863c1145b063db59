"""Empirical state machines over discrete latent states.

Builds action/observation-conditional transition counts from labeled rollouts,
scores how close the machine is to unifilar (next state a deterministic
function of state and emitted symbol), compares discrete states against
ground-truth labels, merges predictively equivalent states, and exports the
machine as JSON or DOT.

Entropies are reported in bits, log-losses in nats.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

DEFAULT_MIN_VISITS = 10
DEFAULT_MERGE_TOL = 0.05


def _int_column(x, name):
    a = np.asarray(x)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.integer):
        f = a.astype(np.float64)
        if not np.all(np.isfinite(f)) or not np.all(f == np.round(f)):
            raise ShapeError(f"{name} must contain integers")
        a = f.astype(np.int64)
    a = a.astype(np.int64)
    if a.size and a.min() < 0:
        raise ShapeError(f"{name} must be non-negative")
    return a


def _entropy_bits(counts):
    """Plug-in entropy of a count vector, in bits."""
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    p = c / c.sum()
    return float(-(p * np.log2(p)).sum())


@dataclass
class EmpiricalCSM:
    """Transition counts n[s][a][o][s'] with per-(s, a) joint probabilities
    over (symbol, successor). Rows with no counts stay absent; nothing is
    fabricated for unseen (s, a) pairs."""

    n_states: int
    n_actions: int
    n_obs: int
    counts: dict = field(default_factory=dict)  # s -> a -> o -> s' -> count

    def add(self, s, a, o, s_next, count=1):
        row = self.counts.setdefault(int(s), {}).setdefault(int(a), {})
        succ = row.setdefault(int(o), {})
        succ[int(s_next)] = succ.get(int(s_next), 0) + int(count)

    def row_total(self, s, a):
        row = self.counts.get(s, {}).get(a)
        if row is None:
            return 0
        return sum(c for succ in row.values() for c in succ.values())

    def visits(self, s):
        """Outgoing transition count recorded for state s."""
        return sum(self.row_total(s, a) for a in self.counts.get(s, {}))

    def next_symbol_dist(self, s, a):
        """P(o | s, a) as a dict, or None for an empty row."""
        row = self.counts.get(s, {}).get(a)
        if not row:
            return None
        total = self.row_total(s, a)
        return {o: sum(succ.values()) / total for o, succ in row.items()}

    def transition_probs(self, s, a):
        """Joint P(o, s' | s, a) as a dict keyed (o, s'), or None."""
        row = self.counts.get(s, {}).get(a)
        if not row:
            return None
        total = self.row_total(s, a)
        return {(o, s2): c / total
                for o, succ in row.items() for s2, c in succ.items()}

    def occupied_rows(self):
        for s in sorted(self.counts):
            for a in sorted(self.counts[s]):
                if self.row_total(s, a) > 0:
                    yield s, a

    def contexts(self):
        """Yields ((s, a, o), successor-count dict) in sorted order."""
        for s in sorted(self.counts):
            for a in sorted(self.counts[s]):
                for o in sorted(self.counts[s][a]):
                    yield (s, a, o), self.counts[s][a][o]

    def total_transitions(self):
        return sum(sum(succ.values())
                   for by_a in self.counts.values()
                   for by_o in by_a.values()
                   for succ in by_o.values())

    def max_row_defect(self):
        """Max |1 - sum of joint probabilities| over occupied rows."""
        worst = 0.0
        for s, a in self.occupied_rows():
            total = sum(self.transition_probs(s, a).values())
            worst = max(worst, abs(1.0 - total))
        return worst


def estimate_csm(states, actions, next_obs, next_states,
                 n_states=None, n_actions=None, n_obs=None):
    """Accumulate (s, a, o, s') transition counts into an EmpiricalCSM."""
    s = _int_column(states, "states")
    a = _int_column(actions, "actions")
    o = _int_column(next_obs, "next_obs")
    s2 = _int_column(next_states, "next_states")
    if not (len(s) == len(a) == len(o) == len(s2)):
        raise ShapeError("states, actions, next_obs, next_states must align")
    if len(s) == 0:
        raise ShapeError("need at least one transition")
    csm = EmpiricalCSM(
        n_states=int(n_states if n_states is not None else max(s.max(), s2.max()) + 1),
        n_actions=int(n_actions if n_actions is not None else a.max() + 1),
        n_obs=int(n_obs if n_obs is not None else o.max() + 1),
    )
    for row in zip(s, a, o, s2):
        csm.add(*row)
    return csm


def dataset_transitions(episode, state_ids, actions, next_obs):
    """Within-episode successor pairs from per-record arrays.

    Record i pairs with record i+1 when both belong to the same episode; the
    final record of each episode has no successor and is dropped. Returns
    (s, a, o, s', kept_indices) so callers can align auxiliary columns such
    as rewards."""
    ep = _int_column(episode, "episode")
    s = np.asarray(state_ids)
    a = np.asarray(actions)
    o = np.asarray(next_obs)
    if not (len(ep) == len(s) == len(a) == len(o)):
        raise ShapeError("per-record arrays must align")
    keep = np.nonzero(ep[:-1] == ep[1:])[0]
    return s[keep], a[keep], o[keep], s[keep + 1], keep


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class UnifilarityReport:
    """Count-weighted conditional entropy H[S' | S, A, O] in bits.

    Contexts with fewer than min_visits transitions are excluded from the
    average (they remain listed in successor_dists)."""

    bits: float
    successor_dists: dict           # (s, a, o) -> {s': prob}
    worst: tuple | None             # (s, a, o) with the highest entropy
    worst_bits: float
    contexts_used: int
    contexts_skipped: int
    min_visits: int
    units: str = "bits"


def unifilarity_entropy(csm, min_visits=DEFAULT_MIN_VISITS):
    dists = {}
    weighted = 0.0
    weight = 0
    used = skipped = 0
    worst = None
    worst_bits = 0.0
    for ctx, succ in csm.contexts():
        total = sum(succ.values())
        dists[ctx] = {s2: c / total for s2, c in succ.items()}
        if total < min_visits:
            skipped += 1
            continue
        h = _entropy_bits(list(succ.values()))
        weighted += total * h
        weight += total
        used += 1
        if worst is None or h > worst_bits:
            worst, worst_bits = ctx, h
    bits = weighted / weight if weight else 0.0
    return UnifilarityReport(bits=bits, successor_dists=dists, worst=worst,
                             worst_bits=worst_bits, contexts_used=used,
                             contexts_skipped=skipped, min_visits=min_visits)


@dataclass
class PurityReport:
    """Contingency of discrete states against reference labels.

    purity = sum over discrete states of the majority reference-label count,
    divided by the total. 1.0 means the discrete partition refines the
    reference partition."""

    table: np.ndarray               # (n_learned, n_reference) counts
    purity: float
    learned_ids: np.ndarray
    reference_ids: np.ndarray

    @property
    def n_learned(self):
        return len(self.learned_ids)

    @property
    def n_reference(self):
        return len(self.reference_ids)


def refinement_purity(learned_labels, reference_labels):
    lrn = _int_column(learned_labels, "learned_labels")
    ref = _int_column(reference_labels, "reference_labels")
    if len(lrn) != len(ref):
        raise ShapeError(f"label lengths differ: {len(lrn)} vs {len(ref)}")
    if len(lrn) == 0:
        raise ShapeError("need at least one label")
    lrn_ids, lrn_inv = np.unique(lrn, return_inverse=True)
    ref_ids, ref_inv = np.unique(ref, return_inverse=True)
    table = np.zeros((len(lrn_ids), len(ref_ids)), dtype=np.int64)
    np.add.at(table, (lrn_inv, ref_inv), 1)
    purity = float(table.max(axis=1).sum() / table.sum())
    return PurityReport(table=table, purity=purity,
                        learned_ids=lrn_ids, reference_ids=ref_ids)


def next_step_mi(states, actions, next_obs):
    """Plug-in mutual information between the (state, action) pair and the
    next observation, in bits."""
    s = _int_column(states, "states")
    a = _int_column(actions, "actions")
    o = _int_column(next_obs, "next_obs")
    if not (len(s) == len(a) == len(o)):
        raise ShapeError("states, actions, next_obs must align")
    if len(s) == 0:
        raise ShapeError("need at least one record")
    sa = s * (a.max() + 1) + a
    sao = sa * (o.max() + 1) + o

    def h(codes):
        _, counts = np.unique(codes, return_counts=True)
        return _entropy_bits(counts)

    return h(sa) + h(o) - h(sao)


def predictive_log_loss(csm, states, actions, next_obs, smoothing=0.5):
    """Mean next-symbol log-loss of the machine on aligned records, in nats.

    Additive smoothing over the machine's observation alphabet keeps unseen
    rows finite."""
    s = _int_column(states, "states")
    a = _int_column(actions, "actions")
    o = _int_column(next_obs, "next_obs")
    if not (len(s) == len(a) == len(o)) or len(s) == 0:
        raise ShapeError("need aligned, non-empty records")
    total = 0.0
    for si, ai, oi in zip(s, a, o):
        row = csm.counts.get(int(si), {}).get(int(ai), {})
        n_row = sum(c for succ in row.values() for c in succ.values())
        n_sym = sum(row.get(int(oi), {}).values())
        p = (n_sym + smoothing) / (n_row + smoothing * csm.n_obs)
        total -= np.log(p)
    return float(total / len(s))


# ---------------------------------------------------------------------------
# Merging
# ---------------------------------------------------------------------------

def _joint_signature(csm, s, block_of):
    """Per action: (distribution over (symbol, successor bucket), row count).

    Successors outside block_of land in a shared bucket -1; with an empty
    block_of this reduces to the plain next-symbol distribution."""
    sig = {}
    for a, by_o in csm.counts.get(s, {}).items():
        total = sum(c for succ in by_o.values() for c in succ.values())
        if total == 0:
            continue
        dist = {}
        for o, succ in by_o.items():
            for s2, c in succ.items():
                key = (o, block_of.get(s2, -1))
                dist[key] = dist.get(key, 0.0) + c / total
        sig[a] = (dist, total)
    return sig


def _tv(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _sig_gap(sig1, sig2, noise_scale):
    """Max over shared actions of total variation minus the sampling
    allowance; inf if the signatures share no action."""
    shared = set(sig1) & set(sig2)
    if not shared:
        return np.inf
    worst = -np.inf
    for a in shared:
        p, n1 = sig1[a]
        q, n2 = sig2[a]
        allow = noise_scale * (1.0 / np.sqrt(n1) + 1.0 / np.sqrt(n2))
        worst = max(worst, _tv(p, q) - allow)
    return worst


def _leader_cluster(members, sigs, tol, noise_scale):
    """Group members (in given order) with the first leader within tol."""
    groups = []
    for s in members:
        for lead, blk in groups:
            if _sig_gap(sigs[s], sigs[lead], noise_scale) <= tol:
                blk.append(s)
                break
        else:
            groups.append((s, [s]))
    return [blk for _, blk in groups]


def _pooled_signature(csm, members, block_of):
    agg = {}
    for s in members:
        for a, by_o in csm.counts.get(s, {}).items():
            acc = agg.setdefault(a, {})
            for o, succ in by_o.items():
                for s2, c in succ.items():
                    key = (o, block_of.get(s2, -1))
                    acc[key] = acc.get(key, 0.0) + c
    out = {}
    for a, dist in agg.items():
        total = sum(dist.values())
        if total > 0:
            out[a] = ({k: v / total for k, v in dist.items()}, total)
    return out


def _attach_pass(csm, states, blocks, block_of):
    """Assign each state to the block with the nearest pooled joint
    signature (plain total variation, argmin, lowest index on ties).

    Assignments are applied sequentially in state-id order, so later states
    bucket their successors by earlier states' fresh labels. The synchronous
    variant sustains assignment oscillations that leak noise into the core
    comparisons and over-split the partition."""
    pooled = [_pooled_signature(csm, blk, block_of) for blk in blocks]
    ctx = dict(block_of)
    out = {}
    for s in states:
        sig_s = _joint_signature(csm, s, ctx)
        dists = [_sig_gap(sig_s, p, 0.0) for p in pooled]
        b = int(np.argmin(dists)) if np.isfinite(min(dists)) else 0
        out[s] = b
        ctx[s] = b
    return out


def merge_equivalent_states(csm, tol=DEFAULT_MERGE_TOL,
                            min_visits=DEFAULT_MIN_VISITS,
                            noise_scale=0.0, attach_action_count=50,
                            max_iterations=25):
    """Merge states that are predictively equivalent within tolerance.

    Starts from the coarsest grouping consistent with next-symbol
    distributions (total variation <= tol per action), then repeatedly splits
    groups whose members disagree, under the current grouping, about the joint
    distribution of (next symbol, successor group). At the fixpoint, surviving
    groups are states nothing distinguishes to within tol. States with fewer
    than min_visits outgoing transitions sit out the refinement and are
    attached to the group with the nearest pooled signature.

    With noise_scale > 0 each total-variation comparison is granted a
    sampling allowance noise_scale * (1/sqrt(n1) + 1/sqrt(n2)), and states
    whose thinnest action row has fewer than attach_action_count transitions
    are attached rather than partitioned. Machines with hundreds of
    low-traffic states (typical of learned micro-state maps) need this; at
    tol=0.05 a raw total-variation test cannot tell such states apart from
    their own sampling noise. noise_scale=0 keeps the literal fixed-tolerance
    semantics.

    States that are entered but never left (terminal sinks) have no outgoing
    signature to compare; each keeps a merged id of its own rather than being
    folded into an arbitrary group.

    Returns (merged machine, old-to-new id array).
    """
    visits = [csm.visits(s) for s in range(csm.n_states)]
    entered = set()
    for _, succ in csm.contexts():
        entered.update(succ)
    sinks = sorted(s for s in entered if visits[s] == 0)
    eligible = [s for s in range(csm.n_states) if visits[s] >= min_visits]
    if not eligible:
        raise ConfigError(f"no state reaches min_visits={min_visits}")

    if noise_scale > 0:
        def smallest_row(s):
            rows = [csm.row_total(s, a) for a in csm.counts.get(s, {})]
            rows = [r for r in rows if r > 0]
            return min(rows) if rows else 0
        core = [s for s in eligible if smallest_row(s) >= attach_action_count]
        if not core:
            core = eligible
    else:
        core = eligible
    core = sorted(core, key=lambda s: (-visits[s], s))
    core_set = set(core)
    attached = [s for s in range(csm.n_states)
                if visits[s] > 0 and s not in core_set]

    sigs = {s: _joint_signature(csm, s, {}) for s in core}
    blocks = _leader_cluster(core, sigs, tol, noise_scale)
    core_of = {s: b for b, blk in enumerate(blocks) for s in blk}
    # First attachment compares plain emission signatures; successor buckets
    # are meaningless before any refinement and would only add noise.
    pooled0 = [_pooled_signature(csm, blk, {}) for blk in blocks]
    attach = {}
    for s in attached:
        dists = [_sig_gap(_joint_signature(csm, s, {}), p, 0.0) for p in pooled0]
        attach[s] = int(np.argmin(dists)) if np.isfinite(min(dists)) else 0
    for _ in range(max_iterations):
        block_of = {**core_of, **attach}
        sigs = {s: _joint_signature(csm, s, block_of) for s in core}
        refined = []
        for blk in blocks:
            refined.extend(_leader_cluster(blk, sigs, tol, noise_scale))
        split = len(refined) != len(blocks)  # splits only, sizes tell
        blocks = refined
        core_of = {s: b for b, blk in enumerate(blocks) for s in blk}
        new_attach = _attach_pass(csm, attached, blocks, {**core_of, **attach})
        moved = new_attach != attach
        attach = new_attach
        if not split and not moved:
            break

    blocks = sorted(blocks, key=min)
    core_of = {s: b for b, blk in enumerate(blocks) for s in blk}
    for _ in range(3):
        new_attach = _attach_pass(csm, attached, blocks, {**core_of, **attach})
        if new_attach == attach:
            break
        attach = new_attach

    mapping = np.zeros(csm.n_states, dtype=np.int64)
    for s, b in {**core_of, **attach}.items():
        mapping[s] = b
    for i, s in enumerate(sinks):
        mapping[s] = len(blocks) + i
    merged = EmpiricalCSM(n_states=len(blocks) + len(sinks),
                          n_actions=csm.n_actions, n_obs=csm.n_obs)
    for (s, a, o), succ in csm.contexts():
        for s2, c in succ.items():
            merged.add(mapping[s], a, o, mapping[s2], c)
    return merged, mapping


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def csm_to_json(csm):
    transitions = []
    for (s, a, o), succ in csm.contexts():
        total = csm.row_total(s, a)
        for s2 in sorted(succ):
            transitions.append({"s": s, "a": a, "o": o, "next": s2,
                                "count": succ[s2],
                                "prob": succ[s2] / total})
    return {"units": {"entropy": "bits", "loss": "nats"},
            "n_states": csm.n_states, "n_actions": csm.n_actions,
            "n_obs": csm.n_obs, "transitions": transitions}


def csm_from_json(blob):
    csm = EmpiricalCSM(n_states=int(blob["n_states"]),
                       n_actions=int(blob["n_actions"]),
                       n_obs=int(blob["n_obs"]))
    for t in blob["transitions"]:
        csm.add(t["s"], t["a"], t["o"], t["next"], t["count"])
    return csm


def save_csm(path, csm):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(csm_to_json(csm), f, indent=2, sort_keys=True)
        f.write("\n")


def load_csm(path):
    with open(path, encoding="utf-8") as f:
        return csm_from_json(json.load(f))


def csm_to_dot(csm, min_prob=0.0):
    """DOT digraph with one edge per occupied (s, a, o, s') entry, labeled
    action/symbol:probability."""
    lines = ["digraph csm {", "  rankdir=LR;", "  node [shape=circle];"]
    seen = sorted({s for s in csm.counts if csm.visits(s) > 0})
    succ_only = {s2 for (_, _, _), succ in csm.contexts() for s2 in succ}
    for s in sorted(set(seen) | succ_only):
        lines.append(f'  s{s} [label="{s}"];')
    for (s, a, o), succ in csm.contexts():
        total = csm.row_total(s, a)
        for s2 in sorted(succ):
            p = succ[s2] / total
            if p >= min_prob and p > 0:
                lines.append(f'  s{s} -> s{s2} [label="{a}/{o}:{p:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_dot(path, csm, min_prob=0.0):
    with open(path, "w", encoding="utf-8") as f:
        f.write(csm_to_dot(csm, min_prob=min_prob))
