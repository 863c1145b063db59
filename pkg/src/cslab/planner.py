"""Shortest-path planning over the estimated discrete state machine.

Unifilarity turns the estimated machine into an ordinary directed graph: a
(state, action, observation) context names exactly one successor, so reaching
a target state is a graph search rather than a belief-space problem. Goal
states are read off a reward log (states whose average entry reward clears a
threshold), Dijkstra returns the cheapest action sequence to any goal, and an
executor walks the plan against the live environment, replanning whenever the
emitted observation leaves the planned edge.
"""
import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PlanningError, ReplanningError, ShapeError, UnreachableError
from .rl import Featurizer
from .world_model import HiddenStateTracker

COST_MODES = ("unit", "neg-log-prob")
DEFAULT_GOAL_THRESHOLD = 0.9
DEFAULT_REPLAN_BUDGET = 10
# summing dozens of 0.9-ish entry rewards drifts below the threshold by ~1e-15
GOAL_THRESHOLD_SLACK = 1e-9


@dataclass(frozen=True, order=True)
class Edge:
    """One observed (s, a, o, s') transition with its in-row probability."""
    src: int
    action: int
    obs: int
    dst: int
    probability: float
    cost: float


@dataclass
class StateGraph:
    """Directed multigraph over discrete states.

    `ambiguous` lists (s, a, o) contexts observed with more than one
    successor; those edges all stay in the graph, and `successor` resolves
    the context to its most frequent continuation.
    """
    nodes: tuple
    edges: tuple
    goals: frozenset
    entry_rewards: dict
    goal_threshold: float
    ambiguous: tuple = ()
    _out: dict = field(default_factory=dict, repr=False)
    _succ: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._node_set = frozenset(self.nodes)
        for e in self.edges:
            if not 0.0 < e.probability <= 1.0:
                raise ShapeError(f"edge probability {e.probability} outside (0, 1]")
            if e.src not in self._node_set or e.dst not in self._node_set:
                raise ShapeError("edge endpoint missing from node set")
            self._out.setdefault(e.src, []).append(e)
        for es in self._out.values():
            es.sort()
        best = {}
        for e in self.edges:
            key = (e.src, e.action, e.obs)
            # most frequent successor; probabilities within a row order counts
            if key not in best or (e.probability, -e.dst) > (best[key].probability, -best[key].dst):
                best[key] = e
        self._succ = {k: e.dst for k, e in best.items()}

    def out_edges(self, s):
        return self._out.get(s, [])

    def successor(self, s, a, o):
        """Most frequent successor of context (s, a, o), or None if unseen."""
        return self._succ.get((int(s), int(a), int(o)))

    def __contains__(self, s):
        return s in self._node_set


@dataclass(frozen=True)
class Plan:
    """Edge walk from `start` to a goal node; empty when start is a goal."""
    start: int
    edges: tuple
    total_cost: float
    success_probability: float
    graph: StateGraph = field(compare=False, repr=False, default=None)

    def __post_init__(self):
        at = self.start
        for e in self.edges:
            if e.src != at:
                raise ShapeError("plan edges are not consecutive")
            at = e.dst

    @property
    def nodes(self):
        return [self.start] + [e.dst for e in self.edges]

    def __len__(self):
        return len(self.edges)


def trajectory_transitions(trajectories, labels):
    """Flatten episodes into aligned (s, a, o', s', r) transition arrays.

    `labels` holds one array of T+1 state ids per trajectory (the state after
    each observation, final state included), so terminal states appear as
    successors and entry rewards line up with the step that earned them.
    """
    s, a, o, s2, r = [], [], [], [], []
    for traj, lab in zip(trajectories, labels):
        lab = np.asarray(lab, dtype=np.int64)
        if len(lab) != traj.length + 1:
            raise ShapeError("need one label per observation (T+1 per episode)")
        s.append(lab[:-1])
        s2.append(lab[1:])
        a.append(np.asarray(traj.actions, dtype=np.int64))
        o.append(np.asarray(traj.observations[1:], dtype=np.int64))
        r.append(np.asarray(traj.rewards, dtype=np.float64))
    if not s:
        raise ShapeError("no trajectories")
    return (np.concatenate(s), np.concatenate(a), np.concatenate(o),
            np.concatenate(s2), np.concatenate(r))


def discrete_labels(model, mapper, trajectory, relabel=None) -> np.ndarray:
    """Learned state id after each observation of a trajectory (T+1 ids)."""
    tracker = HiddenStateTracker(model)
    hs = [tracker.begin(trajectory.observations[0])]
    for t, action in enumerate(trajectory.actions):
        hs.append(tracker.update(trajectory.observations[t + 1], int(action)))
    ids = mapper.assign(np.stack(hs))
    if relabel is not None:
        ids = np.asarray(relabel, dtype=np.int64)[ids]
    return ids.astype(np.int64)


def average_entry_rewards(next_states, rewards):
    """Mean reward received on transitions entering each state.

    Align `rewards` with the successor column of the transition arrays (use
    the kept indices returned by the transition extraction)."""
    s2 = np.asarray(next_states, dtype=np.int64).reshape(-1)
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if len(s2) != len(r):
        raise ShapeError("next_states and rewards must align")
    states, inverse = np.unique(s2, return_inverse=True)
    sums = np.bincount(inverse, weights=r)
    counts = np.bincount(inverse)
    return {int(s): float(m) for s, m in zip(states, sums / counts)}


def build_graph(csm, entry_rewards, goal_threshold=DEFAULT_GOAL_THRESHOLD,
                cost_mode="unit"):
    """One edge per occupied (s, a, o, s') entry of the estimated machine.

    Goal states are those whose logged average entry reward reaches the
    threshold (inclusive: the door transition nets exactly +0.9 after the
    step penalty). Unit edge costs count steps; "neg-log-prob" weighs each
    edge by -ln of its probability so cheapest means most likely.
    """
    if cost_mode not in COST_MODES:
        raise ConfigError(f"unknown cost_mode {cost_mode!r}")
    nodes = set()
    edges = []
    ambiguous = []
    for s, a in csm.occupied_rows():
        probs = csm.transition_probs(s, a)
        by_obs = {}
        for (o, s2), p in probs.items():
            nodes.add(s)
            nodes.add(s2)
            cost = 1.0 if cost_mode == "unit" else -math.log(p)
            edges.append(Edge(src=s, action=a, obs=o, dst=s2,
                              probability=p, cost=cost))
            by_obs.setdefault(o, []).append(s2)
        for o, succs in sorted(by_obs.items()):
            if len(succs) > 1:
                ambiguous.append((s, a, o))
    goals = frozenset(
        s for s in nodes
        if entry_rewards.get(s, -math.inf) >= goal_threshold - GOAL_THRESHOLD_SLACK)
    if not goals:
        raise PlanningError(
            f"no state has average entry reward >= {goal_threshold}")
    return StateGraph(nodes=tuple(sorted(nodes)), edges=tuple(sorted(edges)),
                      goals=goals, entry_rewards=dict(entry_rewards),
                      goal_threshold=float(goal_threshold),
                      ambiguous=tuple(ambiguous))


def dijkstra(graph: StateGraph, start, goals=None) -> Plan:
    """Cheapest path from start to any goal.

    Cost ties break on the lexicographically smallest (action, observation)
    label sequence, so equally short plans resolve deterministically.
    """
    start = int(start)
    if start not in graph:
        raise PlanningError(f"start state {start} not in graph")
    goal_set = graph.goals if goals is None else frozenset(goals)
    if not goal_set:
        raise PlanningError("empty goal set")
    if start in goal_set:
        return Plan(start=start, edges=(), total_cost=0.0,
                    success_probability=1.0, graph=graph)
    heap = [(0.0, (), start, ())]
    settled = set()
    while heap:
        cost, labels, node, path = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node in goal_set:
            prob = float(np.prod([e.probability for e in path])) if path else 1.0
            return Plan(start=start, edges=path, total_cost=cost,
                        success_probability=prob, graph=graph)
        for e in graph.out_edges(node):
            if e.dst not in settled:
                heapq.heappush(heap, (cost + e.cost,
                                      labels + ((e.action, e.obs),),
                                      e.dst, path + (e,)))
    raise UnreachableError(f"no goal reachable from state {start}")


@dataclass(frozen=True)
class PlanOutcome:
    """What happened when a plan met the live environment."""
    reached: bool
    steps: int
    total_reward: float
    replans: int
    final_node: int

    @property
    def reward_per_step(self) -> float:
        return self.total_reward / max(1, self.steps)


def _plan_featurizer(model, discretizer, relabel):
    if model is None and discretizer is None:
        return Featurizer("ground-truth", relabel=relabel)
    return Featurizer("discrete", model=model, mapper=discretizer,
                      relabel=relabel)


def execute_plan(env, model, discretizer, plan: Plan, *, relabel=None,
                 max_replans=DEFAULT_REPLAN_BUDGET, seed=None) -> PlanOutcome:
    """Walk a plan in the environment, replanning on off-plan observations.

    With model and discretizer both None the environment's ground-truth state
    ids are used directly. After each step the observed (action, observation)
    pair fixes the successor node through the graph; an observation off the
    planned edge triggers a fresh Dijkstra query from wherever the machine
    landed, up to `max_replans` times before giving up. A current node with
    no graph entry raises ReplanningError.
    """
    graph = plan.graph
    if graph is None:
        raise PlanningError("plan carries no graph to replan against")
    feat = _plan_featurizer(model, discretizer, relabel)
    obs = env.reset(seed=seed)
    node = int(feat.reset(env, obs))
    if node not in graph:
        raise ReplanningError(f"initial state {node} absent from plan graph")
    total, steps, replans = 0.0, 0, 0
    current, pos = plan, 0
    if node != plan.start:
        current, pos = dijkstra(graph, node), 0
    aborted = False
    while node not in graph.goals and not aborted:
        if pos >= len(current.edges):
            # walked off the end without reaching a goal; treat as deviation
            deviated = True
        else:
            edge = current.edges[pos]
            stp = env.step(edge.action)
            total += stp.reward
            steps += 1
            o = int(stp.obs)
            mapped = feat.update(stp.obs, edge.action)
            deviated = o != edge.obs
            if not deviated:
                node, pos = edge.dst, pos + 1
            else:
                succ = graph.successor(node, edge.action, o)
                node = int(mapped) if succ is None else succ
                if node not in graph:
                    raise ReplanningError(
                        f"state {node} absent from plan graph")
            if stp.done:
                break
        if deviated and node not in graph.goals:
            if replans >= max_replans:
                aborted = True
                break
            replans += 1
            try:
                current, pos = dijkstra(graph, node), 0
            except UnreachableError:
                aborted = True
    return PlanOutcome(reached=node in graph.goals, steps=steps,
                       total_reward=total, replans=replans,
                       final_node=node)


def plan_to_json(plan: Plan) -> dict:
    return {
        "nodes": plan.nodes,
        "edges": [{"from": e.src, "action": e.action, "obs": e.obs,
                   "to": e.dst, "probability": e.probability, "cost": e.cost}
                  for e in plan.edges],
        "total_cost": plan.total_cost,
        "success_probability": plan.success_probability,
    }


def save_plan_json(path, plan: Plan) -> None:
    with open(path, "w") as fh:
        json.dump(plan_to_json(plan), fh, indent=2)
        fh.write("\n")
