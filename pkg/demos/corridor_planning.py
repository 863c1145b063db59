"""Plan to the rewarding door of the corridor gridworld over a state machine.

Estimates the labeled transition machine from random-policy experience on
ground-truth states, marks high-reward states as goals, runs Dijkstra to the
cheapest goal, and executes the plan open-loop with replanning on
off-prediction observations. On this layout the executed return equals the
value-iteration optimum exactly: pick up the key (5 steps), then open the
door (4 more), netting 0.5 + 0.1 in 9 steps.
"""
import numpy as np

from cslab.analysis import estimate_csm, save_dot
from cslab.envs import GridWorld, rollout_random
from cslab.envs.grid import LAYOUTS, grid_optimal_values, grid_trajectory_labels
from cslab.planner import (
    average_entry_rewards,
    build_graph,
    dijkstra,
    execute_plan,
    trajectory_transitions,
)


def main():
    layout = LAYOUTS["layout1"]
    env = GridWorld(layout)
    opt = grid_optimal_values(layout)
    print(f"optimum: {opt.episode_reward} total over {opt.steps} steps "
          f"({opt.reward_per_step:.4f}/step)")

    print("== estimate the machine from random experience ==")
    trajs = rollout_random(env, 800, master_seed=20)
    labels = [grid_trajectory_labels(t, layout, include_final=True)
              for t in trajs]
    s, a, o, s2, r = trajectory_transitions(trajs, labels)
    csm = estimate_csm(s, a, o, s2, n_states=20, n_actions=env.n_actions,
                       n_obs=env.obs_kind[1])
    save_dot("corridor_machine.dot", csm)

    print("== build the plan graph ==")
    graph = build_graph(csm, average_entry_rewards(s2, r), goal_threshold=0.9)
    print(f"{len(graph.nodes)} reachable states, {len(graph.edges)} edges, "
          f"goals {sorted(graph.goals)}")

    plan = dijkstra(graph, 0)
    print(f"plan: {len(plan)} actions, cost {plan.total_cost}, "
          f"success probability {plan.success_probability:.3f}")
    for edge in plan.edges:
        print(f"  state {edge.src} --action {edge.action}/"
              f"obs {edge.obs}--> {edge.dst}")

    print("== execute ==")
    out = execute_plan(GridWorld(layout), None, None, plan)
    print(f"reached={out.reached} steps={out.steps} reward={out.total_reward}"
          f" replans={out.replans}")
    assert out.total_reward == opt.episode_reward, "should match exactly"
    print("executed return matches the optimum exactly")
    print("wrote corridor_machine.dot")


if __name__ == "__main__":
    main()
