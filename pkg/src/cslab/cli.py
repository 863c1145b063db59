"""Pipeline orchestration behind the `cslab` executable.

Subcommands cover the full pipeline - collect, train-wm, distill, analyze,
train-rl, plan - plus `run` (all stages serially) and `report` (aggregate
finished runs into one CSV). Each stage reads its predecessors' files from a
per-seed directory, writes its own artifacts there, and records a content
hash in the manifest; rerunning a stage whose hash and artifacts are intact
is a no-op unless --force. Exit codes: 0 ok, 2 config error, 3 missing
artifact, 4 training divergence.
"""
import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .analysis import (
    estimate_csm,
    load_csm,
    merge_equivalent_states,
    predictive_log_loss,
    refinement_purity,
    save_csm,
    save_dot,
    unifilarity_entropy,
)
from .config import (
    BUILD_ID,
    ExperimentConfig,
    config_hash,
    load_config,
    output_root,
    resolve_config,
    save_resolved,
)
from .discretizer import (
    StateMapper,
    fit_minibatch_kmeans,
    fit_state_map,
    fit_vq_codebook,
    kmeans_inertia,
    load_discretizer,
    save_discretizer,
    student_log_loss,
    train_qbn_distill,
)
from .envs import rollout_random
from .envs.grid import grid_trajectory_labels
from .envs.toy import toy_trajectory_labels
from .envs.trajectory import read_jsonl, write_jsonl
from .errors import ConfigError, CslabError, MissingArtifactError, TrainingError
from .planner import (
    average_entry_rewards,
    build_graph,
    dijkstra,
    discrete_labels,
    execute_plan,
    save_plan_json,
    trajectory_transitions,
)
from .rl import (
    DrqnPolicy,
    Featurizer,
    GreedyPolicy,
    dqn_policy,
    dqn_train,
    drqn_train,
    evaluate,
    save_dqn,
    save_drqn,
    save_qtable,
    tabular_q_learning,
    write_curve_csv,
)
from .seeding import episode_seed
from .world_model import (
    evaluate_log_loss,
    export_hidden_dataset,
    load_world_model,
    save_world_model,
    train_world_model,
)

log = logging.getLogger("cslab")

PIPELINE = ("collect", "train-wm", "distill", "analyze", "train-rl", "plan")

TRAJS = "trajectories.jsonl"
WM = "world_model.ckpt"
WM_HIST = "wm_history.csv"
DISC = "discretizer.ckpt"
DISC_META = "distill.json"
CSM = "csm.json"
CSM_DOT = "csm.dot"
MERGED = "merged_csm.json"
MERGED_DOT = "merged_csm.dot"
MAPPING = "mapping.json"
ENTRY = "entry_rewards.json"
ANALYSIS = "analysis.json"
CURVE = "curve.csv"
EVAL = "eval.json"
PLAN = "plan.json"
OUTCOMES = "outcomes.csv"
PLANNING = "planning.json"
RL_MODEL = {"tabular": "qtable.ckpt", "dqn": "dqn.ckpt", "drqn": "drqn.ckpt"}

REPORT_HEADER = ("env", "featurizer", "method", "eval_mean", "eval_std",
                 "n_seeds")


def _atomic_json(path: Path, payload) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stage_relevant(cfg: ExperimentConfig, stage: str) -> dict:
    return {
        "collect": {"env": cfg.env, "collect": cfg.collect},
        "train-wm": {"world_model": cfg.world_model},
        "distill": {"discretizer": cfg.discretizer},
        "analyze": {"analyze": cfg.analyze},
        "train-rl": {"env": cfg.env, "rl": cfg.rl},
        "plan": {"env": cfg.env, "planner": cfg.planner},
    }[stage]


def _stage_deps(cfg: ExperimentConfig, stage: str) -> tuple:
    if stage == "collect":
        return ()
    if stage == "train-wm":
        return ("collect",)
    if stage == "distill":
        return ("train-wm",)
    if stage == "analyze":
        return ("distill",) if cfg.analyze["states"] == "discrete" else ("collect",)
    if stage == "train-rl":
        feat = cfg.rl["featurizer"]
        if feat == "discrete":
            return ("distill",)
        if feat == "hidden":
            return ("train-wm",)
        return ()
    return ("analyze",)  # plan


class SeedRun:
    """One seed's slice of a run directory, with manifest bookkeeping."""

    def __init__(self, cfg: ExperimentConfig, seed: int, root: Path,
                 force: bool = False):
        self.cfg = cfg
        self.seed = int(seed)
        self.force = force
        self.dir = root / f"seed_{self.seed}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.dir / "manifest.json"
        stages = {}
        if self.manifest_path.exists():
            with open(self.manifest_path) as fh:
                stages = json.load(fh).get("stages", {})
        self.manifest = {"config": cfg.as_dict(), "build": BUILD_ID,
                         "seed": self.seed, "stages": stages}
        self._cache = {}

    def path(self, name: str) -> Path:
        return self.dir / name

    def need(self, name: str, stage: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MissingArtifactError(
                f"{p} is missing; run `cslab {stage}` first")
        return p

    def save_manifest(self) -> None:
        _atomic_json(self.manifest_path, self.manifest)

    # -- cached artifact loaders -------------------------------------------

    def trajectories(self):
        if "trajs" not in self._cache:
            self._cache["trajs"] = read_jsonl(self.need(TRAJS, "collect"))
        return self._cache["trajs"]

    def model(self):
        if "model" not in self._cache:
            self._cache["model"] = load_world_model(self.need(WM, "train-wm"))
        return self._cache["model"]

    def mapper(self):
        if "mapper" not in self._cache:
            self._cache["mapper"] = load_discretizer(self.need(DISC, "distill"))
        return self._cache["mapper"]

    # -- stage driver -------------------------------------------------------

    def run_stage(self, stage: str) -> None:
        dep_hashes = [self.manifest["stages"].get(d, {}).get("hash", f"unbuilt:{d}")
                      for d in _stage_deps(self.cfg, stage)]
        h = config_hash({"stage": stage, "seed": self.seed,
                         "config": _stage_relevant(self.cfg, stage),
                         "deps": dep_hashes})
        entry = self.manifest["stages"].get(stage)
        if (not self.force and entry and entry.get("hash") == h
                and all(self.path(a).exists()
                        for a in entry.get("artifacts", ()))):
            log.info("seed %d: %s: up to date, skipping", self.seed, stage)
            return
        t0 = time.perf_counter()
        artifacts, metrics = STAGE_BUILDERS[stage](self)
        wall = time.perf_counter() - t0
        record = {"hash": h, "wall_time_s": round(wall, 3),
                  "artifacts": list(artifacts)}
        if metrics:
            record["metrics"] = metrics
        self.manifest["stages"][stage] = record
        self.save_manifest()
        log.info("seed %d: %s: wrote %s (%.1fs)", self.seed, stage,
                 ", ".join(artifacts), wall)


# ---------------------------------------------------------------------------
# Stage builders
# ---------------------------------------------------------------------------

def _build_collect(run: SeedRun):
    episodes = run.cfg.collect["episodes"]
    if episodes == 0:
        log.warning("seed %d: collect: 0 episodes requested; writing an "
                    "empty dataset", run.seed)
        trajs = []
    else:
        trajs = rollout_random(run.cfg.make_env(), episodes,
                               master_seed=run.seed)
    write_jsonl(run.path(TRAJS), trajs)
    run._cache["trajs"] = trajs
    return [TRAJS], {"episodes": len(trajs)}


def _build_train_wm(run: SeedRun):
    trajs = run.trajectories()
    if not trajs:
        raise ConfigError("cannot train a world model on an empty dataset")
    env = run.cfg.make_env()
    model, history = train_world_model(trajs, run.cfg.wm_config(env),
                                       run.cfg.wm_train_settings(run.seed))
    save_world_model(run.path(WM), model)
    with open(run.path(WM_HIST), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(history):
            writer.writerow([epoch, loss])
    run._cache["model"] = model
    return [WM, WM_HIST], {"final_loss": float(history[-1])}


def _build_distill(run: SeedRun):
    model = run.model()
    trajs = run.trajectories()
    if not trajs:
        raise ConfigError("cannot distill from an empty dataset")
    d = run.cfg.discretizer
    ds = export_hidden_dataset(model, trajs, include_final=d["include_final"])
    if d["strategy"] == "qbn":
        qbn, history = train_qbn_distill(model, ds,
                                         run.cfg.qbn_config(run.seed))
        mapper = StateMapper("qbn", qbn=qbn, state_map=fit_state_map(qbn, ds))
        metrics = {"n_states": mapper.n_states,
                   "distill_nats": float(history[-1][0]),
                   "recon_mse": float(history[-1][1]),
                   "student_log_loss": float(student_log_loss(qbn, ds))}
    else:
        fit = (fit_minibatch_kmeans if d["strategy"] == "kmeans"
               else fit_vq_codebook)
        kwargs = {"decay": d["decay"]} if d["strategy"] == "vq" else {}
        centroids = fit(ds.all_states, d["k"],
                        seed=episode_seed(run.seed, "distill", 0),
                        batch_size=d["batch_size"],
                        iterations=d["iterations"], **kwargs)
        mapper = StateMapper(d["strategy"], kmeans=centroids)
        metrics = {"n_states": mapper.n_states,
                   "inertia": float(kmeans_inertia(centroids, ds.all_states))}
    save_discretizer(run.path(DISC), mapper)
    _atomic_json(run.path(DISC_META), {"strategy": d["strategy"], **metrics})
    run._cache["mapper"] = mapper
    return [DISC, DISC_META], metrics


def _gt_labels(env, trajectories):
    if env.config.__class__.__name__ == "ToyProcessConfig":
        return [toy_trajectory_labels(t, env.config, include_final=True)
                for t in trajectories]
    return [grid_trajectory_labels(t, env.config, include_final=True)
            for t in trajectories]


def _state_labels(run: SeedRun, env, trajectories):
    """(per-episode T+1 label arrays, micro state count) per analyze.states."""
    if run.cfg.analyze["states"] == "discrete":
        model, mapper = run.model(), run.mapper()
        return ([discrete_labels(model, mapper, t) for t in trajectories],
                mapper.n_states)
    return _gt_labels(env, trajectories), int(env.ground_truth_state_count)


def _build_analyze(run: SeedRun):
    trajs = run.trajectories()
    if not trajs:
        raise ConfigError("cannot analyze an empty dataset")
    env = run.cfg.make_env()
    kind, n_obs = env.obs_kind
    if kind != "categorical":
        raise ConfigError("state-machine analysis needs categorical "
                          "observations")
    az = run.cfg.analyze
    labels, n_micro = _state_labels(run, env, trajs)
    s, a, o, s2, r = trajectory_transitions(trajs, labels)
    micro = estimate_csm(s, a, o, s2, n_states=n_micro,
                         n_actions=env.n_actions, n_obs=n_obs)
    merged, mapping = merge_equivalent_states(
        micro, tol=az["merge_tol"], min_visits=az["min_visits"],
        noise_scale=az["noise_scale"])
    unif_micro = unifilarity_entropy(micro)
    unif_merged = unifilarity_entropy(merged)
    _, _, _, gt_s2, _ = trajectory_transitions(trajs, _gt_labels(env, trajs))
    purity = refinement_purity(mapping[s2], gt_s2)

    held = rollout_random(env, az["holdout_episodes"], master_seed=run.seed,
                          stage="analyze")
    held_labels, _ = _state_labels(run, env, held)
    hs, ha, ho, _, _ = trajectory_transitions(held, held_labels)
    machine_ll = predictive_log_loss(merged, mapping[hs], ha, ho,
                                     smoothing=az["smoothing"])
    model_ll = (float(evaluate_log_loss(run.model(), held))
                if az["states"] == "discrete" else None)

    save_csm(run.path(CSM), micro)
    save_dot(run.path(CSM_DOT), micro)
    save_csm(run.path(MERGED), merged)
    save_dot(run.path(MERGED_DOT), merged)
    _atomic_json(run.path(MAPPING), {"mapping": mapping.tolist()})
    entry = average_entry_rewards(mapping[s2], r)
    _atomic_json(run.path(ENTRY), {str(k): v for k, v in sorted(entry.items())})
    report = {
        "states": az["states"],
        "n_states_micro": int(n_micro),
        "n_states_merged": int(merged.n_states),
        "unifilarity_micro_bits": float(unif_micro.bits),
        "unifilarity_merged_bits": float(unif_merged.bits),
        "purity": float(purity.purity),
        "sufficiency": {
            "machine_log_loss_nats": float(machine_ll),
            "model_log_loss_nats": model_ll,
            "gap_nats": (float(machine_ll - model_ll)
                         if model_ll is not None else None),
            "holdout_episodes": az["holdout_episodes"],
        },
    }
    _atomic_json(run.path(ANALYSIS), report)
    metrics = {"purity": report["purity"],
               "unifilarity_merged_bits": report["unifilarity_merged_bits"],
               "n_states_merged": report["n_states_merged"]}
    return [CSM, CSM_DOT, MERGED, MERGED_DOT, MAPPING, ENTRY, ANALYSIS], metrics


def _build_featurizer(run: SeedRun):
    r = run.cfg.rl
    kind = r["featurizer"]
    if kind == "discrete":
        return Featurizer("discrete", model=run.model(), mapper=run.mapper())
    if kind == "hidden":
        return Featurizer("hidden", model=run.model())
    if kind == "window":
        return Featurizer("window", window=r["window"])
    return Featurizer(kind)


def _build_train_rl(run: SeedRun):
    env = run.cfg.make_env()
    r = run.cfg.rl
    rl_cfg = run.cfg.rl_config(run.seed)
    if r["method"] == "tabular":
        feat = _build_featurizer(run)
        table, curve = tabular_q_learning(env, feat, rl_cfg)
        save_qtable(run.path(RL_MODEL["tabular"]), table)
        policy = GreedyPolicy(feat, table.q)
    elif r["method"] == "dqn":
        feat = _build_featurizer(run)
        net, curve = dqn_train(env, feat, rl_cfg)
        save_dqn(run.path(RL_MODEL["dqn"]), net)
        policy = dqn_policy(net, feat)
    else:
        net, curve = drqn_train(env, rl_cfg)
        save_drqn(run.path(RL_MODEL["drqn"]), net)
        policy = DrqnPolicy(net)
    write_curve_csv(run.path(CURVE), curve)
    ev = evaluate(policy, env, r["eval_episodes"], seeds=[run.seed])
    _atomic_json(run.path(EVAL), {
        "env": run.cfg.env_name(), "featurizer": r["featurizer"],
        "method": r["method"], "seed": run.seed, "metric": ev.metric,
        "eval_episodes": ev.n_episodes, "mean": ev.mean, "std": ev.std,
        "per_seed": list(ev.per_seed)})
    return ([RL_MODEL[r["method"]], CURVE, EVAL],
            {"eval_mean": ev.mean, "metric": ev.metric})


def _build_plan(run: SeedRun):
    env = run.cfg.make_env()
    p = run.cfg.planner
    csm = load_csm(run.need(MERGED, "analyze"))
    with open(run.need(ENTRY, "analyze")) as fh:
        entry = {int(k): float(v) for k, v in json.load(fh).items()}
    with open(run.need(MAPPING, "analyze")) as fh:
        mapping = np.asarray(json.load(fh)["mapping"], dtype=np.int64)
    if run.cfg.analyze["states"] == "discrete":
        model, mapper = run.model(), run.mapper()
        feat = Featurizer("discrete", model=model, mapper=mapper,
                          relabel=mapping)
    else:
        model = mapper = None
        feat = Featurizer("ground-truth", relabel=mapping)
    graph = build_graph(csm, entry, goal_threshold=p["goal_threshold"],
                        cost_mode=p["cost_mode"])
    obs = env.reset(seed=episode_seed(run.seed, "plan", 0))
    start = int(feat.reset(env, obs))
    plan = dijkstra(graph, start)
    save_plan_json(run.path(PLAN), plan)
    outcomes = [execute_plan(env, model, mapper, plan, relabel=mapping,
                             max_replans=p["max_replans"],
                             seed=episode_seed(run.seed, "plan", ep))
                for ep in range(p["episodes"])]
    with open(run.path(OUTCOMES), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "reached", "steps", "total_reward",
                         "replans", "final_node"])
        for ep, out in enumerate(outcomes):
            writer.writerow([ep, int(out.reached), out.steps,
                             out.total_reward, out.replans, out.final_node])
    summary = {
        "goals": sorted(graph.goals),
        "n_nodes": len(graph.nodes),
        "n_edges": len(graph.edges),
        "n_ambiguous_contexts": len(graph.ambiguous),
        "plan_cost": plan.total_cost,
        "plan_length": len(plan),
        "episodes": p["episodes"],
        "reached": sum(o.reached for o in outcomes),
        "total_replans": sum(o.replans for o in outcomes),
        "mean_reward_per_step": float(np.mean([o.reward_per_step
                                               for o in outcomes])),
    }
    _atomic_json(run.path(PLANNING), summary)
    return ([PLAN, OUTCOMES, PLANNING],
            {"reached": summary["reached"],
             "mean_reward_per_step": summary["mean_reward_per_step"]})


STAGE_BUILDERS = {
    "collect": _build_collect,
    "train-wm": _build_train_wm,
    "distill": _build_distill,
    "analyze": _build_analyze,
    "train-rl": _build_train_rl,
    "plan": _build_plan,
}


# ---------------------------------------------------------------------------
# Seed fan-out
# ---------------------------------------------------------------------------

def run_stages_for_seed(cfg_dict: dict, seed: int, stages, force: bool) -> int:
    """Worker entry: rebuild the config and run the stages for one seed."""
    cfg = resolve_config(cfg_dict)
    run = SeedRun(cfg, seed, Path(output_root(cfg)), force=force)
    for stage in stages:
        run.run_stage(stage)
    return seed


def _fan_out(cfg: ExperimentConfig, stages, force: bool, workers: int) -> None:
    root = Path(output_root(cfg))
    root.mkdir(parents=True, exist_ok=True)
    save_resolved(root / "resolved.yaml", cfg)
    seeds = list(cfg.seeds)
    workers = min(workers, len(seeds))
    if workers <= 1:
        for seed in seeds:
            run_stages_for_seed(cfg.as_dict(), seed, stages, force)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {seed: pool.submit(run_stages_for_seed, cfg.as_dict(), seed,
                                     stages, force)
                   for seed in seeds}
        for seed in seeds:
            futures[seed].result()


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def _block_diffs(prefix: str, a: dict, b: dict) -> list:
    return [f"{prefix}.{k} ({a[k]!r} vs {b[k]!r})"
            for k in sorted(a) if a[k] != b.get(k)]


def aggregate_runs(run_dirs, out_path) -> Path:
    """One CSV row per (env, featurizer, method) across finished runs."""
    rows = {}
    for rd in map(Path, run_dirs):
        resolved = rd / "resolved.yaml"
        if not resolved.exists():
            raise MissingArtifactError(
                f"{resolved} is missing; not a run directory?")
        with open(resolved) as fh:
            cfg = resolve_config(yaml.safe_load(fh))
        key = (cfg.env_name(), cfg.rl["featurizer"], cfg.rl["method"])
        seed_dirs = sorted(rd.glob("seed_*"),
                           key=lambda p: int(p.name.split("_")[1]))
        if not seed_dirs:
            raise MissingArtifactError(
                f"{rd}: no seed_* directories; run the pipeline first")
        entry = rows.setdefault(key, {"env": cfg.env, "rl": cfg.rl,
                                      "by_seed": {}, "source": str(rd)})
        conflicts = (_block_diffs("env", entry["env"], cfg.env)
                     + _block_diffs("rl", entry["rl"], cfg.rl))
        if conflicts:
            raise ConfigError(
                f"incompatible configs for {key}: {entry['source']} vs {rd}: "
                + "; ".join(conflicts))
        for sd in seed_dirs:
            eval_path = sd / EVAL
            if not eval_path.exists():
                raise MissingArtifactError(
                    f"{eval_path} is missing; run `cslab train-rl` first")
            with open(eval_path) as fh:
                ev = json.load(fh)
            if ev["seed"] in entry["by_seed"]:
                log.warning("duplicate seed %d for %s; keeping the first",
                            ev["seed"], key)
                continue
            entry["by_seed"][ev["seed"]] = float(ev["mean"])
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for key in sorted(rows):
            means = list(rows[key]["by_seed"].values())
            if len(means) == 1:
                log.warning("%s: single seed; std is 0 by convention "
                            "(n=1 flags it)", key)
            writer.writerow([*key, float(np.mean(means)),
                             float(np.std(means)), len(means)])
    log.info("wrote %s (%d rows)", out_path, len(rows))
    return out_path


# ---------------------------------------------------------------------------
# Argument parsing and entry point
# ---------------------------------------------------------------------------

def _parse_seeds(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise ConfigError(f"--seeds must be comma-separated integers: {text!r}") \
            from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cslab",
        description="Recover discrete predictive state machines from "
                    "recurrent world models and use them for analysis, "
                    "reinforcement learning, and planning.")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--out", default=None,
                       help="override the configured output directory")
        p.add_argument("--seeds", default=None,
                       help="comma-separated seed override, e.g. 0,1,2")
        p.add_argument("--force", action="store_true",
                       help="rebuild even when artifacts are up to date")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel seed pipelines (default serial)")
        return p

    pipeline_cmd("collect", "roll random-policy episodes to JSONL")
    pipeline_cmd("train-wm", "train the recurrent world model")
    pipeline_cmd("distill", "discretize hidden states into a code book")
    pipeline_cmd("analyze", "estimate, merge, and score the state machine")
    pipeline_cmd("train-rl", "train a policy over the chosen representation")
    pipeline_cmd("plan", "plan to high-reward states and execute the plan")
    pipeline_cmd("run", "run every pipeline stage in order")

    rep = sub.add_parser("report", help="aggregate finished runs into a CSV")
    rep.add_argument("run_dirs", nargs="+", help="run directories to combine")
    rep.add_argument("--out", default="aggregate.csv",
                     help="path of the output CSV")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            aggregate_runs(args.run_dirs, args.out)
            return 0
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if args.out:
            cfg = replace(cfg, outdir=args.out)
        if args.seeds:
            seeds = _parse_seeds(args.seeds)
            cfg = resolve_config({**cfg.as_dict(), "seeds": seeds})
        stages = PIPELINE if args.command == "run" else (args.command,)
        _fan_out(cfg, stages, force=args.force, workers=args.workers)
        return 0
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except MissingArtifactError as exc:
        log.error("missing artifact: %s", exc)
        return 3
    except TrainingError as exc:
        log.error("training diverged: %s", exc)
        return 4
    except CslabError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
