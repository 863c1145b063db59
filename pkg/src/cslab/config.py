"""Experiment configuration: one YAML document, fully echoed defaults.

A config file holds nested blocks (env, collect, world_model, discretizer,
analyze, rl, planner) plus a seeds list and an output directory. Loading
validates every key against the schema, fills defaults, and returns a frozen
ExperimentConfig whose resolved form is written back into the run directory,
so a run records every value it actually used, defaulted or not.
"""
import copy
import hashlib
import json
import os
from dataclasses import dataclass, replace

import yaml

from . import __version__
from .analysis import DEFAULT_MERGE_TOL, DEFAULT_MIN_VISITS
from .discretizer import QbnConfig
from .envs import GridWorld, ToyProcess, ToyProcessConfig
from .envs.grid import LAYOUTS, load_layout
from .errors import ConfigError
from .planner import COST_MODES, DEFAULT_GOAL_THRESHOLD, DEFAULT_REPLAN_BUDGET
from .rl import DqnConfig, DrqnConfig, QLearnConfig
from .world_model import TrainSettings, WorldModelConfig

FEATURIZER_KINDS = ("ground-truth", "window", "raw", "hidden", "discrete")
RL_METHODS = ("tabular", "dqn", "drqn")
DISCRETIZER_STRATEGIES = ("qbn", "kmeans", "vq")
LABEL_SOURCES = ("discrete", "ground-truth")

ENV_DEFAULTS = {
    "toy": {"kind": "toy", "alphabet_size": 2, "memory": 2, "p": 0.75,
            "obs_mode": "discrete", "episode_length": 100,
            "gaussian_noise_std": 1.0},
    "grid": {"kind": "grid", "layout": "layout1", "layout_file": None,
             "obs_mode": "low-disc", "step_limit": 100},
}
COLLECT_DEFAULTS = {"episodes": 1000}
WORLD_MODEL_DEFAULTS = {"obs_embed_dim": 64, "action_embed_dim": 64,
                        "hidden_dim": 64, "predictor_hidden_dim": 64,
                        "epochs": 40, "batch_size": 100, "lr": 1e-3}
DISCRETIZER_DEFAULTS = {
    "qbn": {"strategy": "qbn", "bottleneck": 8, "encoder_hidden": 64,
            "decoder_hidden": 64, "head_hidden": 64, "recon_weight": 1.0,
            "epochs": 15, "batch_size": 256, "lr": 1e-3,
            "include_final": True},
    "kmeans": {"strategy": "kmeans", "k": 32, "batch_size": 1024,
               "iterations": 200, "include_final": True},
    "vq": {"strategy": "vq", "k": 32, "decay": 0.99, "batch_size": 1024,
           "iterations": 200, "include_final": True},
}
ANALYZE_DEFAULTS = {"states": "discrete", "merge_tol": DEFAULT_MERGE_TOL,
                    "noise_scale": 1.0, "min_visits": DEFAULT_MIN_VISITS,
                    "holdout_episodes": 200, "smoothing": 0.5}
_RL_COMMON = {"featurizer": "ground-truth", "window": 1, "n_episodes": 1000,
              "gamma": 0.99, "epsilon_start": 1.0, "epsilon_end": 0.05,
              "eval_every": 100, "eval_episodes": 30}
RL_DEFAULTS = {
    "tabular": {"method": "tabular", **_RL_COMMON, "alpha": 0.1},
    "dqn": {"method": "dqn", **_RL_COMMON, "hidden_dim": 64,
            "replay_capacity": 10_000, "batch_size": 32, "target_sync": 500,
            "lr": 1e-3},
    # the recurrent agent consumes raw observations through its own memory
    "drqn": {"method": "drqn", **_RL_COMMON, "featurizer": "raw",
             "hidden_dim": 64, "embed_dim": 64, "replay_episodes": 500,
             "batch_episodes": 8, "updates_per_episode": 4,
             "target_sync": 100, "lr": 1e-3},
}
PLANNER_DEFAULTS = {"goal_threshold": DEFAULT_GOAL_THRESHOLD,
                    "cost_mode": "unit", "max_replans": DEFAULT_REPLAN_BUDGET,
                    "episodes": 10}

BLOCKS = ("env", "collect", "world_model", "discretizer", "analyze", "rl",
          "planner")
BUILD_ID = f"cslab-{__version__}"


def _merge_block(name: str, defaults: dict, given: dict) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


def _pick(table: dict, value, what: str):
    if value not in table:
        raise ConfigError(f"{what} must be one of {sorted(table)}, got {value!r}")
    return table[value]


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description; every field has a value."""
    env: dict
    collect: dict
    world_model: dict
    discretizer: dict
    analyze: dict
    rl: dict
    planner: dict
    seeds: tuple
    outdir: str

    # -- concrete object builders -------------------------------------------

    def make_env(self):
        e = self.env
        if e["kind"] == "toy":
            return ToyProcess(ToyProcessConfig(
                alphabet_size=e["alphabet_size"], memory=e["memory"],
                p=e["p"], obs_mode=e["obs_mode"],
                episode_length=e["episode_length"],
                gaussian_noise_std=e["gaussian_noise_std"]))
        layout = (load_layout(e["layout_file"]) if e["layout_file"]
                  else _pick(LAYOUTS, e["layout"], "env.layout"))
        return GridWorld(replace(layout, obs_mode=e["obs_mode"],
                                 step_limit=e["step_limit"]))

    def env_name(self) -> str:
        e = self.env
        if e["kind"] == "toy":
            return f"toy-o{e['alphabet_size']}-k{e['memory']}"
        return f"grid-{os.path.basename(e['layout_file']) if e['layout_file'] else e['layout']}"

    def wm_config(self, env) -> WorldModelConfig:
        w = self.world_model
        return WorldModelConfig(obs_kind=tuple(env.obs_kind),
                                n_actions=env.n_actions,
                                obs_embed_dim=w["obs_embed_dim"],
                                action_embed_dim=w["action_embed_dim"],
                                hidden_dim=w["hidden_dim"],
                                predictor_hidden_dim=w["predictor_hidden_dim"])

    def wm_train_settings(self, seed: int) -> TrainSettings:
        w = self.world_model
        return TrainSettings(epochs=w["epochs"], batch_size=w["batch_size"],
                             lr=w["lr"], seed=seed)

    def qbn_config(self, seed: int) -> QbnConfig:
        d = self.discretizer
        return QbnConfig(bottleneck=d["bottleneck"],
                         encoder_hidden=d["encoder_hidden"],
                         decoder_hidden=d["decoder_hidden"],
                         head_hidden=d["head_hidden"],
                         recon_weight=d["recon_weight"], epochs=d["epochs"],
                         batch_size=d["batch_size"], lr=d["lr"], seed=seed)

    def rl_config(self, seed: int):
        r = self.rl
        common = dict(n_episodes=r["n_episodes"], gamma=r["gamma"],
                      epsilon_start=r["epsilon_start"],
                      epsilon_end=r["epsilon_end"], eval_every=r["eval_every"],
                      eval_episodes=r["eval_episodes"], seed=seed)
        if r["method"] == "tabular":
            return QLearnConfig(alpha=r["alpha"], **common)
        if r["method"] == "dqn":
            return DqnConfig(hidden_dim=r["hidden_dim"],
                             replay_capacity=r["replay_capacity"],
                             batch_size=r["batch_size"],
                             target_sync=r["target_sync"], lr=r["lr"],
                             **common)
        return DrqnConfig(hidden_dim=r["hidden_dim"], embed_dim=r["embed_dim"],
                          replay_episodes=r["replay_episodes"],
                          batch_episodes=r["batch_episodes"],
                          updates_per_episode=r["updates_per_episode"],
                          target_sync=r["target_sync"], lr=r["lr"], **common)

    def as_dict(self) -> dict:
        return {"env": copy.deepcopy(self.env),
                "collect": copy.deepcopy(self.collect),
                "world_model": copy.deepcopy(self.world_model),
                "discretizer": copy.deepcopy(self.discretizer),
                "analyze": copy.deepcopy(self.analyze),
                "rl": copy.deepcopy(self.rl),
                "planner": copy.deepcopy(self.planner),
                "seeds": list(self.seeds), "outdir": self.outdir}


def resolve_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed document and fill every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(raw) - set(BLOCKS) - {"seeds", "outdir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for name in BLOCKS:
        if name in raw and not isinstance(raw[name], dict):
            raise ConfigError(f"{name} must be a mapping")

    env_in = dict(raw.get("env", {}))
    kind = env_in.get("kind", "toy")
    env = _merge_block("env", _pick(ENV_DEFAULTS, kind, "env.kind"),
                       env_in)

    collect = _merge_block("collect", COLLECT_DEFAULTS, raw.get("collect", {}))
    if collect["episodes"] < 0:
        raise ConfigError("collect.episodes must be >= 0")

    world_model = _merge_block("world_model", WORLD_MODEL_DEFAULTS,
                               raw.get("world_model", {}))

    disc_in = dict(raw.get("discretizer", {}))
    strategy = disc_in.get("strategy", "qbn")
    discretizer = _merge_block(
        "discretizer",
        _pick(DISCRETIZER_DEFAULTS, strategy, "discretizer.strategy"),
        disc_in)

    analyze = _merge_block("analyze", ANALYZE_DEFAULTS, raw.get("analyze", {}))
    if analyze["states"] not in LABEL_SOURCES:
        raise ConfigError(f"analyze.states must be one of {LABEL_SOURCES}")
    if analyze["holdout_episodes"] < 1:
        raise ConfigError("analyze.holdout_episodes must be >= 1")

    rl_in = dict(raw.get("rl", {}))
    method = rl_in.get("method", "tabular")
    rl = _merge_block("rl", _pick(RL_DEFAULTS, method, "rl.method"),
                      rl_in)
    if rl["featurizer"] not in FEATURIZER_KINDS:
        raise ConfigError(f"rl.featurizer must be one of {FEATURIZER_KINDS}")
    if rl["window"] < 1:
        raise ConfigError("rl.window must be >= 1")
    if rl["method"] == "drqn" and rl["featurizer"] != "raw":
        raise ConfigError("rl.method drqn keeps its own recurrent state and "
                          "only accepts featurizer 'raw'")

    planner = _merge_block("planner", PLANNER_DEFAULTS, raw.get("planner", {}))
    if planner["cost_mode"] not in COST_MODES:
        raise ConfigError(f"planner.cost_mode must be one of {COST_MODES}")
    if planner["episodes"] < 1:
        raise ConfigError("planner.episodes must be >= 1")

    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if (not isinstance(seeds, (list, tuple)) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool)
                       for s in seeds)):
        raise ConfigError("seeds must be a nonempty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")

    outdir = raw.get("outdir", "runs/default")
    if not isinstance(outdir, str) or not outdir:
        raise ConfigError("outdir must be a nonempty string")

    cfg = ExperimentConfig(env=env, collect=collect, world_model=world_model,
                           discretizer=discretizer, analyze=analyze, rl=rl,
                           planner=planner, seeds=tuple(seeds), outdir=outdir)
    cfg.make_env()  # surfaces invalid env values now, not mid-pipeline
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is None:
        raw = {}
    return resolve_config(raw)


def save_resolved(path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.as_dict(), fh, sort_keys=True,
                       default_flow_style=False)


def config_hash(obj) -> str:
    """Stable short digest of any JSON-serializable structure."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def output_root(cfg: ExperimentConfig) -> str:
    """The run directory, honoring the CSLAB_OUT override of the output root."""
    override = os.environ.get("CSLAB_OUT")
    if override:
        return os.path.join(override, cfg.outdir.lstrip("/"))
    return cfg.outdir
