"""Declarative experiment configuration (YAML) and the built-in benchmark presets.

Every key has a default; unknown keys are rejected. See
``configs/example.yaml`` for an annotated file.
"""

from dataclasses import asdict, dataclass, field, fields
import copy

import yaml

from .hierarchy import ModelConfig
from .pooling import PoolingConfig
from .scenegen import TaskSpec
from .trainer import TrainHyper


class ConfigError(ValueError):
    pass


# model keys derived from the task, never set in the model section
DERIVED_MODEL_KEYS = ("obs_dim", "num_actions", "num_activities")


@dataclass
class DataConfig:
    n_train: int = 200
    n_test: int = 100


@dataclass
class EvalConfig:
    mode: str = "frame"
    split: str = "test"


@dataclass
class AblationConfig:
    variants: list = field(default_factory=lambda: ["Full", "B1", "B2", "B3", "B4", "B5", "B6", "B7"])
    # (d, strategy) cells run for the Full model in the pooling table
    pooling_grid: list = field(default_factory=lambda: [[1, "max"], [1, "average"], [2, "max"],
                                                        [2, "average"], [4, "max"], [4, "average"]])


@dataclass
class ExperimentConfig:
    seed: int = 0
    model_seed: int = None
    task: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    stage1: dict = field(default_factory=dict)
    stage2: dict = field(default_factory=dict)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def task_spec(self):
        opts = {"seed": self.seed, **self.task}
        return _build(TaskSpec, opts, "task")

    def model_config(self, task=None, **overrides):
        task = task or self.task_spec()
        opts = dict(self.model)
        opts.update(overrides)
        if isinstance(opts.get("pooling"), dict):
            opts["pooling"] = _build(PoolingConfig, opts["pooling"], "model.pooling")
        for k in DERIVED_MODEL_KEYS:
            if k in self.model:
                raise ConfigError(f"model.{k} is derived from the task section; remove it")
        opts.update(obs_dim=task.obs_dim, num_actions=task.num_actions, num_activities=task.num_activities)
        opts.setdefault("max_persons", task.persons_per_scene[1])
        return _build(ModelConfig, opts, "model")

    def hyper(self, stage):
        opts = {"shuffle_seed": self.seed + (1 if stage == "stage1" else 2), **getattr(self, stage)}
        return _build(TrainHyper, opts, stage)

    @property
    def resolved_model_seed(self):
        return self.seed if self.model_seed is None else self.model_seed

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def validate(self):
        """Build every section once so that bad values fail early."""
        task = self.task_spec()
        self.model_config(task)
        self.hyper("stage1")
        self.hyper("stage2")
        if self.eval.mode not in ("frame", "clip"):
            raise ConfigError(f"eval.mode must be 'frame' or 'clip', got {self.eval.mode!r}")
        if self.eval.split not in ("train", "test"):
            raise ConfigError(f"eval.split must be 'train' or 'test', got {self.eval.split!r}")
        if self.data.n_train < 1 or self.data.n_test < 1:
            raise ConfigError("data.n_train and data.n_test must be >= 1")
        return self


def _build(cls, opts, section):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(opts) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")
    try:
        return cls(**opts)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from None


def from_dict(raw):
    raw = copy.deepcopy(raw or {})
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    for key, cls in (("data", DataConfig), ("eval", EvalConfig), ("ablation", AblationConfig)):
        if key in raw:
            raw[key] = _build(cls, raw[key] or {}, key)
    for key in ("task", "model", "stage1", "stage2"):
        if key in raw and not isinstance(raw[key] or {}, dict):
            raise ConfigError(f"section {key} must be a mapping")
        raw[key] = raw.get(key) or {}
    return ExperimentConfig(**raw).validate()


def load_config(path):
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
    return from_dict(raw)


def apply_overrides(cfg, assignments):
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    raw = cfg.to_dict()
    for item in assignments:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {p} is not a section")
        node[parts[-1]] = yaml.safe_load(value)
    return from_dict(raw)


def with_seed(cfg, seed):
    """Copy of ``cfg`` with every seed derived from ``seed``."""
    raw = cfg.to_dict()
    raw["seed"] = int(seed)
    raw["model_seed"] = None
    raw["task"].pop("seed", None)
    for stage in ("stage1", "stage2"):
        raw[stage].pop("shuffle_seed", None)
    return from_dict(raw)


# ---------------------------------------------------------------------------
# benchmark presets

_SYNTH_HYPER = {"learning_rate": 0.05, "momentum": 0.9, "batch_size": 16}

PRESETS = {
    # temporal order is the only cue; one key person decides the label
    "key_person_matched": {
        "task": {"rule": "key_person", "num_actions": 4, "num_activities": 3, "persons_per_scene": [4, 4],
                 "timesteps": 10, "obs_dim": 6, "num_modes": 4, "transition_noise": 0.1,
                 "noise_sigma": 0.2, "marginal_matched": True},
        "model": {"stage1_timesteps": 5, "stage2_timesteps": 10},
        "stage1": {**_SYNTH_HYPER, "max_epochs": 40},
        "stage2": {**_SYNTH_HYPER, "max_epochs": 40},
        "data": {"n_train": 800, "n_test": 200},
    },
    # label encodes which half of the court the key person stands in
    "left_right": {
        "task": {"rule": "left_right", "num_actions": 4, "num_activities": 6, "persons_per_scene": [12, 12],
                 "timesteps": 10, "obs_dim": 6, "num_modes": 4, "transition_noise": 0.1,
                 "noise_sigma": 0.3, "marginal_matched": False, "seed": 1},
        "model": {"stage1_timesteps": 5, "stage2_timesteps": 10, "pooling": {"strategy": "max", "d": 2}},
        "stage1": {**_SYNTH_HYPER, "max_epochs": 40},
        "stage2": {**_SYNTH_HYPER, "max_epochs": 40},
        "data": {"n_train": 400, "n_test": 200},
    },
    # small, noiseless-ish majority task for memorisation checks
    "overfit": {
        "task": {"rule": "majority", "num_actions": 3, "num_activities": 3, "persons_per_scene": [3, 3],
                 "timesteps": 6, "obs_dim": 6, "num_modes": 2, "noise_sigma": 0.05},
        "model": {"stage1_timesteps": 6, "stage2_timesteps": 6},
        "stage1": {**_SYNTH_HYPER, "batch_size": 8, "max_epochs": 500},
        "stage2": {**_SYNTH_HYPER, "batch_size": 8, "max_epochs": 500},
        "data": {"n_train": 8, "n_test": 8},
    },
}


def preset(name, **section_overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    raw = copy.deepcopy(PRESETS[name])
    for section, values in section_overrides.items():
        if isinstance(values, dict):
            raw.setdefault(section, {}).update(values)
        else:
            raw[section] = values
    return from_dict(raw)
