"""Experiment configuration (JSON) with strict validation.

Every section rejects unknown keys. Seeds left as ``null`` are derived from
``training.seed``, so a single number (or the ``JACREG_SEED`` environment
variable) pins a whole run.
"""
import json
import os
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .objectives import FAMILIES, RegularizerSpec
from .operators.masks import MASK_KINDS
from .training import TrainConfig

SEED_ENV = "JACREG_SEED"


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    source: Literal["idx_file", "synthetic_sparse"] = "synthetic_sparse"
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    limit: Optional[int] = Field(default=None, ge=1)
    n_train: int = Field(default=500, ge=1)
    n_test: Optional[int] = Field(default=None, ge=1)
    split_seed: Optional[int] = None
    # synthetic_sparse only
    n_samples: int = Field(default=1000, ge=2)
    height: int = Field(default=8, ge=1)
    width: int = Field(default=8, ge=1)
    sparsity: int = Field(default=5, ge=0)
    synthetic_seed: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if self.source == "idx_file":
            if not self.images_path:
                raise ValueError("dataset.images_path is required for source 'idx_file'")
            for key in ("images_path", "labels_path"):
                path = getattr(self, key)
                if path is not None and not Path(path).is_file():
                    raise ValueError(f"dataset.{key}: file not found: {path}")
        elif self.sparsity > self.height * self.width:
            raise ValueError("dataset.sparsity exceeds the signal length")
        return self


class OperatorSection(_Section):
    kind: Literal["gaussian", "fourier"] = "gaussian"
    q: Optional[int] = Field(default=None, ge=1)
    mask_kind: Literal[MASK_KINDS] = "cartesian1d"  # type: ignore[valid-type]
    subsample_ratio: float = Field(default=0.25, gt=0, le=1)
    seed: Optional[int] = None
    noise_eta: float = Field(default=0.0, ge=0)
    noise_seed: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "gaussian" and self.q is None:
            raise ValueError("operator.q is required for the gaussian operator")
        return self


class NetworkSection(_Section):
    depth: int = Field(default=3, ge=1)
    hidden: Optional[int] = Field(default=None, ge=1)
    init_seed: Optional[int] = None


class TrainingSection(_Section):
    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=50, ge=1)
    optimizer: Literal["adam", "sgd"] = "adam"
    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    eval_every: int = Field(default=1, ge=1)
    lipschitz_iters: int = Field(default=10, ge=1)


class RegularizerSection(_Section):
    family: Literal[FAMILIES] = "none"  # type: ignore[valid-type]
    lambda1: float = Field(default=0.0, ge=0)
    lambda2: float = Field(default=0.0, ge=0)
    adaptive: bool = False
    adaptive_scale: float = Field(default=20.0, gt=0)
    step_fraction: float = Field(default=1.0, gt=0, le=1)
    power_iters: int = Field(default=3, ge=1)
    n_proj: int = Field(default=1, ge=1)


class OutputSection(_Section):
    dir: str = "results"
    checkpoint: str = "final.ckpt"
    record_wall_time: bool = False


class ExperimentConfig(_Section):
    dataset: DatasetSection = DatasetSection()
    operator: OperatorSection = OperatorSection(q=32)
    network: NetworkSection = NetworkSection()
    training: TrainingSection = TrainingSection()
    regularizer: RegularizerSection = RegularizerSection()
    output: OutputSection = OutputSection()

    def derived_seeds(self):
        """Concrete seeds for every random component (explicit values win)."""
        names = ("split", "synthetic", "operator", "noise", "init")
        spawned = np.random.SeedSequence(self.training.seed).spawn(len(names))
        auto = {n: int(s.generate_state(1)[0]) for n, s in zip(names, spawned)}
        given = {
            "split": self.dataset.split_seed,
            "synthetic": self.dataset.synthetic_seed,
            "operator": self.operator.seed,
            "noise": self.operator.noise_seed,
            "init": self.network.init_seed,
        }
        return {k: auto[k] if v is None else v for k, v in given.items()}

    def resolved(self):
        """Copy with all derived seeds written in."""
        s = self.derived_seeds()
        data = self.model_dump()
        data["dataset"]["split_seed"] = s["split"]
        data["dataset"]["synthetic_seed"] = s["synthetic"]
        data["operator"]["seed"] = s["operator"]
        data["operator"]["noise_seed"] = s["noise"]
        data["network"]["init_seed"] = s["init"]
        return ExperimentConfig.model_validate(data)

    def regularizer_spec(self):
        return RegularizerSpec(**self.regularizer.model_dump())

    def train_config(self):
        t = self.training
        return TrainConfig(
            epochs=t.epochs,
            batch_size=t.batch_size,
            optimizer=t.optimizer,
            learning_rate=t.learning_rate,
            beta1=t.beta1,
            beta2=t.beta2,
            eps=t.eps,
            seed=t.seed,
            regularizer=self.regularizer_spec(),
            eval_every=t.eval_every,
            lipschitz_iters=t.lipschitz_iters,
            record_wall_time=self.output.record_wall_time,
        )

    def to_json(self):
        return json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n"


def _format_errors(exc):
    lines = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data, env=None):
    """Validate a config mapping; ``JACREG_SEED`` in ``env`` overrides ``training.seed``."""
    env = os.environ if env is None else env
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = json.loads(json.dumps(data))
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        data.setdefault("training", {})["seed"] = seed
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path, env=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data, env)
