"""Run configuration: nested dataclasses with a lossless YAML representation."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ParameterError
from .generator import GeneratorConfig
from .latent_core import CorruptionSpec, EditLayerSpec, PerturbSpec
from .predictor import Stage2Config
from .regularizer import Stage1Config

SCHEMA = "latentdrag/runconfig/1"


@dataclass(frozen=True)
class RunConfig:
    schema: str = SCHEMA
    seed: int = 0
    deterministic: bool = False
    out_dir: str = "runs/default"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    perturb: PerturbSpec = field(default_factory=PerturbSpec)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)

    def __post_init__(self):
        if self.schema != SCHEMA:
            raise ParameterError(f"unknown config schema {self.schema!r}, expected {SCHEMA!r}")

    @property
    def edit_layers(self) -> EditLayerSpec:
        return EditLayerSpec(self.generator.edit_layer_count)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        data = dict(data)
        for key, cls in (
            ("generator", GeneratorConfig),
            ("corruption", CorruptionSpec),
            ("perturb", PerturbSpec),
            ("stage1", Stage1Config),
            ("stage2", Stage2Config),
        ):
            if key in data and isinstance(data[key], dict):
                sub = dict(data[key])
                if cls is Stage1Config and isinstance(sub.get("corruption"), dict):
                    sub["corruption"] = CorruptionSpec(**sub["corruption"])
                data[key] = cls(**sub)
        return RunConfig(**data)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        return path

    @staticmethod
    def load(path: str | Path) -> "RunConfig":
        data = yaml.safe_load(Path(path).read_text())
        if not isinstance(data, dict):
            raise ParameterError(f"config file {path} does not contain a mapping")
        return RunConfig.from_dict(data)

    def content_hash(self) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]
