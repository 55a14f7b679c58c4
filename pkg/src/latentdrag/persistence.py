"""Model bundles and their checkpoint serialization."""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import torch

from .checkpoints import load_checkpoint, save_checkpoint
from .common import DTYPE
from .config import RunConfig
from .errors import CheckpointError
from .generator import GeneratorConfig, ToyGenerator
from .predictor import PredictorModel, Stage2Config
from .regularizer import RegularizerModel, Stage1Config
from .latent_core import CorruptionSpec

STAGE1_KIND = "latentdrag-stage1"
JOINT_KIND = "latentdrag-joint"


@dataclass
class DragModels:
    """Everything a drag edit needs; models are frozen for inference."""

    generator: ToyGenerator
    regularizer: RegularizerModel | None
    predictor: PredictorModel | None
    stage2: Stage2Config | None = None
    run_config: RunConfig | None = None

    @property
    def default_steps(self) -> int:
        return self.stage2.steps if self.stage2 else 5

    def eval_mode(self) -> "DragModels":
        for m in (self.regularizer, self.predictor):
            if m is not None:
                m.eval()
        return self


def _state_arrays(prefix: str, module: torch.nn.Module) -> dict:
    return {f"{prefix}.{name}": value for name, value in module.state_dict().items()}


def _load_state(prefix: str, module: torch.nn.Module, arrays: dict) -> None:
    state = {}
    skip = len(prefix) + 1
    for name, value in arrays.items():
        if name.startswith(prefix + "."):
            state[name[skip:]] = torch.as_tensor(value, dtype=DTYPE)
    missing = set(module.state_dict()) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint is missing {prefix} arrays: {sorted(missing)[:3]}...")
    module.load_state_dict(state)


def _build_regularizer(gen: ToyGenerator, cfg: Stage1Config) -> RegularizerModel:
    return RegularizerModel(
        layers=gen.config.layers,
        latent_dim=gen.config.latent_dim,
        edit_layer_count=gen.config.edit_layer_count,
        hidden_width=cfg.hidden_width,
        num_heads=cfg.num_heads,
        encoder_layers=cfg.encoder_layers,
        decoder_layers=cfg.decoder_layers,
    )


def _build_predictor(gen: ToyGenerator, cfg: Stage2Config) -> PredictorModel:
    return PredictorModel(
        layers=gen.config.layers,
        latent_dim=gen.config.latent_dim,
        edit_layer_count=gen.config.edit_layer_count,
        feature_channels=gen.config.feature_channels,
        hidden_width=cfg.hidden_width,
        num_heads=cfg.num_heads,
        encoder_layers=cfg.encoder_layers,
        decoder_layers=cfg.decoder_layers,
        max_steps=cfg.max_steps,
    )


def save_stage1_checkpoint(
    path: str | Path,
    gen: ToyGenerator,
    model: RegularizerModel,
    config: Stage1Config,
    curve: list[float],
) -> Path:
    arrays = {f"gen.{k}": v for k, v in gen.state_arrays().items()}
    arrays.update(_state_arrays("reg", model))
    arrays["curve"] = torch.tensor(curve, dtype=DTYPE)
    meta = {
        "generator": dataclasses.asdict(gen.config),
        "stage1": dataclasses.asdict(config),
    }
    return save_checkpoint(path, STAGE1_KIND, meta, arrays)


def load_stage1_checkpoint(path: str | Path):
    _, meta, arrays = load_checkpoint(path, expected_kind=STAGE1_KIND)
    gen = ToyGenerator(GeneratorConfig(**meta["generator"]))
    gen.load_state_arrays({k[4:]: v for k, v in arrays.items() if k.startswith("gen.")})
    s1 = dict(meta["stage1"])
    s1["corruption"] = CorruptionSpec(**s1["corruption"])
    config = Stage1Config(**s1)
    model = _build_regularizer(gen, config)
    _load_state("reg", model, arrays)
    curve = arrays["curve"].tolist()
    return gen, model, config, curve


def save_joint_checkpoint(
    path: str | Path,
    gen: ToyGenerator,
    regularizer: RegularizerModel | None,
    predictor: PredictorModel,
    run_config: RunConfig,
    curves: list[dict] | None = None,
) -> Path:
    arrays = {f"gen.{k}": v for k, v in gen.state_arrays().items()}
    arrays.update(_state_arrays("pred", predictor))
    if regularizer is not None:
        arrays.update(_state_arrays("reg", regularizer))
    if curves:
        cols = ["epoch", "l_pred", "l_drag", "total", "lr"]
        arrays["curves"] = torch.tensor([[row[c] for c in cols] for row in curves], dtype=DTYPE)
    meta = {
        "run_config": run_config.to_dict(),
        "has_regularizer": regularizer is not None,
    }
    return save_checkpoint(path, JOINT_KIND, meta, arrays)


def load_joint_checkpoint(path: str | Path) -> DragModels:
    _, meta, arrays = load_checkpoint(path, expected_kind=JOINT_KIND)
    run_config = RunConfig.from_dict(meta["run_config"])
    gen = ToyGenerator(run_config.generator)
    gen.load_state_arrays({k[4:]: v for k, v in arrays.items() if k.startswith("gen.")})
    predictor = _build_predictor(gen, run_config.stage2)
    _load_state("pred", predictor, arrays)
    regularizer = None
    if meta.get("has_regularizer"):
        regularizer = _build_regularizer(gen, run_config.stage1)
        _load_state("reg", regularizer, arrays)
    return DragModels(
        generator=gen,
        regularizer=regularizer,
        predictor=predictor,
        stage2=run_config.stage2,
        run_config=run_config,
    ).eval_mode()


def write_curve_csv(path: str | Path, rows: list[dict], columns: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])
    return path


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)
