"""Attention-based latent denoiser and its pretraining stage.

The corrupted edit block provides keys/values, the clean non-edit block
(projected down to one query token per edit layer, plus a learned position
embedding) provides queries; the decoder's cross-attention output replaces
the edit block while the non-edit block passes through bit-exactly.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import torch
from torch import nn

from . import instrumentation
from .common import DTYPE, derive_rng, derive_seed
from .errors import ParameterError, ShapeError, TrainingDivergenceError
from .generator import ToyGenerator
from .latent_core import CorruptionSpec, EditLayerSpec, corrupt, split_layers

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stage1Config:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    samples_per_epoch: int = 2048
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    hidden_width: int = 128
    num_heads: int = 4
    encoder_layers: int = 6
    decoder_layers: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")


class RegularizerModel(nn.Module):
    """Runs in float32; inputs of any float dtype are cast in, and the
    restored edit block is cast back so the untouched non-edit rows stay
    bit-identical to the input."""

    def __init__(
        self,
        layers: int = 12,
        latent_dim: int = 64,
        edit_layer_count: int = 6,
        hidden_width: int = 128,
        num_heads: int = 4,
        encoder_layers: int = 6,
        decoder_layers: int = 6,
    ):
        super().__init__()
        self.layers = layers
        self.latent_dim = latent_dim
        self.edit_layer_count = edit_layer_count
        self.hidden_width = hidden_width
        non_edit = layers - edit_layer_count

        self.key_mlp = nn.Sequential(
            nn.Linear(latent_dim, hidden_width), nn.GELU(), nn.Linear(hidden_width, hidden_width)
        )
        self.query_mlp = nn.Sequential(
            nn.Linear(non_edit * latent_dim, hidden_width),
            nn.GELU(),
            nn.Linear(hidden_width, edit_layer_count * hidden_width),
        )
        self.positional_embedding = nn.Parameter(torch.zeros(edit_layer_count, hidden_width))
        self.encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(
                hidden_width, num_heads, dim_feedforward=2 * hidden_width,
                dropout=0.0, batch_first=True, norm_first=True,
            ),
            num_layers=encoder_layers,
            enable_nested_tensor=False,
        )
        self.decoder = nn.TransformerDecoder(
            nn.TransformerDecoderLayer(
                hidden_width, num_heads, dim_feedforward=2 * hidden_width,
                dropout=0.0, batch_first=True, norm_first=True,
            ),
            num_layers=decoder_layers,
        )
        self.output_head = nn.Linear(hidden_width, latent_dim)

    @property
    def dtype(self) -> torch.dtype:
        return self.output_head.weight.dtype

    def forward(self, wprime: torch.Tensor) -> torch.Tensor:
        instrumentation.note_forward(wprime, *self.parameters())
        squeeze = wprime.ndim == 2
        if squeeze:
            wprime = wprime.unsqueeze(0)
        if wprime.shape[-2] != self.layers or wprime.shape[-1] != self.latent_dim:
            raise ShapeError(
                f"latent shape {tuple(wprime.shape[-2:])} does not match model "
                f"({self.layers}, {self.latent_dim})"
            )
        c = self.edit_layer_count
        edit, non_edit = wprime[:, :c, :], wprime[:, c:, :]

        edit_in = edit.to(self.dtype)
        memory = self.encoder(self.key_mlp(edit_in))
        queries = self.query_mlp(non_edit.to(self.dtype).flatten(1)).reshape(-1, c, self.hidden_width)
        queries = queries + self.positional_embedding
        decoded = self.decoder(queries, memory)
        restored = self.output_head(decoded).to(wprime.dtype)

        out = torch.cat([restored, non_edit], dim=-2)
        return out.squeeze(0) if squeeze else out


def regularize(model: RegularizerModel, wprime: torch.Tensor, layers: EditLayerSpec) -> torch.Tensor:
    """Restore the edit block from context; non-edit block passes through exactly."""
    if layers.edit_layer_count != model.edit_layer_count:
        raise ShapeError(
            f"model expects edit_layer_count {model.edit_layer_count}, got {layers.edit_layer_count}"
        )
    return model(wprime)


def reg_loss(w_hat: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """Mean absolute reconstruction error over all entries."""
    if w_hat.shape != w.shape:
        raise ShapeError(f"shape mismatch: {tuple(w_hat.shape)} vs {tuple(w.shape)}")
    return (w_hat - w).abs().mean()


def train_stage1(
    gen: ToyGenerator, config: Stage1Config, log_every: int = 10
) -> tuple[RegularizerModel, list[float]]:
    """Denoising pretraining on freshly sampled latents.

    Returns the trained model and the per-epoch loss curve. Raises
    TrainingDivergenceError if the loss explodes past 10x its initial value.
    """
    torch.manual_seed(derive_seed(config.seed, "stage1-init"))
    model = RegularizerModel(
        layers=gen.config.layers,
        latent_dim=gen.config.latent_dim,
        edit_layer_count=gen.config.edit_layer_count,
        hidden_width=config.hidden_width,
        num_heads=config.num_heads,
        encoder_layers=config.encoder_layers,
        decoder_layers=config.decoder_layers,
    )
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    data_rng = derive_rng(config.seed, "stage1-data")
    curve: list[float] = []
    initial_loss = None
    batches = max(1, config.samples_per_epoch // config.batch_size)
    start = time.time()

    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for _ in range(batches):
            w = gen.sample_latent(data_rng, count=config.batch_size)
            wprime, _ = corrupt(w, gen.layers, config.corruption, rng=data_rng)
            loss = reg_loss(model(wprime), w)
            opt.zero_grad()
            instrumentation.backward(loss)
            opt.step()
            epoch_loss += float(loss.detach())
        epoch_loss /= batches
        curve.append(epoch_loss)
        if initial_loss is None:
            initial_loss = epoch_loss
        if not torch.isfinite(torch.tensor(epoch_loss)) or epoch_loss > 10 * initial_loss:
            raise TrainingDivergenceError(
                f"stage-1 loss diverged at epoch {epoch}: {epoch_loss} (initial {initial_loss})"
            )
        if log_every and epoch % log_every == 0:
            logger.info("stage1 epoch %d/%d loss %.5f (%.1fs)",
                        epoch, config.epochs, epoch_loss, time.time() - start)
    return model, curve
