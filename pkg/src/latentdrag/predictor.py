"""Autoregressive latent-motion predictor, its losses, and joint training.

Memory tokens come from a small conv stack over the source feature map plus
embedded 7x7 patches at every handle and target point; queries are the
previous latents in the motion sequence plus learned position embeddings.
Decoding is causal, and each decoded edit block is passed through the
latent regularizer with a residual skip before supervision.
"""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass

import torch
from torch import nn

from . import instrumentation
from .common import DTYPE, derive_rng, derive_seed
from .correspondence import (
    PATCH_SIZE,
    STEP_MIN_DISTANCE_FULL,
    ENDPOINT_MIN_DISTANCE_FULL,
    PointPair,
    extract_patch,
    match_points,
    object_frame_grid,
    scaled_min_distance,
)
from .errors import ParameterError, ShapeError, TrainingDivergenceError
from .generator import BASE_EXTENT, ToyGenerator
from .latent_core import EditLayerSpec
from .regularizer import RegularizerModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stage2Config:
    # Reference training schedule; the desk-scale recipe overrides the rates.
    lr_init: float = 1e-5
    lr_min: float = 1e-7
    cosine_period: int = 30
    epochs: int = 150
    alpha: float = 0.1
    beta: float = 1.0
    steps: int = 5
    perturb_scale_min: float = 0.05
    perturb_scale_max: float = 0.40
    regularizer_lr: float = 1e-5
    batch_size: int = 32
    samples_per_epoch: int = 2048
    endpoint_min_distance: float | None = None  # None: 50 px rescaled from 512
    step_min_distance: float | None = None      # None: 30 px rescaled from 512
    max_pairs: int = 32
    train_pair_cap: int = 12
    zero_motion_fraction: float = 0.1
    drag_warmup_epochs: int = 0  # linear ramp of beta; 0 applies beta from the start
    observable_motion: bool = True  # project anchor offsets onto the pose-visible subspace
    query_noise_std: float = 0.02  # edit-row noise on teacher-forced prefixes (rollout robustness)
    grid_step_px: float = 4.0
    hidden_width: int = 128
    num_heads: int = 4
    encoder_layers: int = 6
    decoder_layers: int = 16
    max_steps: int = 16
    use_regularizer: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ParameterError("alpha and beta must be >= 0")
        if self.steps < 1:
            raise ParameterError("steps must be >= 1")
        if not 0 < self.perturb_scale_min <= self.perturb_scale_max:
            raise ParameterError("need 0 < perturb_scale_min <= perturb_scale_max")

    def resolved_endpoint_min_distance(self, image_resolution: int) -> float:
        if self.endpoint_min_distance is not None:
            return self.endpoint_min_distance
        return scaled_min_distance(ENDPOINT_MIN_DISTANCE_FULL, image_resolution)

    def resolved_step_min_distance(self, image_resolution: int) -> float:
        if self.step_min_distance is not None:
            return self.step_min_distance
        return scaled_min_distance(STEP_MIN_DISTANCE_FULL, image_resolution)


class PredictorModel(nn.Module):
    """Runs in float32; latents of any float dtype are cast at the boundary
    and predicted edit blocks cast back to the input dtype."""

    def __init__(
        self,
        layers: int = 12,
        latent_dim: int = 64,
        edit_layer_count: int = 6,
        feature_channels: int = 8,
        hidden_width: int = 128,
        num_heads: int = 4,
        encoder_layers: int = 6,
        decoder_layers: int = 16,
        max_steps: int = 16,
        conv_width: int = 32,
    ):
        super().__init__()
        self.layers = layers
        self.latent_dim = latent_dim
        self.edit_layer_count = edit_layer_count
        self.hidden_width = hidden_width
        self.max_steps = max_steps
        self.conv_width = conv_width

        self.feature_conv = nn.Sequential(
            nn.Conv2d(feature_channels, conv_width, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(conv_width, conv_width, 3, stride=2, padding=1),
            nn.GELU(),
        )
        self.feature_mlp = nn.Linear(conv_width, hidden_width)
        # Patch tokens: flattened window values plus the patch's normalized
        # pixel position and a handle/target role flag. The window content
        # alone cannot resolve where in the frame it was taken from.
        self.patch_input_width = feature_channels * PATCH_SIZE * PATCH_SIZE + 3
        self.patch_mlp = nn.Sequential(
            nn.Linear(self.patch_input_width, hidden_width),
            nn.GELU(),
            nn.Linear(hidden_width, hidden_width),
        )
        self.memory_mlp = nn.Sequential(
            nn.Linear(hidden_width, hidden_width), nn.GELU(), nn.Linear(hidden_width, hidden_width)
        )
        self.encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(
                hidden_width, num_heads, dim_feedforward=2 * hidden_width,
                dropout=0.0, batch_first=True, norm_first=True,
            ),
            num_layers=encoder_layers,
            enable_nested_tensor=False,
        )
        self.query_mlp = nn.Sequential(
            nn.Linear(layers * latent_dim, hidden_width),
            nn.GELU(),
            nn.Linear(hidden_width, hidden_width),
        )
        self.positional_embedding = nn.Parameter(torch.zeros(max_steps, hidden_width))
        self.decoder = nn.TransformerDecoder(
            nn.TransformerDecoderLayer(
                hidden_width, num_heads, dim_feedforward=2 * hidden_width,
                dropout=0.0, batch_first=True, norm_first=True,
            ),
            num_layers=decoder_layers,
        )
        # The head predicts the edit-block MOTION from the query latent; the
        # gate scales the regularizer's correction so a harmful restore can
        # be learned away instead of destroying predictions.
        self.output_head = nn.Linear(hidden_width, edit_layer_count * latent_dim)
        self.regularizer_gate = nn.Parameter(torch.tensor(0.15))

    @property
    def dtype(self) -> torch.dtype:
        return self.output_head.weight.dtype

    def encode_memory(
        self,
        features: torch.Tensor,             # (B, C, h, w)
        patch_inputs: torch.Tensor,         # (B, P, C*k*k + 3) from patch_token_inputs
        patch_pad_mask: torch.Tensor | None = None,  # (B, P) True where padded
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        instrumentation.note_forward(features, *self.parameters())
        conv_tokens = self.feature_conv(features.to(self.dtype)).flatten(2).transpose(1, 2)
        conv_tokens = self.feature_mlp(conv_tokens)
        patch_tokens = self.patch_mlp(patch_inputs.to(self.dtype))
        tokens = self.memory_mlp(torch.cat([conv_tokens, patch_tokens], dim=1))
        pad = None
        if patch_pad_mask is not None:
            pad = torch.cat(
                [torch.zeros(features.shape[0], conv_tokens.shape[1], dtype=torch.bool), patch_pad_mask],
                dim=1,
            )
        memory = self.encoder(tokens, src_key_padding_mask=pad)
        return memory, pad


def patch_token_inputs(
    windows: torch.Tensor,      # (P, C, k, k)
    points_px: torch.Tensor,    # (P, 2)
    roles: torch.Tensor,        # (P,) 0 = handle, 1 = target
    image_resolution: int,
) -> torch.Tensor:
    """Flattened window values with normalized position and role appended."""
    meta = torch.cat(
        [points_px / image_resolution, roles.to(points_px.dtype).unsqueeze(-1)], dim=-1
    )
    return torch.cat([windows.flatten(1), meta], dim=-1)


def encode_context(
    model: PredictorModel, feature: torch.Tensor, pairs: list[PointPair], image_resolution: int
) -> torch.Tensor:
    """Memory tokens for one sample: conv tokens + one token per handle and target patch."""
    if not pairs:
        raise ParameterError("at least one point pair is required to condition an edit")
    if feature.ndim != 3:
        raise ShapeError(f"feature must be (C, h, w), got {tuple(feature.shape)}")
    windows, points, roles = [], [], []
    for pair in pairs:
        windows.append(extract_patch(feature, pair.handle, image_resolution).values)
        points.append(pair.handle)
        roles.append(0.0)
        windows.append(extract_patch(feature, pair.target, image_resolution).values)
        points.append(pair.target)
        roles.append(1.0)
    inputs = patch_token_inputs(
        torch.stack(windows, dim=0),
        torch.tensor(points, dtype=feature.dtype),
        torch.tensor(roles, dtype=feature.dtype),
        image_resolution,
    )
    memory, _ = model.encode_memory(feature.unsqueeze(0), inputs.unsqueeze(0))
    return memory


def _causal_mask(n: int, dtype: torch.dtype) -> torch.Tensor:
    return torch.triu(torch.full((n, n), float("-inf"), dtype=dtype), diagonal=1)


def predict_teacher_forced(
    model: PredictorModel,
    regularizer: RegularizerModel | None,
    prefix: torch.Tensor,               # (B, n, layers, dim) ground-truth w_0..w_{n-1}
    memory: torch.Tensor,               # (B, T, hidden)
    memory_pad_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Predict the next-step latents for every prefix position, causally.

    Returns (B, n, layers, dim): position i predicts step i+1 as the query
    latent plus a decoded motion. Every output carries w_0's non-edit
    block; when a regularizer is supplied, its restoring correction is
    added through a learned gate (residual skip around the regularizer).
    """
    instrumentation.note_forward(prefix, memory, *model.parameters())
    squeeze = prefix.ndim == 3
    if squeeze:
        prefix = prefix.unsqueeze(0)
        memory = memory if memory.ndim == 3 else memory.unsqueeze(0)
    batch, n, layers, dim = prefix.shape
    if layers != model.layers or dim != model.latent_dim:
        raise ShapeError(
            f"prefix latent shape ({layers}, {dim}) does not match model "
            f"({model.layers}, {model.latent_dim})"
        )
    if n > model.max_steps:
        raise ShapeError(f"prefix length {n} exceeds positional capacity {model.max_steps}")

    queries = model.query_mlp(prefix.to(model.dtype).flatten(2)) + model.positional_embedding[:n]
    hidden = model.decoder(
        queries, memory, tgt_mask=_causal_mask(n, model.dtype),
        memory_key_padding_mask=memory_pad_mask,
    )
    c = model.edit_layer_count
    motion = model.output_head(hidden).reshape(batch, n, c, dim).to(prefix.dtype)
    edit = prefix[:, :, :c, :] + motion
    non_edit = prefix[:, 0:1, c:, :].expand(batch, n, layers - c, dim)

    if regularizer is not None:
        assembled = torch.cat([edit, non_edit], dim=2)
        restored = regularizer(assembled.reshape(batch * n, layers, dim)).reshape(batch, n, layers, dim)
        gate = model.regularizer_gate.to(prefix.dtype)
        edit = edit + gate * (restored[:, :, :c, :] - edit)
    out = torch.cat([edit, non_edit], dim=2)
    return out.squeeze(0) if squeeze else out


def pred_loss(predicted: torch.Tensor, sequence: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between predicted steps and the true sequence.

    `predicted` holds steps 1..n; the shared step 0 is included in the mean
    (contributing zero), so the divisor is n+1 sequence elements.
    """
    if predicted.ndim == 3 and sequence.ndim == 3:
        predicted, sequence = predicted.unsqueeze(0), sequence.unsqueeze(0)
    if predicted.ndim != 4 or sequence.ndim != 4:
        raise ShapeError("pred_loss expects (n, layers, dim) or (batch, n, layers, dim) stacks")
    if predicted.shape[1] + 1 != sequence.shape[1] or predicted.shape[2:] != sequence.shape[2:]:
        raise ShapeError(
            f"predicted {tuple(predicted.shape)} does not align with sequence {tuple(sequence.shape)}"
        )
    full = torch.cat([sequence[:, 0:1], predicted], dim=1)
    return (full - sequence).abs().mean()


def total_loss(l_pred: torch.Tensor, l_drag: torch.Tensor, alpha: float, beta: float) -> torch.Tensor:
    """Weighted sum alpha * prediction loss + beta * drag loss."""
    l_pred = torch.as_tensor(l_pred, dtype=DTYPE)
    l_drag = torch.as_tensor(l_drag, dtype=DTYPE)
    if not (torch.isfinite(l_pred) and torch.isfinite(l_drag)):
        raise ParameterError("loss components must be finite")
    return alpha * l_pred + beta * l_drag


def _gather_windows(features: torch.Tensor, item_idx: torch.Tensor, cells: torch.Tensor) -> torch.Tensor:
    """Zero-padded PATCH_SIZE windows from a stack of feature maps.

    features (M, C, h, w), item_idx (S,), cells (S, 2) as (cell_x, cell_y)
    -> (S, C, k, k), autograd-compatible.
    """
    half = PATCH_SIZE // 2
    padded = torch.nn.functional.pad(features, (half, half, half, half))
    sel = padded[item_idx]
    offsets = torch.arange(PATCH_SIZE)
    count, channels = sel.shape[0], sel.shape[1]
    iy = (cells[:, 1].view(-1, 1) + offsets).view(count, 1, PATCH_SIZE, 1)
    ix = (cells[:, 0].view(-1, 1) + offsets).view(count, 1, 1, PATCH_SIZE)
    ib = torch.arange(count).view(count, 1, 1, 1)
    ic = torch.arange(channels).view(1, channels, 1, 1)
    return sel[
        ib.expand(count, channels, PATCH_SIZE, PATCH_SIZE),
        ic.expand(count, channels, PATCH_SIZE, PATCH_SIZE),
        iy.expand(count, channels, PATCH_SIZE, PATCH_SIZE),
        ix.expand(count, channels, PATCH_SIZE, PATCH_SIZE),
    ]


def _cells_from_px(points_px: torch.Tensor, fres: int, res: int) -> torch.Tensor:
    return ((points_px * fres / res).floor().long()).clamp(0, fres - 1)


def drag_loss_batched(
    gen: ToyGenerator,
    sequences: torch.Tensor,            # (B, n+1, layers, dim) ground truth
    predicted: torch.Tensor,            # (B, n, layers, dim) with grad
    min_distance: float,
    candidates: torch.Tensor | None = None,
) -> torch.Tensor:
    """Patch-supervision loss over consecutive steps, vectorized over a batch.

    For each step i -> i+1, material points moving farther than min_distance
    supervise the predicted step's feature patch at their target position
    with the true feature patch at their handle position. Steps with no
    matches contribute zero.
    """
    batch, n_plus_1 = sequences.shape[0], sequences.shape[1]
    n = n_plus_1 - 1
    if predicted.shape[:2] != (batch, n):
        raise ShapeError(f"predicted shape {tuple(predicted.shape)} does not match sequences")
    res, fres = gen.config.image_resolution, gen.config.feature_resolution
    if candidates is None:
        candidates = object_frame_grid(step_obj=DEFAULT_TRAIN_GRID_PX / (BASE_EXTENT * res))

    params = gen.decode_params(sequences.reshape(-1, *sequences.shape[2:]))
    positions = gen.image_points(candidates, params).reshape(batch, n_plus_1, -1, 2)
    inside = (positions >= 0).all(-1) & (positions < res).all(-1)
    dist = (positions[:, 1:] - positions[:, :-1]).norm(dim=-1)
    valid = inside[:, :-1] & inside[:, 1:] & (dist > min_distance)        # (B, n, P)

    if not valid.any():
        anchor = predicted.sum() * 0.0
        return anchor

    with torch.no_grad():
        feats_true = gen.features(sequences[:, :-1].reshape(-1, *sequences.shape[2:]))
    feats_pred = gen.features(predicted.reshape(-1, *predicted.shape[2:]))

    b_idx, i_idx, p_idx = torch.nonzero(valid, as_tuple=True)
    flat_idx = b_idx * n + i_idx
    handle_cells = _cells_from_px(positions[b_idx, i_idx, p_idx], fres, res)
    target_cells = _cells_from_px(positions[b_idx, i_idx + 1, p_idx], fres, res)

    win_true = _gather_windows(feats_true, flat_idx, handle_cells)
    win_pred = _gather_windows(feats_pred, flat_idx, target_cells)
    per_match = (win_true - win_pred).abs().mean(dim=(1, 2, 3))

    sums = torch.zeros(batch * n, dtype=DTYPE).index_add_(0, flat_idx, per_match)
    counts = torch.zeros(batch * n, dtype=DTYPE).index_add_(
        0, flat_idx, torch.ones_like(per_match)
    )
    step_means = sums / counts.clamp(min=1.0)
    return step_means.reshape(batch, n).sum(dim=1).mean()


DEFAULT_TRAIN_GRID_PX = 4.0


def drag_loss(
    gen: ToyGenerator,
    w_seq,
    w_hat_seq: torch.Tensor,
    min_distance: float | None = None,
) -> torch.Tensor:
    """Single-sequence drag loss; min_distance defaults to the 30 px
    full-scale threshold rescaled to the generator's resolution."""
    codes = w_seq.codes if hasattr(w_seq, "codes") else torch.as_tensor(w_seq)
    if min_distance is None:
        min_distance = scaled_min_distance(STEP_MIN_DISTANCE_FULL, gen.config.image_resolution)
    if w_hat_seq.ndim != 3 or w_hat_seq.shape[0] != codes.shape[0] - 1:
        raise ShapeError(
            f"predictions {tuple(w_hat_seq.shape)} must hold steps 1..n for sequence of "
            f"length {codes.shape[0]}"
        )
    return drag_loss_batched(
        gen, codes.unsqueeze(0), w_hat_seq.unsqueeze(0), min_distance
    )


# ----------------------------------------------------------------- training


def _inside(points: torch.Tensor, res: int, margin: float = 0.0) -> torch.Tensor:
    return (points >= margin).all(-1) & (points < res - margin).all(-1)


def _build_batch(gen: ToyGenerator, config: Stage2Config, rng: torch.Generator):
    """Sample one training batch: sequences plus conditioning pairs.

    Anchors are resampled for samples whose endpoint motion produces no
    candidate pair above the endpoint threshold; samples drawn into the
    zero-motion fraction get constant sequences with target == handle.
    """
    B, n = config.batch_size, config.steps
    res, fres = gen.config.image_resolution, gen.config.feature_resolution
    c = gen.config.edit_layer_count
    endpoint_thr = config.resolved_endpoint_min_distance(res)
    candidates = object_frame_grid(step_obj=config.grid_step_px / (BASE_EXTENT * res))

    w0 = gen.sample_latent(rng, count=B)
    zero_motion = torch.rand(B, generator=rng, dtype=DTYPE) < config.zero_motion_fraction
    scales = config.perturb_scale_min + (
        config.perturb_scale_max - config.perturb_scale_min
    ) * torch.rand(B, generator=rng, dtype=DTYPE)
    scales = torch.where(zero_motion, torch.zeros_like(scales), scales)
    growth = (1.0 + scales) ** n - 1.0

    def effective_anchor(base: torch.Tensor, raw_anchor: torch.Tensor) -> torch.Tensor:
        # The anchor enters only via its offset from the base latent;
        # optionally strip the offset's pose-invisible component so the
        # pseudo-label motion is fully observable in image space (the
        # readout's null space renders identically).
        if not config.observable_motion:
            return raw_anchor
        anchor = raw_anchor.clone()
        offset = base[:, :c] - raw_anchor[:, :c]
        anchor[:, :c] = base[:, :c] - gen.project_spatial_motion(offset)
        return anchor

    w_star = effective_anchor(w0, gen.sample_latent(rng, count=B))
    pos0 = gen.image_points(candidates, gen.decode_params(w0))
    ok0 = _inside(pos0, res)
    for _ in range(20):
        w_end = w0.clone()
        w_end[:, :c] = w0[:, :c] + growth.view(-1, 1, 1) * (w0[:, :c] - w_star[:, :c])
        pos_end = gen.image_points(candidates, gen.decode_params(w_end))
        dist = (pos_end - pos0).norm(dim=-1)
        usable = ok0 & _inside(pos_end, res) & (dist > endpoint_thr)
        needs = ~zero_motion & ~usable.any(dim=1)
        if not needs.any():
            break
        fresh = effective_anchor(w0[needs], gen.sample_latent(rng, count=int(needs.sum())))
        w_star[needs] = fresh
    else:
        zero_motion = zero_motion | needs  # give up: fall back to zero motion
        scales = torch.where(zero_motion, torch.zeros_like(scales), scales)

    sequences = [w0]
    cur = w0
    for _ in range(n):
        edit = cur[:, :c] + scales.view(-1, 1, 1) * (cur[:, :c] - w_star[:, :c])
        cur = torch.cat([edit, cur[:, c:]], dim=1)
        sequences.append(cur)
    sequences = torch.stack(sequences, dim=1)                      # (B, n+1, l, d)

    pos_end = gen.image_points(candidates, gen.decode_params(sequences[:, -1]))
    dist = (pos_end - pos0).norm(dim=-1)
    usable = ok0 & _inside(pos_end, res) & (dist > endpoint_thr)
    usable = torch.where(zero_motion.unsqueeze(1), ok0, usable)

    max_tokens = 2 * config.max_pairs
    features0 = gen.features(w0)
    token_width = gen.config.feature_channels * PATCH_SIZE * PATCH_SIZE + 3
    patch_inputs = torch.zeros(B, max_tokens, token_width, dtype=DTYPE)
    pad_mask = torch.ones(B, max_tokens, dtype=torch.bool)

    half = PATCH_SIZE // 2
    padded0 = torch.nn.functional.pad(features0, (half, half, half, half))
    for b in range(B):
        idx = torch.nonzero(usable[b]).flatten()
        if idx.numel() == 0:
            continue
        cap = min(config.train_pair_cap, config.max_pairs)
        k = int(torch.randint(1, cap + 1, (1,), generator=rng))
        k = min(k, idx.numel())
        perm = torch.randperm(idx.numel(), generator=rng)[:k]
        chosen = idx[perm]
        handles = pos0[b, chosen]
        targets = handles if zero_motion[b] else pos_end[b, chosen]
        hc = _cells_from_px(handles, fres, res)
        tc = _cells_from_px(targets, fres, res)
        windows, points, roles = [], [], []
        for j in range(k):
            windows.append(padded0[b, :, hc[j, 1] : hc[j, 1] + PATCH_SIZE, hc[j, 0] : hc[j, 0] + PATCH_SIZE])
            points.append(handles[j])
            roles.append(0.0)
            windows.append(padded0[b, :, tc[j, 1] : tc[j, 1] + PATCH_SIZE, tc[j, 0] : tc[j, 0] + PATCH_SIZE])
            points.append(targets[j])
            roles.append(1.0)
        patch_inputs[b, : 2 * k] = patch_token_inputs(
            torch.stack(windows, dim=0),
            torch.stack(points, dim=0),
            torch.tensor(roles, dtype=DTYPE),
            res,
        )
        pad_mask[b, : 2 * k] = False

    return sequences, features0, patch_inputs, pad_mask


def cosine_lr(epoch: int, lr_init: float, lr_min: float, period: int) -> float:
    """Cosine-annealed learning rate with warm restarts every `period` epochs."""
    phase = (epoch % period) / period
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * phase))


def train_stage2(
    gen: ToyGenerator,
    regularizer: RegularizerModel | None,
    config: Stage2Config,
    log_every: int = 5,
    epoch_hook=None,
) -> tuple[PredictorModel, RegularizerModel | None, list[dict]]:
    """Joint training of the predictor and (optionally) the regularizer.

    Returns (predictor, fine-tuned regularizer, per-epoch curve rows with
    keys epoch/l_pred/l_drag/total/lr). Raises TrainingDivergenceError with
    the last good state retained on the exception.
    """
    if config.use_regularizer and regularizer is None:
        raise ParameterError("stage-2 joint training requires a stage-1 regularizer")
    if not config.use_regularizer:
        regularizer = None

    torch.manual_seed(derive_seed(config.seed, "stage2-init"))
    model = PredictorModel(
        layers=gen.config.layers,
        latent_dim=gen.config.latent_dim,
        edit_layer_count=gen.config.edit_layer_count,
        feature_channels=gen.config.feature_channels,
        hidden_width=config.hidden_width,
        num_heads=config.num_heads,
        encoder_layers=config.encoder_layers,
        decoder_layers=config.decoder_layers,
        max_steps=config.max_steps,
    )
    opt_pred = torch.optim.Adam(model.parameters(), lr=config.lr_init)
    opt_reg = (
        torch.optim.Adam(regularizer.parameters(), lr=config.regularizer_lr)
        if regularizer is not None
        else None
    )
    data_rng = derive_rng(config.seed, "stage2-data")
    res = gen.config.image_resolution
    step_thr = config.resolved_step_min_distance(res)
    drag_candidates = object_frame_grid(step_obj=config.grid_step_px / (BASE_EXTENT * res))

    curves: list[dict] = []
    initial_total = None
    last_good: tuple[dict, dict | None] | None = None
    batches = max(1, config.samples_per_epoch // config.batch_size)
    start = time.time()

    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.lr_init, config.lr_min, config.cosine_period)
        for group in opt_pred.param_groups:
            group["lr"] = lr
        beta = config.beta
        if config.drag_warmup_epochs > 0:
            beta *= min(1.0, (epoch + 1) / config.drag_warmup_epochs)
        sums = {"l_pred": 0.0, "l_drag": 0.0, "total": 0.0}
        for _ in range(batches):
            sequences, features0, patch_inputs, pad_mask = _build_batch(gen, config, data_rng)
            memory, mem_pad = model.encode_memory(features0, patch_inputs, pad_mask)
            prefix = sequences[:, :-1]
            if config.query_noise_std > 0:
                # emulate rollout-time imperfect prefixes; edit rows only so
                # assembled outputs keep the exact non-edit block
                c_edit = gen.config.edit_layer_count
                noisy = prefix.clone()
                noisy[:, :, :c_edit, :] += config.query_noise_std * torch.randn(
                    prefix[:, :, :c_edit, :].shape, generator=data_rng, dtype=DTYPE
                )
                prefix = noisy
            predicted = predict_teacher_forced(
                model, regularizer, prefix, memory, memory_pad_mask=mem_pad
            )
            l_pred = pred_loss(predicted, sequences)
            l_drag = drag_loss_batched(gen, sequences, predicted, step_thr, candidates=drag_candidates)
            loss = total_loss(l_pred, l_drag, config.alpha, beta)
            opt_pred.zero_grad()
            if opt_reg is not None:
                opt_reg.zero_grad()
            instrumentation.backward(loss)
            opt_pred.step()
            if opt_reg is not None:
                opt_reg.step()
            sums["l_pred"] += float(l_pred.detach())
            sums["l_drag"] += float(l_drag.detach())
            sums["total"] += float(loss.detach())

        row = {k: v / batches for k, v in sums.items()}
        row.update({"epoch": epoch, "lr": lr})
        curves.append(row)
        if initial_total is None:
            initial_total = row["total"]
        if not math.isfinite(row["total"]) or row["total"] > 10 * max(initial_total, 1e-9):
            err = TrainingDivergenceError(
                f"stage-2 loss diverged at epoch {epoch}: {row['total']} (initial {initial_total})"
            )
            err.last_good = last_good
            raise err
        last_good = (
            copy.deepcopy(model.state_dict()),
            copy.deepcopy(regularizer.state_dict()) if regularizer is not None else None,
        )
        if log_every and epoch % log_every == 0:
            logger.info(
                "stage2 epoch %d/%d pred %.4f drag %.4f total %.4f lr %.2e (%.1fs)",
                epoch, config.epochs, row["l_pred"], row["l_drag"], row["total"], lr,
                time.time() - start,
            )
        if epoch_hook is not None:
            epoch_hook(epoch, model, regularizer)
    return model, regularizer, curves
