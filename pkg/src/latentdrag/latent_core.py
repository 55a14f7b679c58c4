"""Latent-space primitives shared by both training stages.

Latent codes are plain tensors of shape (..., layers, dim). The leading
`edit_layer_count` layers carry spatial content and are the only rows that
corruption and perturbation ever touch; the remaining rows pass through
every operation bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .common import DTYPE, new_rng
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class EditLayerSpec:
    """Marks the leading latent layers as the editable (spatial) block."""

    edit_layer_count: int = 6

    def __post_init__(self):
        if self.edit_layer_count < 1:
            raise ParameterError(
                f"edit_layer_count must be >= 1, got {self.edit_layer_count}"
            )

    def check(self, w: torch.Tensor) -> None:
        if w.ndim < 2:
            raise ShapeError(f"latent must have shape (..., layers, dim), got {tuple(w.shape)}")
        if w.shape[-2] < self.edit_layer_count:
            raise ShapeError(
                f"latent has {w.shape[-2]} layers < edit_layer_count {self.edit_layer_count}"
            )


@dataclass(frozen=True)
class CorruptionSpec:
    """Masking + additive-noise corruption applied to the edit block.

    granularity "entry" draws an independent Bernoulli per matrix entry;
    "layer" zeroes whole edit layers.
    """

    mask_prob: float = 0.25
    noise_std: float = 0.1
    seed: int = 0
    granularity: str = "entry"

    def __post_init__(self):
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ParameterError(f"mask_prob must be in [0, 1], got {self.mask_prob}")
        if self.noise_std < 0.0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.granularity not in ("entry", "layer"):
            raise ParameterError(f"granularity must be 'entry' or 'layer', got {self.granularity!r}")


@dataclass(frozen=True)
class PerturbSpec:
    """Iterated anchor-relative perturbation generating a motion sequence.

    Each step moves the edit block by `scale` times its offset from a fixed
    anchor latent; `direction` "away" uses the sign that amplifies the
    offset, "toward" the interpolating variant.
    """

    scale: float = 0.05
    steps: int = 5
    seed: int = 0
    direction: str = "away"

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.direction not in ("away", "toward"):
            raise ParameterError(f"direction must be 'away' or 'toward', got {self.direction!r}")


@dataclass
class LatentSequence:
    """Motion trajectory w_0..w_n stacked as a (n+1, layers, dim) tensor."""

    codes: torch.Tensor

    def __post_init__(self):
        if self.codes.ndim != 3:
            raise ShapeError(f"codes must be (steps+1, layers, dim), got {tuple(self.codes.shape)}")
        if not torch.isfinite(self.codes).all():
            raise ParameterError("sequence contains non-finite entries")

    def __len__(self) -> int:
        return self.codes.shape[0]

    def __getitem__(self, i: int) -> torch.Tensor:
        return self.codes[i]

    @property
    def steps(self) -> int:
        return self.codes.shape[0] - 1

    def validate(self, layers: EditLayerSpec) -> None:
        """Non-edit rows of every step must equal step 0 exactly."""
        layers.check(self.codes[0])
        c = layers.edit_layer_count
        tail = self.codes[:, c:, :]
        if not torch.equal(tail, tail[0:1].expand_as(tail)):
            raise ParameterError("non-edit layers differ across the sequence")


def split_layers(w: torch.Tensor, layers: EditLayerSpec) -> tuple[torch.Tensor, torch.Tensor]:
    """Split a latent into (edit block, non-edit block) along the layer axis."""
    layers.check(w)
    c = layers.edit_layer_count
    return w[..., :c, :], w[..., c:, :]


def corrupt(
    w: torch.Tensor,
    layers: EditLayerSpec,
    spec: CorruptionSpec,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Zero edit-block entries with probability mask_prob, then add Gaussian noise.

    Returns the corrupted latent and the full-shape keep mask (ones on
    non-edit rows). Deterministic for a fixed spec.seed when rng is None.
    """
    layers.check(w)
    if not torch.isfinite(w).all():
        raise ParameterError("latent contains non-finite entries")
    if rng is None:
        rng = new_rng(spec.seed)
    c = layers.edit_layer_count
    edit = w[..., :c, :]

    if spec.granularity == "entry":
        keep = (torch.rand(edit.shape, generator=rng, dtype=DTYPE) >= spec.mask_prob).to(DTYPE)
    else:
        per_layer = (torch.rand(edit.shape[:-1], generator=rng, dtype=DTYPE) >= spec.mask_prob)
        keep = per_layer.to(DTYPE).unsqueeze(-1).expand_as(edit).contiguous()

    noise = torch.zeros_like(edit)
    if spec.noise_std > 0.0:
        noise = torch.randn(edit.shape, generator=rng, dtype=DTYPE) * spec.noise_std

    corrupted_edit = edit * keep + noise
    wprime = torch.cat([corrupted_edit, w[..., c:, :]], dim=-2)
    mask = torch.cat([keep, torch.ones_like(w[..., c:, :])], dim=-2)
    return wprime, mask


def perturb_step(
    w_prev: torch.Tensor,
    w_star: torch.Tensor,
    scale: float,
    layers: EditLayerSpec,
    direction: str = "away",
) -> torch.Tensor:
    """One perturbation step of the edit block relative to the anchor w_star.

    "away": w = w_prev - scale * (w_star - w_prev); non-edit rows are copied
    from w_prev unchanged.
    """
    if w_prev.shape != w_star.shape:
        raise ShapeError(f"shape mismatch: {tuple(w_prev.shape)} vs {tuple(w_star.shape)}")
    layers.check(w_prev)
    c = layers.edit_layer_count
    sign = -1.0 if direction == "away" else 1.0
    edit = w_prev[..., :c, :] + sign * scale * (w_star[..., :c, :] - w_prev[..., :c, :])
    return torch.cat([edit, w_prev[..., c:, :]], dim=-2)


def make_motion_sequence(
    w0: torch.Tensor,
    spec: PerturbSpec,
    layers: EditLayerSpec,
    mapping,
    w_star: torch.Tensor | None = None,
) -> LatentSequence:
    """Iterate perturb_step from w0, `spec.steps` times, with one shared anchor.

    `mapping` is anything with sample_latent(rng) (the generator); it supplies
    the independent anchor when `w_star` is not given. Deterministic under a
    fixed spec.seed.
    """
    layers.check(w0)
    if w0.ndim != 2:
        raise ShapeError(f"w0 must be a single latent (layers, dim), got {tuple(w0.shape)}")
    if w_star is None:
        rng = new_rng(spec.seed)
        w_star = mapping.sample_latent(rng)
        if w_star.ndim == 3:
            w_star = w_star[0]
    if w_star.shape != w0.shape:
        raise ShapeError(f"anchor shape {tuple(w_star.shape)} != latent shape {tuple(w0.shape)}")

    codes = [w0]
    current = w0
    for _ in range(spec.steps):
        current = perturb_step(current, w_star, spec.scale, layers, direction=spec.direction)
        codes.append(current)
    return LatentSequence(torch.stack(codes, dim=0))
