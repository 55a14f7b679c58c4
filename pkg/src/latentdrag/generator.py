"""Frozen differentiable toy generator with analytic drag oracles.

A latent code of shape (layers, dim) drives a soft-rendered superellipse:
the edit layers control pose (center, rotation, scale) through a frozen
full-rank linear readout followed by fixed invertible squashing, and the
remaining layers control appearance (color, texture phase). Because the
readout is linear and the squashing closed-form invertible, exact oracles
exist for "move this material point to that pixel".

Pixel convention: points are (x, y) with x the column and y the row,
measured in pixels of the square output image; arrays index [y, x].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from . import instrumentation
from .common import DTYPE, derive_rng, new_rng
from .errors import NoCorrespondenceError, ParameterError, ShapeError
from .latent_core import EditLayerSpec, split_layers

# Pose / appearance squashing constants. Centers live in
# [0.5 - CENTER_RANGE, 0.5 + CENTER_RANGE] (normalized image units), scale in
# exp(+-LOG_SCALE_RANGE). CENTER_GAIN is softer than the shared gain so the
# center distribution stays mid-range instead of hugging the saturation
# limits (translation oracles need headroom on both sides).
CENTER_RANGE = 0.42
CENTER_GAIN = 0.55
THETA_RANGE = 0.6
LOG_SCALE_RANGE = 0.22
COLOR_RANGE = 0.35
SQUASH_GAIN = 0.8

BASE_EXTENT = 0.22       # object half-width at scale 1, normalized image units
AXIS_RATIO = 0.65        # superellipse semi-axis b (a = 1) in object units
EDGE_EXPONENT = 2.4      # superellipse exponent
EDGE_TEMPERATURE = 0.05  # sigmoid edge softness, fraction of image width
TEXTURE_FREQ = 4.0       # stripe frequency along the object-frame u axis
GUIDE_SAT = 1.5          # saturation scale of the unmasked coordinate fields
MAP_CLIP = 2.5           # soft clip of the z->w map

_CALIBRATION_SAMPLES = 4096
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int = 64
    input_dim: int = 32
    layers: int = 12
    edit_layer_count: int = 6
    image_resolution: int = 64
    feature_resolution: int = 16
    feature_channels: int = 8
    seed: int = 7

    def __post_init__(self):
        if self.layers < self.edit_layer_count:
            raise ParameterError("layers must be >= edit_layer_count")
        if self.feature_channels != 8:
            raise ParameterError("feature_channels is fixed to 8 in this renderer")


@dataclass
class SceneParams:
    """Decoded scene description; every field may carry leading batch dims."""

    cx: torch.Tensor
    cy: torch.Tensor
    theta: torch.Tensor
    scale: torch.Tensor
    color: torch.Tensor          # (..., 3) in [0, 1]
    texture_phase: torch.Tensor


class ToyGenerator:
    """Immutable after construction; synthesize/oracles are concurrency-safe."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        self.config = config
        self.layers = EditLayerSpec(config.edit_layer_count)
        c, d, dz, l = config.edit_layer_count, config.latent_dim, config.input_dim, config.layers

        rng = new_rng(config.seed)
        weight = torch.randn((l, d, dz), generator=rng, dtype=DTYPE)
        weight = weight / weight.norm(dim=-1, keepdim=True)
        self.map_weight = weight
        self.map_bias = torch.randn((l, d), generator=rng, dtype=DTYPE) * 0.25

        spatial = torch.randn((4, c * d), generator=rng, dtype=DTYPE) / math.sqrt(c * d)
        appearance = torch.randn((4, (l - c) * d), generator=rng, dtype=DTYPE) / math.sqrt((l - c) * d)

        # Standardize both readouts against the actual latent distribution so
        # raw pose/appearance channels are ~N(0,1); frozen afterwards.
        cal = self.map_z(torch.randn((_CALIBRATION_SAMPLES, dz), generator=derive_rng(config.seed, "calibration"), dtype=DTYPE))
        w1, w2 = split_layers(cal, self.layers)
        raw_sp = w1.flatten(-2) @ spatial.T
        raw_ap = w2.flatten(-2) @ appearance.T
        self.spatial_weight = spatial / raw_sp.std(dim=0).unsqueeze(1)
        self.spatial_bias = -(raw_sp.mean(dim=0) / raw_sp.std(dim=0))
        self.appearance_weight = appearance / raw_ap.std(dim=0).unsqueeze(1)
        self.appearance_bias = -(raw_ap.mean(dim=0) / raw_ap.std(dim=0))
        self.latent_std = float(cal.std())

        if torch.linalg.matrix_rank(self.spatial_weight) != 4:
            raise RuntimeError("spatial readout is rank-deficient; change the generator seed")
        self.spatial_pinv = torch.linalg.pinv(self.spatial_weight)
        # Projector onto the pose-observable subspace of the edit block; the
        # readout collapses most edit directions, so motion along its null
        # space is invisible in image space.
        self.spatial_projector = self.spatial_pinv @ self.spatial_weight

        self.synthesis_calls = 0

    # ---------------------------------------------------------------- mapping

    def sample_z(self, rng: torch.Generator, count: int = 1) -> torch.Tensor:
        return torch.randn((count, self.config.input_dim), generator=rng, dtype=DTYPE)

    def map_z(self, z: torch.Tensor) -> torch.Tensor:
        """Frozen per-layer linear map with a soft clip; z=0 maps to the biases."""
        if z.shape[-1] != self.config.input_dim:
            raise ShapeError(f"z must have last dim {self.config.input_dim}, got {tuple(z.shape)}")
        if not torch.isfinite(z).all():
            raise ParameterError("z contains non-finite entries")
        pre = torch.einsum("...z,ldz->...ld", z, self.map_weight)
        return self.map_bias + MAP_CLIP * torch.tanh(pre / MAP_CLIP)

    def sample_latent(self, rng: torch.Generator, count: int | None = None) -> torch.Tensor:
        w = self.map_z(self.sample_z(rng, count or 1))
        return w if count is not None else w[0]

    # ---------------------------------------------------------------- decoding

    def raw_spatial(self, w: torch.Tensor) -> torch.Tensor:
        w1, _ = split_layers(w, self.layers)
        return w1.flatten(-2) @ self.spatial_weight.T + self.spatial_bias

    def project_spatial_motion(self, delta_edit: torch.Tensor) -> torch.Tensor:
        """Keep only the pose-observable component of an edit-block offset.

        delta_edit (..., edit_layers, dim) -> same shape; the returned offset
        produces the identical pose change with no null-space component.
        """
        flat = delta_edit.flatten(-2)
        return (flat @ self.spatial_projector.T).reshape(delta_edit.shape)

    def raw_appearance(self, w: torch.Tensor) -> torch.Tensor:
        _, w2 = split_layers(w, self.layers)
        return w2.flatten(-2) @ self.appearance_weight.T + self.appearance_bias

    @staticmethod
    def _pose_from_raw(raw: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        cx = 0.5 + CENTER_RANGE * torch.tanh(CENTER_GAIN * raw[..., 0])
        cy = 0.5 + CENTER_RANGE * torch.tanh(CENTER_GAIN * raw[..., 1])
        theta = THETA_RANGE * torch.tanh(SQUASH_GAIN * raw[..., 2])
        scale = torch.exp(LOG_SCALE_RANGE * torch.tanh(SQUASH_GAIN * raw[..., 3]))
        return cx, cy, theta, scale

    @staticmethod
    def raw_from_pose(cx, cy, theta, scale) -> torch.Tensor:
        """Inverse of the pose squashing; inputs must be strictly inside range."""
        def inv(x, rng_, gain):
            arg = x / rng_
            if torch.any(arg.abs() >= 1.0):
                raise ParameterError("pose outside the generator's representable range")
            return torch.atanh(arg) / gain

        r0 = inv(cx - 0.5, CENTER_RANGE, CENTER_GAIN)
        r1 = inv(cy - 0.5, CENTER_RANGE, CENTER_GAIN)
        r2 = inv(theta, THETA_RANGE, SQUASH_GAIN)
        r3 = inv(torch.log(scale), LOG_SCALE_RANGE, SQUASH_GAIN)
        return torch.stack([r0, r1, r2, r3], dim=-1)

    def decode_params(self, w: torch.Tensor) -> SceneParams:
        """Pose from edit layers only; appearance from non-edit layers only."""
        cx, cy, theta, scale = self._pose_from_raw(self.raw_spatial(w))
        raw_ap = self.raw_appearance(w)
        color = 0.5 + COLOR_RANGE * torch.tanh(SQUASH_GAIN * raw_ap[..., :3])
        return SceneParams(cx=cx, cy=cy, theta=theta, scale=scale,
                           color=color, texture_phase=raw_ap[..., 3])

    # ------------------------------------------------------------- transforms

    def image_points(self, object_pts: torch.Tensor, params: SceneParams) -> torch.Tensor:
        """Object-frame points (..., K, 2) -> pixel coordinates (..., K, 2)."""
        cos_t, sin_t = torch.cos(params.theta), torch.sin(params.theta)
        u, v = object_pts[..., 0], object_pts[..., 1]
        f = (params.scale * BASE_EXTENT).unsqueeze(-1)
        x = params.cx.unsqueeze(-1) + f * (cos_t.unsqueeze(-1) * u - sin_t.unsqueeze(-1) * v)
        y = params.cy.unsqueeze(-1) + f * (sin_t.unsqueeze(-1) * u + cos_t.unsqueeze(-1) * v)
        return torch.stack([x, y], dim=-1) * self.config.image_resolution

    def object_frame(self, points_px: torch.Tensor, params: SceneParams) -> torch.Tensor:
        """Pixel coordinates (..., K, 2) -> object-frame points (..., K, 2)."""
        p = points_px / self.config.image_resolution
        rx = p[..., 0] - params.cx.unsqueeze(-1)
        ry = p[..., 1] - params.cy.unsqueeze(-1)
        cos_t, sin_t = torch.cos(params.theta).unsqueeze(-1), torch.sin(params.theta).unsqueeze(-1)
        f = (params.scale * BASE_EXTENT).unsqueeze(-1)
        u = (cos_t * rx + sin_t * ry) / f
        v = (-sin_t * rx + cos_t * ry) / f
        return torch.stack([u, v], dim=-1)

    @staticmethod
    def shape_radius(object_pts: torch.Tensor) -> torch.Tensor:
        """Superellipse radius; <= 1 inside the object."""
        u, v = object_pts[..., 0], object_pts[..., 1]
        p = EDGE_EXPONENT
        s = (u.abs()) ** p + (v.abs() / AXIS_RATIO) ** p
        return (s + 1e-12) ** (1.0 / p)

    def mask_value(self, w: torch.Tensor, points_px: torch.Tensor) -> torch.Tensor:
        """Soft object mask sampled at pixel points (analytic, no render)."""
        params = self.decode_params(w)
        rho = self.shape_radius(self.object_frame(points_px, params))
        d = (1.0 - rho) * (params.scale * BASE_EXTENT).unsqueeze(-1)
        return torch.sigmoid(d / EDGE_TEMPERATURE)

    # ---------------------------------------------------------------- renderer

    def _grid(self, res: int) -> tuple[torch.Tensor, torch.Tensor]:
        coords = (torch.arange(res, dtype=DTYPE) + 0.5) / res
        ys, xs = torch.meshgrid(coords, coords, indexing="ij")
        return xs, ys

    def _frame_fields(self, w: torch.Tensor, res: int):
        """Per-pixel object-frame coordinates, mask and texture field."""
        params = self.decode_params(w)
        xs, ys = self._grid(res)
        shape = params.cx.shape + (1, 1)
        cx, cy = params.cx.reshape(shape), params.cy.reshape(shape)
        theta, scale = params.theta.reshape(shape), params.scale.reshape(shape)
        rx, ry = xs - cx, ys - cy
        cos_t, sin_t = torch.cos(theta), torch.sin(theta)
        f = scale * BASE_EXTENT
        u = (cos_t * rx + sin_t * ry) / f
        v = (-sin_t * rx + cos_t * ry) / f
        rho = self.shape_radius(torch.stack([u, v], dim=-1))
        mask = torch.sigmoid((1.0 - rho) * f / EDGE_TEMPERATURE)
        tex = torch.sin(TEXTURE_FREQ * u + params.texture_phase.reshape(shape))
        return params, u, v, rho, mask, tex

    def features(self, w: torch.Tensor) -> torch.Tensor:
        """Feature map (..., C, fres, fres); differentiable w.r.t. w.

        Channels: 0 mask, 1-2 masked object-frame (u, v), 3-4 saturating
        unmasked coordinate fields, 5 masked texture response, 6 masked
        luma, 7 masked interior shape response.
        """
        instrumentation.note_forward(w)
        params, u, v, rho, mask, tex = self._frame_fields(w, self.config.feature_resolution)
        luma = (params.color * torch.tensor(_LUMA, dtype=DTYPE)).sum(-1)
        luma = luma.reshape(luma.shape + (1, 1)).expand_as(mask)
        chans = [
            mask,
            u * mask,
            v * mask,
            GUIDE_SAT * torch.tanh(u / GUIDE_SAT),
            GUIDE_SAT * torch.tanh(v / GUIDE_SAT),
            mask * (0.5 + 0.5 * tex),
            mask * luma,
            mask * (1.0 - rho),
        ]
        return torch.stack(chans, dim=-3)

    def render_image(self, w: torch.Tensor) -> torch.Tensor:
        """Image (..., H, W, 3) in [0, 1]; differentiable w.r.t. w."""
        instrumentation.note_forward(w)
        res = self.config.image_resolution
        params, u, v, rho, mask, tex = self._frame_fields(w, res)
        _, ys = self._grid(res)
        bg = (0.12 + 0.08 * ys).expand(mask.shape).unsqueeze(-1)
        body = params.color.reshape(params.color.shape[:-1] + (1, 1, 3)) * (0.8 + 0.2 * tex).unsqueeze(-1)
        return bg * (1.0 - mask.unsqueeze(-1)) + mask.unsqueeze(-1) * body

    def synthesize(self, w: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(image, feature map); each call increments the synthesis counter."""
        self.synthesis_calls += 1
        return self.render_image(w), self.features(w)

    # --------------------------------------------------------------- keypoints

    @staticmethod
    def anchor_points(count: int) -> torch.Tensor:
        """Canonical object-frame anchors: center plus a boundary ring."""
        if count < 1:
            raise ParameterError(f"keypoint count must be >= 1, got {count}")
        pts = [(0.0, 0.0)]
        for k in range(count - 1):
            phi = 2.0 * math.pi * k / (count - 1)
            direction = torch.tensor([math.cos(phi), math.sin(phi)], dtype=DTYPE)
            r = 0.75 / float(ToyGenerator.shape_radius(direction))
            pts.append((r * direction[0].item(), r * direction[1].item()))
        return torch.tensor(pts, dtype=DTYPE)

    def keypoints(self, w: torch.Tensor, count: int) -> torch.Tensor:
        """Canonical anchors mapped through the decoded pose, pixel coords (..., K, 2)."""
        return self.image_points(self.anchor_points(count), self.decode_params(w))

    # ------------------------------------------------------------------ oracle

    def latent_with_pose(
        self, w: torch.Tensor, cx: float, cy: float, theta: float = 0.0, scale: float = 1.0
    ) -> torch.Tensor:
        """Minimal edit-layer change giving `w` an exact requested pose."""
        raw = self.raw_spatial(w)
        target = self.raw_from_pose(
            torch.as_tensor(cx, dtype=DTYPE),
            torch.as_tensor(cy, dtype=DTYPE),
            torch.as_tensor(theta, dtype=DTYPE),
            torch.as_tensor(scale, dtype=DTYPE),
        )
        c = self.layers.edit_layer_count
        out = w.clone()
        out[:c, :] = out[:c, :] + (self.spatial_pinv @ (target - raw)).reshape(c, self.config.latent_dim)
        return out

    def oracle_latent_for_move(
        self, w0: torch.Tensor, handle: torch.Tensor, target: torch.Tensor
    ) -> torch.Tensor:
        """Minimal edit-layer change translating the material point at `handle` to `target`.

        Solves the translated pose analytically, inverts the squashing, and
        back-solves the linear spatial readout by least squares. Non-edit
        layers are returned unchanged.
        """
        if w0.ndim != 2:
            raise ShapeError("oracle expects a single latent (layers, dim)")
        handle = torch.as_tensor(handle, dtype=DTYPE)
        target = torch.as_tensor(target, dtype=DTYPE)
        if self.mask_value(w0, handle.reshape(1, 2)).item() <= 0.5:
            raise NoCorrespondenceError(f"handle {handle.tolist()} is not on the object")

        params = self.decode_params(w0)
        delta = (target - handle) / self.config.image_resolution
        raw = self.raw_spatial(w0)
        raw_new = self.raw_from_pose(
            params.cx + delta[0], params.cy + delta[1], params.theta, params.scale
        )
        dw1 = self.spatial_pinv @ (raw_new - raw)
        c = self.layers.edit_layer_count
        w = w0.clone()
        w[:c, :] = w[:c, :] + dw1.reshape(c, self.config.latent_dim)
        return w

    # -------------------------------------------------------------- checkpoint

    def state_arrays(self) -> dict:
        return {
            "map_weight": self.map_weight,
            "map_bias": self.map_bias,
            "spatial_weight": self.spatial_weight,
            "spatial_bias": self.spatial_bias,
            "appearance_weight": self.appearance_weight,
            "appearance_bias": self.appearance_bias,
        }

    def load_state_arrays(self, arrays: dict) -> None:
        for name, value in self.state_arrays().items():
            loaded = torch.as_tensor(arrays[name], dtype=DTYPE)
            if loaded.shape != value.shape:
                raise ShapeError(f"array {name}: shape {tuple(loaded.shape)} != {tuple(value.shape)}")
            setattr(self, name, loaded)
        self.spatial_pinv = torch.linalg.pinv(self.spatial_weight)
