"""Point correspondences between two generated images, and feature patches.

The default matcher is exact: candidate material points are a fixed
object-frame grid, mapped through both decoded poses, so pairs from (a, b)
are the coordinate swap of pairs from (b, a) by construction. A descriptor
matcher for external generators can implement the same callable signature.

Pixel thresholds are stated at the reference 512 px resolution and scaled
linearly for other image sizes.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .common import DTYPE
from .errors import ParameterError, PointsFileError
from .generator import BASE_EXTENT, ToyGenerator

FULL_SCALE_RESOLUTION = 512
ENDPOINT_MIN_DISTANCE_FULL = 50.0  # sequence-endpoint sample points
STEP_MIN_DISTANCE_FULL = 30.0      # consecutive-step drag-loss points
PATCH_SIZE = 7
DEFAULT_GRID_STEP_PX = 4.0


def scaled_min_distance(full_scale_px: float, image_resolution: int) -> float:
    """Rescale a 512 px-reference pixel threshold to another resolution."""
    return full_scale_px * image_resolution / FULL_SCALE_RESOLUTION


@dataclass(frozen=True)
class PointPair:
    """Handle pixel on the source image, target pixel on the destination."""

    handle: tuple[float, float]
    target: tuple[float, float]
    distance: float

    @staticmethod
    def from_points(handle, target) -> "PointPair":
        hx, hy = float(handle[0]), float(handle[1])
        tx, ty = float(target[0]), float(target[1])
        dist = ((hx - tx) ** 2 + (hy - ty) ** 2) ** 0.5
        return PointPair((hx, hy), (tx, ty), dist)

    def swapped(self) -> "PointPair":
        return PointPair(self.target, self.handle, self.distance)


@dataclass
class Patch:
    """Feature values over a PATCH_SIZE x PATCH_SIZE window of grid cells."""

    values: torch.Tensor           # (C, PATCH_SIZE, PATCH_SIZE)
    center: tuple[int, int]        # (cell_x, cell_y)


def object_frame_grid(step_obj: float = 0.3, extent: float = 1.1) -> torch.Tensor:
    """Fixed candidate material points covering the object interior."""
    coords = torch.arange(-extent, extent + 1e-9, step_obj, dtype=DTYPE)
    uu, vv = torch.meshgrid(coords, coords, indexing="ij")
    pts = torch.stack([uu.flatten(), vv.flatten()], dim=-1)
    return pts[ToyGenerator.shape_radius(pts) <= 1.0]


def match_points(
    gen: ToyGenerator,
    w_a: torch.Tensor,
    w_b: torch.Tensor,
    min_distance: float,
    grid_step_px: float = DEFAULT_GRID_STEP_PX,
) -> list[PointPair]:
    """Exact correspondences between the images of w_a and w_b.

    Returns pairs whose displacement exceeds min_distance and whose both
    endpoints are inside the frame; empty when nothing moved far enough.
    """
    res = gen.config.image_resolution
    step_obj = grid_step_px / (BASE_EXTENT * res)
    candidates = object_frame_grid(step_obj=step_obj)
    pa = gen.image_points(candidates, gen.decode_params(w_a))
    pb = gen.image_points(candidates, gen.decode_params(w_b))
    dist = (pa - pb).norm(dim=-1)
    inside = (
        (pa >= 0).all(-1) & (pa < res).all(-1) & (pb >= 0).all(-1) & (pb < res).all(-1)
    )
    keep = inside & (dist > min_distance)
    return [
        PointPair((float(pa[i, 0]), float(pa[i, 1])), (float(pb[i, 0]), float(pb[i, 1])), float(dist[i]))
        for i in torch.nonzero(keep).flatten().tolist()
    ]


def pixel_to_cell(point_px, feature_resolution: int, image_resolution: int) -> tuple[int, int]:
    """Containing-cell mapping from a pixel to the feature grid."""
    x, y = float(point_px[0]), float(point_px[1])
    if not (0 <= x < image_resolution and 0 <= y < image_resolution):
        raise ParameterError(
            f"point ({x}, {y}) outside image bounds [0, {image_resolution})"
        )
    fx = min(int(x * feature_resolution / image_resolution), feature_resolution - 1)
    fy = min(int(y * feature_resolution / image_resolution), feature_resolution - 1)
    return fx, fy


def extract_patch(feature: torch.Tensor, point_px, image_resolution: int) -> Patch:
    """PATCH_SIZE x PATCH_SIZE feature window at the cell containing point_px.

    Out-of-grid cells are zero padded. Values stay connected to `feature`'s
    autograd graph.
    """
    if feature.ndim != 3:
        raise ParameterError(f"feature must be (C, H, W), got {tuple(feature.shape)}")
    fres = feature.shape[-1]
    fx, fy = pixel_to_cell(point_px, fres, image_resolution)
    half = PATCH_SIZE // 2
    padded = torch.nn.functional.pad(feature, (half, half, half, half))
    window = padded[:, fy : fy + PATCH_SIZE, fx : fx + PATCH_SIZE]
    return Patch(values=window, center=(fx, fy))


def save_point_pairs(path: str | Path, pairs: list[PointPair]) -> None:
    """Line-oriented text format: `hx hy tx ty dist` per pair."""
    lines = [
        f"{p.handle[0]:.6f} {p.handle[1]:.6f} {p.target[0]:.6f} {p.target[1]:.6f} {p.distance:.6f}"
        for p in pairs
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_point_pairs(path: str | Path) -> list[PointPair]:
    """Parse `hx hy tx ty [dist]` lines; blank lines and # comments allowed."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if len(fields) not in (4, 5):
            raise PointsFileError(f"expected 4 or 5 fields, got {len(fields)}", lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise PointsFileError(f"non-numeric field in {text!r}", lineno) from None
        pairs.append(PointPair.from_points(values[0:2], values[2:4]))
    return pairs
