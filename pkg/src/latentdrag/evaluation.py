"""Quantitative protocols: keypoint manipulation, paired reconstruction,
distance-decay curves, and the sequence-length ablation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import torch

from .common import DTYPE, derive_rng
from .correspondence import PointPair, match_points
from .errors import ParameterError, UndefinedRatioError
from .generator import CENTER_RANGE, ToyGenerator
from .inference import EditRequest, edit
from .predictor import Stage2Config, train_stage2

logger = logging.getLogger(__name__)


def mean_distance(points_a, points_b) -> float:
    """Mean Euclidean distance between two equally long point lists, pixels."""
    a = torch.as_tensor(points_a, dtype=DTYPE)
    b = torch.as_tensor(points_b, dtype=DTYPE)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] < 1:
        raise ParameterError(f"point lists must match in length, got {tuple(a.shape)} vs {tuple(b.shape)}")
    return float((a - b).norm(dim=-1).mean())


def mdd(md_cur: float, md_init: float) -> float:
    """Distance-decay ratio: current mean distance over the initial one."""
    if md_init <= 0:
        raise UndefinedRatioError(f"md_init must be > 0, got {md_init}")
    return md_cur / md_init


@dataclass
class MetricReport:
    protocol: str
    per_sample: list[float]
    config_hash: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.per_sample)

    @property
    def mean(self) -> float:
        return sum(self.per_sample) / len(self.per_sample) if self.per_sample else math.nan

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "value"])
            for i, v in enumerate(self.per_sample):
                writer.writerow([i, f"{v:.6f}"])
            writer.writerow(["mean", f"{self.mean:.6f}"])
            for key, value in sorted(self.extras.items()):
                writer.writerow([key, value])
        return path


def _keypoints_in_frame(gen: ToyGenerator, w: torch.Tensor, count: int, margin: float = 1.0) -> bool:
    kp = gen.keypoints(w, count)
    res = gen.config.image_resolution
    return bool(((kp >= margin) & (kp < res - margin)).all())


def _sample_latent_with_keypoints(gen, rng, count, max_tries: int = 200) -> torch.Tensor:
    for _ in range(max_tries):
        w = gen.sample_latent(rng)
        if _keypoints_in_frame(gen, w, count):
            return w
    raise RuntimeError("could not sample a latent with all keypoints in frame")


def sample_realizable_drag(
    gen: ToyGenerator,
    w: torch.Tensor,
    rng: torch.Generator,
    dist_range: tuple[float, float] = (30.0, 50.0),
    margin: float = 2.0,
    max_tries: int = 500,
) -> PointPair:
    """A single handle->target pair of the requested pixel length whose
    translated pose stays inside the generator's representable range."""
    res = gen.config.image_resolution
    params = gen.decode_params(w)
    for _ in range(max_tries):
        obj = (torch.rand(2, generator=rng, dtype=DTYPE) * 2 - 1) * 0.85
        if ToyGenerator.shape_radius(obj) > 0.9:
            continue
        handle = gen.image_points(obj.unsqueeze(0), params)[0]
        if not ((handle >= margin).all() and (handle < res - margin).all()):
            continue
        angle = torch.rand(1, generator=rng, dtype=DTYPE) * 2 * math.pi
        dist = dist_range[0] + (dist_range[1] - dist_range[0]) * torch.rand(1, generator=rng, dtype=DTYPE)
        target = handle + dist * torch.cat([torch.cos(angle), torch.sin(angle)])
        if not ((target >= margin).all() and (target < res - margin).all()):
            continue
        delta = (target - handle) / res
        new_cx = float(params.cx + delta[0])
        new_cy = float(params.cy + delta[1])
        if abs(new_cx - 0.5) > 0.98 * CENTER_RANGE or abs(new_cy - 0.5) > 0.98 * CENTER_RANGE:
            continue
        return PointPair.from_points(handle.tolist(), target.tolist())
    raise RuntimeError("could not sample a realizable drag for this latent")


def landmark_manipulation_eval(
    models,
    gen: ToyGenerator,
    num_points: int,
    trials: int = 200,
    seed: int = 0,
    n_steps: int | None = None,
    rounds: int = 1,
    zero_drag: bool = False,
    config_hash: str = "",
) -> MetricReport:
    """Drag image A's keypoints onto image B's keypoints; report final MD.

    With zero_drag=True image B is image A (control: nothing should move).
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = derive_rng(seed, "eval-landmark")
    finals, no_edits, failures = [], [], 0
    steps = n_steps or getattr(models, "default_steps", 5)
    for _ in range(trials):
        w_a = _sample_latent_with_keypoints(gen, rng, num_points)
        w_b = w_a if zero_drag else _sample_latent_with_keypoints(gen, rng, num_points)
        kp_a, kp_b = gen.keypoints(w_a, num_points), gen.keypoints(w_b, num_points)
        pairs = [
            PointPair.from_points(kp_a[i].tolist(), kp_b[i].tolist()) for i in range(num_points)
        ]
        no_edits.append(mean_distance(kp_a, kp_b))
        try:
            result = edit(models, gen, EditRequest(w0=w_a, pairs=pairs, n_steps=steps, rounds=rounds))
        except Exception:  # recorded, not raised: protocol reports failures separately
            failures += 1
            continue
        finals.append(mean_distance(gen.keypoints(result.w_final, num_points), kp_b))
    return MetricReport(
        protocol=f"landmark-{num_points}pt" + ("-zero" if zero_drag else ""),
        per_sample=finals,
        config_hash=config_hash,
        extras={
            "no_edit_mean": sum(no_edits) / len(no_edits),
            "failures": failures,
            "num_points": num_points,
        },
    )


def paired_reconstruction_eval(
    models,
    gen: ToyGenerator,
    trials: int = 200,
    seed: int = 0,
    user_points: int = 32,
    n_steps: int | None = None,
    rounds: int = 1,
    identity: bool = False,
    stage2: Stage2Config | None = None,
    config_hash: str = "",
) -> MetricReport:
    """Reconstruct the perturbed image from the source image plus sampled
    correspondence points; reports image MSE x 100.

    identity=True keeps w2 = w1: the flow field is empty, no points exist,
    and the edit is a no-op.
    """
    rng = derive_rng(seed, "eval-paired")
    stage2 = stage2 or getattr(models, "stage2", None) or Stage2Config()
    steps = n_steps or stage2.steps
    res = gen.config.image_resolution
    values, no_edit_values = [], []
    for _ in range(trials):
        w1 = gen.sample_latent(rng)
        if identity:
            w2 = w1
        else:
            scale = stage2.perturb_scale_min + (
                stage2.perturb_scale_max - stage2.perturb_scale_min
            ) * float(torch.rand(1, generator=rng, dtype=DTYPE))
            anchor = gen.sample_latent(rng)
            c = gen.config.edit_layer_count
            growth = (1.0 + scale) ** stage2.steps - 1.0
            offset = w1[:c] - anchor[:c]
            if stage2.observable_motion:
                offset = gen.project_spatial_motion(offset)
            w2 = w1.clone()
            w2[:c] = w1[:c] + growth * offset
        with torch.no_grad():
            image_target = gen.render_image(w2)
            image_source = gen.render_image(w1)
        pairs = match_points(gen, w1, w2, min_distance=0.5)
        if len(pairs) > user_points:
            sel = torch.randperm(len(pairs), generator=rng)[:user_points].tolist()
            pairs = [pairs[i] for i in sel]
        no_edit_mse = float(((image_source - image_target) ** 2).mean()) * 100.0
        no_edit_values.append(no_edit_mse)
        if not pairs:
            values.append(no_edit_mse)  # no flow: the edit is a no-op
            continue
        result = edit(models, gen, EditRequest(w0=w1, pairs=pairs, n_steps=steps, rounds=rounds))
        with torch.no_grad():
            image_out = gen.render_image(result.w_final)
        values.append(float(((image_out - image_target) ** 2).mean()) * 100.0)
    return MetricReport(
        protocol="paired-reconstruction" + ("-identity" if identity else ""),
        per_sample=values,
        config_hash=config_hash,
        extras={"no_edit_mean": sum(no_edit_values) / len(no_edit_values), "mse_scale": "x100"},
    )


def mdd_curve_eval(
    models,
    gen: ToyGenerator,
    trials: int = 100,
    seed: int = 0,
    dist_range: tuple[float, float] = (30.0, 50.0),
    n_steps: int | None = None,
    rounds: int = 1,
    config_hash: str = "",
) -> tuple[MetricReport, list[list[float]]]:
    """Single-pair drags; returns final-MDD report plus all per-step curves."""
    rng = derive_rng(seed, "eval-mdd")
    stage2 = getattr(models, "stage2", None)
    steps = n_steps or (stage2.steps if stage2 else 5)
    curves, finals = [], []
    for _ in range(trials):
        w = gen.sample_latent(rng)
        try:
            pair = sample_realizable_drag(gen, w, rng, dist_range=dist_range)
        except RuntimeError:
            continue
        result = edit(models, gen, EditRequest(w0=w, pairs=[pair], n_steps=steps, rounds=rounds))
        curves.append(result.mdd_curve)
        finals.append(result.mdd_curve[-1])
    if not finals:
        raise RuntimeError("no realizable drags sampled; widen the distance range")
    report = MetricReport(
        protocol="mdd-curve",
        per_sample=finals,
        config_hash=config_hash,
        extras={
            "dist_range": f"{dist_range[0]}-{dist_range[1]}",
            "share_below_0.5": sum(1 for f in finals if f <= 0.5) / len(finals),
            "rounds": rounds,
            "n_steps": steps,
        },
    )
    return report, curves


def write_curves_csv(path: str | Path, curves: list[list[float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = max(len(c) for c in curves)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial"] + [f"step_{i}" for i in range(width)])
        for t, curve in enumerate(curves):
            writer.writerow([t] + [f"{v:.6f}" for v in curve])
        mean_curve = [
            sum(c[i] for c in curves if len(c) > i) / sum(1 for c in curves if len(c) > i)
            for i in range(width)
        ]
        writer.writerow(["mean"] + [f"{v:.6f}" for v in mean_curve])
    return path


def ablation_n_eval(
    gen: ToyGenerator,
    regularizer,
    base_config: Stage2Config,
    n_values: list[int],
    trials: int = 100,
    seed: int = 0,
    config_hash: str = "",
) -> dict[int, MetricReport]:
    """Train stage 2 per sequence length and score paired reconstruction."""
    import copy as _copy

    from .persistence import DragModels

    reports: dict[int, MetricReport] = {}
    for n in n_values:
        cfg = replace(base_config, steps=n)
        reg_copy = _copy.deepcopy(regularizer) if regularizer is not None else None
        predictor, reg_tuned, _ = train_stage2(gen, reg_copy, cfg)
        models = DragModels(generator=gen, regularizer=reg_tuned, predictor=predictor, stage2=cfg)
        reports[n] = paired_reconstruction_eval(
            models, gen, trials=trials, seed=seed, stage2=cfg, config_hash=config_hash
        )
        logger.info("ablation n=%d: paired MSE x100 = %.4f", n, reports[n].mean)
    return reports
