"""Command-line entry points: training, evaluation, editing, serving."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .checkpoints import file_hash
from .common import set_deterministic
from .config import RunConfig
from .errors import (
    CheckpointError,
    NoCorrespondenceError,
    ParameterError,
    PointsFileError,
    TrainingDivergenceError,
)
from .generator import ToyGenerator

logger = logging.getLogger("latentdrag")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="RunConfig YAML")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--deterministic", action="store_true", help="single-threaded bit-stable mode")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def _load_run_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        stage1 = dataclasses.replace(config.stage1, seed=args.seed)
        stage2 = dataclasses.replace(config.stage2, seed=args.seed)
        config = dataclasses.replace(config, seed=args.seed, stage1=stage1, stage2=stage2)
    if args.deterministic:
        config = dataclasses.replace(config, deterministic=True)
    if getattr(args, "out", None):
        config = dataclasses.replace(config, out_dir=str(args.out))
    if config.deterministic:
        set_deterministic()
    return config


def _cmd_train_regularizer(args) -> int:
    from .persistence import save_stage1_checkpoint, write_curve_csv
    from .regularizer import train_stage1

    config = _load_run_config(args)
    out = Path(config.out_dir)
    gen = ToyGenerator(config.generator)
    model, curve = train_stage1(gen, config.stage1)
    ckpt = save_stage1_checkpoint(out / "stage1.ckpt", gen, model, config.stage1, curve)
    write_curve_csv(
        out / "stage1_curve.csv",
        [{"epoch": i, "loss": v} for i, v in enumerate(curve)],
        ["epoch", "loss"],
    )
    print(ckpt)
    return 0


def _cmd_train_predictor(args) -> int:
    from .persistence import (
        load_stage1_checkpoint,
        save_joint_checkpoint,
        write_curve_csv,
    )
    from .predictor import train_stage2

    config = _load_run_config(args)
    out = Path(config.out_dir)
    gen, regularizer, _, _ = load_stage1_checkpoint(args.stage1)
    try:
        predictor, reg_tuned, curves = train_stage2(gen, regularizer, config.stage2)
    except TrainingDivergenceError as exc:
        if getattr(exc, "last_good", None):
            pred_state, reg_state = exc.last_good
            from .persistence import _build_predictor  # last-good rescue

            rescued = _build_predictor(gen, config.stage2)
            rescued.load_state_dict(pred_state)
            if reg_state is not None:
                regularizer.load_state_dict(reg_state)
            save_joint_checkpoint(out / "joint_last_good.ckpt", gen, regularizer, rescued, config)
            print(f"diverged; last good checkpoint: {out / 'joint_last_good.ckpt'}", file=sys.stderr)
        raise
    ckpt = save_joint_checkpoint(out / "joint.ckpt", gen, reg_tuned, predictor, config, curves)
    write_curve_csv(out / "stage2_curve.csv", curves, ["epoch", "l_pred", "l_drag", "total", "lr"])
    print(ckpt)
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import (
        ablation_n_eval,
        landmark_manipulation_eval,
        mdd_curve_eval,
        paired_reconstruction_eval,
        write_curves_csv,
    )
    from .persistence import load_joint_checkpoint

    config_for_flags = _load_run_config(args)
    models = load_joint_checkpoint(args.checkpoint)
    gen = models.generator
    out = Path(args.out or config_for_flags.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else models.run_config.seed
    chash = file_hash(args.checkpoint)

    if args.protocol == "landmark":
        for points in args.points_counts:
            report = landmark_manipulation_eval(
                models, gen, num_points=points, trials=args.trials, seed=seed,
                rounds=args.rounds, config_hash=chash,
            )
            report.write_csv(out / f"landmark_{points}pt.csv")
            print(f"landmark {points}pt: MD {report.mean:.3f} "
                  f"(no-edit {report.extras['no_edit_mean']:.3f})")
    elif args.protocol == "paired":
        report = paired_reconstruction_eval(
            models, gen, trials=args.trials, seed=seed, rounds=args.rounds, config_hash=chash
        )
        report.write_csv(out / "paired_mse_x100.csv")
        print(f"paired reconstruction: MSE x100 {report.mean:.4f} "
              f"(no-edit {report.extras['no_edit_mean']:.4f})")
    elif args.protocol == "mdd":
        report, curves = mdd_curve_eval(
            models, gen, trials=args.trials, seed=seed, rounds=args.rounds, config_hash=chash
        )
        report.write_csv(out / "mdd_final.csv")
        write_curves_csv(out / "mdd_curves.csv", curves)
        print(f"mdd: final {report.mean:.3f}, share<=0.5 {report.extras['share_below_0.5']:.2f}")
    elif args.protocol == "ablation-n":
        reports = ablation_n_eval(
            gen, models.regularizer, models.stage2, n_values=args.n_values,
            trials=args.trials, seed=seed, config_hash=chash,
        )
        for n, report in reports.items():
            report.write_csv(out / f"ablation_n{n}.csv")
            print(f"n={n}: MSE x100 {report.mean:.4f}")
    return 0


def _cmd_edit(args) -> int:
    from .common import derive_rng
    from .correspondence import load_point_pairs
    from .inference import EditRequest, edit, save_edit_result
    from .persistence import load_joint_checkpoint

    _load_run_config(args)
    models = load_joint_checkpoint(args.checkpoint)
    gen = models.generator
    pairs = load_point_pairs(args.points)
    if not pairs:
        raise ParameterError(f"points file {args.points} contains no pairs")
    w0 = gen.sample_latent(derive_rng(args.seed or 0, "session"))
    request = EditRequest(
        w0=w0, pairs=pairs, n_steps=args.steps or models.default_steps, rounds=args.rounds
    )
    result = edit(models, gen, request)
    out = save_edit_result(result, args.out or "edit_out")
    print(f"{out} (final MDD {result.mdd_curve[-1]:.3f}, "
          f"{result.synthesis_calls} synthesis calls, {result.wall_time*1000:.0f} ms)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .persistence import load_joint_checkpoint
    from .service import create_app

    _load_run_config(args)
    models = load_joint_checkpoint(args.checkpoint)
    app = create_app(models, checkpoint_hash=file_hash(args.checkpoint))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentdrag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-regularizer", help="stage-1 denoiser pretraining")
    _add_common(p)
    p.set_defaults(func=_cmd_train_regularizer)

    p = sub.add_parser("train-predictor", help="stage-2 joint training")
    _add_common(p)
    p.add_argument("--stage1", type=Path, required=True, help="stage-1 checkpoint")
    p.set_defaults(func=_cmd_train_predictor)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    _add_common(p)
    p.add_argument("--protocol", required=True, choices=["landmark", "paired", "mdd", "ablation-n"])
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--points-counts", type=int, nargs="+", default=[1, 5, 12])
    p.add_argument("--n-values", type=int, nargs="+", default=[1, 5])
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("edit", help="drag-edit a seeded image with a points file")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--points", type=Path, required=True, help="lines of: hx hy tx ty")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--rounds", type=int, default=1)
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("serve", help="HTTP service for sessions and edits")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, PointsFileError, CheckpointError, NoCorrespondenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergenceError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
