#!/usr/bin/env python3
"""Full desk-scale stage-2 run from a stage-1 checkpoint, with periodic
snapshots so quality can be probed mid-run."""
import argparse
import logging
import time
from pathlib import Path

from latentdrag import RunConfig, Stage2Config
from latentdrag.persistence import (
    load_stage1_checkpoint,
    save_joint_checkpoint,
    write_curve_csv,
)
from latentdrag.predictor import train_stage2

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--stage1", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=45)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--lr-min", type=float, default=1e-5)
    parser.add_argument("--reg-lr", type=float, default=1e-4)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--samples", type=int, default=2048)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--snapshot-every", type=int, default=5)
    parser.add_argument("--no-regularizer", action="store_true")
    parser.add_argument("--steps", type=int, default=5)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gen, regularizer, stage1_cfg, _ = load_stage1_checkpoint(args.stage1)
    stage2 = Stage2Config(
        lr_init=args.lr,
        lr_min=args.lr_min,
        cosine_period=args.epochs,
        epochs=args.epochs,
        regularizer_lr=args.reg_lr,
        batch_size=args.batch,
        samples_per_epoch=args.samples,
        steps=args.steps,
        use_regularizer=not args.no_regularizer,
        seed=args.seed,
    )
    run = RunConfig(seed=args.seed, out_dir=str(out), generator=gen.config,
                    stage1=stage1_cfg, stage2=stage2)
    rows_holder = []

    def hook(epoch, model, reg):
        if (epoch + 1) % args.snapshot_every == 0 or epoch + 1 == args.epochs:
            save_joint_checkpoint(out / f"joint_e{epoch+1:03d}.ckpt", gen, reg, model, run)

    t0 = time.time()
    predictor, reg_tuned, curves = train_stage2(
        gen, None if args.no_regularizer else regularizer, stage2, log_every=1, epoch_hook=hook
    )
    rows_holder.extend(curves)
    save_joint_checkpoint(out / "joint.ckpt", gen, reg_tuned, predictor, run, curves)
    write_curve_csv(out / "stage2_curve.csv", curves, ["epoch", "l_pred", "l_drag", "total", "lr"])
    print(f"done in {(time.time()-t0)/60:.1f} min -> {out/'joint.ckpt'}")


if __name__ == "__main__":
    main()
