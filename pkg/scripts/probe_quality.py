#!/usr/bin/env python3
"""Quick quality probe of a joint checkpoint: drag MDD, landmark MD, paired MSE."""
import argparse

from latentdrag.evaluation import (
    landmark_manipulation_eval,
    mdd_curve_eval,
    paired_reconstruction_eval,
)
from latentdrag.persistence import load_joint_checkpoint


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("checkpoint")
    parser.add_argument("--trials", type=int, default=25)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--rounds", type=int, default=1)
    parser.add_argument("--full", action="store_true")
    args = parser.parse_args()

    models = load_joint_checkpoint(args.checkpoint)
    gen = models.generator

    report, curves = mdd_curve_eval(models, gen, trials=args.trials, seed=args.seed,
                                    rounds=args.rounds)
    mean_curve = [sum(c[i] for c in curves) / len(curves) for i in range(len(curves[0]))]
    print(f"MDD final mean {report.mean:.3f}  share<=0.5 {report.extras['share_below_0.5']:.2f}  "
          f"curve {[round(v, 2) for v in mean_curve]}")

    zero = landmark_manipulation_eval(models, gen, num_points=1, trials=max(5, args.trials // 3),
                                      seed=args.seed, zero_drag=True)
    print(f"zero-drag MD {zero.mean:.2f} px (failures {zero.extras['failures']})")

    if args.full:
        for pts in (1, 5, 12):
            rep = landmark_manipulation_eval(models, gen, num_points=pts, trials=args.trials,
                                             seed=args.seed, rounds=args.rounds)
            print(f"landmark {pts}pt: MD {rep.mean:.2f} (no-edit {rep.extras['no_edit_mean']:.2f}, "
                  f"failures {rep.extras['failures']})")
        rep = paired_reconstruction_eval(models, gen, trials=args.trials, seed=args.seed,
                                         rounds=args.rounds)
        print(f"paired MSE x100: {rep.mean:.3f} (no-edit {rep.extras['no_edit_mean']:.3f})")


if __name__ == "__main__":
    main()
