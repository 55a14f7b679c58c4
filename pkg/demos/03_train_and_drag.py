#!/usr/bin/env python3
"""Miniature end-to-end run: a few minutes of training, then a drag edit.

This uses a shrunken recipe so it finishes quickly; quality follows the
training budget. For the full desk-scale recipe use configs/toy.yaml with
the CLI (see README).
"""
import time
from pathlib import Path

import torch

from latentdrag import (
    DragModels,
    EditRequest,
    Stage1Config,
    Stage2Config,
    ToyGenerator,
    edit,
    train_stage1,
    train_stage2,
)
from latentdrag.common import DTYPE, new_rng
from latentdrag.evaluation import sample_realizable_drag
from latentdrag.inference import save_edit_result

out = Path(__file__).parent / "out" / "mini_drag"
gen = ToyGenerator()

print("stage 1 (miniature: 6 epochs)...")
t0 = time.time()
stage1 = Stage1Config(epochs=6, samples_per_epoch=1024, seed=0)
regularizer, curve = train_stage1(gen, stage1)
print(f"  done in {time.time()-t0:.0f}s, loss {curve[0]:.3f} -> {curve[-1]:.3f}")

print("stage 2 (miniature: 8 epochs)...")
t0 = time.time()
stage2 = Stage2Config(
    lr_init=1e-3, lr_min=3e-4, cosine_period=8, epochs=8,
    batch_size=64, samples_per_epoch=1024, regularizer_lr=5e-4,
    drag_warmup_epochs=3, seed=0,
)
predictor, reg_tuned, curves = train_stage2(gen, regularizer, stage2)
print(f"  done in {time.time()-t0:.0f}s, total loss {curves[0]['total']:.3f} -> {curves[-1]['total']:.3f}")

models = DragModels(generator=gen, regularizer=reg_tuned, predictor=predictor, stage2=stage2).eval_mode()
rng = new_rng(99)
w0 = gen.sample_latent(rng)
pair = sample_realizable_drag(gen, w0, rng, dist_range=(15.0, 30.0))
print(f"\ndrag: handle {pair.handle} -> target {pair.target} ({pair.distance:.0f} px)")
result = edit(models, gen, EditRequest(w0=w0, pairs=[pair], n_steps=5))
print(f"MDD curve: {[round(v, 2) for v in result.mdd_curve]}")
print(f"{result.synthesis_calls} synthesis calls, {result.grad_computations} gradient computations, "
      f"{result.wall_time*1000:.0f} ms")
save_edit_result(result, out)
print(f"result directory: {out}")
