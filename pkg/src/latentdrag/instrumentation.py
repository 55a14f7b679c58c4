"""Counters backing the "no optimization at inference" contract.

`grad_forwards` counts forward passes executed while autograd is recording;
`backward_calls` counts explicit backward passes (training code routes
through `backward`). An edit rollout must leave both untouched.
"""
from __future__ import annotations

import threading

import torch

_lock = threading.Lock()
_counters = {"grad_forwards": 0, "backward_calls": 0}


def note_forward(*tensors: torch.Tensor) -> None:
    """Record a forward pass if autograd would build a graph for it."""
    if torch.is_grad_enabled() and any(
        t.requires_grad for t in tensors if isinstance(t, torch.Tensor)
    ):
        with _lock:
            _counters["grad_forwards"] += 1


def backward(loss: torch.Tensor, **kwargs) -> None:
    """Counted stand-in for `loss.backward()`."""
    with _lock:
        _counters["backward_calls"] += 1
    loss.backward(**kwargs)


def snapshot() -> dict[str, int]:
    with _lock:
        return dict(_counters)


def gradient_computations_since(before: dict[str, int]) -> int:
    now = snapshot()
    return sum(now[k] - before.get(k, 0) for k in now)


def reset() -> None:
    with _lock:
        for k in _counters:
            _counters[k] = 0
