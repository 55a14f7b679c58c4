"""Shared numeric conventions: dtype, seeded RNG streams, determinism mode."""
from __future__ import annotations

import hashlib

import torch

# Everything numeric runs in float64 on CPU: the scale is tiny and the
# acceptance gradient checks compare autodiff against central differences.
DTYPE = torch.float64

# Attention/activation tails produce denormal floats that are pathologically
# slow on x86; flushing them to zero is harmless at our tolerances.
torch.set_flush_denormal(True)


def new_rng(seed: int) -> torch.Generator:
    """A fresh CPU generator seeded with `seed`."""
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    return gen


def derive_seed(seed: int, label: str) -> int:
    """Stable named substream: hash (seed, label) into a new seed."""
    digest = hashlib.blake2s(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


def derive_rng(seed: int, label: str) -> torch.Generator:
    return new_rng(derive_seed(seed, label))


def set_deterministic(enable: bool = True) -> None:
    """Single-threaded mode so repeated runs are bit-identical."""
    if enable:
        torch.set_num_threads(1)
        torch.manual_seed(0)
