"""Dense numeric core: float32 tensors, deterministic matmul, seeded randomness.

All model math runs on plain numpy arrays in float32 (a float64 path exists
only for the gradient checker).  Matrix products go through ``np.einsum``
with ``optimize=False``: every output element is computed as its own inner
product with the summation index ascending, so results are bit-identical
run to run and independent of how rows are batched together.  That property
is what lets grouped evaluation match per-sample evaluation exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

# Conventional carrier for activations, weights and gradients.
Tensor = np.ndarray

FLOAT = np.float32

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash (also used by the checkpoint format)."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class RngStream:
    """Seeded random stream with labelled, mutually independent children.

    The generator is numpy's PCG64 keyed by a ``SeedSequence``.  A child
    stream for label ``L`` extends the parent's spawn key with the two
    32-bit halves of ``fnv1a64(L.encode("utf-8"))``, so the same
    ``(seed, label path)`` always reproduces the same draw sequence and
    distinct paths give independent streams.  This derivation is part of
    the repo's compatibility contract; do not change it.
    """

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = _path
        key: list[int] = []
        for label in _path:
            h = fnv1a64(label.encode("utf-8"))
            key.extend((h & 0xFFFFFFFF, h >> 32))
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(key))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, self.path + (label,))

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> Tensor:
        """Float32 i.i.d. uniform draws in [lo, hi)."""
        if not lo < hi:
            raise ValueError(f"uniform bounds require lo < hi, got lo={lo}, hi={hi}")
        return self._gen.uniform(lo, hi, size=shape).astype(FLOAT)

    def random(self, shape) -> np.ndarray:
        """Float64 uniform draws in [0, 1) (used for dropout masks)."""
        return self._gen.random(size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None) -> np.ndarray:
        return self._gen.integers(lo, hi, size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"


def as_tensor(values, shape=None) -> Tensor:
    """Build a float32 tensor, optionally reshaped; rank must be 1 or 2."""
    t = np.asarray(values, dtype=FLOAT)
    if shape is not None:
        t = t.reshape(shape)
    if t.ndim not in (1, 2):
        raise ShapeError(f"tensors are rank 1 or 2, got rank {t.ndim}")
    return t


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with fixed ascending-k accumulation per output element."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def matmul_t1(a: Tensor, b: Tensor) -> Tensor:
    """a.T @ b without materializing the transpose; same accumulation rule."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"matmul_t1 leading dimensions disagree: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    return np.einsum("ji,jk->ik", a, b, optimize=False)


def matmul_t2(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T without materializing the transpose; same accumulation rule."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"matmul_t2 trailing dimensions disagree: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    return np.einsum("ij,kj->ik", a, b, optimize=False)


def elementwise(fn, x: Tensor) -> Tensor:
    """Apply a scalar function value-wise, preserving shape and dtype."""
    return np.vectorize(fn, otypes=[x.dtype])(x)


def uniform_init(rng: RngStream, shape, lo: float, hi: float) -> Tensor:
    """Seeded uniform initialization in [lo, hi); errors when lo >= hi."""
    return rng.uniform(shape, lo, hi)
