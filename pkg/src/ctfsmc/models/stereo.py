"""Stereo matching as an MRF over disparities.

The disparity map is sampled one 2x2 block at a time, each block a separate
ERP.  A fine block is a row-major tuple ``(d00, d01, d10, d11)``; coarsening
replaces it by a :class:`BlockSummary`.  The energy is polymorphic: a
summarised block contributes its mean disparity to the data cost at each of
its four pixels and ``2 * var`` (the expected squared difference of two
values drawn from the block) to each of its internal smoothing pairs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .. import kernels
from ..distributions import uniform
from ..errors import (CoarsenFailure, DimensionMismatch, EmptyRefinement,
                      FullyCoarsened)
from ..program import ModelProgram
from ..transform import CoarseningScheme, Lifter, coarse_to_fine

V_MAX = 5.0


class BlockSummary:
    """Mean and population std of a 2x2 integer block.

    Stored as the integer pair ``(sum, sum of squares)`` so that equality is
    exact: means live on the quarter-integer grid and stds on the finite set
    reachable by integer blocks.
    """

    __slots__ = ("total", "sumsq", "_hash")

    def __init__(self, total: int, sumsq: int):
        total, sumsq = int(total), int(sumsq)
        if 4 * sumsq < total * total:
            raise ValueError(f"no block has sum {total} and sum of squares {sumsq}")
        object.__setattr__(self, "total", total)
        object.__setattr__(self, "sumsq", sumsq)
        object.__setattr__(self, "_hash", hash(("BlockSummary", total, sumsq)))

    def __setattr__(self, name, value):
        raise AttributeError("BlockSummary is immutable")

    @classmethod
    def of(cls, block) -> "BlockSummary":
        vals = [int(v) for v in np.asarray(block).ravel()]
        if len(vals) != 4:
            raise DimensionMismatch("a block has exactly 4 entries")
        return cls(sum(vals), sum(v * v for v in vals))

    @property
    def mean(self) -> float:
        return self.total / 4.0

    @property
    def var(self) -> float:
        return (4 * self.sumsq - self.total * self.total) / 16.0

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def __eq__(self, other):
        if other.__class__ is not BlockSummary:
            return NotImplemented
        return self.total == other.total and self.sumsq == other.sumsq

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (BlockSummary, (self.total, self.sumsq))

    def __repr__(self):
        return f"BlockSummary(mean={self.mean:g}, std={self.std:.4g})"


def block_coarsen(block) -> BlockSummary:
    if isinstance(block, BlockSummary):
        raise FullyCoarsened("block summaries are not coarsened further")
    return BlockSummary.of(block)


def _all_blocks(max_disparity: int):
    return list(itertools.product(range(max_disparity + 1), repeat=4))


def block_refine(s: BlockSummary, max_disparity: int, level: int = 1) -> list:
    """Every integer block over ``0..max_disparity`` with summary ``s``."""
    if level != 1:
        raise CoarsenFailure("block summaries exist at level 1 only")
    if not isinstance(s, BlockSummary):
        raise CoarsenFailure(f"cannot refine {s!r}")
    out = [b for b in _all_blocks(max_disparity)
           if sum(b) == s.total and sum(v * v for v in b) == s.sumsq]
    if not out:
        raise EmptyRefinement(f"no block over 0..{max_disparity} has {s!r}")
    return out


def block_scheme(max_disparity: int) -> CoarseningScheme:
    table: dict = {}
    for b in _all_blocks(max_disparity):
        table.setdefault(BlockSummary.of(b), []).append(b)

    def refine(s):
        if not isinstance(s, BlockSummary):
            raise CoarsenFailure(f"cannot refine {s!r}")
        hit = table.get(s)
        if hit is None:
            raise EmptyRefinement(f"no block over 0..{max_disparity} has {s!r}")
        return list(hit)

    return CoarseningScheme(coarsen=block_coarsen, refine=refine, name=f"block2x2(0..{max_disparity})")


# ---------------------------------------------------------------------------
# energy


def data_cost(left, right, disp) -> np.ndarray:
    """Per-pixel data cost ``C(p, d_p)``."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    disp = np.asarray(disp, dtype=float)
    if left.shape != right.shape or left.shape != disp.shape:
        raise DimensionMismatch(f"shapes differ: {left.shape}, {right.shape}, {disp.shape}")
    return kernels.np_data_cost(left, right, disp)


def smoothing(da: float, db: float, vmax: float = V_MAX) -> float:
    """Truncated quadratic ``min((da - db)^2, vmax)``."""
    return min((da - db) ** 2, vmax)


def assemble(blocks, height: int, width: int):
    """Pixel maps ``(disp, block id, block var)`` from a grid of block values.

    Fine pixels get block id -1; summarised blocks get a distinct id >= 0.
    """
    disp = np.empty((height, width))
    bid = np.full((height, width), -1, dtype=np.int64)
    bvar = np.zeros((height, width))
    bw = width // 2
    for k, b in enumerate(blocks):
        i, j = 2 * (k // bw), 2 * (k % bw)
        if isinstance(b, BlockSummary):
            disp[i:i + 2, j:j + 2] = b.mean
            bid[i:i + 2, j:j + 2] = k
            bvar[i:i + 2, j:j + 2] = b.var
        else:
            disp[i:i + 2, j:j + 2] = np.reshape(b, (2, 2))
    return disp, bid, bvar


def stereo_energy(disp, left, right, vmax: float = V_MAX) -> float:
    """``H(d)`` for a fine disparity map."""
    disp = np.asarray(disp, dtype=float)
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if not (disp.shape == left.shape == right.shape):
        raise DimensionMismatch(f"shapes differ: {disp.shape}, {left.shape}, {right.shape}")
    bid = np.full(disp.shape, -1, dtype=np.int64)
    return float(kernels.stereo_energy(left, right, disp, bid, np.zeros(disp.shape), vmax))


def blocks_energy(blocks, left, right, vmax: float = V_MAX) -> float:
    """Polymorphic energy of a grid of fine and/or summarised blocks."""
    h, w = left.shape
    disp, bid, bvar = assemble(blocks, h, w)
    return float(kernels.stereo_energy(left, right, disp, bid, bvar, vmax))


def blocks_to_disparity(blocks, height: int, width: int) -> np.ndarray:
    disp, bid, _ = assemble(blocks, height, width)
    if np.any(bid >= 0):
        raise CoarsenFailure("map still holds block summaries")
    return disp.astype(np.int64)


# ---------------------------------------------------------------------------
# data


def synthesize_stereo_pair(seed, width: int, height: int, max_disparity: int):
    """``(left, right, true disparity)`` for a synthetic scene.

    The disparity field is a background plane plus a few constant
    rectangles.  The left image is smoothed noise in [0, 255]; the right
    image starts as a copy and receives ``left[y, x]`` at ``x + d``
    (clamped), so ``C(p, d_p)`` vanishes wherever nothing is occluded.
    """
    if not 0 <= max_disparity < width:
        raise ValueError("need 0 <= max_disparity < width")
    rng = np.random.default_rng(seed)
    disp = np.full((height, width), rng.integers(0, max_disparity + 1), dtype=np.int64)
    for _ in range(rng.integers(1, 4)):
        h0, w0 = rng.integers(0, height), rng.integers(0, width)
        h1 = rng.integers(h0 + 1, height + 1)
        w1 = rng.integers(w0 + 1, width + 1)
        disp[h0:h1, w0:w1] = rng.integers(0, max_disparity + 1)
    noise = rng.uniform(0.0, 255.0, size=(height, width + 2))
    left = (noise[:, :-2] + 2.0 * noise[:, 1:-1] + noise[:, 2:]) / 4.0
    left = np.round(left, 2)
    right = left.copy()
    for y in range(height):
        for x in range(width):
            right[y, min(x + disp[y, x], width - 1)] = left[y, x]
    return left, right, disp


# ---------------------------------------------------------------------------
# model


def stereo_model(left, right, max_disparity: int, levels: int = 0,
                 lifter: Lifter | None = None, vmax: float = V_MAX) -> ModelProgram:
    """Sample a disparity map block by block, then factor once on ``-H``."""
    left = np.ascontiguousarray(left, dtype=float)
    right = np.ascontiguousarray(right, dtype=float)
    if left.shape != right.shape:
        raise DimensionMismatch(f"image shapes differ: {left.shape} vs {right.shape}")
    h, w = left.shape
    if h % 2 or w % 2:
        raise DimensionMismatch(f"image sides must be even, got {left.shape}")
    if not 0 <= levels <= 1:
        raise ValueError("stereo supports levels 0 and 1")
    lifter = lifter or Lifter(block_scheme(max_disparity))
    base = uniform(_all_blocks(max_disparity))
    sites = [("block", i, j) for i in range(h // 2) for j in range(w // 2)]
    score = Lifter.polymorphic(lambda blocks: -blocks_energy(blocks, left, right, vmax))

    def stereo(h_):
        blocks = [lifter.sample(h_, base, s) for s in sites]
        lifter.factor(h_, score(h_, blocks), "energy")
        return tuple(blocks)

    prog = ModelProgram(stereo, f"stereo{h}x{w}")
    return coarse_to_fine(prog, levels) if levels else prog
