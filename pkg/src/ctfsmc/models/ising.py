"""2-D Ising model with block-spin majority coarsening.

A lattice value is a :class:`PartialCoarseLattice`: one spin matrix per
scale (fine, 3x3 blocks, 9x9 blocks) with 0 marking unresolved cells.
Each coarsening step replaces one block by its majority spin, blocks of
the first coarse scale first, in raster order, then blocks of the next.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .. import kernels
from ..distributions import Distribution
from ..errors import CoarsenFailure, FullyCoarsened, UnresolvedLattice
from ..program import ModelProgram
from ..transform import CoarseningScheme, Lifter, coarse_to_fine

LOG2 = math.log(2.0)

# all 3x3 +/-1 blocks, split by majority
_ALL_BLOCKS = np.array(list(itertools.product((-1, 1), repeat=9)), dtype=np.int8).reshape(-1, 3, 3)
_BLOCKS_BY_MODE = {
    1: _ALL_BLOCKS[_ALL_BLOCKS.reshape(-1, 9).sum(axis=1) > 0],
    -1: _ALL_BLOCKS[_ALL_BLOCKS.reshape(-1, 9).sum(axis=1) < 0],
}


def max_steps(n: int) -> int:
    """Coarsening steps from fully fine to fully coarse."""
    if n % 3:
        raise CoarsenFailure(f"lattice side {n} is not divisible by 3")
    steps = (n // 3) ** 2
    if (n // 3) % 3 == 0:
        steps += (n // 9) ** 2
    return steps


def _step_block(n: int, step: int):
    """(scale, block row, block col) coarsened by step number ``step``."""
    per = n // 3
    if step < per * per:
        return 1, step // per, step % per
    step -= per * per
    per2 = n // 9
    if per2 == 0 or step >= per2 * per2:
        raise FullyCoarsened(f"{n}x{n} lattice has no coarsening step {step}")
    return 2, step // per2, step % per2


class PartialCoarseLattice:
    """Mixed-resolution spin lattice.

    ``grids[s]`` is the ``(n / 3**s)``-square matrix of scale ``s`` with
    entries in {-1, 0, +1}; 0 means the cell is not resolved at that scale.
    ``steps`` counts how many blocks have been coarsened.
    """

    __slots__ = ("n", "steps", "grids", "_hash")

    def __init__(self, n: int, steps: int, grids):
        self.n = n
        self.steps = steps
        self.grids = tuple(np.asarray(g, dtype=np.int8) for g in grids)
        for g in self.grids:
            g.setflags(write=False)
        self._hash = hash((n, steps) + tuple(g.tobytes() for g in self.grids))

    @classmethod
    def from_spins(cls, spins) -> "PartialCoarseLattice":
        spins = np.asarray(spins, dtype=np.int8)
        n = spins.shape[0]
        if spins.shape != (n, n) or not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be a square +/-1 matrix")
        grids = [spins]
        m = n
        while m % 3 == 0 and len(grids) < 3:
            m //= 3
            grids.append(np.zeros((m, m), dtype=np.int8))
        return cls(n, 0, grids)

    @property
    def fine(self) -> np.ndarray:
        return self.grids[0]

    @property
    def resolved_masks(self):
        return tuple(g != 0 for g in self.grids)

    def is_fully_fine(self) -> bool:
        return self.steps == 0

    def __eq__(self, other):
        if not isinstance(other, PartialCoarseLattice):
            return NotImplemented
        return (self.n == other.n and self.steps == other.steps
                and all(np.array_equal(a, b) for a, b in zip(self.grids, other.grids)))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"PartialCoarseLattice(n={self.n}, steps={self.steps})"


# ---------------------------------------------------------------------------
# coarsening


def majority_coarsen_step(x: PartialCoarseLattice) -> PartialCoarseLattice:
    """Replace the next raster-order block by its modal spin."""
    if x.steps >= max_steps(x.n):
        raise FullyCoarsened(f"{x!r} is fully coarsened")
    s, bi, bj = _step_block(x.n, x.steps)
    grids = [g.copy() for g in x.grids]
    block = grids[s - 1][3 * bi:3 * bi + 3, 3 * bj:3 * bj + 3]
    if np.any(block == 0):
        raise CoarsenFailure("block to coarsen is not fully resolved")
    grids[s][bi, bj] = 1 if block.sum() > 0 else -1
    block[...] = 0
    return PartialCoarseLattice(x.n, x.steps + 1, grids)


def majority_refine(x: PartialCoarseLattice) -> list:
    """All lattices one step finer that coarsen to ``x``."""
    if x.steps == 0:
        raise CoarsenFailure("a fully fine lattice has no refinements")
    s, bi, bj = _step_block(x.n, x.steps - 1)
    v = int(x.grids[s][bi, bj])
    out = []
    for block in _BLOCKS_BY_MODE[v]:
        grids = [g.copy() for g in x.grids]
        grids[s][bi, bj] = 0
        grids[s - 1][3 * bi:3 * bi + 3, 3 * bj:3 * bj + 3] = block
        out.append(PartialCoarseLattice(x.n, x.steps - 1, grids))
    return out


def majority_refine_cell(v: int) -> list:
    """All 3x3 blocks whose majority spin is ``v``."""
    return [b.copy() for b in _BLOCKS_BY_MODE[int(v)]]


def _bits_per_cell(scale: int) -> int:
    # log2 of the number of fine configurations under one resolved cell
    bits = 0
    for _ in range(scale):
        bits = 8 + 9 * bits
    return bits


def _uniform_exact_mass(base, coarse, level):
    if not isinstance(base, UniformSpins) or not isinstance(coarse, PartialCoarseLattice):
        return None
    bits = sum(_bits_per_cell(s) * int(np.count_nonzero(g)) for s, g in enumerate(coarse.grids))
    return (bits - coarse.n * coarse.n) * LOG2


def majority_scheme() -> CoarseningScheme:
    return CoarseningScheme(
        coarsen=majority_coarsen_step,
        refine=majority_refine,
        exact_mass=_uniform_exact_mass,
        name="majority3x3",
    )


class UniformSpins(Distribution):
    """Uniform distribution over fully fine ``n x n`` spin lattices."""

    def __init__(self, n: int):
        self.n = n

    def support(self):
        if self.n * self.n > 20:
            raise ValueError(f"refusing to enumerate 2^{self.n * self.n} lattices")
        for bits in itertools.product((-1, 1), repeat=self.n * self.n):
            yield PartialCoarseLattice.from_spins(np.array(bits).reshape(self.n, self.n))

    def log_mass(self, value) -> float:
        if isinstance(value, PartialCoarseLattice) and value.n == self.n and value.steps == 0:
            return -self.n * self.n * LOG2
        return float("-inf")

    def sample(self, rng):
        spins = rng.integers(0, 2, size=(self.n, self.n), dtype=np.int8) * 2 - 1
        return PartialCoarseLattice.from_spins(spins)


# ---------------------------------------------------------------------------
# energy


def _units(x: PartialCoarseLattice):
    n = x.n
    unit = np.full((n, n), -1, dtype=np.int64)
    spins = []
    offset = 0
    for s, g in enumerate(x.grids):
        k = 3 ** s
        idx = np.flatnonzero(g)
        if idx.size == 0:
            continue
        ids = np.full(g.shape, -1, dtype=np.int64)
        ids.flat[idx] = np.arange(offset, offset + idx.size)
        big = np.repeat(np.repeat(ids, k, axis=0), k, axis=1)
        covered = big >= 0
        if np.any(unit[covered] >= 0):
            raise UnresolvedLattice("a cell is resolved at two scales")
        unit[covered] = big[covered]
        spins.append(g.flat[idx].astype(np.float64))
        offset += idx.size
    if np.any(unit < 0):
        raise UnresolvedLattice("some cells are resolved at no scale")
    return unit, np.concatenate(spins)


def ising_pair_sum(x) -> float:
    """Sum of spin products over neighbouring resolved cells.

    Plain matrices use 4-neighbour pairs with free boundaries.  For a
    partially coarsened lattice, every pair of distinct resolved cells that
    touch across an edge counts once, whatever their scales.
    """
    if not isinstance(x, PartialCoarseLattice):
        s = np.asarray(getattr(x, "array", x), dtype=np.int64)
        return float((s[:, :-1] * s[:, 1:]).sum() + (s[:-1, :] * s[1:, :]).sum())
    unit, spin = _units(x)
    return float(kernels.unit_pair_sum(unit, spin))


def ising_energy(x, J: float, sign: float = 1.0) -> float:
    """Factor score ``sign * J * sum <ij> s_i s_j``; aligned spins score high."""
    return sign * J * ising_pair_sum(x)


def ising_model(n: int, T: float, levels: int = 0, lifter: Lifter | None = None,
                sign: float = 1.0) -> ModelProgram:
    """Sample a spin lattice, then factor once on its (polymorphic) energy."""
    if n % 3:
        raise CoarsenFailure(f"lattice side {n} is not divisible by 3")
    if not 0 <= levels <= max_steps(n):
        raise ValueError(f"levels must be in [0, {max_steps(n)}] for n={n}")
    J = 1.0 / T
    lifter = lifter or Lifter(majority_scheme())
    base = UniformSpins(n)
    energy = Lifter.polymorphic(lambda x: ising_energy(x, J, sign))

    def ising(h):
        x = lifter.sample(h, base, "spins")
        lifter.factor(h, energy(h, x), "energy")
        return x

    prog = ModelProgram(ising, f"ising{n}")
    return coarse_to_fine(prog, levels) if levels else prog
