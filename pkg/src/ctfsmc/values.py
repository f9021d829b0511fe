"""Value types shared by models and coarsening schemes.

Plain Python values (int, float, bool, tuple) are used where they suffice.
The classes here add the structured values the benchmark models need; all
of them are immutable and hash structurally so they can key stores and be
de-duplicated during enumeration.
"""

from __future__ import annotations

import numpy as np


class IntInterval:
    """Closed integer interval ``[lo, hi]``.

    Hand-rolled rather than a dataclass: intervals are hashed on every store
    access during inference, so the hash is computed once.
    """

    __slots__ = ("lo", "hi", "_hash")

    def __init__(self, lo: int, hi: int):
        lo, hi = int(lo), int(hi)
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "_hash", hash(("IntInterval", lo, hi)))

    def __setattr__(self, name, value):
        raise AttributeError("IntInterval is immutable")

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    def __eq__(self, other):
        if other.__class__ is not IntInterval:
            return NotImplemented
        return self.lo == other.lo and self.hi == other.hi

    def __lt__(self, other):
        return (self.lo, self.hi) < (other.lo, other.hi)

    def __hash__(self):
        return self._hash

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def __reduce__(self):
        return (IntInterval, (self.lo, self.hi))

    def __repr__(self) -> str:
        return f"[{self.lo},{self.hi}]"


class Lattice:
    """Immutable 2-D integer matrix with structural equality.

    Wraps a read-only numpy array; equality and hashing go through the raw
    bytes, so two lattices are equal iff shape, dtype and entries match.
    """

    __slots__ = ("_a", "_hash")

    def __init__(self, array):
        a = np.array(array, dtype=np.int64, copy=True)
        if a.ndim != 2:
            raise ValueError("lattice must be 2-D")
        a.setflags(write=False)
        self._a = a
        self._hash = hash((a.shape, a.tobytes()))

    @property
    def array(self) -> np.ndarray:
        return self._a

    @property
    def shape(self):
        return self._a.shape

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return self._a.shape == other._a.shape and np.array_equal(self._a, other._a)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Lattice({self._a.tolist()})"
