"""Generic coarsening schemes.

The dyadic interval scheme maps an integer in ``[1, M]`` to the aligned
width-2 interval containing it, and a width-``w`` interval to the aligned
width-``2w`` interval containing it.  Tuples coarsen element-wise and
booleans are left unchanged, so the same scheme covers compound values.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .distributions import Discrete
from .errors import CoarsenFailure, NonDyadicM
from .transform import CoarseningScheme
from .values import IntInterval

NEG_INF = float("-inf")


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, (bool, np.bool_))


def interval_coarsen(v, m: int):
    if isinstance(v, tuple):
        return tuple(interval_coarsen(x, m) for x in v)
    if isinstance(v, (bool, np.bool_)):
        return v
    if _is_int(v):
        if not 1 <= v <= m:
            raise CoarsenFailure(f"{v} outside [1, {m}]")
        if m < 2:
            raise CoarsenFailure("cannot coarsen beyond the full range")
        lo = (int(v) - 1) // 2 * 2 + 1
        return IntInterval(lo, lo + 1)
    if isinstance(v, IntInterval):
        w = 2 * v.width
        if w > m:
            raise CoarsenFailure(f"{v!r} is already the full range")
        lo = (v.lo - 1) // w * w + 1
        return IntInterval(lo, lo + w - 1)
    raise CoarsenFailure(f"interval scheme cannot coarsen {type(v).__name__}")


def interval_refine(V):
    if isinstance(V, tuple):
        return [tuple(c) for c in itertools.product(*(interval_refine(x) for x in V))]
    if isinstance(V, (bool, np.bool_)):
        return [V]
    if isinstance(V, IntInterval):
        if V.width == 2:
            return [V.lo, V.hi]
        half = V.width // 2
        return [IntInterval(V.lo, V.lo + half - 1), IntInterval(V.lo + half, V.hi)]
    raise CoarsenFailure(f"interval scheme cannot refine {V!r}")


def _interval_exact_mass(base, coarse, level):
    # fast path for a tabular ERP over integers coarsened to one interval
    if not isinstance(coarse, IntInterval) or not isinstance(base, Discrete):
        return None
    lm = [base.log_mass(v) for v in range(coarse.lo, coarse.hi + 1)]
    m = max(lm)
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(sum(math.exp(x - m) for x in lm))


def interval_scheme(m: int) -> CoarseningScheme:
    """Dyadic interval coarsening over ``[1, m]``; ``m`` must be a power of 2."""
    if m < 1 or m & (m - 1):
        raise NonDyadicM(f"M={m} is not a power of 2")
    return CoarseningScheme(
        coarsen=lambda v: interval_coarsen(v, m),
        refine=interval_refine,
        exact_mass=_interval_exact_mass,
        name=f"interval[{m}]",
    )
