"""Coarse-to-fine lifting of model programs.

Models are written once against a :class:`Lifter`, whose wrappers dispatch
on the current level held in the execution's store.  At level 0 every
wrapper behaves exactly like the construct it replaces, so running the body
directly gives the original program; :func:`coarse_to_fine` runs it once per
level, coarsest first, sharing one store between passes.

The lifted pieces:

* ``Lifter.constant`` coarsens a constant ``level`` times.
* ``Lifter.sample`` samples a lifted ERP.  With no value stored for the same
  relative address one level up it samples the base ERP and coarsens it;
  otherwise it picks among the refinements of the stored value in
  proportion to their total base-ERP mass.
* ``Lifter.factor`` emits ``s - s_coarser`` so the per-address factors
  telescope to the finest-level score.
* ``Lifter.primitive`` / ``Lifter.scorer`` push coarse arguments through
  uniformly drawn refinements; primitives sample the coarsened result,
  scorers return its expectation.
"""

from __future__ import annotations

import itertools
import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .distributions import Discrete, Distribution, Pushforward, from_log_weights
from .errors import AllZeroScores, CoarsenFailure, EmptyRefinement, NegativeLevel
from .program import Handle, Kind, ModelProgram

ERP, FACTOR = Kind.ERP, Kind.FACTOR

NEG_INF = float("-inf")


@dataclass(frozen=True)
class CoarseningScheme:
    """Paired ``coarsen``/``refine`` maps.

    ``exact_mass(base, coarse, level)``, when given, returns the log of the
    total base mass of the values that coarsen to ``coarse`` in ``level``
    steps (or ``None`` to fall back to enumerating the refinement tree).
    """

    coarsen: Callable
    refine: Callable[..., Sequence]
    exact_mass: Callable | None = None
    name: str = "scheme"

    def coarsen_n(self, v, n: int):
        for _ in range(n):
            v = self.coarsen(v)
        return v


# ---------------------------------------------------------------------------
# inverse law


@dataclass
class InverseLawReport:
    checked_values: int = 0
    checked_refinements: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_inverse_law(scheme: CoarseningScheme, domain: Iterable, levels: int = 1) -> InverseLawReport:
    """Check ``v in refine(V) <=> coarsen(v) == V`` exhaustively.

    ``domain`` is the finest-level domain; for ``levels > 1`` the check is
    repeated on each coarsened image of it.  Violations are returned, not
    raised.
    """
    report = InverseLawReport()
    current = list(dict.fromkeys(domain))
    for level in range(levels):
        images: dict = {}
        for v in current:
            report.checked_values += 1
            try:
                V = scheme.coarsen(v)
            except CoarsenFailure as exc:
                report.violations.append(("uncoarsenable", level, v, str(exc)))
                continue
            images.setdefault(V, []).append(v)
        for V, pre in images.items():
            refs = list(scheme.refine(V))
            report.checked_refinements += len(refs)
            if len(set(refs)) != len(refs):
                report.violations.append(("duplicate refinement", level, V, None))
            ref_set = set(refs)
            for v in pre:
                if v not in ref_set:
                    report.violations.append(("missing from refine", level, v, V))
            for r in refs:
                if scheme.coarsen(r) != V:
                    report.violations.append(("refines to wrong value", level, r, V))
        current = list(images)
    return report


# ---------------------------------------------------------------------------
# marginalisation over refinements


def refinement_leaves(scheme: CoarseningScheme, value, level: int) -> dict:
    """Distribution over level-0 values reached by ``level`` rounds of
    uniform-draw-of-refinement starting from ``value``."""
    leaves = {value: 1.0}
    for _ in range(level):
        nxt: dict = {}
        for v, p in leaves.items():
            refs = scheme.refine(v)
            if not refs:
                raise EmptyRefinement(f"refine({v!r}) is empty")
            q = p / len(refs)
            for r in refs:
                nxt[r] = nxt.get(r, 0.0) + q
        leaves = nxt
    return leaves


class Marginalizer:
    """Computes distributions/expectations of functions of refined arguments.

    Results are cached per ``(function, args, level)``.  When the product of
    the per-argument refinement sets exceeds ``max_exact``, the computation
    falls back to ``samples`` Monte Carlo draws with a generator seeded from
    the cache key, so results do not depend on evaluation order.
    """

    def __init__(self, scheme: CoarseningScheme, max_exact: int = 200_000,
                 samples: int = 2_000, cache_cap: int | None = None, seed: int = 0):
        self.scheme = scheme
        self.max_exact = max_exact
        self.samples = samples
        self.cache_cap = cache_cap
        self.seed = seed
        self._cache: dict = {}

    def _remember(self, key, value):
        if self.cache_cap is None or len(self._cache) < self.cache_cap:
            self._cache[key] = value
        return value

    def _arg_leaves(self, args, static, level):
        out = []
        for i, a in enumerate(args):
            if i in static:
                out.append({a: 1.0})
            else:
                out.append(refinement_leaves(self.scheme, a, level))
        return out

    def _rng(self, key):
        # key[0] is the kind tag, key[1] the function; seed from the stable part only
        tag = zlib.crc32(repr(key[2:]).encode())
        return np.random.default_rng([self.seed, tag])

    def _draw(self, a, static_arg: bool, level: int, rng):
        if static_arg:
            return a
        for _ in range(level):
            refs = self.scheme.refine(a)
            a = refs[rng.integers(len(refs))]
        return a

    def pushforward(self, f, args, level, static=()) -> Discrete:
        key = ("push", f, tuple(args), level, tuple(static))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        leaves = self._arg_leaves(args, static, level)
        size = math.prod(len(lv) for lv in leaves)
        acc: Counter = Counter()
        if size <= self.max_exact:
            for combo in itertools.product(*(lv.items() for lv in leaves)):
                p = math.prod(c[1] for c in combo)
                acc[self.scheme.coarsen_n(f(*(c[0] for c in combo)), level)] += p
        else:
            rng = self._rng(key)
            for _ in range(self.samples):
                xs = [self._draw(a, i in static, level, rng) for i, a in enumerate(args)]
                acc[self.scheme.coarsen_n(f(*xs), level)] += 1.0
        vals = list(acc)
        dist = from_log_weights(vals, np.log([acc[v] for v in vals]))
        return self._remember(key, dist)

    def expectation(self, f, args, level, static=(), vectorized=False) -> float:
        key = ("mean", f, tuple(args), level, tuple(static))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        leaves = self._arg_leaves(args, static, level)
        size = math.prod(len(lv) for lv in leaves)
        if size <= self.max_exact:
            if vectorized:
                grids = np.meshgrid(*[np.array(list(lv)) for lv in leaves], indexing="ij")
                pgrid = np.ones(grids[0].shape) if grids else np.ones(())
                for axis, lv in enumerate(leaves):
                    shape = [1] * len(leaves)
                    shape[axis] = len(lv)
                    pgrid = pgrid * np.array(list(lv.values())).reshape(shape)
                val = float(np.sum(pgrid * f(*grids)))
            else:
                val = 0.0
                for combo in itertools.product(*(lv.items() for lv in leaves)):
                    p = math.prod(c[1] for c in combo)
                    val += p * f(*(c[0] for c in combo))
        else:
            rng = self._rng(key)
            draws = [f(*[self._draw(a, i in static, level, rng) for i, a in enumerate(args)])
                     for _ in range(self.samples)]
            val = float(np.mean(draws))
        return self._remember(key, float(val))


# ---------------------------------------------------------------------------
# lifted constructs


class Lifter:
    """Builds lifted versions of model constructs for one coarsening scheme.

    ``erp_scores`` selects how lifted ERPs weigh refinements:

    * ``"exact"`` - total base mass of each refinement's preimage, via the
      scheme's ``exact_mass`` hook or the refinement tree;
    * ``("sampled", k)`` - fraction of ``k`` base draws coarsening to each
      refinement, plus a smoothing term ``1 / (k * |refinements|)``;
    * a callable ``(base, coarse, level) -> log mass`` supplied by the user.

    Only the exact mode keeps the finest-level marginal unchanged; the other
    two are approximations.
    """

    def __init__(self, scheme: CoarseningScheme, erp_scores="exact",
                 marginalizer: Marginalizer | None = None, seed: int = 0):
        self.scheme = scheme
        self.erp_scores = erp_scores
        self.marginalizer = marginalizer or Marginalizer(scheme, seed=seed)
        self.seed = seed
        self._score_cache: dict = {}
        self._hist_cache: dict = {}

    # -- constants ---------------------------------------------------------

    def constant(self, h: Handle, c):
        try:
            return self.scheme.coarsen_n(c, h.store.level)
        except CoarsenFailure:
            raise
        except Exception as exc:
            raise CoarsenFailure(f"cannot coarsen {c!r}: {exc}") from exc

    # -- ERPs --------------------------------------------------------------

    def erp_score(self, base: Distribution, coarse, level: int, n_refinements: int = 1) -> float:
        """Log total base mass of the values coarsening to ``coarse``."""
        if level < 0:
            raise NegativeLevel(f"level {level} < 0")
        if level == 0:
            return base.log_mass(coarse)
        mode = self.erp_scores
        if callable(mode):
            return float(mode(base, coarse, level))
        if mode == "exact":
            key = (base, coarse, level)
            hit = self._score_cache.get(key)
            if hit is None:
                hit = self._exact_score(base, coarse, level)
                self._score_cache[key] = hit
            return hit
        _, k = mode
        counts = self._sample_histogram(base, level, k)
        eps = 1.0 / (k * max(1, n_refinements))
        return math.log(counts.get(coarse, 0) / k + eps)

    def _exact_score(self, base, coarse, level):
        if self.scheme.exact_mass is not None:
            got = self.scheme.exact_mass(base, coarse, level)
            if got is not None:
                return float(got)
        leaves = refinement_leaves(self.scheme, coarse, level)
        lm = [base.log_mass(v) for v in leaves]
        m = max(lm)
        if m == NEG_INF:
            return NEG_INF
        return m + math.log(sum(math.exp(x - m) for x in lm))

    def _sample_histogram(self, base, level, k):
        key = (base, level, k)
        hit = self._hist_cache.get(key)
        if hit is None:
            rng = np.random.default_rng([self.seed, level, k])
            hit = Counter(self.scheme.coarsen_n(base.sample(rng), level) for _ in range(k))
            self._hist_cache[key] = hit
        return hit

    def refinement_distribution(self, base: Distribution, coarser, level: int) -> Discrete:
        """Conditional over the refinements of ``coarser`` (cached)."""
        key = ("refine", base, coarser, level)
        hit = self._score_cache.get(key)
        if hit is None:
            hit = self._score_cache[key] = self._refinement_distribution(base, coarser, level)
        return hit

    def _refinement_distribution(self, base, coarser, level):
        vs = list(self.scheme.refine(coarser))
        if not vs:
            raise EmptyRefinement(f"refine({coarser!r}) is empty")
        scores = [self.erp_score(base, v, level, len(vs)) for v in vs]
        if max(scores) == NEG_INF:
            raise AllZeroScores(f"every refinement of {coarser!r} has zero mass at level {level}")
        return from_log_weights(vs, scores)

    def coarsened_base(self, base: Distribution, level: int) -> Pushforward:
        """``base`` pushed through ``level`` coarsening steps (cached)."""
        key = ("push", base, level)
        hit = self._score_cache.get(key)
        if hit is None:
            scheme = self.scheme
            hit = Pushforward(base, lambda x: scheme.coarsen_n(x, level))
            if isinstance(base, Discrete) and len(base.values) <= self.marginalizer.max_exact:
                # small explicit bases: tabulate once so sampling skips coarsen_n
                table = hit.support()
                hit = Discrete(table, [hit.log_mass(v) for v in table])
            self._score_cache[key] = hit
        return hit

    def sample(self, h: Handle, base: Distribution, site=None):
        """Sample the lifted version of ``base`` at the current level."""
        store = h.store
        level = store.level
        addr, rel = h.relative_site(site, store.base)
        coarser = store._data.get((rel, level + 1, ERP))
        if coarser is None:
            if level == 0:
                dist = base
            else:
                dist = lambda: self.coarsened_base(base, level)  # noqa: E731
        else:
            dist = lambda: self.refinement_distribution(base, coarser, level)  # noqa: E731
        v = h.lifted_sample(dist, addr)
        store.put(rel, level, Kind.ERP, v)
        return v

    # -- factors -----------------------------------------------------------

    def factor(self, h: Handle, score: float, site=None) -> None:
        """Heuristic factor: subtract the coarser level's score at this address."""
        store = h.store
        addr, rel = h.relative_site(site, store.base)
        s1 = store._data.get((rel, store.level + 1, FACTOR), 0.0)
        score = float(score)
        emitted = score - s1
        if math.isnan(emitted):
            emitted = NEG_INF
        h.lifted_factor(emitted, addr)
        store.put(rel, store.level, Kind.FACTOR, score)

    # -- functions ---------------------------------------------------------

    def primitive(self, f: Callable, static: Sequence[int] = ()):
        """Lift a deterministic primitive; coarse calls sample its pushforward.

        The lifted function is called as ``lifted(h, *args, site=...)``.
        """
        static = tuple(static)
        marg = self.marginalizer

        def lifted(h: Handle, *args, site=None):
            level = h.store.level
            if level == 0:
                return f(*args)
            dist = marg.pushforward(f, args, level, static)
            return h.lifted_sample(dist, h.site_address(site))

        lifted.__name__ = f"lifted_{getattr(f, '__name__', 'primitive')}"
        return lifted

    def scorer(self, f: Callable, static: Sequence[int] = (), vectorized: bool = False):
        """Lift a score function to the expectation over refinements."""
        static = tuple(static)
        marg = self.marginalizer

        def lifted(h: Handle, *args):
            level = h.store.level
            if level == 0:
                return f(*args)
            return marg.expectation(f, args, level, static, vectorized)

        lifted.__name__ = f"lifted_{getattr(f, '__name__', 'scorer')}"
        return lifted

    @staticmethod
    def polymorphic(f: Callable):
        """Mark ``f`` as applicable to coarse values as-is."""

        def lifted(h: Handle, *args):
            return f(*args)

        lifted.__name__ = f"polymorphic_{getattr(f, '__name__', 'fn')}"
        return lifted


def coarse_to_fine(model: ModelProgram | Callable, levels: int) -> ModelProgram:
    """Run ``model`` at levels ``levels, ..., 0`` sharing one store.

    The model must be written against a :class:`Lifter`; the returned
    program yields the level-0 return value.
    """
    if levels < 0:
        raise NegativeLevel(f"levels {levels} < 0")
    inner = model.body if isinstance(model, ModelProgram) else model

    def enter(h: Handle):
        h.store.base = h.current_address()
        return inner(h)

    def run_from(h: Handle, top: int):
        value = None
        for level in range(top, -1, -1):
            h.store.level = level
            h.checkpoint(level)
            value = h.call("ctf", enter)
        return value

    def body(h: Handle):
        return run_from(h, levels)

    name = getattr(model, "name", getattr(inner, "__name__", "model"))
    return ModelProgram(body, f"ctf{levels}({name})", resume=run_from)
