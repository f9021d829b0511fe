"""Finite discrete distributions (elementary random primitives)."""

from __future__ import annotations

import bisect
import math
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import DuplicateValue, EmptySupport, NegativeWeight, UnknownSupport

NEG_INF = float("-inf")


class Distribution:
    """A finite distribution: support enumerator, log-mass and sampler.

    Subclasses override ``support``, ``log_mass`` and ``sample``.  The
    support may be produced lazily; callers that only sample never touch it.
    """

    def support(self) -> Iterable[Hashable]:
        raise NotImplementedError

    def log_mass(self, value) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator):
        raise NotImplementedError


class Discrete(Distribution):
    """Tabular distribution over an explicit list of distinct values."""

    def __init__(self, values: Sequence, log_probs: np.ndarray):
        self.values = list(values)
        self.log_probs = np.asarray(log_probs, dtype=float)
        self._index = {v: i for i, v in enumerate(self.values)}
        if len(self._index) != len(self.values):
            raise DuplicateValue("support values must be distinct")
        cdf = np.cumsum(np.exp(self.log_probs))
        cdf[-1] = 1.0
        self._cdf = cdf.tolist()
        self._lp = self.log_probs.tolist()

    def support(self):
        return list(self.values)

    def log_mass(self, value) -> float:
        i = self._index.get(value)
        return NEG_INF if i is None else float(self.log_probs[i])

    def sample(self, rng):
        i = bisect.bisect_right(self._cdf, rng.random())
        # a zero-mass tail can leave the cdf flat at 1.0
        i = min(i, len(self.values) - 1)
        while self._lp[i] == NEG_INF:
            i -= 1
        return self.values[i]

    def __repr__(self):
        probs = np.exp(self.log_probs).round(4).tolist()
        return f"Discrete({dict(zip(self.values, probs))})"


def make_discrete(values: Sequence, weights: Sequence[float]) -> Discrete:
    """Normalise nonnegative ``weights`` into a distribution over ``values``."""
    if len(values) == 0:
        raise EmptySupport("no values given")
    if len(values) != len(weights):
        raise ValueError("values and weights differ in length")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise NegativeWeight("weights must be nonnegative")
    total = w.sum()
    if not total > 0:
        raise EmptySupport("weights sum to zero")
    with np.errstate(divide="ignore"):
        return Discrete(values, np.log(w) - math.log(total))


def from_log_weights(values: Sequence, log_weights: Sequence[float]) -> Discrete:
    """Like :func:`make_discrete` but takes unnormalised log-weights."""
    lw = np.asarray(log_weights, dtype=float)
    if len(values) == 0:
        raise EmptySupport("no values given")
    m = lw.max()
    if m == NEG_INF:
        raise EmptySupport("all log-weights are -inf")
    lse = m + math.log(np.exp(lw - m).sum())
    return Discrete(values, lw - lse)


def uniform(values: Sequence) -> Discrete:
    return make_discrete(values, [1.0] * len(values))


def bernoulli(p: float) -> Discrete:
    return make_discrete([True, False], [p, 1.0 - p])


class Pushforward(Distribution):
    """Distribution of ``fn(x)`` for ``x ~ base``.

    Sampling never enumerates; the table is built on first use of
    ``support`` or ``log_mass``.
    """

    def __init__(self, base: Distribution, fn: Callable):
        self.base = base
        self.fn = fn
        self._table: dict | None = None

    def _build(self):
        if self._table is None:
            acc: dict = {}
            for x in self.base.support():
                lm = self.base.log_mass(x)
                if lm == NEG_INF:
                    continue
                y = self.fn(x)
                acc[y] = np.logaddexp(acc.get(y, NEG_INF), lm)
            self._table = acc
        return self._table

    def support(self):
        return list(self._build())

    def log_mass(self, value) -> float:
        return float(self._build().get(value, NEG_INF))

    def sample(self, rng):
        return self.fn(self.base.sample(rng))


class ErpFamily:
    """A parameterised ERP, e.g. ``bernoulli(p)``.

    ``support`` is the fixed support list, or ``None`` when the support
    depends on the parameters.
    """

    def __init__(self, name: str, make: Callable[..., Distribution], support=None):
        self.name = name
        self.make = make
        self.fixed_support = None if support is None else list(support)

    def __call__(self, params) -> Distribution:
        return self.make(params)

    def __repr__(self):
        return f"ErpFamily({self.name})"


BERNOULLI = ErpFamily("bernoulli", bernoulli, support=[True, False])


def decorrelate(family: ErpFamily, params):
    """Replace a parameter-dependent ERP by its max-entropy counterpart.

    Returns ``(maxent, correction)``.  Sampling ``maxent`` and then emitting
    ``factor(correction(v))`` gives the same joint distribution as sampling
    ``family(params)`` directly.
    """
    if family.fixed_support is None:
        raise UnknownSupport(f"{family.name}: support depends on parameters")
    maxent = uniform(family.fixed_support)
    original = family(params)

    def correction(v) -> float:
        return original.log_mass(v) - maxent.log_mass(v)

    return maxent, correction
