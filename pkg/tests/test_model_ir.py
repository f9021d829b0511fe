import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctfsmc.distributions import (BERNOULLI, ErpFamily, Pushforward, bernoulli, decorrelate,
                                  from_log_weights, make_discrete, uniform)
from ctfsmc.errors import (CtfError, DuplicateValue, EmptySupport, NegativeWeight,
                           PrefixMismatch, UnknownSupport, UnregisteredConstruct)
from ctfsmc.inference import enumerate_model, total_variation
from ctfsmc.program import Executor, Handle, ModelProgram, Store, address_relative
from ctfsmc.values import IntInterval, Lattice


# -- addresses ---------------------------------------------------------------

def test_address_relative_strips_prefix():
    assert address_relative(("m", "f", "g"), ("m",)) == ("f", "g")


def test_address_relative_identity_is_empty():
    assert address_relative(("m",), ("m",)) == ()


def test_address_relative_rejects_non_prefix():
    with pytest.raises(PrefixMismatch):
        address_relative(("m", "f"), ("m", "g"))


class _Recorder(Executor):
    def __init__(self, answers=None):
        self.answers = list(answers or [])
        self.trace, self.addrs = [], []

    def on_sample(self, h, dist, addr):
        self.addrs.append(addr)
        v = self.answers.pop(0) if self.answers else dist.sample(h.rng)
        self.trace.append(v)
        return v

    def on_factor(self, h, score, addr):
        self.addrs.append(addr)


def _recursive(h):
    def geom(h, depth):
        if depth == 3 or h.sample(bernoulli(0.5), "stop"):
            return depth
        return h.call("rec", geom, depth + 1)

    a = h.call("first", geom, 0)
    b = h.call("second", geom, 0)
    h.factor(-float(a + b), "obs")
    return a, b


def test_same_site_in_different_contexts_gets_distinct_addresses():
    ex = _Recorder(answers=[False, True, True])
    _recursive(Handle(ex))
    sample_addrs = ex.addrs[:-1]
    assert len(set(sample_addrs)) == len(sample_addrs)
    assert sample_addrs[0] == ("first", "stop")
    assert sample_addrs[1] == ("first", "rec", "stop")
    assert sample_addrs[2] == ("second", "stop")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_replay_reproduces_address_sequence(seed):
    first = _Recorder()
    _recursive(Handle(first, rng=np.random.default_rng(seed)))
    replay = _Recorder(answers=first.trace)
    _recursive(Handle(replay, rng=np.random.default_rng(seed + 1)))
    assert replay.addrs == first.addrs


def test_raw_constructs_refused_above_level_zero():
    h = Handle(_Recorder())
    h.store.level = 1
    with pytest.raises(UnregisteredConstruct):
        h.sample(bernoulli(0.5), "x")
    with pytest.raises(UnregisteredConstruct):
        h.factor(0.0, "f")


def test_checkpoint_requires_top_level():
    h = Handle(_Recorder())
    with pytest.raises(CtfError):
        h.call("inner", lambda h: h.checkpoint(0))


# -- store -------------------------------------------------------------------

def test_store_writes_are_idempotent():
    s = Store()
    s.put(("x",), 1, 0, IntInterval(1, 2))
    s.put(("x",), 1, 0, IntInterval(1, 2))
    assert s.get(("x",), 1, 0) == IntInterval(1, 2)
    assert len(s) == 1


def test_store_conflicting_write_is_an_error():
    s = Store()
    s.put(("x",), 0, 0, 3)
    with pytest.raises(CtfError):
        s.put(("x",), 0, 0, 4)


def test_store_keys_separate_levels_and_kinds():
    s = Store()
    s.put(("x",), 0, 0, 1)
    s.put(("x",), 1, 0, 2)
    s.put(("x",), 0, 1, -0.5)
    assert (s.get(("x",), 0, 0), s.get(("x",), 1, 0), s.get(("x",), 0, 1)) == (1, 2, -0.5)


# -- values ------------------------------------------------------------------

def test_interval_invariants_and_equality():
    with pytest.raises(ValueError):
        IntInterval(3, 2)
    a, b = IntInterval(5, 8), IntInterval(5, 8)
    assert a == b and hash(a) == hash(b)
    assert a != IntInterval(5, 6)
    assert a != (5, 8)
    assert list(a) == [5, 6, 7, 8] and a.width == 4 and 6 in a
    with pytest.raises(AttributeError):
        a.lo = 1


def test_lattice_structural_equality():
    a = Lattice([[1, -1], [0, 1]])
    assert a == Lattice(np.array([[1, -1], [0, 1]]))
    assert hash(a) == hash(Lattice([[1, -1], [0, 1]]))
    assert a != Lattice([[1, -1], [1, 1]])
    with pytest.raises(ValueError):
        a.array[0, 0] = 5


# -- distributions -----------------------------------------------------------

def test_make_discrete_uniform_eight():
    d = make_discrete(list(range(1, 9)), [1] * 8)
    assert d.log_mass(3) == pytest.approx(math.log(1 / 8), abs=1e-15)


def test_make_discrete_singleton():
    assert make_discrete(["a"], [2.0]).log_mass("a") == 0.0


def test_make_discrete_normalizes():
    assert make_discrete([1, 2], [1, 3]).log_mass(2) == pytest.approx(math.log(0.75), abs=1e-15)


def test_make_discrete_errors():
    with pytest.raises(EmptySupport):
        make_discrete([], [])
    with pytest.raises(NegativeWeight):
        make_discrete([1, 2], [1, -1])
    with pytest.raises(DuplicateValue):
        make_discrete([1, 1], [1, 1])
    with pytest.raises(EmptySupport):
        make_discrete([1, 2], [0, 0])


def test_log_mass_outside_support():
    assert make_discrete([1, 2], [1, 1]).log_mass(7) == -math.inf


weights_st = st.lists(st.floats(0.0, 100.0, allow_nan=False), min_size=1, max_size=12).filter(
    lambda w: sum(w) > 1e-6)


@settings(max_examples=100, deadline=None)
@given(weights_st, st.integers(0, 2**32 - 1))
def test_random_distributions_normalized_and_closed(weights, seed):
    d = make_discrete(list(range(len(weights))), weights)
    total = sum(math.exp(d.log_mass(v)) for v in d.support())
    assert abs(total - 1.0) < 1e-9
    rng = np.random.default_rng(seed)
    for _ in range(20):
        v = d.sample(rng)
        assert v in d.support()
        assert d.log_mass(v) > -math.inf


def test_sampling_frequencies():
    d = make_discrete(["a", "b", "c"], [1, 2, 7])
    rng = np.random.default_rng(0)
    draws = [d.sample(rng) for _ in range(40000)]
    for v, p in (("a", 0.1), ("b", 0.2), ("c", 0.7)):
        freq = draws.count(v) / len(draws)
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / len(draws))


def test_from_log_weights_matches_make_discrete():
    a = from_log_weights([1, 2, 3], [math.log(1), math.log(2), -math.inf])
    b = make_discrete([1, 2, 3], [1, 2, 0])
    for v in (1, 2, 3):
        assert a.log_mass(v) == pytest.approx(b.log_mass(v))


def test_pushforward_table():
    p = Pushforward(uniform([1, 2, 3, 4]), lambda x: x % 2)
    assert sorted(p.support()) == [0, 1]
    assert p.log_mass(0) == pytest.approx(math.log(0.5))


# -- decorrelation -----------------------------------------------------------

def test_decorrelate_bernoulli():
    maxent, corr = decorrelate(BERNOULLI, 0.9)
    assert maxent.log_mass(True) == pytest.approx(math.log(0.5))
    assert corr(True) == pytest.approx(math.log(0.9) - math.log(0.5), abs=1e-15)
    assert corr(False) == pytest.approx(math.log(0.1) - math.log(0.5), abs=1e-15)


def test_decorrelate_uniform_is_identity():
    fam = ErpFamily("u3", lambda _: uniform([0, 1, 2]), support=[0, 1, 2])
    _, corr = decorrelate(fam, None)
    assert all(abs(corr(v)) < 1e-15 for v in (0, 1, 2))


def test_decorrelate_needs_fixed_support():
    fam = ErpFamily("range", lambda n: uniform(list(range(n))))
    with pytest.raises(UnknownSupport):
        decorrelate(fam, 3)


def _chain(decorrelated: bool, p0: float):
    def body(h):
        def draw(site, p):
            if not decorrelated:
                return h.sample(bernoulli(p), site)
            maxent, corr = decorrelate(BERNOULLI, p)
            v = h.sample(maxent, site)
            h.factor(corr(v), site + "_corr")
            return v

        a = draw("a", p0)
        b = draw("b", 0.8 if a else 0.3)
        h.factor(0.0 if a == b else -1.0, "obs")
        return (a, b)

    return ModelProgram(body)


@pytest.mark.parametrize("p0", [0.1, 0.5, 0.77])
def test_decorrelation_preserves_chain_marginal(p0):
    orig = enumerate_model(_chain(False, p0))
    dec = enumerate_model(_chain(True, p0))
    assert total_variation(orig, dec) < 1e-12
    assert orig.log_z == pytest.approx(dec.log_z, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3))
def test_decorrelation_invariance_property(ps):
    def make(decorrelated):
        def body(h):
            out = []
            prev = True
            for i in range(3):
                p = ps[i] if prev else 1 - ps[i]
                if decorrelated:
                    maxent, corr = decorrelate(BERNOULLI, p)
                    prev = h.sample(maxent, ("s", i))
                    h.factor(corr(prev), ("c", i))
                else:
                    prev = h.sample(bernoulli(p), ("s", i))
                out.append(prev)
            return tuple(out)
        return ModelProgram(body)

    assert total_variation(enumerate_model(make(False)), enumerate_model(make(True))) < 1e-12
