"""Inference over model programs: exact enumeration, importance sampling and
sequential importance resampling (SIR).

SIR uses every ``factor`` statement as a resampling barrier.  Executions run
inside greenlets so they can be suspended at a factor and resumed later.
When resampling duplicates a particle, the first copy keeps the live
execution and the others re-execute the model from the start, answering
each ``sample`` from the parent's recorded choices until they reach the
same barrier.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from greenlet import greenlet

from . import kernels
from .errors import AllZeroWeights, CtfError, NonTerminating
from .program import Executor, Handle, ModelProgram, resolve

NEG_INF = float("-inf")


def logmeanexp(logw) -> float:
    lw = np.asarray(logw, dtype=float)
    m = lw.max()
    if m == NEG_INF:
        return NEG_INF
    return float(m + math.log(np.exp(lw - m).mean()))


# ---------------------------------------------------------------------------
# exact enumeration


class Marginal(dict):
    """Normalised map ``value -> probability``; ``log_z`` is the log total
    unnormalised mass of all executions."""

    log_z: float = 0.0


class _Branch(Exception):
    def __init__(self, dist):
        self.dist = dist


class _Dead(Exception):
    pass


class _EnumExecutor(Executor):
    def __init__(self, prefix):
        self.prefix = prefix
        self.pos = 0
        self.logp = 0.0

    def on_sample(self, h, dist, addr):
        d = resolve(dist)
        if self.pos >= len(self.prefix):
            raise _Branch(d)
        v = self.prefix[self.pos]
        self.pos += 1
        self.logp += d.log_mass(v)
        return v

    def on_factor(self, h, score, addr):
        self.logp += score
        if self.logp == NEG_INF:
            raise _Dead


def enumerate_executions(model: ModelProgram, max_executions: int = 1_000_000):
    """Yield ``(return value, log weight)`` for every complete execution."""
    stack: list[tuple] = [()]
    count = 0
    while stack:
        prefix = stack.pop()
        ex = _EnumExecutor(prefix)
        h = Handle(ex, rng=None)
        try:
            value = model(h)
        except _Branch as b:
            choices = [v for v in b.dist.support() if b.dist.log_mass(v) > NEG_INF]
            stack.extend(prefix + (v,) for v in reversed(choices))
            continue
        except _Dead:
            continue
        count += 1
        if count > max_executions:
            raise NonTerminating(f"more than {max_executions} executions")
        yield value, ex.logp


def enumerate_model(model: ModelProgram, max_executions: int = 1_000_000) -> Marginal:
    """Exact marginal distribution over return values."""
    acc: dict = {}
    for value, logp in enumerate_executions(model, max_executions):
        acc[value] = np.logaddexp(acc.get(value, NEG_INF), logp)
    if not acc:
        raise AllZeroWeights("no execution has positive mass")
    keys = list(acc)
    lw = np.array([acc[k] for k in keys])
    m = lw.max()
    if m == NEG_INF:
        raise AllZeroWeights("no execution has positive mass")
    log_z = float(m + math.log(np.exp(lw - m).sum()))
    out = Marginal((k, float(math.exp(w - log_z))) for k, w in zip(keys, lw))
    out.log_z = log_z
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# weighted samples


@dataclass
class WeightedSampleSet:
    samples: list = field(default_factory=list)  # (value, log weight)
    log_z: float = 0.0
    trace: list = field(default_factory=list)  # (elapsed seconds, log_z so far)

    @property
    def values(self):
        return [v for v, _ in self.samples]

    @property
    def log_weights(self) -> np.ndarray:
        return np.array([w for _, w in self.samples], dtype=float)


def estimate_expectation(samples: WeightedSampleSet, f: Callable[[Any], float]) -> float:
    """Self-normalised importance estimate of ``E[f]``."""
    lw = samples.log_weights
    if lw.size == 0 or lw.max() == NEG_INF:
        raise AllZeroWeights("every sample has zero weight")
    w = np.exp(lw - lw.max())
    fx = np.array([f(v) for v in samples.values], dtype=float)
    return float(np.dot(w, fx) / w.sum())


def resample(log_weights: Sequence[float], n: int, policy: str = "systematic",
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Parent indices for ``n`` offspring, drawn in proportion to the weights."""
    rng = rng if rng is not None else np.random.default_rng()
    lw = np.asarray(log_weights, dtype=float)
    m = lw.max() if lw.size else NEG_INF
    if m == NEG_INF or np.isnan(m):
        raise AllZeroWeights("no finite log-weight")
    w = np.exp(lw - m)
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    if policy == "systematic":
        u = (rng.random() + np.arange(n)) / n
    elif policy == "multinomial":
        u = np.sort(rng.random(n))
    else:
        raise ValueError(f"unknown resample policy {policy!r}")
    return kernels.inverse_cdf(cdf, u)


# ---------------------------------------------------------------------------
# importance sampling


class _PriorExecutor(Executor):
    __slots__ = ("logw",)

    def __init__(self):
        self.logw = 0.0

    def on_sample(self, h, dist, addr):
        return resolve(dist).sample(h.rng)

    def on_factor(self, h, score, addr):
        self.logw += score


def importance_sample(model: ModelProgram, n: int, seed=None,
                      deadline: float | None = None, trace_points: int = 200) -> WeightedSampleSet:
    """Likelihood weighting: sample from the prior, weight by the factors.

    With ``deadline`` (seconds) no new execution starts once that much
    wall-clock time has elapsed; at least one execution always runs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    out = WeightedSampleSet()
    every = max(1, n // max(1, trace_points))
    running = NEG_INF
    for i in range(n):
        if deadline is not None and i > 0 and time.perf_counter() - t0 >= deadline:
            break
        ex = _PriorExecutor()
        h = Handle(ex, rng=rng)
        value = model(h)
        out.samples.append((value, ex.logw))
        running = np.logaddexp(running, ex.logw)
        if (i + 1) % every == 0:
            out.trace.append((time.perf_counter() - t0, float(running - math.log(i + 1))))
    k = len(out.samples)
    out.log_z = float(running - math.log(k))
    if not out.trace or k % every:
        out.trace.append((time.perf_counter() - t0, out.log_z))
    return out


# ---------------------------------------------------------------------------
# sequential importance resampling


class _Particle(Executor):
    """One suspendable execution; also the executor for its own handle.

    ``trace`` holds every sample value so far.  ``ckpt`` is the last
    checkpoint ``(state, store snapshot, trace length, factor count)`` if
    the model supports resuming, so that copies only replay from there.
    """

    __slots__ = ("model", "handle", "glet", "logw", "trace", "replay_pos",
                 "nfactors", "target", "done", "value", "ckpt")

    def __init__(self, model, rng, trace=None, target=0, ckpt=None):
        self.model = model
        self.handle = Handle(self, rng=rng)
        self.logw = 0.0
        self.trace = [] if trace is None else trace
        self.target = target  # factor count to reach silently when replaying
        self.done = False
        self.value = None
        self.ckpt = ckpt
        if ckpt is None:
            self.replay_pos = 0
            self.nfactors = 0
            self.glet = greenlet(self._run)
        else:
            state, snapshot, self.replay_pos, self.nfactors = ckpt
            self.handle.store._data = dict(snapshot)
            self.glet = greenlet(self._resume)

    def _run(self):
        self.value = self.model(self.handle)
        self.done = True

    def _resume(self):
        self.value = self.model.resume(self.handle, self.ckpt[0])
        self.done = True

    def on_sample(self, h, dist, addr):
        if self.replay_pos < len(self.trace):
            v = self.trace[self.replay_pos]
            self.replay_pos += 1
            return v
        v = resolve(dist).sample(h.rng)
        self.trace.append(v)
        self.replay_pos += 1
        return v

    def on_factor(self, h, score, addr):
        self.nfactors += 1
        if self.nfactors < self.target:
            return
        if self.nfactors == self.target:
            # replay has caught up with the parent; weight was reset there too
            self.logw = 0.0
        else:
            self.logw += score
        self.glet.parent.switch()

    def on_checkpoint(self, h, state):
        if self.model.resume is not None and self.replay_pos >= len(self.trace):
            self.ckpt = (state, dict(h.store._data), self.replay_pos, self.nfactors)

    def discard(self):
        """Unwind a suspended execution.

        A suspended greenlet's frame refers back to this particle, a cycle
        the garbage collector cannot break on its own.
        """
        g = self.glet
        self.glet = None
        if g is not None and not g.dead and g:
            g.throw()

    def advance(self):
        self.glet.switch()

    def clone(self, rng) -> "_Particle":
        if self.done:
            c = _Particle(self.model, rng, list(self.trace))
            c.done, c.value, c.nfactors = True, self.value, self.nfactors
            c.glet = None
            return c
        c = _Particle(self.model, rng, self.trace[: self.replay_pos], target=self.nfactors, ckpt=self.ckpt)
        c.glet.switch()
        if c.done or c.nfactors != self.nfactors or c.replay_pos != self.replay_pos:
            raise CtfError("replay diverged from the recorded execution; model is not deterministic given its choices")
        return c


def sequential_importance_resample(model: ModelProgram, n: int, seed=None,
                                   policy: str = "systematic") -> WeightedSampleSet:
    """SIR with a resampling barrier at every factor statement.

    A barrier fires once every live particle is paused at a factor (not
    necessarily the same one) or finished.  Finished particles contribute
    zero incremental log-weight to later barriers.
    """
    if n < 2:
        raise ValueError("SIR needs at least 2 particles")
    # particles advance one at a time in a fixed order, so a single generator
    # keeps runs deterministic without per-particle seeding costs
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    particles = [_Particle(model, rng) for _ in range(n)]
    out = WeightedSampleSet()
    log_z = 0.0
    while True:
        for p in particles:
            if not p.done:
                p.logw = 0.0
                p.advance()
        incr = np.array([p.logw for p in particles])
        log_z += logmeanexp(incr)
        out.trace.append((time.perf_counter() - t0, log_z))
        if all(p.done for p in particles) or log_z == NEG_INF:
            break
        parents = resample(incr, n, policy, rng)
        used = set()
        nxt = []
        for i in parents:
            p = particles[i]
            if i in used:
                nxt.append(p.clone(rng))
            else:
                used.add(i)
                nxt.append(p)
        for i, p in enumerate(particles):
            if i not in used:
                p.discard()
        for p in nxt:
            p.logw = 0.0
        particles = nxt
    for p in particles:
        p.discard()
    out.samples = [(p.value, p.logw) for p in particles if p.done]
    out.log_z = float(log_z)
    return out
