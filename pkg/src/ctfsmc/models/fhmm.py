"""Factorial HMM with banded transition/observation matrices.

``k`` independent substate chains over ``{1..M}``; each step every chain
emits one observation symbol.  Transition and observation probabilities are
proportional to ``2**-|i - j|``.  Substate ERPs are decorrelated (uniform
over ``{1..M}`` plus a correction factor) so they can be lifted with the
dyadic interval scheme.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..distributions import uniform
from ..errors import NonDyadicM, ObservationOutOfRange
from ..program import ModelProgram
from ..schemes import interval_coarsen, interval_refine, interval_scheme
from ..transform import Lifter, coarse_to_fine


def banded_matrix(m: int) -> np.ndarray:
    """Row-stochastic ``m x m`` matrix with entries proportional to 2^-|i-j|."""
    i = np.arange(m)
    a = np.exp2(-np.abs(i[:, None] - i[None, :]).astype(float))
    return a / a.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class FhmmParams:
    M: int
    k: int
    T_steps: int

    def __post_init__(self):
        if self.M < 1 or self.M & (self.M - 1):
            raise NonDyadicM(f"M={self.M} is not a power of 2")

    @property
    def transition(self) -> np.ndarray:
        return banded_matrix(self.M)

    @property
    def observation(self) -> np.ndarray:
        return banded_matrix(self.M)

    @property
    def max_levels(self) -> int:
        return int(math.log2(self.M))


def interval_coarsen_state(state, m: int):
    """Coarsen a tuple of substates (ints or intervals) one level."""
    return interval_coarsen(tuple(state), m)


def interval_refine_state(state):
    return interval_refine(tuple(state))


def synthesize_observations(params: FhmmParams, seed=None) -> np.ndarray:
    """Draw a ``T_steps x k`` observation matrix (1-based symbols) from the model."""
    rng = np.random.default_rng(seed)
    M, k = params.M, params.k
    T, O = params.transition, params.observation
    s = rng.integers(0, M, size=k)
    obs = np.empty((params.T_steps, k), dtype=np.int64)
    for t in range(params.T_steps):
        if t > 0:
            s = np.array([rng.choice(M, p=T[x]) for x in s])
        obs[t] = [rng.choice(M, p=O[x]) for x in s]
    return obs + 1


def _check_obs(params: FhmmParams, observations) -> np.ndarray:
    obs = np.asarray(observations, dtype=np.int64)
    if obs.shape != (params.T_steps, params.k):
        raise ObservationOutOfRange(f"observations must have shape {(params.T_steps, params.k)}, got {obs.shape}")
    if obs.min() < 1 or obs.max() > params.M:
        raise ObservationOutOfRange(f"observation symbols must lie in [1, {params.M}]")
    return obs


def fhmm_exact_log_z(params: FhmmParams, observations) -> float:
    """Forward algorithm over the joint ``M**k`` state space."""
    obs = _check_obs(params, observations)
    M, k = params.M, params.k
    T, O = params.transition, params.observation
    joint_T = np.ones((1, 1))
    for _ in range(k):
        joint_T = np.kron(joint_T, T)
    states = np.array(list(itertools.product(range(M), repeat=k)))  # row order matches kron
    alpha = np.full(len(states), 1.0 / M**k)
    log_z = 0.0
    for t in range(params.T_steps):
        if t > 0:
            alpha = alpha @ joint_T
        emit = np.prod(O[states, obs[t] - 1], axis=1)
        alpha = alpha * emit
        c = alpha.sum()
        log_z += math.log(c)
        alpha /= c
    return log_z


def fhmm_model(params: FhmmParams, observations, levels: int = 0,
               lifter: Lifter | None = None) -> ModelProgram:
    """The FHMM as a recursive program; coarse-to-fine when ``levels > 0``."""
    obs = _check_obs(params, observations)
    if not 0 <= levels <= params.max_levels:
        raise ValueError(f"levels must be in [0, {params.max_levels}]")
    M, k, T_steps = params.M, params.k, params.T_steps
    lifter = lifter or Lifter(interval_scheme(M))
    log_T = np.log(params.transition) + math.log(M)
    log_O = np.log(params.observation)

    # called with ints at level 0 and with int grids by the lifted scorers
    def trans_correction(prev, s):
        return log_T[prev - 1, s - 1]

    def emission(s, o):
        return log_O[s - 1, o - 1]

    trans_score = lifter.scorer(trans_correction, vectorized=True)
    obs_score = lifter.scorer(emission, static=(1,), vectorized=True)
    maxent = uniform(list(range(1, M + 1)))
    obs_rows = [tuple(int(o) for o in row) for row in obs]

    sites = [("chain", j) for j in range(k)]

    def step(h, t, prev):
        if t == T_steps:
            return ()
        state = tuple([lifter.sample(h, maxent, site) for site in sites])
        score = 0.0
        for j in range(k):
            if prev is not None:
                score += trans_score(h, prev[j], state[j])
            score += obs_score(h, state[j], obs_rows[t][j])
        lifter.factor(h, score, "step")
        return (state,) + h.call("next", step, t + 1, state)

    def fhmm(h):
        return step(h, 0, None)

    prog = ModelProgram(fhmm, f"fhmm(M={M},k={k},T={T_steps})")
    return coarse_to_fine(prog, levels) if levels else prog
