"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed with
output capture disabled so they show up in the normal log.
"""

import itertools
import math
import time

import numpy as np
import pytest

from ctfsmc.distributions import make_discrete
from ctfsmc.inference import (enumerate_model, estimate_expectation, importance_sample, resample,
                              sequential_importance_resample, total_variation)
from ctfsmc.models import fhmm, ising, stereo
from ctfsmc.program import ModelProgram
from ctfsmc.schemes import interval_scheme
from ctfsmc.transform import check_inverse_law, coarse_to_fine
from ctfsmc.values import IntInterval

from programs import observe_seven


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
        assert ok, detail
    return _report


# ---------------------------------------------------------------------------
# random finite programs


def random_program(rng, heuristic: bool, seed_for_scores):
    """A small chain of discrete choices with factors.

    With ``heuristic`` each choice is followed by ``factor(s)`` and a later
    ``factor(-s)`` for a random ``s`` depending on that choice.
    """
    srng = np.random.default_rng(seed_for_scores)
    nvars = int(rng.integers(1, 4))
    sizes = [int(rng.integers(2, 4)) for _ in range(nvars)]
    # conditional tables: var i depends on var i-1
    tables = []
    for i, k in enumerate(sizes):
        parents = sizes[i - 1] if i else 1
        tables.append([make_discrete(list(range(k)), rng.random(k) + 0.05) for _ in range(parents)])
    scores = [rng.normal(size=k) for k in sizes]
    heur = [srng.normal(scale=2.0, size=k) for k in sizes]

    def body(h):
        xs = []
        pending = []
        for i in range(nvars):
            parent = xs[-1] if xs else 0
            x = h.sample(tables[i][parent], ("x", i))
            xs.append(x)
            h.factor(scores[i][x], ("obs", i))
            if heuristic:
                h.factor(heur[i][x], ("heur", i))
                pending.append((i, heur[i][x]))
            if heuristic and len(pending) > 1:
                j, s = pending.pop(0)
                h.factor(-s, ("cancel", j))
        for j, s in pending:
            h.factor(-s, ("cancel", j))
        return tuple(xs)

    return ModelProgram(body, "random")


# ---------------------------------------------------------------------------


def test_criterion_1_marginal_invariance(report):
    t0 = time.perf_counter()
    flat = enumerate_model(observe_seven())
    tvs = []
    for levels in (1, 2):
        ctf = enumerate_model(coarse_to_fine(observe_seven(), levels))
        tvs.append(total_variation(flat, ctf))
    elapsed = time.perf_counter() - t0
    ok = max(tvs) < 1e-9 and elapsed < 10
    report(1, ok, f"TV(N=1)={tvs[0]:.2e}, TV(N=2)={tvs[1]:.2e} (< 1e-9), {elapsed:.2f}s (< 10s)")


def test_criterion_2_heuristic_factor_neutrality(report):
    worst = 0.0
    worst_logz = 0.0
    for i in range(100):
        a = enumerate_model(random_program(np.random.default_rng(i), False, 1000 + i))
        b = enumerate_model(random_program(np.random.default_rng(i), True, 1000 + i))
        worst = max(worst, total_variation(a, b))
        worst_logz = max(worst_logz, abs(a.log_z - b.log_z))
    report(2, worst < 1e-12, f"max TV over 100 programs {worst:.2e} (< 1e-12); max |dlogZ| {worst_logz:.2e}")


def test_criterion_3_inverse_laws(report):
    # majority: 512 blocks as 3x3 lattices
    spins = [np.array(b).reshape(3, 3) for b in itertools.product((-1, 1), repeat=9)]
    maj = check_inverse_law(ising.majority_scheme(),
                            [ising.PartialCoarseLattice.from_spins(s) for s in spins], levels=1)
    n_plus = len(ising.majority_refine_cell(1))
    n_minus = len(ising.majority_refine_cell(-1))
    # intervals: [1,256], all 8 levels
    itv = check_inverse_law(interval_scheme(256), range(1, 257), levels=8)
    # block summaries over 0..4
    blk = check_inverse_law(stereo.block_scheme(4), itertools.product(range(5), repeat=4), levels=1)
    nviol = len(maj.violations) + len(itv.violations) + len(blk.violations)
    ok = nviol == 0 and n_plus == n_minus == 256 and maj.checked_values == 512 and blk.checked_values == 625
    report(3, ok, f"violations majority/interval/block = {len(maj.violations)}/{len(itv.violations)}/"
                  f"{len(blk.violations)}; |refine(+1)|={n_plus}, |refine(-1)|={n_minus}; "
                  f"interval values checked {itv.checked_values}")


def test_criterion_4_fhmm_log_z_consistency(report):
    params = fhmm.FhmmParams(4, 2, 3)
    obs = fhmm.synthesize_observations(params, 3)
    exact = fhmm.fhmm_exact_log_z(params, obs)
    t0 = time.perf_counter()
    flat = [sequential_importance_resample(fhmm.fhmm_model(params, obs), 10_000, seed=s).log_z
            for s in range(20)]
    ctf = [sequential_importance_resample(fhmm.fhmm_model(params, obs, levels=2), 10_000, seed=s).log_z
           for s in range(20)]
    elapsed = time.perf_counter() - t0
    d_flat = np.mean(flat) - exact
    d_ctf = np.mean(ctf) - exact
    ok = abs(d_flat) <= 0.05 and abs(d_ctf) <= 0.05 and elapsed < 120
    report(4, ok, f"exact {exact:.4f}; flat mean err {d_flat:+.4f}, ctf mean err {d_ctf:+.4f} "
                  f"(|err| <= 0.05); {elapsed:.1f}s (< 120s)")


def test_criterion_5_fhmm_directional(report):
    t0 = time.perf_counter()
    big = fhmm.FhmmParams(256, 3, 6)
    obs = fhmm.synthesize_observations(big, 0)
    wins = 0
    for s in range(10):
        a = sequential_importance_resample(fhmm.fhmm_model(big, obs), 500, seed=s).log_z
        b = sequential_importance_resample(fhmm.fhmm_model(big, obs, levels=8), 500, seed=s).log_z
        wins += b > a
    small = fhmm.FhmmParams(8, 3, 6)
    obs8 = fhmm.synthesize_observations(small, 0)
    fa = [sequential_importance_resample(fhmm.fhmm_model(small, obs8), 1000, seed=s).log_z for s in range(10)]
    fb = [sequential_importance_resample(fhmm.fhmm_model(small, obs8, levels=3), 1000, seed=s).log_z
          for s in range(10)]
    pooled = math.sqrt(np.var(fa, ddof=1) / 10 + np.var(fb, ddof=1) / 10)
    gap = abs(np.mean(fb) - np.mean(fa))
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and gap < 2 * pooled and elapsed < 600
    report(5, ok, f"M=256: ctf > flat in {wins}/10 seeds (>= 8); M=8: |gap| {gap:.3f} < "
                  f"2*pooled SE {2 * pooled:.3f}; {elapsed:.1f}s (< 600s)")


def test_criterion_6_ising_directional(report):
    t0 = time.perf_counter()
    wins = 0
    gaps = []
    for s in range(10):
        a = importance_sample(ising.ising_model(9, 1.0), 1000, seed=s).log_z
        b = sequential_importance_resample(ising.ising_model(9, 1.0, levels=10), 1000, seed=s).log_z
        wins += b > a
        gaps.append(b - a)
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and elapsed < 600
    report(6, ok, f"9x9 T=1, 10 levels vs flat IS at 1000 particles: ctf higher in {wins}/10 seeds "
                  f"(>= 8), mean gap {np.mean(gaps):.2f} nats; {elapsed:.1f}s (< 600s)")


def test_criterion_7_stereo_directional(report):
    left, right, _ = stereo.synthesize_stereo_pair(0, 16, 8, 4)
    wins = 0
    for s in range(10):
        flat = importance_sample(stereo.stereo_model(left, right, 4), 2000, seed=s)
        ctf = sequential_importance_resample(stereo.stereo_model(left, right, 4, levels=1), 2000, seed=s)
        best_flat = min(stereo.blocks_energy(v, left, right) for v, _ in flat.samples)
        best_ctf = min(stereo.blocks_energy(v, left, right) for v, _ in ctf.samples)
        wins += best_ctf <= best_flat
    report(7, wins >= 7, f"8x16 pair, disparities 0..4, 2000 particles: ctf best <= flat best in {wins}/10 (>= 7)")


def test_criterion_8_estimator_and_resampling(report):
    rng = np.random.default_rng(8)
    outside = 0
    worst = 0.0
    for i in range(50):
        prog = random_program(rng, False, i)
        exact_marg = enumerate_model(prog)

        def f(v):
            return float(sum((j + 1) * x for j, x in enumerate(v)))

        exact = sum(p * f(v) for v, p in exact_marg.items())
        res = importance_sample(prog, 100_000, seed=i)
        est = estimate_expectation(res, f)
        w = np.exp(res.log_weights - res.log_weights.max())
        w /= w.sum()
        fx = np.array([f(v) for v in res.values])
        se = math.sqrt(np.sum(w ** 2 * (fx - est) ** 2))
        z = abs(est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)
        worst = max(worst, z)
        outside += z > 3
    # systematic resampling: each count within 1 of n * w_i
    max_dev = 0.0
    for t in range(200):
        k = int(rng.integers(2, 50))
        n = int(rng.integers(1, 500))
        lw = rng.normal(scale=2.0, size=k)
        idx = resample(lw, n, "systematic", np.random.default_rng(t))
        counts = np.bincount(idx, minlength=k)
        p = np.exp(lw - lw.max())
        p /= p.sum()
        max_dev = max(max_dev, float(np.max(np.abs(counts - n * p))))
    ok = outside == 0 and max_dev < 1 + 1e-9
    report(8, ok, f"{50 - outside}/50 estimates within 3 SE (worst {worst:.2f} SE); "
                  f"max |count - n*w| {max_dev:.3f} (<= 1)")
