"""Experiment harness: configs, repeated runs, traces, summaries.

Flat runs use importance sampling for the lattice models (one factor per
execution, so SIR would add nothing) and a particle filter for the FHMM;
coarse-to-fine runs use SIR on the transformed model.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, EmptyTraces, GridMismatch
from .inference import importance_sample, logmeanexp, sequential_importance_resample
from .program import ModelProgram

SEED_OFFSET_ENV = "CTFSMC_SEED_OFFSET"
CSV_HEADER = ["seed", "condition", "barrier", "elapsed_s", "logZ"]

MODELS = ("ising", "stereo", "fhmm")
BUDGET_MODES = ("equal-particles", "equal-time")

_DEFAULT_PARAMS = {
    "ising": {"n": 9, "T": 1.0, "sign": 1.0},
    "stereo": {"width": 16, "height": 8, "max_disparity": 4, "data_seed": 0, "pair_prefix": None},
    "fhmm": {"M": 4, "k": 2, "T_steps": 3, "data_seed": 0, "observations": None},
}


def seed_offset() -> int:
    raw = os.environ.get(SEED_OFFSET_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_OFFSET_ENV}={raw!r} is not an integer") from None


@dataclass
class ExperimentConfig:
    model: str
    params: dict = field(default_factory=dict)
    condition: str = "flat"
    levels: int = 0
    particles: int = 1000
    budget_mode: str = "equal-particles"
    time_budget_s: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    output: str | None = None
    max_particles: int = 1_000_000

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        if "model" not in d:
            raise ConfigError("config needs a 'model' field")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def label(self) -> str:
        return "flat" if self.condition == "flat" else f"ctf{self.levels}"

    def full_params(self) -> dict:
        p = dict(_DEFAULT_PARAMS[self.model])
        unknown = set(self.params) - set(p)
        if unknown:
            raise ConfigError(f"unknown {self.model} params: {sorted(unknown)}")
        p.update(self.params)
        return p

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.condition not in ("flat", "ctf"):
            raise ConfigError(f"condition must be 'flat' or 'ctf', got {self.condition!r}")
        if self.condition == "flat" and self.levels != 0:
            raise ConfigError("flat condition takes levels=0")
        if self.condition == "ctf" and self.levels < 1:
            raise ConfigError("ctf condition needs levels >= 1")
        if self.budget_mode not in BUDGET_MODES:
            raise ConfigError(f"budget_mode must be one of {BUDGET_MODES}")
        if self.budget_mode == "equal-time" and not (self.time_budget_s and self.time_budget_s > 0):
            raise ConfigError("equal-time mode needs a positive time_budget_s")
        if not isinstance(self.particles, int) or self.particles < 2:
            raise ConfigError("particles must be an integer >= 2")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        p = self.full_params()
        top = _max_levels(self.model, p)
        if self.levels > top:
            raise ConfigError(f"levels={self.levels} exceeds the maximum {top} for {self.model}")


def _max_levels(model: str, p: dict) -> int:
    from .models import ising
    if model == "ising":
        return ising.max_steps(int(p["n"]))
    if model == "fhmm":
        return int(math.log2(int(p["M"])))
    return 1


def build_model(cfg: ExperimentConfig) -> ModelProgram:
    """The (possibly transformed) model a config describes."""
    from .io import load_observations, load_stereo_pair
    from .models import fhmm, ising, stereo

    p = cfg.full_params()
    levels = cfg.levels if cfg.condition == "ctf" else 0
    if cfg.model == "ising":
        return ising.ising_model(int(p["n"]), float(p["T"]), levels, sign=float(p["sign"]))
    if cfg.model == "stereo":
        dmax = int(p["max_disparity"])
        if p["pair_prefix"]:
            left, right = load_stereo_pair(p["pair_prefix"])
        else:
            left, right, _ = stereo.synthesize_stereo_pair(p["data_seed"], int(p["width"]), int(p["height"]), dmax)
        return stereo.stereo_model(left, right, dmax, levels)
    params = fhmm.FhmmParams(int(p["M"]), int(p["k"]), int(p["T_steps"]))
    if p["observations"]:
        obs = load_observations(p["observations"])
    else:
        obs = fhmm.synthesize_observations(params, p["data_seed"])
    return fhmm.fhmm_model(params, obs, levels)


@dataclass
class RunTrace:
    """Per-barrier ``(barrier, elapsed seconds, cumulative logZ)`` rows of one run."""

    seed: int
    condition: str
    rows: list = field(default_factory=list)

    @property
    def final_log_z(self) -> float:
        if not self.rows:
            raise EmptyTraces("trace has no rows")
        return self.rows[-1][2]

    @property
    def elapsed(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def log_z(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def _rows_from(trace) -> list:
    rows = []
    last = -math.inf
    for i, (t, z) in enumerate(trace):
        # keep elapsed strictly increasing even if the clock did not tick
        t = max(float(t), math.nextafter(last, math.inf))
        rows.append((i, t, float(z)))
        last = t
    return rows


def _uses_sir(cfg: ExperimentConfig) -> bool:
    return cfg.condition == "ctf" or cfg.model == "fhmm"


def run_one(cfg: ExperimentConfig, model: ModelProgram, seed: int) -> RunTrace:
    label = cfg.label
    if cfg.budget_mode == "equal-particles":
        if _uses_sir(cfg):
            res = sequential_importance_resample(model, cfg.particles, seed=seed)
        else:
            res = importance_sample(model, cfg.particles, seed=seed)
        return RunTrace(seed, label, _rows_from(res.trace))

    budget = float(cfg.time_budget_s)
    if not _uses_sir(cfg):
        res = importance_sample(model, cfg.max_particles, seed=seed, deadline=budget)
        return RunTrace(seed, label, _rows_from(res.trace))

    # SIR under a time budget: independent batches until the deadline, each
    # batch's estimate averaged in (in weight space) as it progresses
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(seed)
    finals: list = []
    trace: list = []
    while True:
        start = time.perf_counter() - t0
        res = sequential_importance_resample(model, cfg.particles, seed=ss.spawn(1)[0])
        for t, z in res.trace:
            trace.append((start + t, logmeanexp(finals + [z])))
        finals.append(res.log_z)
        if time.perf_counter() - t0 >= budget or len(finals) * cfg.particles >= cfg.max_particles:
            break
    return RunTrace(seed, label, _rows_from(trace))


def run_experiment(cfg: ExperimentConfig) -> list:
    """One :class:`RunTrace` per configured seed (plus the env seed offset)."""
    cfg.validate()
    model = build_model(cfg)
    off = seed_offset()
    traces = [run_one(cfg, model, s + off) for s in cfg.seeds]
    if cfg.output:
        write_traces(cfg.output, traces)
    return traces


# ---------------------------------------------------------------------------
# CSV


def write_traces(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for tr in traces:
            for b, t, z in tr.rows:
                w.writerow([tr.seed, tr.condition, b, repr(t), repr(z)])


def read_traces(path) -> list:
    traces: dict = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != CSV_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for line in r:
            if not line:
                continue
            seed, cond, b, t, z = line
            key = (int(seed), cond)
            if key not in traces:
                traces[key] = RunTrace(int(seed), cond)
            traces[key].rows.append((int(b), float(t), float(z)))
    return list(traces.values())


# ---------------------------------------------------------------------------
# summaries


@dataclass
class Summary:
    condition: str
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    finals: dict  # seed -> final logZ


def make_grid(traces, n: int, axis: str = "time") -> np.ndarray:
    if not traces:
        raise EmptyTraces("no traces to summarize")
    if n < 2:
        raise ConfigError("grid needs at least 2 points")
    if axis == "time":
        end = max(tr.elapsed[-1] for tr in traces)
    else:
        end = max(len(tr.rows) - 1 for tr in traces)
    return np.linspace(0.0, float(end), n)


def summarize(traces, grid=100, axis: str = "time") -> dict:
    """Per-condition mean and standard error of logZ on a common grid.

    ``grid`` is a point count (spanning every trace) or an explicit array.
    ``axis`` is ``"time"`` (seconds) or ``"barrier"`` (barrier index).
    Traces are interpolated linearly and held constant outside their range.
    """
    traces = list(traces)
    if not traces:
        raise EmptyTraces("no traces to summarize")
    if axis not in ("time", "barrier"):
        raise ConfigError(f"axis must be 'time' or 'barrier', got {axis!r}")
    g = make_grid(traces, int(grid), axis) if np.ndim(grid) == 0 else np.asarray(grid, dtype=float)
    by_cond: dict = {}
    for tr in traces:
        if not tr.rows:
            raise EmptyTraces(f"seed {tr.seed} ({tr.condition}) has an empty trace")
        by_cond.setdefault(tr.condition, []).append(tr)
    out = {}
    for cond, trs in by_cond.items():
        ys = []
        for tr in trs:
            x = tr.elapsed if axis == "time" else np.arange(len(tr.rows), dtype=float)
            ys.append(np.interp(g, x, tr.log_z))
        ys = np.array(ys)
        mean = ys.mean(axis=0)
        if len(trs) > 1:
            se = ys.std(axis=0, ddof=1) / math.sqrt(len(trs))
        else:
            se = np.zeros_like(mean)
        out[cond] = Summary(cond, g, mean, se, {tr.seed: tr.final_log_z for tr in trs})
    return out


@dataclass
class Comparison:
    gap: float        # mean final logZ of b minus a
    win_rate: float   # fraction of seeds where b ends higher (ties count 1/2)
    n_seeds: int
    mean_a: float
    mean_b: float
    pooled_stderr: float

    def to_dict(self) -> dict:
        return asdict(self)


def _final_stats(finals: dict):
    v = np.array(list(finals.values()), dtype=float)
    se = v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0
    return v.mean(), se


def compare_conditions(a: Summary, b: Summary) -> Comparison:
    if a.grid.shape != b.grid.shape or not np.allclose(a.grid, b.grid, rtol=0, atol=1e-12):
        raise GridMismatch("summaries are on different grids")
    mean_a, se_a = _final_stats(a.finals)
    mean_b, se_b = _final_stats(b.finals)
    common = sorted(set(a.finals) & set(b.finals))
    if common:
        da = np.array([a.finals[s] for s in common])
        db = np.array([b.finals[s] for s in common])
    else:
        # unpaired: every cross pair counts
        da = np.repeat(np.array(list(a.finals.values())), len(b.finals))
        db = np.tile(np.array(list(b.finals.values())), len(a.finals))
    wins = np.where(db > da, 1.0, np.where(db == da, 0.5, 0.0))
    return Comparison(
        gap=float(mean_b - mean_a),
        win_rate=float(wins.mean()),
        n_seeds=len(common) if common else min(len(a.finals), len(b.finals)),
        mean_a=float(mean_a),
        mean_b=float(mean_b),
        pooled_stderr=float(math.hypot(se_a, se_b)),
    )


def write_summary(fh, summaries: dict) -> None:
    w = csv.writer(fh)
    w.writerow(["condition", "x", "mean_logZ", "stderr"])
    for cond, s in summaries.items():
        for x, m, e in zip(s.grid, s.mean, s.stderr):
            w.writerow([cond, repr(float(x)), repr(float(m)), repr(float(e))])

