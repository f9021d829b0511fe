"""Numeric inner loops.

Each kernel has a pure-numpy version (``np_*``) and a numba version
(``nb_*``).  The public names point at the numba versions unless numba is
missing or ``CTFSMC_DISABLE_NUMBA=1`` is set in the environment.  Both
versions are importable directly for testing and benchmarking.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CTFSMC_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# resampling


def np_inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the first cdf entry strictly above each sorted uniform."""
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1).astype(np.int64)


def _inverse_cdf_loop(cdf, u):
    n = u.shape[0]
    m = cdf.shape[0]
    out = np.empty(n, dtype=np.int64)
    j = 0
    for i in range(n):
        while j < m - 1 and u[i] >= cdf[j]:
            j += 1
        out[i] = j
    return out


# ---------------------------------------------------------------------------
# mixed-resolution Ising energy
#
# ``unit`` labels every fine cell with the id of the resolved cell covering
# it (at whatever scale) and ``spin`` gives that unit's spin.  Every
# unordered pair of distinct units that touch across a fine-grid edge
# contributes one product term.


def np_unit_pair_sum(unit: np.ndarray, spin: np.ndarray) -> float:
    a = np.concatenate([unit[:, :-1].ravel(), unit[:-1, :].ravel()])
    b = np.concatenate([unit[:, 1:].ravel(), unit[1:, :].ravel()])
    keep = a != b
    lo = np.minimum(a[keep], b[keep]).astype(np.int64)
    hi = np.maximum(a[keep], b[keep]).astype(np.int64)
    keys = np.unique(lo * spin.shape[0] + hi)
    return float(np.sum(spin[keys // spin.shape[0]] * spin[keys % spin.shape[0]]))


def _unit_pair_sum_loop(unit, spin):
    n0, n1 = unit.shape
    u = spin.shape[0]
    keys = np.empty(2 * n0 * n1, dtype=np.int64)
    k = 0
    for i in range(n0):
        for j in range(n1):
            a = unit[i, j]
            if j + 1 < n1:
                b = unit[i, j + 1]
                if a != b:
                    keys[k] = min(a, b) * u + max(a, b)
                    k += 1
            if i + 1 < n0:
                b = unit[i + 1, j]
                if a != b:
                    keys[k] = min(a, b) * u + max(a, b)
                    k += 1
    ks = np.sort(keys[:k])
    total = 0.0
    for t in range(k):
        if t == 0 or ks[t] != ks[t - 1]:
            total += spin[ks[t] // u] * spin[ks[t] % u]
    return total


# ---------------------------------------------------------------------------
# stereo energy


def np_data_cost(left: np.ndarray, right: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Per-pixel |I_p - I'(x)| minimised over x in [p+d-0.5, p+d+0.5].

    ``right`` is linearly interpolated along rows and clamped at borders.
    """
    h, w = left.shape
    cols = np.arange(w)[None, :] + disp
    lo = np.clip(cols - 0.5, 0.0, w - 1.0)
    hi = np.clip(cols + 0.5, 0.0, w - 1.0)
    rows = np.arange(h)[:, None]

    def interp(x):
        x0 = np.floor(x).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        f = x - x0
        return right[rows, x0] * (1 - f) + right[rows, x1] * f

    # evaluation points: both ends plus the (at most two) integer knots inside
    pts = [lo, np.minimum(np.floor(lo) + 1, hi), np.minimum(np.floor(lo) + 2, hi), hi]
    vals = [interp(p) for p in pts]
    target = left
    best = np.full(left.shape, np.inf)
    for a, b in zip(vals[:-1], vals[1:]):
        inside = (np.minimum(a, b) <= target) & (target <= np.maximum(a, b))
        seg = np.where(inside, 0.0, np.minimum(np.abs(target - a), np.abs(target - b)))
        best = np.minimum(best, seg)
    return best


def np_stereo_energy(left, right, disp, block, block_var, vmax) -> float:
    data = np_data_cost(left, right, disp).sum()

    def pair_cost(da, db, ba, bb, va):
        same = (ba == bb) & (ba >= 0)
        plain = np.minimum((da - db) ** 2, vmax)
        return np.where(same, np.minimum(2.0 * va, vmax), plain).sum()

    smooth = pair_cost(disp[:, :-1], disp[:, 1:], block[:, :-1], block[:, 1:], block_var[:, :-1])
    smooth += pair_cost(disp[:-1, :], disp[1:, :], block[:-1, :], block[1:, :], block_var[:-1, :])
    return float(data + smooth)


def _data_cost_pixel(ip, row, x, w):
    lo = min(max(x - 0.5, 0.0), w - 1.0)
    hi = min(max(x + 0.5, 0.0), w - 1.0)
    best = np.inf
    prev_v = _interp(row, lo, w)
    k = np.floor(lo) + 1.0
    while True:
        nx = min(k, hi)
        v = _interp(row, nx, w)
        if min(prev_v, v) <= ip <= max(prev_v, v):
            return 0.0
        best = min(best, abs(ip - prev_v), abs(ip - v))
        if nx >= hi:
            break
        prev_v = v
        k += 1.0
    return best


def _interp(row, x, w):
    x0 = int(np.floor(x))
    x1 = min(x0 + 1, w - 1)
    f = x - x0
    return row[x0] * (1.0 - f) + row[x1] * f


def _stereo_energy_loop(left, right, disp, block, block_var, vmax):
    h, w = left.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            total += _data_cost_pixel(left[i, j], right[i], j + disp[i, j], w)
            if j + 1 < w:
                if block[i, j] >= 0 and block[i, j] == block[i, j + 1]:
                    total += min(2.0 * block_var[i, j], vmax)
                else:
                    total += min((disp[i, j] - disp[i, j + 1]) ** 2, vmax)
            if i + 1 < h:
                if block[i, j] >= 0 and block[i, j] == block[i + 1, j]:
                    total += min(2.0 * block_var[i, j], vmax)
                else:
                    total += min((disp[i, j] - disp[i + 1, j]) ** 2, vmax)
    return total


# ---------------------------------------------------------------------------
# binding

if HAVE_NUMBA:
    nb_inverse_cdf = numba.njit(cache=True)(_inverse_cdf_loop)
    nb_unit_pair_sum = numba.njit(cache=True)(_unit_pair_sum_loop)
    _interp_nb = numba.njit(cache=True)(_interp)
    _interp = _interp_nb
    _data_cost_pixel_nb = numba.njit(cache=True)(_data_cost_pixel)
    _data_cost_pixel = _data_cost_pixel_nb
    nb_stereo_energy = numba.njit(cache=True)(_stereo_energy_loop)
else:  # pragma: no cover
    nb_inverse_cdf = _inverse_cdf_loop
    nb_unit_pair_sum = _unit_pair_sum_loop
    nb_stereo_energy = _stereo_energy_loop

if USE_NUMBA:
    inverse_cdf = nb_inverse_cdf
    unit_pair_sum = nb_unit_pair_sum
    stereo_energy = nb_stereo_energy
else:
    inverse_cdf = np_inverse_cdf
    unit_pair_sum = np_unit_pair_sum
    stereo_energy = np_stereo_energy
