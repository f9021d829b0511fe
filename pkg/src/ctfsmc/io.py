"""Plain-text matrix files: one row per line, space-separated numbers.

Used for synthetic stereo pairs and FHMM observation sequences so that
experiments can be replayed on fixed data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) or float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def save_matrix(path, matrix) -> None:
    a = np.asarray(matrix)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("only 1-D and 2-D arrays can be saved")
    lines = [" ".join(_fmt(x) for x in row) for row in a.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path, dtype=float) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ConfigError(f"{path}: no rows")
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows have different lengths")
    a = np.array(rows)
    if np.issubdtype(np.dtype(dtype), np.integer):
        if not np.all(a == np.round(a)):
            raise ConfigError(f"{path}: expected integers")
        return a.astype(dtype)
    return a.astype(dtype)


def save_stereo_pair(prefix, left, right, disparity=None) -> list[Path]:
    """Write ``<prefix>.left.txt``, ``<prefix>.right.txt`` (and ``.disp.txt``)."""
    prefix = str(prefix)
    out = [Path(prefix + ".left.txt"), Path(prefix + ".right.txt")]
    save_matrix(out[0], left)
    save_matrix(out[1], right)
    if disparity is not None:
        out.append(Path(prefix + ".disp.txt"))
        save_matrix(out[2], disparity)
    return out


def load_stereo_pair(prefix):
    prefix = str(prefix)
    return load_matrix(prefix + ".left.txt"), load_matrix(prefix + ".right.txt")


def save_observations(path, observations) -> None:
    save_matrix(path, np.asarray(observations, dtype=np.int64))


def load_observations(path) -> np.ndarray:
    return load_matrix(path, dtype=np.int64)
