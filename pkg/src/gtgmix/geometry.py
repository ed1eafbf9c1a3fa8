"""Toric unit cube geometry: wrapped metric, grid tiling and cube adjacency.

Points live in the half-open cube [0, 1)^d with opposite faces identified.
Grid cells are integer tuples reduced mod ``k``.
"""

import math

import numpy as np


def check_points(points):
    """Return ``points`` as a float64 (n, d) array, raising on invalid input."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"points must be an (n, d) array, got shape {arr.shape}")
    if arr.size and (np.any(arr < 0.0) or np.any(arr >= 1.0) or not np.all(np.isfinite(arr))):
        raise ValueError("coordinates must lie in [0, 1)")
    return arr


def wrapped_sq_dist(p, q):
    """Squared toric distance, broadcasting over leading axes.

    This is the single arithmetic path used by every edge test, so the
    generator and its brute-force oracle agree bit for bit.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    out = None
    # coordinate by coordinate, left to right, so broadcast blocks need no gathers
    for k in range(p.shape[-1]):
        t = np.abs(p[..., k] - q[..., k])
        t = np.minimum(t, 1.0 - t)
        t = t * t
        out = t if out is None else out + t
    return out


def toric_distance(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(math.sqrt(wrapped_sq_dist(p, q)))


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in ``d`` dimensions (even/odd closed forms)."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    k = d // 2
    if d % 2 == 0:
        return math.pi**k / math.factorial(k)
    return 2**d * math.factorial(k) * math.pi**k / math.factorial(d)


def cells_of(points, k: int):
    """Grid cell of each row of ``points`` as an (n, d) int64 array."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cells = np.floor(np.asarray(points, dtype=np.float64) * k).astype(np.int64)
    # x * k can round up to k for x just below 1
    return np.minimum(cells, k - 1)


def cube_of(p, k: int) -> tuple:
    return tuple(int(c) for c in cells_of(np.atleast_2d(p), k)[0])


def flat_cell(cells, k: int):
    """Row-major flat index of integer cells (last axis is the coordinate)."""
    cells = np.asarray(cells, dtype=np.int64) % k
    d = cells.shape[-1]
    weights = k ** np.arange(d - 1, -1, -1, dtype=np.int64)
    return cells @ weights


def unflat_cell(idx, k: int, d: int):
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty(idx.shape + (d,), dtype=np.int64)
    rem = idx.copy()
    for t in range(d - 1, -1, -1):
        out[..., t] = rem % k
        rem //= k
    return out


def adjacent_cubes(a, b, k: int) -> bool:
    """Face adjacency on the toric grid.

    A cube is never adjacent to itself, which matters for ``k <= 2`` where
    wraparound would otherwise make a cell its own neighbour.
    """
    a = np.asarray(a, dtype=np.int64) % k
    b = np.asarray(b, dtype=np.int64) % k
    if a.shape != b.shape:
        raise ValueError("cells of different dimension")
    diff = (b - a) % k
    moved = diff != 0
    if moved.sum() != 1:
        return False
    step = int(diff[moved][0])
    return step == 1 or step == k - 1


def adjacent_cell_pairs(k: int, d: int):
    """All unordered face-adjacent cell pairs as an (m, 2) array of flat ids.

    Each pair appears once; for ``k == 2`` the +1 and -1 neighbours coincide.
    ``k == 1`` has no pairs.
    """
    if k < 2:
        return np.empty((0, 2), dtype=np.int64)
    ids = np.arange(k**d, dtype=np.int64)
    cells = unflat_cell(ids, k, d)
    pairs = []
    for t in range(d):
        nb = cells.copy()
        nb[:, t] = (nb[:, t] + 1) % k
        pairs.append(np.stack([ids, flat_cell(nb, k)], axis=1))
    pairs = np.sort(np.concatenate(pairs), axis=1)
    return np.unique(pairs, axis=0)
