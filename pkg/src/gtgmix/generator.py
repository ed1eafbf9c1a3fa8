"""Geographical threshold graphs and random geometric graphs on the torus.

Nodes ``i`` and ``j`` are joined when ``(w_i + w_j) / r_ij^d >= theta``; a
pair of coincident points is always joined. The neighbour search buckets
nodes into a toric grid and lets each pair be found from its heavier
endpoint, which only has to look as far as ``(2 w / theta)^(1/d)``. Heavy
tails therefore cost a few wide scans rather than a wide scan for everyone.
"""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .geometry import cells_of, flat_cell, unit_ball_volume, wrapped_sq_dist
from .weights import WeightDistribution

BRUTE_FORCE_CAP = 5000
# pairs materialised per vectorised chunk of the grid search
_CHUNK_PAIRS = 1 << 21


def sorted_search(keys, q):
    """``np.searchsorted(keys, q)``, sorting large query sets first for cache locality."""
    q = np.asarray(q)
    if q.size < 4096:
        return np.searchsorted(keys, q)
    flat = q.ravel()
    order = np.argsort(flat, kind="stable")
    out = np.empty(flat.shape, dtype=np.int64)
    out[order] = np.searchsorted(keys, flat[order])
    return out.reshape(q.shape)


def dist_pow(sq, d: int):
    """r^d from the squared distance using only multiplications and sqrt."""
    sq = np.asarray(sq, dtype=np.float64)
    out = np.ones_like(sq)
    for _ in range(d // 2):
        out = out * sq
    if d % 2:
        out = out * np.sqrt(sq)
    return out


def _gtg_mask(wsum, sq, theta, d):
    rd = dist_pow(sq, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = wsum / rd
    return (rd == 0.0) | (ratio >= theta)


def _rgg_mask(sq, radius):
    return np.sqrt(sq) <= radius


def edge_predicate(wi: float, wj: float, r: float, theta: float, d: int) -> bool:
    """Edge rule for one pair at toric distance ``r``; ``r == 0`` is always an edge."""
    if r < 0 or theta <= 0:
        raise ValueError("need r >= 0 and theta > 0")
    rd = r**d
    if rd == 0.0:
        return True
    return (wi + wj) / rd >= theta


@dataclass(frozen=True)
class GtgConfig:
    n: int
    d: int
    c: float
    dist: WeightDistribution
    alpha: float
    seed: int
    allow_slow_decay: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2")
        if self.d < 2:
            raise ValueError("need d >= 2")
        if not self.c > 0:
            raise ValueError("need c > 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.dist.kind == "pareto" and self.dist.gamma <= self.d and not self.allow_slow_decay:
            raise ValueError(
                f"pareto gamma={self.dist.gamma} must exceed d={self.d} "
                "(pass allow_slow_decay=True for exploratory runs)"
            )

    @property
    def theta(self) -> float:
        return threshold(self.c, self.n)


def threshold(c: float, n: int) -> float:
    """theta_n = c n / ln n."""
    return c * n / math.log(n)


class Graph:
    """Immutable graph on points of the torus, stored as sorted CSR adjacency."""

    def __init__(self, positions, weights, indptr, indices, theta, seed=None, radius=None):
        self.positions = _frozen(np.asarray(positions, dtype=np.float64))
        self.weights = _frozen(np.asarray(weights, dtype=np.float64))
        self.indptr = _frozen(np.asarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.asarray(indices, dtype=np.int32))
        self.theta = None if theta is None else float(theta)
        self.seed = seed
        self.radius = None if radius is None else float(radius)
        self.degrees = _frozen(np.diff(self.indptr))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def edge_count(self) -> int:
        return int(self.indices.shape[0] // 2)

    @property
    def c(self):
        if self.theta is None:
            return None
        return self.theta * math.log(self.n) / self.n

    def neighbors(self, i: int):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edges(self):
        """(m, 2) array of edges with i < j in lexicographic order."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        keep = self.indices > rows
        return np.stack([rows[keep], self.indices[keep].astype(np.int64)], axis=1)

    def edge_keys(self):
        """Sorted int64 keys ``i * n + j`` for every directed edge."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        return rows * self.n + self.indices

    def has_edges(self, a, b):
        """Vectorised adjacency test for node arrays ``a`` and ``b``."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        keys = self._keys()
        q = a * self.n + b
        if len(keys) == 0:
            return np.zeros(q.shape, dtype=bool)
        pos = np.minimum(sorted_search(keys, q), len(keys) - 1)
        return keys[pos] == q

    def _keys(self):
        keys = getattr(self, "_key_cache", None)
        if keys is None:
            keys = self.edge_keys()
            object.__setattr__(self, "_key_cache", keys)
        return keys

    def adjacency_matrix(self):
        from scipy.sparse import csr_matrix

        data = np.ones(len(self.indices), dtype=np.float64)
        return csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def same_as(self, other) -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.theta == other.theta
            and self.radius == other.radius
        )

    def check(self):
        """Validate structural invariants; raises ValueError on the first failure."""
        n = self.n
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("malformed indptr")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr not monotone")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("neighbour index out of range")
        rows = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        if np.any(rows == self.indices):
            raise ValueError("self-loop")
        keys = rows * n + self.indices
        if np.any(np.diff(keys) <= 0):
            raise ValueError("neighbour lists not strictly sorted")
        rev = np.sort(self.indices.astype(np.int64) * n + rows)
        if not np.array_equal(rev, keys):
            raise ValueError("adjacency not symmetric")
        if 2 * self.edge_count != int(self.degrees.sum()):
            raise ValueError("handshake violated")

    def __repr__(self):
        kind = f"theta={self.theta:.6g}" if self.radius is None else f"radius={self.radius:.6g}"
        return f"Graph(n={self.n}, d={self.d}, m={self.edge_count}, {kind})"


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def from_edges(positions, weights, edges, theta, seed=None, radius=None) -> Graph:
    n = len(positions)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.argsort(src * n + dst, kind="stable")
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return Graph(positions, weights, indptr, dst, theta, seed=seed, radius=radius)


def _grid_side(reach_typical: float, n: int, d: int) -> int:
    """Cells no smaller than the typical reach, and not many more cells than nodes."""
    if reach_typical <= 0 or not math.isfinite(reach_typical):
        k = int(n ** (1.0 / d))
    else:
        k = int(math.floor(1.0 / reach_typical))
    k = min(k, int(n ** (1.0 / d)))
    return max(k, 1)


def _pair_search(positions, reach, rank, accept, k):
    """Candidate pairs (i, j) with rank[i] < rank[j] within toric distance reach[i].

    ``accept(i, j, sq)`` returns the mask of true edges among candidates.
    Returns an (m, 2) array of edges with i < j, unsorted.
    """
    n, d = positions.shape
    cells = cells_of(positions, k)
    cid = flat_cell(cells, k)
    order = np.argsort(cid, kind="stable")
    counts = np.bincount(cid, minlength=k**d)
    starts = np.zeros(k**d, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])

    # layers of cells each node must scan; a little slack against rounding
    layers = np.floor(reach * (1.0 + 1e-9) * k).astype(np.int64) + 1
    full = 2 * layers + 1 >= k
    found = []

    # nodes whose scan covers most of the torus test against everyone directly
    wide = np.zeros(n, dtype=bool)
    if k > 1:
        span = np.where(full, k, 2 * layers + 1)
        wide = span.astype(np.float64) ** d >= 0.5 * k**d
    else:
        wide[:] = True
    wide_idx = np.flatnonzero(wide)
    step = max(1, _CHUNK_PAIRS // n)
    everyone = np.arange(n)[None, :]
    for lo in range(0, len(wide_idx), step):
        blk = wide_idx[lo:lo + step][:, None]
        sq = wrapped_sq_dist(positions[blk], positions[everyone])
        ok = (rank[everyone] > rank[blk]) & accept(blk, everyone, sq)
        bi, jj = np.nonzero(ok)
        if len(bi):
            found.append(np.stack([blk[bi, 0], jj], axis=1))

    narrow = np.flatnonzero(~wide)
    for m in np.unique(layers[narrow]):
        group = narrow[layers[narrow] == m]
        rmax = float(reach[group].max()) * (1.0 + 1e-9)
        axis = np.arange(-m, m + 1)
        offsets = np.array(list(product(axis, repeat=d)), dtype=np.int64)
        wrapped = np.minimum(np.abs(offsets) % k, k - np.abs(offsets) % k)
        gap = np.maximum(wrapped - 1, 0) / k
        offsets = offsets[np.sum(gap * gap, axis=1) <= rmax * rmax]
        # distinct offsets mod k only
        offsets = np.unique(offsets % k, axis=0)
        gcells = cells[group]
        for off in offsets:
            tgt = flat_cell(gcells + off, k)
            cnt = counts[tgt]
            total = int(cnt.sum())
            if total == 0:
                continue
            for lo, hi in _chunks(cnt, _CHUNK_PAIRS):
                c = cnt[lo:hi]
                tot = int(c.sum())
                if tot == 0:
                    continue
                ii = np.repeat(group[lo:hi], c)
                base = np.repeat(starts[tgt[lo:hi]], c)
                within = np.arange(tot) - np.repeat(np.cumsum(c) - c, c)
                jj = order[base + within]
                keep = rank[jj] > rank[ii]
                ii, jj = ii[keep], jj[keep]
                if len(ii) == 0:
                    continue
                sq = wrapped_sq_dist(positions[ii], positions[jj])
                ok = accept(ii, jj, sq)
                if ok.any():
                    found.append(np.stack([ii[ok], jj[ok]], axis=1))
    if not found:
        return np.empty((0, 2), dtype=np.int64)
    edges = np.concatenate(found).astype(np.int64)
    a, b = edges[:, 0], edges[:, 1]
    return np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)


def _chunks(counts, limit):
    """Split index range so that each chunk's summed counts stay near ``limit``."""
    csum = np.cumsum(counts)
    lo = 0
    n = len(counts)
    while lo < n:
        base = csum[lo - 1] if lo else 0
        hi = int(np.searchsorted(csum, base + limit, side="right"))
        hi = max(hi, lo + 1)
        hi = min(hi, n)
        yield lo, hi
        lo = hi


def gtg_edges(positions, weights, theta, k=None):
    """Edge set of the threshold rule via grid-bucketed search, (m, 2) lexsorted."""
    positions = np.asarray(positions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n, d = positions.shape
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    # heavier endpoint first; ties broken by index
    order = np.lexsort((np.arange(n), -weights))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    reach = (2.0 * weights / theta) ** (1.0 / d)
    if k is None:
        typical = (2.0 * float(np.median(weights)) / theta) ** (1.0 / d)
        k = _grid_side(typical, n, d)

    def accept(i, j, sq):
        return _gtg_mask(weights[i] + weights[j], sq, theta, d)

    edges = _pair_search(positions, reach, rank, accept, k)
    return _lexsort_edges(edges)


def rgg_edges(positions, radius, k=None):
    positions = np.asarray(positions, dtype=np.float64)
    n, d = positions.shape
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    rank = np.arange(n)
    reach = np.full(n, float(radius))
    if k is None:
        k = _grid_side(float(radius), n, d)

    def accept(i, j, sq):
        return _rgg_mask(sq, radius)

    return _lexsort_edges(_pair_search(positions, reach, rank, accept, k))


def _lexsort_edges(edges):
    if len(edges) == 0:
        return edges
    # one integer key per edge sorts faster than a two-column lexsort
    n = int(edges.max()) + 1
    keys = np.sort(edges[:, 0] * n + edges[:, 1])
    return np.stack([keys // n, keys % n], axis=1)


def sample_nodes(n, d, dist, seed):
    """Positions then weights from one seeded stream."""
    rng = np.random.default_rng(seed)
    positions = rng.random((n, d))
    weights = dist.sample(rng, n)
    return positions, weights


def generate_gtg(config: GtgConfig) -> Graph:
    positions, weights = sample_nodes(config.n, config.d, config.dist, config.seed)
    theta = config.theta
    edges = gtg_edges(positions, weights, theta)
    return from_edges(positions, weights, edges, theta, seed=config.seed)


def gtg_from_arrays(positions, weights, theta, seed=None) -> Graph:
    edges = gtg_edges(positions, weights, theta)
    return from_edges(positions, weights, edges, theta, seed=seed)


def generate_rgg(n: int, d: int, r: float, seed) -> Graph:
    """Random geometric graph: edge iff toric distance <= r."""
    if not r > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    positions = rng.random((n, d))
    edges = rgg_edges(positions, r)
    return from_edges(positions, np.zeros(n), edges, None, seed=seed, radius=r)


def brute_force_edges(positions, weights, theta, d=None, cap=BRUTE_FORCE_CAP):
    """All-pairs evaluation of the threshold rule; the oracle for the grid search."""
    positions = np.asarray(positions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = positions.shape[0]
    d = positions.shape[1] if d is None else d
    if n > cap:
        raise ValueError(f"brute force capped at n={cap}, got {n}")
    found = []
    rows = max(1, _CHUNK_PAIRS // max(n, 1))
    for lo in range(0, n - 1, rows):
        # every pair (i, j) with i in this block of rows and j > i
        hi = min(lo + rows, n)
        ii, jj = np.arange(lo, hi)[:, None], np.arange(n)[None, :]
        sq = wrapped_sq_dist(positions[ii], positions[jj])
        ok = (jj > ii) & _gtg_mask(weights[ii] + weights[jj], sq, theta, d)
        bi, bj = np.nonzero(ok)
        if len(bi):
            found.append(np.stack([bi + lo, bj], axis=1))
    if not found:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(found).astype(np.int64)


def brute_force_rgg_edges(positions, radius, cap=BRUTE_FORCE_CAP):
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n > cap:
        raise ValueError(f"brute force capped at n={cap}, got {n}")
    found = []
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        ok = _rgg_mask(wrapped_sq_dist(positions[i], positions[js]), radius)
        if ok.any():
            found.append(np.stack([np.full(ok.sum(), i), js[ok]], axis=1))
    if not found:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(found).astype(np.int64)


def critical_radius(n: float, alpha: float, d: int) -> float:
    """(ln(alpha n) / (alpha n V_d))^(1/d), V_d the unit-ball volume."""
    an = alpha * n
    if an <= 1:
        raise ValueError("need alpha * n > 1")
    return (math.log(an) / (an * unit_ball_volume(d))) ** (1.0 / d)
