"""Structural measurements on generated graphs.

Everything here reads an immutable :class:`~gtgmix.generator.Graph` and
reports numbers; nothing asserts an asymptotic claim. High-probability
statements about these numbers are checked by ensembles in the test-suite.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import adjacent_cell_pairs, cells_of, flat_cell, unit_ball_volume
from .weights import default_omega, max_weight_bounds


@dataclass(frozen=True)
class Components:
    labels: np.ndarray
    count: int
    sizes: np.ndarray

    @property
    def connected(self) -> bool:
        return self.count == 1


def gather_neighbors(g, nodes):
    """Concatenated neighbour lists of ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    lo = g.indptr[nodes]
    cnt = g.indptr[nodes + 1] - lo
    total = int(cnt.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    return g.indices[np.repeat(lo, cnt) + offs].astype(np.int64)


def connected_components(g) -> Components:
    """Breadth-first labelling; components numbered by smallest member."""
    labels = np.full(g.n, -1, dtype=np.int64)
    count = 0
    for s in range(g.n):
        if labels[s] >= 0:
            continue
        labels[s] = count
        frontier = np.array([s])
        while len(frontier):
            nb = gather_neighbors(g, frontier)
            nb = np.unique(nb[labels[nb] < 0])
            labels[nb] = count
            frontier = nb
        count += 1
    sizes = np.bincount(labels, minlength=count)
    return Components(labels, count, sizes)


class UnionFind:
    """Disjoint sets over 0..n-1 with union by size and path halving."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


def union_find_components(g) -> Components:
    """Same labelling convention as :func:`connected_components`, via union-find."""
    uf = UnionFind(g.n)
    for i, j in g.edges().tolist():
        uf.union(i, j)
    roots = [uf.find(i) for i in range(g.n)]
    relabel = {}
    labels = np.empty(g.n, dtype=np.int64)
    for i, r in enumerate(roots):
        labels[i] = relabel.setdefault(r, len(relabel))
    count = len(relabel)
    return Components(labels, count, np.bincount(labels, minlength=count))


@dataclass(frozen=True)
class DegreeReport:
    min_deg: int
    max_deg: int
    c1: float  # nan when 2c >= mu * V_d
    c2: float
    interval: tuple
    within: bool
    defined: bool


def degree_constants(mu: float, c: float, d: int):
    """(c1, c2) of the degree interval; c1 is nan unless 2c < mu V_d (V_d: unit-ball volume)."""
    ups = unit_ball_volume(d)
    c2 = 2.0 * ups / c
    if 2.0 * c >= mu * ups:
        return math.nan, c2
    c1 = (mu * ups / c) * (1.0 - math.sqrt(2.0 * c / (mu * ups)))
    return c1, c2


def degree_report(g, dist, c=None, omega=None) -> DegreeReport:
    n = g.n
    c = g.c if c is None else c
    omega = default_omega(n) if omega is None else omega
    c1, c2 = degree_constants(dist.mean, c, g.d)
    _, w2 = max_weight_bounds(dist, n, omega)
    ln = math.log(n)
    hi = c2 * w2 * ln
    mn, mx = int(g.degrees.min()), int(g.degrees.max())
    defined = not math.isnan(c1)
    lo = c1 * ln if defined else 0.0
    within = (mn >= lo if defined else True) and mx <= hi
    return DegreeReport(mn, mx, c1, c2, (lo, hi), bool(within), defined)


def expected_degree(w, n, theta, d, mu):
    """Mean of Bin(n-1, V_d (w + mu) / theta); exact while every reach stays below 1/2."""
    return (n - 1) * unit_ball_volume(d) * (w + mu) / theta


def edge_count_ratio(g) -> float:
    """|E| / (n ln n)."""
    if g.n < 3:
        raise ValueError("need n >= 3")
    return g.edge_count / (g.n * math.log(g.n))


def high_low_partition(g, alpha, dist):
    """(H, L) index arrays split at the weight cutoff F^{-1}(1 - alpha); H is strict."""
    cutoff = float(dist.isf(alpha))
    high = g.weights > cutoff
    return np.flatnonzero(high), np.flatnonzero(~high)


@dataclass(frozen=True)
class CubeOccupancy:
    k: int
    high: np.ndarray  # per flat cell
    low: np.ndarray

    def normalized(self, n):
        ln = math.log(n)
        return self.high / ln, self.low / ln

    def band(self, n):
        """(min, max) over cubes of min/max(H, L) divided by ln n."""
        h, l = self.normalized(n)
        return float(min(h.min(), l.min())), float(max(h.max(), l.max()))


def cube_occupancy(g, k, alpha, dist) -> CubeOccupancy:
    if k**g.d > g.n:
        warnings.warn(f"{k**g.d} cubes for {g.n} nodes; expect empty cubes", stacklevel=2)
    high_idx, _ = high_low_partition(g, alpha, dist)
    high = np.zeros(g.n, dtype=bool)
    high[high_idx] = True
    cid = flat_cell(cells_of(g.positions, k), k)
    total = np.bincount(cid, minlength=k**g.d)
    h = np.bincount(cid[high], minlength=k**g.d)
    return CubeOccupancy(k, h, total - h)


@dataclass(frozen=True)
class HighPairReport:
    pairs: np.ndarray  # (m, 2) flat cell ids of face-adjacent cubes
    counts: np.ndarray  # H-H edges between the two cubes
    possible: np.ndarray  # |H(S_i)| * |H(S_j)|

    @property
    def complete(self) -> bool:
        return bool(np.array_equal(self.counts, self.possible))

    @property
    def violations(self) -> int:
        return int((self.possible - self.counts).sum())

    def min_normalized(self, n):
        if len(self.counts) == 0:
            return math.nan
        return float(self.counts.min()) / math.log(n) ** 2


def adjacent_cube_hh_edges(g, k, high) -> HighPairReport:
    """H-H edge counts for every face-adjacent cube pair (k = 1 has none)."""
    pairs = adjacent_cell_pairs(k, g.d)
    if len(pairs) == 0:
        return HighPairReport(pairs, np.zeros(0, np.int64), np.zeros(0, np.int64))
    is_high = np.zeros(g.n, dtype=bool)
    is_high[np.asarray(high, dtype=np.int64)] = True
    cid = flat_cell(cells_of(g.positions, k), k)
    ncell = k**g.d
    hcount = np.bincount(cid[is_high], minlength=ncell)
    possible = hcount[pairs[:, 0]] * hcount[pairs[:, 1]]

    e = g.edges()
    e = e[is_high[e[:, 0]] & is_high[e[:, 1]]]
    a = np.minimum(cid[e[:, 0]], cid[e[:, 1]])
    b = np.maximum(cid[e[:, 0]], cid[e[:, 1]])
    pkey = pairs[:, 0] * ncell + pairs[:, 1]
    ekey = a * ncell + b
    pos = np.searchsorted(pkey, ekey)
    pos = np.minimum(pos, len(pkey) - 1)
    hit = pkey[pos] == ekey
    counts = np.bincount(pos[hit], minlength=len(pairs))
    return HighPairReport(pairs, counts, possible)


def completeness_guaranteed(theta, cutoff, k, d) -> bool:
    """Whether every H-H pair in face-adjacent cubes must be an edge.

    Two such nodes are at most sqrt(d+3)/k apart and each weighs more than
    ``cutoff``.
    """
    return 2.0 * cutoff * k**d / (d + 3) ** (d / 2) >= theta
