"""Canonical paths routed over a toric grid scaffold of high-weight nodes.

The unit cube is cut into ``k^d`` cells. A path between two nodes follows
the grid path between their cells, which raises coordinate 1 by +1 (mod k)
until it matches, then coordinate 2, and so on. It hops through one random
high-weight node per intermediate cell. Low-weight endpoints enter and
leave through a high-weight representative in their own cell.

Paths are never stored. Every source node ``u`` owns a random stream
seeded by ``(seed, u)``, so the paths from ``u`` can be regenerated
whenever they are needed. The results therefore do not depend on batching
or on which sources are sampled.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .generator import sorted_search
from .geometry import cells_of, flat_cell, unflat_cell

EXACT_CAP = 3000
DEFAULT_PAIRS = 1_000_000
MAX_RESAMPLE = 32


class RepresentativeError(RuntimeError):
    """A cell holds low-weight nodes but no high-weight node to represent them."""

    def __init__(self, cube, n_low):
        self.cube = tuple(int(c) for c in cube)
        self.n_low = n_low
        super().__init__(f"cube {self.cube} has {n_low} low-weight nodes and no high-weight node")


class PathBuildError(RuntimeError):
    """A canonical path could not be made into a walk of the graph."""

    def __init__(self, u, v, hop, detail):
        self.u, self.v, self.hop = int(u), int(v), hop
        super().__init__(f"path {u}->{v}: {detail}")


def scaffold_constant(alpha: float, delta2: float = 1.0) -> float:
    """Occupancy constant c' = (1 + delta2) / (min(alpha, 1 - alpha) delta2^2)."""
    return (1.0 + delta2) / (min(alpha, 1.0 - alpha) * delta2**2)


def canonical_grid_side(n: int, alpha: float, d: int, delta2: float = 1.0) -> int:
    """k = ceil((n / (c' ln n))^(1/d))."""
    cp = scaffold_constant(alpha, delta2)
    return max(1, math.ceil((n / (cp * math.log(n))) ** (1.0 / d)))


def grid_path(a, b, k: int):
    """Cells visited from ``a`` to ``b``, each coordinate raised by +1 mod k in turn."""
    a = np.asarray(a, dtype=np.int64) % k
    b = np.asarray(b, dtype=np.int64) % k
    if a.shape != b.shape:
        raise ValueError("cells of different dimension")
    cells, lengths = grid_paths_from(a, b[None, :], k)
    return [tuple(int(x) for x in c) for c in cells[0, : lengths[0] + 1]]


def grid_paths_from(a, targets, k: int):
    """Scaffold paths from cell ``a`` to each row of ``targets``.

    Returns ``(cells, lengths)``; ``cells`` has shape (T, L+1, d) and rows
    are padded past their length by repeating the final cell.
    """
    a = np.asarray(a, dtype=np.int64) % k
    targets = np.asarray(targets, dtype=np.int64) % k
    steps = (targets - a) % k
    cum = np.cumsum(steps, axis=1)
    before = cum - steps
    lengths = cum[:, -1]
    lmax = int(lengths.max()) if len(lengths) else 0
    s = np.arange(lmax + 1)[None, :, None]
    progress = np.clip(s - before[:, None, :], 0, steps[:, None, :])
    return (a + progress) % k, lengths


def grid_edge_load(k: int, d: int, cap: int = 10**7) -> int:
    """Largest number of scaffold paths through one grid edge, by enumeration."""
    if k ** (2 * d) > cap:
        raise ValueError(f"k^(2d) = {k ** (2 * d)} paths exceeds the enumeration cap {cap}")
    if k == 1:
        return 0
    ncell = k**d
    all_cells = unflat_cell(np.arange(ncell), k, d)
    load = np.zeros(ncell * d, dtype=np.int64)
    for a in all_cells:
        cells, lengths = grid_paths_from(a, all_cells, k)
        if cells.shape[1] < 2:
            continue
        frm, to = cells[:, :-1], cells[:, 1:]
        moving = np.arange(cells.shape[1] - 1)[None, :] < lengths[:, None]
        coord = np.argmax(frm != to, axis=2)
        eid = flat_cell(frm, k) * d + coord
        load += np.bincount(eid[moving], minlength=ncell * d)
    return int(load.max())


@dataclass(frozen=True)
class Representatives:
    k: int
    rep: np.ndarray  # rep[v] for low v, v itself for high v
    high: np.ndarray  # bool mask
    group_sizes: dict = field(repr=False)  # high node -> number of low nodes represented

    def represented_by(self, h: int):
        return np.flatnonzero((self.rep == h) & ~self.high)


def assign_representatives(g, k, high, low, rng) -> Representatives:
    """Split each cell's low nodes evenly over distinct high nodes of that cell."""
    is_high = np.zeros(g.n, dtype=bool)
    is_high[np.asarray(high, dtype=np.int64)] = True
    cid = flat_cell(cells_of(g.positions, k), k)
    rep = np.arange(g.n, dtype=np.int64)
    sizes = {}
    order = np.argsort(cid, kind="stable")
    bounds = np.searchsorted(cid[order], np.arange(k**g.d + 1))
    for cube in range(k**g.d):
        members = order[bounds[cube]:bounds[cube + 1]]
        hs = members[is_high[members]]
        ls = members[~is_high[members]]
        if len(ls) == 0:
            continue
        if len(hs) == 0:
            raise RepresentativeError(unflat_cell(cube, k, g.d), len(ls))
        ngroups = min(len(hs), len(ls))
        groups = np.array_split(rng.permutation(ls), ngroups)
        chosen = rng.choice(hs, size=ngroups, replace=False)
        for h, grp in zip(chosen, groups):
            rep[grp] = h
            sizes[int(h)] = len(grp)
    return Representatives(k, rep, is_high, sizes)


class _EdgeIndex:
    """Undirected edge ids ordered like ``g.edges()``."""

    def __init__(self, g):
        self.g = g
        self.edges = g.edges()
        self.ekeys = self.edges[:, 0] * g.n + self.edges[:, 1]

    def lookup(self, a, b):
        """(edge ids, adjacent mask) for node pairs in either order."""
        key = np.minimum(a, b) * self.g.n + np.maximum(a, b)
        if len(self.ekeys) == 0:
            return np.zeros(key.shape, np.int64), np.zeros(key.shape, bool)
        pos = np.minimum(sorted_search(self.ekeys, key), len(self.ekeys) - 1)
        return pos, self.ekeys[pos] == key

    @staticmethod
    def lengths(nodes):
        a, b = nodes[:, :-1], nodes[:, 1:]
        return ((a >= 0) & (b >= 0) & (a != b)).sum(axis=1)


class _Router(_EdgeIndex):
    """Static data shared by every source's canonical path construction."""

    def __init__(self, g, reps, seed, max_resample):
        super().__init__(g)
        self.k = reps.k
        self.d = g.d
        self.reps = reps
        self.seed = int(seed)
        self.max_resample = max_resample
        self.cells = cells_of(g.positions, self.k)
        cid = flat_cell(self.cells, self.k)
        self.cid = cid
        hi = np.flatnonzero(reps.high)
        horder = hi[np.argsort(cid[hi], kind="stable")]
        self.hsorted = horder
        self.hcount = np.bincount(cid[hi], minlength=self.k**self.d)
        self.hstart = np.zeros_like(self.hcount)
        np.cumsum(self.hcount[:-1], out=self.hstart[1:])
        self.width = self.d * (self.k - 1) + 3  # node slots for the longest path

    def _pick(self, cube, u01):
        return self.hsorted[self.hstart[cube] + np.floor(u01 * self.hcount[cube]).astype(np.int64)]

    def source(self, u, targets):
        """Paths u -> targets.

        Returns the node matrix (T, width), -1 padded, the hops of
        :func:`path_edges` with their edge ids, and the resample count.
        """
        g, rep = self.g, self.reps.rep
        T = len(targets)
        rng = np.random.default_rng([self.seed, int(u)])
        # one row of uniforms per possible target keeps draws independent of ``targets``
        draws = rng.random((g.n, max(self.width - 3, 1)))
        scaffold, tlen = grid_paths_from(self.cells[u], self.cells[targets], self.k)
        cubes = flat_cell(scaffold, self.k)
        nodes = np.full((T, self.width), -1, dtype=np.int64)
        nodes[:, 0] = u
        nodes[:, 1] = rep[u]
        rows = np.arange(T)
        lmax = scaffold.shape[1] - 1
        interior = np.zeros((T, self.width), dtype=bool)
        for s in range(1, lmax):
            live = tlen > s
            if not live.any():
                continue
            cube = cubes[live, s]
            if np.any(self.hcount[cube] == 0):
                bad = np.flatnonzero(live)[self.hcount[cube] == 0][0]
                raise PathBuildError(u, targets[bad], s, f"cube {tuple(self.cells_of_flat(cubes[bad, s]))} has no high-weight node")
            nodes[live, s + 1] = self._pick(cube, draws[targets[live], s - 1])
            interior[live, s + 1] = True
        nodes[rows, tlen + 1] = rep[targets]
        nodes[rows, tlen + 2] = targets
        rows, a, b = path_edges(nodes)
        eid, ok = self.lookup(a, b)
        resamples = 0
        if not ok.all():
            resamples = self._repair(u, targets, nodes, interior, cubes, rng, rows[~ok])
            rows, a, b = path_edges(nodes)
            eid, _ = self.lookup(a, b)
        return nodes, (rows, a, b, eid), resamples

    def cells_of_flat(self, c):
        return unflat_cell(c, self.k, self.d)

    def _repair(self, u, targets, nodes, interior, cubes, rng, bad_rows):
        g = self.g
        a, b = nodes[:, :-1], nodes[:, 1:]
        step = (a >= 0) & (b >= 0) & (a != b)
        bad = np.zeros_like(step)
        for r in np.unique(bad_rows):
            cols = np.flatnonzero(step[r])
            bad[r, cols] = ~g.has_edges(a[r, cols], b[r, cols])
        resamples = 0
        for r, col in zip(*np.nonzero(bad)):
            for attempt in range(self.max_resample + 1):
                x, y = nodes[r, col], nodes[r, col + 1]
                if x == y or g.has_edges([x], [y])[0]:
                    break
                movable = [c for c in (col, col + 1) if interior[r, c]]
                if not movable or attempt == self.max_resample:
                    raise PathBuildError(
                        u, targets[r], int(col),
                        f"nodes {x} and {y} are not adjacent after {attempt} resamples",
                    )
                for c in movable:
                    nodes[r, c] = self._pick(cubes[r, c - 1], rng.random())
                    resamples += 1
        return resamples


class _FixedRouter(_EdgeIndex):
    """Serves a caller-supplied path for every ordered pair."""

    k = None
    reps = None
    seed = None

    def __init__(self, g, path_map):
        super().__init__(g)
        n = g.n
        width = max((len(p) for p in path_map.values()), default=1)
        self.nodes = {}
        for u in range(n):
            mat = np.full((n - 1, width), -1, dtype=np.int64)
            for r, v in enumerate(np.delete(np.arange(n), u)):
                try:
                    seq = path_map[(u, int(v))]
                except KeyError:
                    raise ValueError(f"no path given for ({u}, {v})") from None
                if len(seq) < 2 or seq[0] != u or seq[-1] != v:
                    raise ValueError(f"path for ({u}, {v}) must run from {u} to {v}: {seq}")
                mat[r, : len(seq)] = seq
            self.nodes[u] = mat

    def source(self, u, targets):
        nodes = self.nodes[int(u)]
        rows, a, b = path_edges(nodes)
        eid, ok = self.lookup(a, b)
        if not ok.all():
            i = int(np.flatnonzero(~ok)[0])
            raise PathBuildError(u, targets[rows[i]], -1, f"nodes {a[i]} and {b[i]} are not adjacent")
        return nodes, (rows, a, b, eid), 0


def path_edges(nodes):
    """(rows, a, b) of every hop in a node matrix, dropping repeats and padding."""
    a, b = nodes[:, :-1], nodes[:, 1:]
    step = (a >= 0) & (b >= 0) & (a != b)
    rows = np.nonzero(step)[0]
    return rows, a[step], b[step]


class PathSystem:
    """Per-edge tallies of a canonical path family, exact or source-sampled."""

    def __init__(self, router, sources, mode):
        self._router = router
        self.g = router.g
        self.k = router.k
        self.reps = router.reps
        self.seed = router.seed
        self.sources = np.asarray(sources, dtype=np.int64)
        self.mode = mode
        self.edges = router.edges
        m = len(self.edges)
        self.Z = np.zeros(m, dtype=np.int64)
        self.sigma = np.zeros(m, dtype=np.float64)
        self.load = np.zeros(m, dtype=np.float64)
        self.load_sq = np.zeros(m, dtype=np.float64)
        self.n_pairs = 0
        self.length_sum = 0
        self.max_length = 0
        self.resamples = 0

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    @property
    def scale(self) -> float:
        """Sources sampled -> whole-population multiplier for additive tallies."""
        return self.g.n / len(self.sources)

    def edge_ids(self, a, b):
        return self._router.lookup(np.asarray(a, np.int64), np.asarray(b, np.int64))[0]

    def source_paths(self, u):
        """(targets, node matrix, lengths) for every path leaving ``u``."""
        targets = np.delete(np.arange(self.g.n), u)
        nodes, hops, _ = self._router.source(u, targets)
        return targets, nodes, self._router.lengths(nodes), hops

    def path(self, u: int, v: int):
        """Node sequence of the canonical path from ``u`` to ``v``."""
        if u == v:
            return []
        targets, nodes, _, _ = self.source_paths(u)
        row = nodes[np.searchsorted(targets, v)]
        seq = [int(x) for x in row if x >= 0]
        return [x for i, x in enumerate(seq) if i == 0 or x != seq[i - 1]]


def build_paths(g, reps, seed=0, pair_budget=None, mode="auto", max_resample=MAX_RESAMPLE,
                exact_cap=EXACT_CAP) -> PathSystem:
    """Construct canonical paths and tally per-edge usage.

    ``mode="exact"`` routes every ordered pair. ``mode="sampled"`` routes all
    paths out of a uniform sample of sources holding at least ``pair_budget``
    pairs, and the tallies are scaled back to the whole population.
    ``"auto"`` chooses exact when ``n <= exact_cap``.
    """
    n = g.n
    if mode == "auto":
        mode = "exact" if n <= exact_cap else "sampled"
    if mode == "exact":
        sources = np.arange(n)
    elif mode == "sampled":
        budget = DEFAULT_PAIRS if pair_budget is None else pair_budget
        ns = min(n, max(2, math.ceil(budget / max(n - 1, 1))))
        rng = np.random.default_rng([int(seed), 0x5A3])
        sources = np.sort(rng.choice(n, size=ns, replace=False))
        if ns == n:
            mode = "exact"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    return _tally(PathSystem(_Router(g, reps, seed, max_resample), sources, mode))


def fixed_paths(g, path_map) -> PathSystem:
    """Exact tallies for explicit paths, ``path_map[(u, v)] = [u, ..., v]`` for every ordered pair."""
    return _tally(PathSystem(_FixedRouter(g, path_map), np.arange(g.n), "exact"))


def _tally(ps):
    g, n, router = ps.g, ps.g.n, ps._router
    deg = g.degrees.astype(np.float64)
    m = len(ps.edges)
    batch = []
    pending = 0

    def flush():
        if not batch:
            return
        eid = np.concatenate([x[0] for x in batch])
        ps.Z += np.bincount(eid, minlength=m)
        ps.sigma += np.bincount(eid, weights=np.concatenate([x[1] for x in batch]), minlength=m)
        ps.load += np.bincount(eid, weights=np.concatenate([x[2] for x in batch]), minlength=m)
        batch.clear()

    for u in ps.sources:
        targets = np.delete(np.arange(n), u)
        nodes, (rows, _, _, eid), res = router.source(u, targets)
        lengths = router.lengths(nodes)
        dd = deg[u] * deg[targets]
        w_sigma = dd[rows]
        w_load = (dd * lengths)[rows]
        batch.append((eid, w_sigma, w_load))
        pending += len(eid)
        if pending >= m:
            flush()
            pending = 0
        if not ps.exact:
            # per-source totals on touched edges, for the standard error
            uniq, inv = np.unique(eid, return_inverse=True)
            ps.load_sq[uniq] += np.bincount(inv, weights=w_load) ** 2
        ps.n_pairs += len(targets)
        ps.length_sum += int(lengths.sum())
        ps.max_length = max(ps.max_length, int(lengths.max()) if len(lengths) else 0)
        ps.resamples += res
    flush()
    return ps


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    mode: str
    edge: tuple
    stderr: float  # 0 in exact mode

    @property
    def exact(self) -> bool:
        return self.mode == "exact"


def compute_rho(g, paths: PathSystem) -> RhoEstimate:
    """max over edges of sum deg(u) deg(v) |path| / (2|E|), scaled up when sampled."""
    if len(paths.edges) == 0:
        return RhoEstimate(0.0, paths.mode, (), 0.0)
    est = paths.load * paths.scale
    e = int(np.argmax(est))
    value = float(est[e]) / (2 * g.edge_count)
    se = 0.0
    if not paths.exact:
        ns = len(paths.sources)
        mean = paths.load[e] / ns
        var = max(paths.load_sq[e] / ns - mean * mean, 0.0) * ns / max(ns - 1, 1)
        se = g.n * math.sqrt(var / ns) / (2 * g.edge_count)
    return RhoEstimate(value, paths.mode, tuple(int(x) for x in paths.edges[e]), se)


def rho_normalizations(rho: float, n: int, d: int) -> dict:
    ln = math.log(n)
    return {
        "rho_over_logn_2d": rho / ln ** (2.0 / d),
        "rho_over_n_logn_2d": rho / (n / ln) ** (2.0 / d),
    }


@dataclass
class EdgeStats:
    edges: np.ndarray
    Z: np.ndarray
    sigma: np.ndarray
    load: np.ndarray
    load_class: np.ndarray  # None for caller-supplied paths
    lam: dict  # (i, j) -> (M+1, M+1) path counts by (class(u), class(v))
    rho: float
    mode: str


EDGE_CLASSES = ("LL", "LH", "HH-same", "HH-adjacent", "HH-far")


def classify_edges(g, reps, edges):
    k, d = reps.k, g.d
    high = reps.high
    cells = cells_of(g.positions, k)
    a, b = edges[:, 0], edges[:, 1]
    nh = high[a].astype(int) + high[b].astype(int)
    diff = (cells[b] - cells[a]) % k
    moved = (diff != 0).sum(axis=1)
    shift = diff.sum(axis=1)
    unit = (moved == 1) & ((shift == 1) | (shift == k - 1))
    out = np.empty(len(edges), dtype=object)
    out[nh == 0] = "LL"
    out[nh == 1] = "LH"
    hh = nh == 2
    out[hh & (moved == 0)] = "HH-same"
    out[hh & unit] = "HH-adjacent"
    out[hh & (moved > 0) & ~unit] = "HH-far"
    return out


def edge_stats(g, paths: PathSystem, partition, lambda_edges=None) -> EdgeStats:
    """Recount Z, sigma and the weighted load by regenerating every path.

    The tallies here are accumulated independently of :func:`build_paths`
    (element-wise adds rather than per-source histograms). ``lambda_edges``
    lists edges for which to break path counts down by the weight classes
    of their endpoints; by default the edge with the largest sigma.
    """
    m = len(paths.edges)
    Z = np.zeros(m, dtype=np.int64)
    sigma = np.zeros(m)
    load = np.zeros(m)
    deg = g.degrees.astype(np.float64)
    cls = partition.classify(g.weights)
    nclass = partition.M + 1
    if lambda_edges is None:
        lambda_edges = [tuple(paths.edges[int(np.argmax(paths.sigma))])] if m else []
    lam_ids = {tuple(int(x) for x in e): int(paths.edge_ids(np.array([e[0]]), np.array([e[1]]))[0])
               for e in lambda_edges}
    lam = {e: np.zeros((nclass, nclass), dtype=np.int64) for e in lam_ids}
    keys = paths.edges[:, 0] * g.n + paths.edges[:, 1]
    for u in paths.sources:
        targets, nodes, lengths, _ = paths.source_paths(u)
        rows, a, b = path_edges(nodes)
        eid = np.searchsorted(keys, np.minimum(a, b) * g.n + np.maximum(a, b))
        dd = deg[u] * deg[targets[rows]]
        np.add.at(Z, eid, 1)
        np.add.at(sigma, eid, dd)
        np.add.at(load, eid, dd * lengths[rows])
        for e, idx in lam_ids.items():
            hit = rows[eid == idx]
            if len(hit):
                np.add.at(lam[e], (np.full(len(hit), cls[u]), cls[targets[hit]]), 1)
    scale = paths.scale
    rho = float((load * scale).max()) / (2 * g.edge_count) if m else 0.0
    classes = None if paths.reps is None else classify_edges(g, paths.reps, paths.edges)
    return EdgeStats(paths.edges, Z, sigma, load, classes, lam, rho, paths.mode)


@dataclass(frozen=True)
class PathValidation:
    n_paths: int
    bad_adjacency: int
    too_long: int
    bad_interior: int
    bad_endpoints: int
    low_low_used: int
    max_length: int
    bound: int

    @property
    def ok(self) -> bool:
        return not (self.bad_adjacency or self.too_long or self.bad_interior
                    or self.bad_endpoints or self.low_low_used)


def validate_paths(g, paths: PathSystem) -> PathValidation:
    """Exhaustive check of every routed path: walk, endpoints, length, interior."""
    bound = g.d * paths.k + 2
    high = paths.reps.high
    n_paths = bad_adj = too_long = bad_int = bad_end = ll = 0
    max_len = 0
    for u in paths.sources:
        targets, nodes, lengths, _ = paths.source_paths(u)
        n_paths += len(targets)
        rows, a, b = path_edges(nodes)
        bad_adj += int((~g.has_edges(a, b)).sum())
        ll += int((~high[a] & ~high[b]).sum())
        too_long += int((lengths > bound).sum())
        max_len = max(max_len, int(lengths.max()) if len(lengths) else 0)
        # first valid node is u, last valid node is the target
        last = nodes[np.arange(len(targets)), (nodes >= 0).sum(axis=1) - 1]
        bad_end += int((nodes[:, 0] != u).sum() + (last != targets).sum())
        inner = nodes[:, 1:].copy()
        inner[np.arange(len(targets)), (nodes >= 0).sum(axis=1) - 2] = -1
        inner_nodes = inner[(inner >= 0) & (inner != u) & (inner != targets[:, None])]
        bad_int += int((~high[inner_nodes]).sum())
    return PathValidation(n_paths, bad_adj, too_long, bad_int, bad_end, ll, max_len, bound)
