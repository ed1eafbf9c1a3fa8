"""Random walk mixing: total-variation mixing times and spectral gaps.

The walk moves from ``x`` to a uniform neighbour. With laziness ``a`` it
first stays put with probability ``a``. By default a = 1/2, which makes
every eigenvalue non-negative, so the walk is aperiodic.

Distributions are row vectors, and one step maps s to a s + (1 - a) A (s / deg).
Total variation to stationarity never increases along a trajectory. So
the mixing time from ``x`` is the first t with TV <= delta, and the mixing
time of the graph is the first t at which every start is within delta.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import eigsh

from .analysis import gather_neighbors

EXACT_CAP = 2000
DEFAULT_STARTS = 64
DEFAULT_MAX_STEPS = 100_000


class MixingTimeout(RuntimeError):
    """The walk did not come within delta of stationarity in time."""

    def __init__(self, steps, last_tv, delta):
        self.steps, self.last_tv, self.delta = steps, float(last_tv), delta
        super().__init__(f"TV still {self.last_tv:.3e} > delta={delta:.3e} after {steps} steps")


def stationary(g):
    """pi(x) = deg(x) / 2|E|."""
    if g.edge_count == 0:
        raise ValueError("the walk needs at least one edge")
    return g.degrees / (2.0 * g.edge_count)


def _check_walkable(g, laziness=0.5):
    if np.any(g.degrees == 0):
        raise ValueError(f"{int((g.degrees == 0).sum())} isolated nodes; the walk is undefined")
    if not 0.0 <= laziness < 1.0:
        raise ValueError("laziness must lie in [0, 1)")
    if laziness == 0.0 and is_bipartite(g):
        raise ValueError("the non-lazy walk on a bipartite graph is periodic")


def is_bipartite(g) -> bool:
    """Two-colour every component by breadth-first search."""
    colour = np.full(g.n, -1, dtype=np.int64)
    for s in range(g.n):
        if colour[s] >= 0:
            continue
        colour[s] = 0
        frontier = np.array([s])
        while len(frontier):
            nb = gather_neighbors(g, frontier)
            src = np.repeat(frontier, g.degrees[frontier])
            if np.any(colour[nb] == colour[src]):
                return False
            fresh = np.unique(nb[colour[nb] < 0])
            colour[fresh] = 1 - colour[src[0]] if len(src) else 0
            frontier = fresh
    return True


def step(g, s, laziness=0.5):
    """One step of the walk on a distribution ``s`` (n,) or a stack of them (n, B)."""
    s = np.asarray(s, dtype=np.float64)
    deg = g.degrees.astype(np.float64)
    scaled = s / (deg if s.ndim == 1 else deg[:, None])
    return laziness * s + (1.0 - laziness) * (g.adjacency_matrix() @ scaled)


def variational_distance(p, q, axis=0):
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=axis)


def default_delta(n):
    return 1.0 / n


def mixing_time_from(g, start, delta=None, laziness=0.5, max_steps=DEFAULT_MAX_STEPS,
                     trace=False):
    """First t with TV(P^t(start, .), pi) <= delta, by stepping.

    Raises :class:`MixingTimeout` when ``max_steps`` pass without reaching
    ``delta``, as happens on a disconnected graph. With ``trace=True``,
    returns ``(t, tvs)``, where ``tvs[t]`` is the distance after t steps.
    """
    _check_walkable(g, laziness)
    delta = default_delta(g.n) if delta is None else delta
    pi = stationary(g)
    s = np.zeros(g.n)
    s[start] = 1.0
    tvs = [variational_distance(s, pi)]
    t = 0
    while tvs[-1] > delta:
        if t >= max_steps:
            raise MixingTimeout(t, tvs[-1], delta)
        s = step(g, s, laziness)
        t += 1
        tvs.append(variational_distance(s, pi))
    return (t, np.array(tvs)) if trace else t


def dense_transition(g, laziness=0.5):
    """Dense transition matrix; the reference for small graphs."""
    _check_walkable(g, laziness)
    a = g.adjacency_matrix().toarray()
    return laziness * np.eye(g.n) + (1.0 - laziness) * a / g.degrees[:, None]


def _first_crossings(P, pi, delta, max_steps):
    """Per-row first t with TV(P^t(x, .), pi) <= delta, by binary lifting.

    Powers P^(2^j) are built by squaring until every row is within
    ``delta``; each row is then advanced greedily from the largest power
    down, staying strictly above ``delta``.
    """
    n = P.shape[0]
    powers = [P]
    while (worst := variational_distance(powers[-1], pi[None, :], axis=1).max()) > delta:
        if 2 ** len(powers) > max_steps:
            raise MixingTimeout(2 ** (len(powers) - 1), worst, delta)
        powers.append(powers[-1] @ powers[-1])
    cur = np.eye(n)
    t = np.zeros(n, dtype=np.int64)
    live = variational_distance(cur, pi[None, :], axis=1) > delta
    for j in range(len(powers) - 1, -1, -1):
        idx = np.flatnonzero(live)
        if len(idx) == 0:
            break
        cand = cur[idx] @ powers[j]
        above = variational_distance(cand, pi[None, :], axis=1) > delta
        keep = idx[above]
        cur[keep] = cand[above]
        t[keep] += 2**j
    # rows still above delta need exactly one more step; rows never above need none
    return np.where(live, t + 1, 0)


@dataclass(frozen=True)
class MixingReport:
    tau: float  # max over the starts considered
    starts: np.ndarray
    taus: np.ndarray
    mode: str  # "exact" over every start or "sampled"
    delta: float
    laziness: float

    @property
    def exact(self) -> bool:
        return self.mode == "exact"


def mixing_time(g, delta=None, laziness=0.5, mode="auto", n_starts=DEFAULT_STARTS, seed=0,
                max_steps=DEFAULT_MAX_STEPS, exact_cap=EXACT_CAP) -> MixingReport:
    """tau(delta) = max over starts x of the first t with TV <= delta.

    Exact mode uses every start, through dense matrix powers. Sampled mode
    steps ``n_starts`` uniform starts plus the minimum- and maximum-degree
    nodes, so its ``tau`` is a lower estimate of the true maximum.
    """
    _check_walkable(g, laziness)
    delta = default_delta(g.n) if delta is None else delta
    if mode == "auto":
        mode = "exact" if g.n <= exact_cap else "sampled"
    pi = stationary(g)
    if mode == "exact":
        taus = _first_crossings(dense_transition(g, laziness), pi, delta, max_steps)
        starts = np.arange(g.n)
        return MixingReport(float(taus.max()), starts, taus, "exact", delta, laziness)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(g.n, size=min(n_starts, g.n), replace=False)
    extra = [int(np.argmin(g.degrees)), int(np.argmax(g.degrees))]
    starts = np.unique(np.concatenate([picks, extra]))
    s = np.zeros((g.n, len(starts)))
    s[starts, np.arange(len(starts))] = 1.0
    taus = np.full(len(starts), np.inf)
    t = 0
    while True:
        tv = variational_distance(s, pi[:, None], axis=0)
        newly = (tv <= delta) & np.isinf(taus)
        taus[newly] = t
        if not np.isinf(taus).any():
            break
        if t >= max_steps:
            raise MixingTimeout(t, tv[np.isinf(taus)].max(), delta)
        s = step(g, s, laziness)
        t += 1
    return MixingReport(float(taus.max()), starts, taus.astype(np.int64), "sampled", delta, laziness)


@dataclass(frozen=True)
class SpectralGap:
    gap: float  # 1 - lambda_2 of the (lazy) walk
    lambda2: float
    lambda_min: float  # smallest eigenvalue found, nan if not computed
    iterations: int
    method: str
    laziness: float

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.gap

    @property
    def absolute_gap(self) -> float:
        """1 - max(|lambda_2|, |lambda_min|); equals ``gap`` when laziness >= 1/2."""
        if math.isnan(self.lambda_min):
            return self.gap
        return 1.0 - max(abs(self.lambda2), abs(self.lambda_min))


def _normalized_adjacency(g):
    inv = diags(1.0 / np.sqrt(g.degrees.astype(np.float64)))
    return inv @ g.adjacency_matrix().astype(np.float64) @ inv


def spectral_gap(g, laziness=0.5, method="power", tol=1e-8, block=None, max_iter=20_000,
                 seed=0) -> SpectralGap:
    """Spectral gap of the walk.

    ``method="power"`` runs block power iteration on (I + N) / 2, where
    N = D^-1/2 A D^-1/2, projecting out the top eigenvector sqrt(pi) and
    taking Rayleigh-Ritz values. It stops when the leading Ritz value moves
    less than ``tol * gap`` in an iteration. ``method="lanczos"`` uses
    ARPACK and serves as the cross-check.
    """
    _check_walkable(g, laziness)
    n = g.n
    N = _normalized_adjacency(g)
    top = np.sqrt(stationary(g))
    if n < 3:
        lam = np.linalg.eigvalsh(N.toarray())
        l2, lmin, iters = lam[-2] if n > 1 else 0.0, lam[0], 0
        method = "dense"
    elif method == "lanczos":
        l2, lmin, iters = _lanczos(N, top, n)
    elif method == "power":
        l2, iters = _block_power(N, top, n, tol, block or 2 * g.d + 2, max_iter, seed)
        lmin = math.nan
    else:
        raise ValueError(f"unknown method {method!r}")
    lam2 = laziness + (1.0 - laziness) * l2
    lam_min = laziness + (1.0 - laziness) * lmin if not math.isnan(lmin) else math.nan
    return SpectralGap(1.0 - lam2, lam2, lam_min, iters, method, laziness)


def _lanczos(N, top, n):
    if n <= 50:
        lam = np.linalg.eigvalsh(N.toarray())
        return float(lam[-2]), float(lam[0]), 0
    hi = eigsh(N, k=2, which="LA", return_eigenvectors=False, tol=1e-12)
    lo = eigsh(N, k=1, which="SA", return_eigenvectors=False, tol=1e-12)
    return float(np.sort(hi)[0]), float(lo[0]), 0


def _block_power(N, top, n, tol, block, max_iter, seed):
    block = min(block, n - 1)
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, block))

    def deflate(X):
        return X - np.outer(top, top @ X)

    Q, _ = np.linalg.qr(deflate(Q))
    prev = None
    for it in range(1, max_iter + 1):
        Z = deflate(0.5 * (Q + N @ Q))
        Q, _ = np.linalg.qr(Z)
        T = Q.T @ (0.5 * (Q + N @ Q))
        ritz = np.linalg.eigvalsh(0.5 * (T + T.T))
        mu = float(ritz[-1])
        lam = 2.0 * mu - 1.0
        if prev is not None and abs(lam - prev) < tol * max(1.0 - lam, 1e-15):
            return lam, it
        prev = lam
    resid = np.linalg.norm(deflate(0.5 * (Q + N @ Q)) - Q @ T)
    raise RuntimeError(f"block power iteration did not converge in {max_iter} iterations "
                       f"(residual {resid:.3e})")


def canonical_bound(rho, pi_min, delta):
    """rho (ln(1/pi_min) + ln(1/delta))."""
    return rho * (math.log(1.0 / pi_min) + math.log(1.0 / delta))


def relaxation_upper(gap, pi_min, delta):
    """(1/gap)(ln(1/pi_min)/2 + ln(1/delta)) + 1, an upper bound on tau(delta)."""
    return (0.5 * math.log(1.0 / pi_min) + math.log(1.0 / delta)) / gap + 1.0


def relaxation_lower(gap, delta):
    """(1/gap - 1) ln(1/(2 delta)), a lower bound on tau(delta) for delta < 1/2."""
    return (1.0 / gap - 1.0) * math.log(1.0 / (2.0 * delta))
