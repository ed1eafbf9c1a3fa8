"""Node weight distributions and the weight-class machinery built on them.

Three families are supported: ``exp`` (f(w) = e^{-w}), ``pareto:<gamma>``
(F(x) = 1 - x^{-gamma} on x >= 1) and ``const:<w0>``. The constant family is
not continuous; it exists to reduce a GTG to an RGG for baseline runs.

Upper-tail quantiles go through :meth:`WeightDistribution.isf` rather than
``quantile(1 - q)`` so that tail probabilities like 1/(n omega) keep full
precision.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

KINDS = ("exp", "pareto", "const")


@dataclass(frozen=True)
class WeightDistribution:
    kind: str
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight distribution {self.kind!r}")
        if self.kind == "pareto" and not self.param > 1.0:
            raise ValueError("pareto needs gamma > 1 for a finite mean")
        if self.kind == "const" and not self.param >= 0.0:
            raise ValueError("constant weight must be >= 0")

    @classmethod
    def exponential(cls):
        return cls("exp")

    @classmethod
    def pareto(cls, gamma: float):
        return cls("pareto", float(gamma))

    @classmethod
    def constant(cls, w0: float):
        return cls("const", float(w0))

    @classmethod
    def parse(cls, spec: str):
        """Parse ``exp``, ``pareto:<gamma>`` or ``const:<w0>``."""
        name, _, arg = spec.strip().partition(":")
        if name == "exp" and not arg:
            return cls.exponential()
        if name in ("pareto", "const") and arg:
            try:
                value = float(arg)
            except ValueError:
                raise ValueError(f"bad parameter in weight spec {spec!r}") from None
            return cls(name, value)
        raise ValueError(f"bad weight spec {spec!r}; expected exp, pareto:<gamma> or const:<w0>")

    def spec(self) -> str:
        if self.kind == "exp":
            return "exp"
        return f"{self.kind}:{self.param:g}"

    @property
    def gamma(self) -> float:
        if self.kind != "pareto":
            raise AttributeError("only pareto has gamma")
        return self.param

    @property
    def mean(self) -> float:
        if self.kind == "exp":
            return 1.0
        if self.kind == "pareto":
            return self.param / (self.param - 1.0)
        return self.param

    @property
    def support_min(self) -> float:
        return {"exp": 0.0, "pareto": 1.0, "const": self.param}[self.kind]

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "exp":
            out = -np.expm1(-np.maximum(x, 0.0))
        elif self.kind == "pareto":
            with np.errstate(divide="ignore"):
                out = np.where(x >= 1.0, -np.expm1(-self.param * np.log(np.maximum(x, 1.0))), 0.0)
        else:
            out = np.where(x >= self.param, 1.0, 0.0)
        return out[()] if out.ndim == 0 else out

    def quantile(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any(p < 0.0) or np.any(p >= 1.0):
            raise ValueError("quantile needs p in [0, 1); the support is unbounded at p = 1")
        if self.kind == "exp":
            out = -np.log1p(-p)
        elif self.kind == "pareto":
            out = np.exp(-np.log1p(-p) / self.param)
        else:
            out = np.full_like(p, self.param)
        return out[()] if out.ndim == 0 else out

    def isf(self, q):
        """Upper-tail quantile F^{-1}(1 - q); ``q >= 1`` gives the support minimum."""
        q = np.asarray(q, dtype=np.float64)
        if np.any(q <= 0.0):
            raise ValueError("isf needs q > 0")
        qc = np.minimum(q, 1.0)
        if self.kind == "exp":
            out = -np.log(qc)
        elif self.kind == "pareto":
            out = qc ** (-1.0 / self.param)
        else:
            out = np.full_like(qc, self.param)
        return out[()] if out.ndim == 0 else out

    def sample(self, rng, size=None):
        """Inverse-transform draws ``quantile(u)`` with ``u ~ U[0, 1)``."""
        u = rng.random(size)
        return self.quantile(u)

    def default_nu(self, d: int) -> float:
        """Tail-decay margin: P[W >= x] = O(x^{-(d + nu)})."""
        if self.kind == "pareto":
            nu = self.param - d
            if nu <= 0:
                raise ValueError(f"pareto gamma={self.param} does not decay faster than x^-{d}")
            return nu
        return float(d)


def default_omega(n: int) -> float:
    """Slowly growing omega(n) = ln ln n, clamped to at least 2."""
    if n < 3:
        return 2.0
    return max(2.0, math.log(math.log(n)))


def default_epsilon(nu: float, d: int) -> float:
    return min(0.1, 0.9 * nu / (2 * d))


def max_weight_bounds(dist: WeightDistribution, n: int, omega: float):
    """Bracket (W1, W2) for the largest of ``n`` weights."""
    if omega <= 1.0:
        raise ValueError("omega must exceed 1")
    if omega / n >= 1.0:
        raise ValueError(f"omega/n = {omega / n:g} must be < 1")
    w1 = float(dist.isf(omega / n))
    w2 = float(dist.isf(1.0 / (n * omega)))
    return w1, w2


@dataclass(frozen=True)
class WeightPartition:
    alpha: float
    epsilon: float
    nu: float
    endpoints: tuple  # a_0 > a_1 > ... > a_M
    low_cutoff: float

    @property
    def M(self) -> int:
        return len(self.endpoints) - 1

    def classify(self, w):
        """0 for the low class B, k for A_k = (a_k, a_{k-1}].

        Weights above a_0 land in A_1.
        """
        w = np.asarray(w, dtype=np.float64)
        out = np.zeros(w.shape, dtype=np.int64)
        if self.M > 0:
            asc = np.asarray(self.endpoints[::-1])  # a_M, ..., a_0
            # index of the first ascending endpoint >= w
            pos = np.searchsorted(asc, w, side="left")
            k = self.M + 1 - pos
            out = np.where(w > self.low_cutoff, np.clip(k, 1, self.M), 0)
        return out[()] if out.ndim == 0 else out

    def label(self, cls: int) -> str:
        return "B" if cls == 0 else f"A{cls}"


def build_partition(dist, n, alpha, *, d, epsilon=None, nu=None, omega=None, max_iter=10_000):
    """Descending endpoints a_0 = W2, a_k = max(F^{-1}(1 - a_{k-1}^{-(1+eps)}), cutoff)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    nu = dist.default_nu(d) if nu is None else nu
    epsilon = default_epsilon(nu, d) if epsilon is None else epsilon
    if not 0.0 < epsilon < nu / (2 * d):
        raise ValueError(f"need 0 < epsilon < nu/(2d) = {nu / (2 * d):g}, got {epsilon:g}")
    omega = default_omega(n) if omega is None else omega
    cutoff = float(dist.isf(alpha))
    _, w2 = max_weight_bounds(dist, n, omega)
    ends = [max(w2, cutoff)]
    while ends[-1] > cutoff:
        if len(ends) > max_iter:
            raise RuntimeError(f"partition did not reach the cutoff after {max_iter} steps")
        prev = ends[-1]
        nxt = max(float(dist.isf(prev ** -(1.0 + epsilon))), cutoff)
        if nxt >= prev:
            raise RuntimeError(
                f"partition endpoints stopped decreasing at a={prev:g} (next {nxt:g}); "
                f"epsilon={epsilon:g} too large for {dist.spec()}"
            )
        ends.append(nxt)
    return WeightPartition(alpha, epsilon, nu, tuple(ends), cutoff)


def _sup(f, lo, hi, endpoints=()):
    res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    best_x, best = float(res.x), -float(res.fun)
    for x in endpoints:
        v = f(x)
        if v > best:
            best_x, best = x, v
    return best, best_x


_TINY = 1e-12


def _high_side(dist):
    # sup over alpha in (0, 1/2] of alpha * F^{-1}(1 - alpha)
    return _sup(lambda a: a * float(dist.isf(a)), _TINY, 0.5, endpoints=(0.5,))


def _low_side(dist):
    # sup over alpha in [1/2, 1) of (1 - alpha) * F^{-1}(1 - alpha)
    return _sup(lambda a: (1.0 - a) * float(dist.isf(a)), 0.5, 1.0 - _TINY, endpoints=(0.5,))


def admissible_alpha(dist: WeightDistribution) -> float:
    """The alpha maximising min(alpha, 1 - alpha) F^{-1}(1 - alpha)."""
    hv, ha = _high_side(dist)
    lv, la = _low_side(dist)
    return ha if hv >= lv else la


def admissible_c(dist: WeightDistribution, d: int, *, prefactor="diagonal", combine="sup") -> float:
    """Largest threshold constant for which adjacent-cube high nodes are all joined.

    ``combine="sup"`` (default) takes sup over alpha of min(alpha, 1-alpha)
    F^{-1}(1-alpha), which gives 1/(5e) for exponential weights at d = 2.
    ``combine="min"`` is the literal min of the two half-interval sups.
    ``prefactor`` is ``"diagonal"`` for (d+3)^{-d/2}, from the largest distance
    sqrt(d+3)/k between points of adjacent cubes, or ``"linear"`` for 1/(d+3).
    """
    hv, _ = _high_side(dist)
    lv, _ = _low_side(dist)
    if combine == "sup":
        core = max(hv, lv)
    elif combine == "min":
        core = min(hv, lv)
    else:
        raise ValueError(f"unknown combine {combine!r}")
    if prefactor == "diagonal":
        scale = (d + 3) ** (-d / 2)
    elif prefactor == "linear":
        scale = 1.0 / (d + 3)
    else:
        raise ValueError(f"unknown prefactor {prefactor!r}")
    return scale * core


def connectivity_c_bound(dist: WeightDistribution) -> float:
    """sup over alpha in (0, 1) of alpha F^{-1}(1 - alpha) / 4."""
    val, _ = _sup(lambda a: a * float(dist.isf(a)), _TINY, 1.0, endpoints=(1.0,))
    return val / 4.0


def effective_c_bound(dist: WeightDistribution, d: int) -> float:
    return min(connectivity_c_bound(dist), admissible_c(dist, d))


def auto_c(dist: WeightDistribution, d: int, factor: float = 0.9) -> float:
    return factor * effective_c_bound(dist, d)
