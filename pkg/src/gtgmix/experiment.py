"""Seeded ensembles over graph sizes, per-instance JSON records and scaling fits.

A run is described by a flat ``key=value`` file (``#`` starts a comment)::

    sizes = 512, 1024, 2048, 4096
    d = 2
    c = auto
    weights = exp
    seeds = 10

Every (n, instance) pair becomes one JSON record. Records carry no
timestamps, so identical configurations give byte-identical records;
wall-clock timings go to a sidecar ``run.log``.
"""

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources

import jsonschema
import numpy as np
from scipy.stats import linregress

from . import analysis as an
from . import canonical as cn
from . import mixing as mx
from .generator import GtgConfig, generate_gtg
from .weights import WeightDistribution, admissible_alpha, auto_c

SCHEMA_ID = "gtgmix.record/1"


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto_float(text):
    return None if text.strip().lower() == "auto" else float(text)


@dataclass(frozen=True)
class ExperimentConfig:
    sizes: tuple
    d: int = 2
    c: float = None  # None means auto
    weights: str = "exp"
    alpha: float = None  # None means the admissible alpha of the weights
    seeds: int = 5
    base_seed: int = 0
    delta: float = None  # None means 1/n
    laziness: float = 0.5
    paths: bool = True
    tau: bool = True
    gap: bool = True
    path_exact_cap: int = cn.EXACT_CAP
    mix_exact_cap: int = mx.EXACT_CAP
    pairs: int = cn.DEFAULT_PAIRS
    starts: int = mx.DEFAULT_STARTS
    out: str = "results"
    workers: int = 1
    dist: WeightDistribution = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ConfigError("sizes must not be empty")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("sizes must be strictly ascending")
        if sizes[0] < 3:
            raise ConfigError("sizes must be >= 3")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0.0 <= self.laziness < 1.0:
            raise ConfigError("laziness must lie in [0, 1)")
        if self.c is not None and not self.c > 0:
            raise ConfigError("c must be positive or auto")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1) or be auto")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1) or be auto")
        try:
            dist = WeightDistribution.parse(self.weights)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "dist", dist)

    @property
    def c_value(self) -> float:
        return auto_c(self.dist, self.d) if self.c is None else self.c

    @property
    def alpha_value(self) -> float:
        return admissible_alpha(self.dist) if self.alpha is None else self.alpha

    def instance_seed(self, n, i) -> int:
        """Seed for instance ``i`` at size ``n``, decorrelated across sizes."""
        return int(np.random.SeedSequence([self.base_seed, n, i]).generate_state(1)[0])

    _PARSERS = {
        "sizes": lambda v: tuple(int(x) for x in v.replace(",", " ").split()),
        "d": int, "c": _auto_float, "weights": str.strip, "alpha": _auto_float,
        "seeds": int, "base_seed": int, "delta": _auto_float, "laziness": float,
        "paths": _bool, "tau": _bool, "gap": _bool, "path_exact_cap": int,
        "mix_exact_cap": int, "pairs": int, "starts": int, "out": str.strip, "workers": int,
    }

    @classmethod
    def parse(cls, text, base_dir=None):
        values = {}
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"line {no}: expected key=value")
            if key not in cls._PARSERS:
                raise ConfigError(f"line {no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {no}: duplicate key {key!r}")
            try:
                values[key] = cls._PARSERS[key](val)
            except ValueError as exc:
                raise ConfigError(f"line {no}: bad value for {key}: {exc}") from None
        if "sizes" not in values:
            raise ConfigError("sizes is required")
        if base_dir is not None and "out" in values and not os.path.isabs(values["out"]):
            values["out"] = os.path.join(base_dir, values["out"])
        return cls(**values)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.parse(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))

    def dump(self) -> str:
        out = []
        for f in fields(self):
            if f.name == "dist":
                continue
            v = getattr(self, f.name)
            if f.name == "sizes":
                v = ", ".join(map(str, v))
            elif v is None:
                v = "auto"
            elif isinstance(v, bool):
                v = "on" if v else "off"
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, nan/inf to None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _histogram(values, bins=20, log=False):
    values = np.asarray(values, dtype=np.float64)
    if log:
        values = np.log10(values[values > 0])
    if len(values) == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(values, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def analysis_section(g, dist, alpha):
    n = g.n
    comps = an.connected_components(g)
    k = cn.canonical_grid_side(n, alpha, g.d)
    high, _ = an.high_low_partition(g, alpha, dist)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        occ = an.cube_occupancy(g, k, alpha, dist)
    lo, hi = occ.band(n)
    hh = an.adjacent_cube_hh_edges(g, k, high)
    deg = an.degree_report(g, dist)
    return {
        "connected": comps.connected,
        "components": comps.count,
        "min_deg": deg.min_deg,
        "max_deg": deg.max_deg,
        "edges": g.edge_count,
        "edge_ratio": an.edge_count_ratio(g),
        "k": k,
        "occupancy_min": lo,
        "occupancy_max": hi,
        "hh_complete": hh.complete,
        "hh_violations": hh.violations,
        "degree_c1": deg.c1,
        "degree_c2": deg.c2,
        "degree_within": deg.within,
        "degree_histogram": _histogram(g.degrees),
    }


def build_canonical(g, dist, alpha, seed, mode="auto", pairs=None, exact_cap=cn.EXACT_CAP):
    """Grid side, representatives and path tallies for one graph."""
    k = cn.canonical_grid_side(g.n, alpha, g.d)
    high, low = an.high_low_partition(g, alpha, dist)
    reps = cn.assign_representatives(g, k, high, low, np.random.default_rng([seed, 1]))
    return cn.build_paths(g, reps, seed=seed, pair_budget=pairs, mode=mode, exact_cap=exact_cap)


def paths_section(g, ps):
    rho = cn.compute_rho(g, ps)
    return rho, {
        "mode": ps.mode,
        "k": ps.k,
        "rho": rho.value,
        "rho_stderr": rho.stderr,
        "max_Z": float(ps.Z.max() * ps.scale) if len(ps.Z) else 0.0,
        "max_length": ps.max_length,
        "resamples": ps.resamples,
        "pairs": ps.n_pairs,
        **cn.rho_normalizations(rho.value, g.n, g.d),
        "load_histogram": _histogram(ps.load * ps.scale, bins=30, log=True),
    }


def mixing_section(g, rho, delta=None, laziness=0.5, tau=True, gap=True,
                   exact_cap=mx.EXACT_CAP, starts=mx.DEFAULT_STARTS, seed=0):
    """Mixing measurements plus the congestion bound.

    ``bound`` uses the congestion of the walk actually run, rho / (1 - laziness);
    ``bound_raw`` is the unadjusted rho (ln(1/pi_min) + ln(1/delta)).
    """
    delta = mx.default_delta(g.n) if delta is None else delta
    pi_min = float(mx.stationary(g).min())
    out = {"delta": delta, "laziness": laziness, "tau": None, "tau_mode": None, "gap": None,
           "pi_min": pi_min, "bound": None, "bound_raw": None, "bound_satisfied": None}
    if tau:
        rep = mx.mixing_time(g, delta=delta, laziness=laziness, exact_cap=exact_cap,
                             n_starts=starts, seed=seed)
        out["tau"], out["tau_mode"] = int(rep.tau), rep.mode
    if gap:
        out["gap"] = mx.spectral_gap(g, laziness=laziness).gap
    if rho is not None:
        raw = mx.canonical_bound(rho.value, pi_min, delta)
        out["bound_raw"] = raw
        out["bound"] = raw / (1.0 - laziness)
        if out["tau"] is not None:
            out["bound_satisfied"] = out["tau"] <= out["bound"]
    return out


def run_instance(cfg: ExperimentConfig, n: int, i: int):
    """One record; failures are captured in the record rather than raised."""
    seed = cfg.instance_seed(n, i)
    dist, alpha, c = cfg.dist, cfg.alpha_value, cfg.c_value
    rec = {
        "schema": SCHEMA_ID, "n": n, "d": cfg.d, "c": c,
        "c_mode": "auto" if cfg.c is None else "fixed", "weights": dist.spec(),
        "alpha": alpha, "seed": seed, "instance": i, "theta": None, "status": "ok",
        "error": None, "analysis": None, "paths": None, "mixing": None,
    }
    timings = {}
    stage = "generate"
    try:
        t0 = time.perf_counter()
        g = generate_gtg(GtgConfig(n=n, d=cfg.d, c=c, dist=dist, alpha=alpha, seed=seed))
        rec["theta"] = g.theta
        timings[stage] = time.perf_counter() - t0
        stage = "analyze"
        t0 = time.perf_counter()
        rec["analysis"] = analysis_section(g, dist, alpha)
        timings[stage] = time.perf_counter() - t0
        if rec["analysis"]["connected"]:
            rho = None
            if cfg.paths:
                stage = "paths"
                t0 = time.perf_counter()
                ps = build_canonical(g, dist, alpha, seed, pairs=cfg.pairs, exact_cap=cfg.path_exact_cap)
                rho, rec["paths"] = paths_section(g, ps)
                timings[stage] = time.perf_counter() - t0
            if cfg.tau or cfg.gap:
                stage = "mix"
                t0 = time.perf_counter()
                rec["mixing"] = mixing_section(g, rho, cfg.delta, cfg.laziness, cfg.tau, cfg.gap,
                                               cfg.mix_exact_cap, cfg.starts, seed)
                timings[stage] = time.perf_counter() - t0
    except (cn.RepresentativeError, cn.PathBuildError, mx.MixingTimeout, RuntimeError, ValueError) as exc:
        rec["status"] = "error"
        rec["error"] = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
    return _clean(rec), timings


def _validator():
    schema = json.loads(resources.files("gtgmix").joinpath("schemas/record.schema.json").read_text())
    return jsonschema.Draft202012Validator(schema)


def validate_record(rec):
    """Raise ``jsonschema.ValidationError`` unless ``rec`` is a current-version record."""
    if rec.get("schema") != SCHEMA_ID:
        raise jsonschema.ValidationError(f"unknown record version {rec.get('schema')!r}")
    _validator().validate(rec)


def dump_record(rec) -> str:
    return json.dumps(rec, sort_keys=True, indent=1) + "\n"


def load_records(directory):
    """Every ``*.json`` record under ``directory/records``, validated, in file-name order."""
    rdir = os.path.join(directory, "records")
    if not os.path.isdir(rdir):
        return []
    out = []
    v = _validator()
    for name in sorted(os.listdir(rdir)):
        if name.endswith(".json"):
            with open(os.path.join(rdir, name)) as fh:
                rec = json.load(fh)
            if rec.get("schema") != SCHEMA_ID:
                raise jsonschema.ValidationError(f"{name}: unknown record version {rec.get('schema')!r}")
            v.validate(rec)
            out.append(rec)
    return out


@dataclass
class EnsembleResult:
    records: list
    failures: int
    out: str


SUMMARY_COLUMNS = [
    "n", "instance", "seed", "status", "connected", "components", "min_deg", "max_deg",
    "edge_ratio", "occupancy_min", "occupancy_max", "hh_complete", "rho", "rho_mode",
    "tau", "tau_mode", "gap", "bound", "bound_satisfied",
]


def _summary_row(rec):
    a = rec["analysis"] or {}
    p = rec["paths"] or {}
    m = rec["mixing"] or {}
    return [rec["n"], rec["instance"], rec["seed"], rec["status"], a.get("connected"),
            a.get("components"), a.get("min_deg"), a.get("max_deg"), a.get("edge_ratio"),
            a.get("occupancy_min"), a.get("occupancy_max"), a.get("hh_complete"), p.get("rho"),
            p.get("mode"), m.get("tau"), m.get("tau_mode"), m.get("gap"), m.get("bound"),
            m.get("bound_satisfied")]


def _job(args):
    cfg, n, i = args
    return run_instance(cfg, n, i)


def run_ensemble(cfg: ExperimentConfig, write=True) -> EnsembleResult:
    """Run every (n, instance) of ``cfg``; records come back in (n, instance) order."""
    jobs = [(cfg, n, i) for n in cfg.sizes for i in range(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    records = [r for r, _ in results]
    for r in records:
        validate_record(r)
    failures = sum(r["status"] != "ok" for r in records)
    if write:
        _write_outputs(cfg, jobs, results)
    return EnsembleResult(records, failures, cfg.out)


def _write_outputs(cfg, jobs, results):
    rdir = os.path.join(cfg.out, "records")
    os.makedirs(rdir, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.dump())
    width = len(str(cfg.sizes[-1]))
    iw = len(str(cfg.seeds - 1))
    with open(os.path.join(cfg.out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for (_, n, i), (rec, _) in zip(jobs, results):
            with open(os.path.join(rdir, f"n{n:0{width}d}_s{i:0{iw}d}.json"), "w") as rf:
                rf.write(dump_record(rec))
            w.writerow(_summary_row(rec))
    fits = {}
    for metric in ("tau", "relaxation"):
        try:
            fits[metric] = fit_scaling([r for r, _ in results], metric=metric).as_dict()
        except ValueError as exc:
            fits[metric] = {"error": str(exc)}
    with open(os.path.join(cfg.out, "fits.json"), "w") as fh:
        json.dump(_clean(fits), fh, sort_keys=True, indent=1)
        fh.write("\n")
    # wall-clock data lives only in this sidecar
    with open(os.path.join(cfg.out, "run.log"), "w") as fh:
        fh.write(f"finished {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        for (_, n, i), (rec, timings) in zip(jobs, results):
            parts = " ".join(f"{k}={v:.3f}s" for k, v in timings.items())
            fh.write(f"n={n} instance={i} status={rec['status']} {parts}\n")


@dataclass(frozen=True)
class ScalingFit:
    metric: str  # "tau" or "relaxation" (1/gap)
    exponent: float
    stderr: float
    r2: float
    intercept: float
    prediction: float  # 2/d
    sizes: tuple
    medians: tuple

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _metric(rec, metric):
    m = rec.get("mixing") or {}
    if metric == "tau":
        return m.get("tau")
    if metric == "relaxation":
        gap = m.get("gap")
        return None if not gap else 1.0 / gap
    raise ValueError(f"unknown metric {metric!r}")


def fit_scaling(records, metric="tau", min_sizes=4, min_seeds=5) -> ScalingFit:
    """Least-squares slope of ln(median metric) against ln n.

    Only successful records with the metric present count. Every size must
    carry at least ``min_seeds`` of them, and there must be ``min_sizes``
    sizes.
    """
    by_n = {}
    d = None
    for rec in records:
        if rec.get("status", "ok") != "ok":
            continue
        val = _metric(rec, metric)
        if val is None:
            continue
        by_n.setdefault(int(rec["n"]), []).append(float(val))
        d = rec.get("d", d)
    sizes = sorted(by_n)
    if len(sizes) < min_sizes:
        raise ValueError(f"need >= {min_sizes} sizes with {metric} data, have {len(sizes)}")
    thin = [n for n in sizes if len(by_n[n]) < min_seeds]
    if thin:
        raise ValueError(f"sizes {thin} have fewer than {min_seeds} seeds")
    med = [float(np.median(by_n[n])) for n in sizes]
    fit = linregress(np.log(sizes), np.log(med))
    return ScalingFit(metric, float(fit.slope), float(fit.stderr), float(fit.rvalue**2),
                      float(fit.intercept), 2.0 / d if d else math.nan, tuple(sizes), tuple(med))


def emit_plots(records, out_dir):
    """Vector plots of an ensemble; returns the paths written."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records:
        warnings.warn("no records; no plots written", stacklevel=2)
        return []
    os.makedirs(out_dir, exist_ok=True)
    written = []
    plt.rcParams["svg.fonttype"] = "none"
    plt.rcParams["svg.hashsalt"] = "gtgmix"

    for metric, label, fname in (("tau", "mixing time tau(1/n)", "tau_vs_n.svg"),
                                 ("relaxation", "relaxation time 1/gap", "relaxation_vs_n.svg")):
        pts = [(r["n"], _metric(r, metric)) for r in records
               if r.get("status") == "ok" and _metric(r, metric) is not None]
        if not pts:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        ns, vals = zip(*pts)
        ax.scatter(ns, vals, s=12, alpha=0.6, label="instances")
        try:
            fit = fit_scaling(records, metric)
        except ValueError:
            fit = None
        if fit is not None:
            xs = np.array([fit.sizes[0], fit.sizes[-1]], dtype=float)
            ax.plot(xs, np.exp(fit.intercept) * xs**fit.exponent, "k-",
                    label=f"slope {fit.exponent:.3f} +/- {fit.stderr:.3f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel(label)
        ax.legend()
        path = os.path.join(out_dir, fname)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    for section, key, xlabel, fname in (
        ("analysis", "degree_histogram", "degree", "degree_hist.svg"),
        ("paths", "load_histogram", "log10 weighted edge load", "load_hist.svg"),
    ):
        hists = {}
        for r in records:
            sec = r.get(section)
            if sec and sec[key]["counts"]:
                hists.setdefault(r["n"], sec[key])
        if not hists:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        for n, h in sorted(hists.items()):
            ax.stairs(h["counts"], h["edges"], label=f"n={n}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count (first instance per n)")
        ax.legend(fontsize="small")
        path = os.path.join(out_dir, fname)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
