"""Line-oriented text persistence for graphs.

::

    GTG v1 n=<n> d=<d> theta=<hex float> seed=<seed> [radius=<hex float>]
    <id> <x_1> ... <x_d> <weight>        (n lines, hex floats)
    <i> <j>                              (edges, i < j, lexicographic)

Hex floats round-trip exactly. An RGG is written with ``theta=none`` and a
``radius`` field. Readers check every structural invariant and, by
default, recompute the edge set from the stored nodes.
"""

import numpy as np

from .generator import from_edges, gtg_edges, rgg_edges

MAGIC = "GTG"
VERSION = "v1"


class GraphFormatError(ValueError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def _hex(x):
    return float(x).hex()


def write_graph(g, path):
    lines = []
    theta = "none" if g.theta is None else _hex(g.theta)
    seed = "none" if g.seed is None else str(int(g.seed))
    header = f"{MAGIC} {VERSION} n={g.n} d={g.d} theta={theta} seed={seed}"
    if g.radius is not None:
        header += f" radius={_hex(g.radius)}"
    lines.append(header)
    for i in range(g.n):
        fields = [_hex(x) for x in g.positions[i]] + [_hex(g.weights[i])]
        lines.append(f"{i} " + " ".join(fields))
    lines.extend(f"{i} {j}" for i, j in g.edges().tolist())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line):
    parts = line.split()
    if len(parts) < 2 or parts[0] != MAGIC:
        raise GraphFormatError(1, "not a graph file")
    if parts[1] != VERSION:
        raise GraphFormatError(1, f"unsupported version {parts[1]!r}")
    fields = {}
    for tok in parts[2:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise GraphFormatError(1, f"malformed header field {tok!r}")
        fields[key] = val
    missing = {"n", "d", "theta", "seed"} - fields.keys()
    if missing:
        raise GraphFormatError(1, f"header lacks {sorted(missing)}")
    unknown = fields.keys() - {"n", "d", "theta", "seed", "radius"}
    if unknown:
        raise GraphFormatError(1, f"unknown header fields {sorted(unknown)}")
    try:
        n, d = int(fields["n"]), int(fields["d"])
        theta = None if fields["theta"] == "none" else float.fromhex(fields["theta"])
        seed = None if fields["seed"] == "none" else int(fields["seed"])
        radius = float.fromhex(fields["radius"]) if "radius" in fields else None
    except ValueError as exc:
        raise GraphFormatError(1, str(exc)) from None
    if n < 1 or d < 1:
        raise GraphFormatError(1, "n and d must be positive")
    if (theta is None) == (radius is None):
        raise GraphFormatError(1, "exactly one of theta and radius must be given")
    return n, d, theta, seed, radius


def read_graph(path, verify_edges=True):
    """Load and validate a graph file."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise GraphFormatError(1, "empty file")
    n, d, theta, seed, radius = _parse_header(raw[0])
    if len(raw) < n + 1:
        raise GraphFormatError(len(raw), f"expected {n} node lines")
    positions = np.empty((n, d))
    weights = np.empty(n)
    for i in range(n):
        line_no = i + 2
        parts = raw[i + 1].split()
        if len(parts) != d + 2:
            raise GraphFormatError(line_no, f"expected {d + 2} fields")
        if parts[0] != str(i):
            raise GraphFormatError(line_no, f"expected node id {i}")
        try:
            vals = [float.fromhex(p) for p in parts[1:]]
        except ValueError as exc:
            raise GraphFormatError(line_no, str(exc)) from None
        positions[i] = vals[:d]
        weights[i] = vals[d]
        if not all(0.0 <= x < 1.0 for x in vals[:d]):
            raise GraphFormatError(line_no, "coordinates must lie in [0, 1)")
        if not (np.isfinite(weights[i]) and weights[i] >= 0.0):
            raise GraphFormatError(line_no, "weight must be finite and non-negative")
    body = [ln for ln in raw[n + 1:] if ln.strip()]
    edges = np.empty((len(body), 2), dtype=np.int64)
    for r, ln in enumerate(body):
        parts = ln.split()
        line_no = n + 2 + r
        if len(parts) != 2:
            raise GraphFormatError(line_no, "edge lines hold two node ids")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(line_no, "edge ids must be integers") from None
        if not 0 <= i < j < n:
            raise GraphFormatError(line_no, f"edge ({i}, {j}) needs 0 <= i < j < n")
        edges[r] = i, j
    if len(edges) > 1:
        prev, cur = edges[:-1], edges[1:]
        order_ok = (prev[:, 0] < cur[:, 0]) | ((prev[:, 0] == cur[:, 0]) & (prev[:, 1] < cur[:, 1]))
        if not order_ok.all():
            bad = int(np.flatnonzero(~order_ok)[0])
            raise GraphFormatError(n + 3 + bad, "edges must be strictly increasing")
    g = from_edges(positions, weights, edges, theta, seed=seed, radius=radius)
    g.check()
    if verify_edges:
        expect = gtg_edges(positions, weights, theta) if theta is not None else rgg_edges(positions, radius)
        if not np.array_equal(expect, edges):
            raise GraphFormatError(n + 2, "stored edges differ from the edge rule applied to the stored nodes")
    return g
