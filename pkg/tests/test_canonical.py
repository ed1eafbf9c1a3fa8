import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtgmix import analysis as an
from gtgmix import canonical as cn
from gtgmix.geometry import cells_of, flat_cell
from gtgmix.weights import admissible_alpha, build_partition

from conftest import EXP, complete, graph_from_edges


def test_grid_path_examples():
    assert cn.grid_path((1, 2), (1, 2), 4) == [(1, 2)]
    assert cn.grid_path((0, 0), (2, 3), 4) == [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (2, 3)]
    assert cn.grid_path((2,), (1,), 3) == [(2,), (0,), (1,)]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.data())
def test_grid_path_properties(k, d, data):
    a = tuple(data.draw(st.lists(st.integers(0, k - 1), min_size=d, max_size=d)))
    b = tuple(data.draw(st.lists(st.integers(0, k - 1), min_size=d, max_size=d)))
    path = cn.grid_path(a, b, k)
    assert path[0] == a and path[-1] == b
    assert len(path) - 1 <= d * (k - 1)
    assert len(path) - 1 == sum((bi - ai) % k for ai, bi in zip(a, b))
    last_axis = -1
    for p, q in zip(path, path[1:]):
        diff = [(qi - pi) % k for pi, qi in zip(p, q)]
        moved = [i for i, x in enumerate(diff) if x]
        assert len(moved) == 1 and diff[moved[0]] == 1
        # coordinates are raised in order
        assert moved[0] >= last_axis
        last_axis = moved[0]


def _load_by_enumeration(k, d):
    load = {}
    cells = list(itertools.product(range(k), repeat=d))
    for a in cells:
        for b in cells:
            path = cn.grid_path(a, b, k)
            for p, q in zip(path, path[1:]):
                load[(p, q)] = load.get((p, q), 0) + 1
    return max(load.values(), default=0)


def test_grid_edge_load_examples():
    assert cn.grid_edge_load(3, 1) == 3
    assert cn.grid_edge_load(1, 2) == 0
    assert cn.grid_edge_load(4, 2) <= 4**3
    with pytest.raises(ValueError):
        cn.grid_edge_load(40, 3)


@pytest.mark.parametrize("k, d", [(2, 1), (4, 1), (3, 2), (4, 2), (3, 3)])
def test_grid_edge_load_matches_scalar_enumeration(k, d):
    assert cn.grid_edge_load(k, d) == _load_by_enumeration(k, d)


def test_canonical_grid_side():
    n, alpha = 10_000, 0.3
    cp = 2 / 0.3
    assert cn.scaffold_constant(alpha) == pytest.approx(cp)
    assert cn.scaffold_constant(0.7) == pytest.approx(cp)
    assert cn.canonical_grid_side(n, alpha, 2) == math.ceil(math.sqrt(n / (cp * math.log(n))))


def _reps_for(g, alpha=None, seed=0):
    alpha = admissible_alpha(EXP) if alpha is None else alpha
    k = cn.canonical_grid_side(g.n, alpha, g.d)
    high, low = an.high_low_partition(g, alpha, EXP)
    return cn.assign_representatives(g, k, high, low, np.random.default_rng(seed)), high, low


def test_assign_representatives_properties(gtg500):
    reps, high, low = _reps_for(gtg500)
    k = reps.k
    cells = flat_cell(cells_of(gtg500.positions, k), k)
    assert np.array_equal(reps.rep[high], high)
    assert np.all(reps.high[reps.rep[low]])
    assert np.array_equal(cells[reps.rep[low]], cells[low])
    for cube in range(k**2):
        in_cube = cells == cube
        nl = int(np.sum(in_cube & ~reps.high))
        nh = int(np.sum(in_cube & reps.high))
        if nl == 0:
            continue
        sizes = [s for h, s in reps.group_sizes.items() if cells[h] == cube]
        assert sum(sizes) == nl
        assert len(sizes) == min(nh, nl)
        assert max(sizes) <= math.ceil(nl / nh)
        assert max(sizes) - min(sizes) <= 1


def test_assign_representatives_even_split():
    # one cube (k = 1) with five low nodes and three high nodes
    pos = np.random.default_rng(0).random((8, 2))
    w = np.array([5.0, 5.0, 5.0, 0.1, 0.1, 0.1, 0.1, 0.1])
    g = graph_from_edges(8, [], seed=0)
    g = type(g)(pos, w, g.indptr, g.indices, 1.0)
    reps = cn.assign_representatives(g, 1, [0, 1, 2], [3, 4, 5, 6, 7], np.random.default_rng(1))
    assert sorted(reps.group_sizes.values()) == [1, 2, 2]
    assert sorted(reps.group_sizes) == [0, 1, 2]
    assert len(reps.represented_by(0)) == reps.group_sizes[0]


def test_assign_representatives_deterministic(gtg500):
    a, _, _ = _reps_for(gtg500, seed=3)
    b, _, _ = _reps_for(gtg500, seed=3)
    assert np.array_equal(a.rep, b.rep)


def test_representative_error_names_cube():
    pos = np.array([[0.1, 0.1], [0.2, 0.2], [0.9, 0.9]])
    g = graph_from_edges(3, [(0, 1)])
    g = type(g)(pos, np.array([5.0, 0.1, 0.1]), g.indptr, g.indices, 1.0)
    with pytest.raises(cn.RepresentativeError) as err:
        cn.assign_representatives(g, 2, [0], [1, 2], np.random.default_rng(0))
    assert err.value.cube == (1, 1)


def test_fixed_paths_triangle():
    g = complete(3)
    ps = cn.fixed_paths(g, {(u, v): [u, v] for u in range(3) for v in range(3) if u != v})
    rho = cn.compute_rho(g, ps)
    assert rho.value == pytest.approx(4 / 3, rel=1e-15)
    assert ps.Z.tolist() == [2, 2, 2]
    assert ps.sigma.tolist() == [8.0, 8.0, 8.0]


def test_fixed_paths_single_edge():
    g = complete(2)
    ps = cn.fixed_paths(g, {(0, 1): [0, 1], (1, 0): [1, 0]})
    assert cn.compute_rho(g, ps).value == pytest.approx(1.0)


def test_fixed_paths_detour_and_unused_edge():
    g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    paths = {}
    for u in range(4):
        for v in range(4):
            if u != v:
                # clockwise routing only
                seq = [u]
                while seq[-1] != v:
                    seq.append((seq[-1] + 1) % 4)
                paths[(u, v)] = seq
    ps = cn.fixed_paths(g, paths)
    assert ps.Z.sum() == sum(len(p) - 1 for p in paths.values())
    with pytest.raises(cn.PathBuildError):
        cn.fixed_paths(g, {**paths, (0, 2): [0, 2]})
    with pytest.raises(ValueError):
        cn.fixed_paths(g, {k: v for k, v in paths.items() if k != (1, 3)})


@pytest.fixture(scope="module")
def system500(gtg500):
    reps, _, _ = _reps_for(gtg500)
    return cn.build_paths(gtg500, reps, seed=7, mode="exact")


def test_paths_valid(gtg500, system500):
    report = cn.validate_paths(gtg500, system500)
    assert report.ok, report
    assert report.n_paths == 500 * 499
    assert report.max_length <= 2 * system500.k + 2


def test_path_endpoints_and_duplicates(gtg500, system500):
    reps = system500.reps
    assert system500.path(4, 4) == []
    rng = np.random.default_rng(0)
    for u, v in rng.integers(0, 500, (50, 2)):
        if u == v:
            continue
        p = system500.path(int(u), int(v))
        assert p[0] == u and p[-1] == v
        assert all(a != b for a, b in zip(p, p[1:]))
        assert gtg500.has_edges(p[:-1], p[1:]).all()
        assert all(reps.high[x] for x in p[1:-1])
        assert len(set(p)) == len(p)


def test_adjacent_high_nodes_in_one_cube_get_direct_path(gtg500, system500):
    reps = system500.reps
    cells = flat_cell(cells_of(gtg500.positions, reps.k), reps.k)
    high = np.flatnonzero(reps.high)
    found = 0
    for u in high[:50]:
        for v in high:
            if u != v and cells[u] == cells[v] and gtg500.has_edges([u], [v])[0]:
                assert system500.path(int(u), int(v)) == [u, v]
                found += 1
                break
    assert found > 0


def test_paths_deterministic_and_schedule_free(gtg500, system500):
    reps = system500.reps
    again = cn.build_paths(gtg500, reps, seed=7, mode="exact")
    assert np.array_equal(again.Z, system500.Z)
    assert np.array_equal(again.load, system500.load)
    sampled = cn.build_paths(gtg500, reps, seed=7, mode="sampled", pair_budget=20 * 499)
    # each sampled source regenerates exactly the paths of the exact run
    for u in sampled.sources[:5]:
        a = sampled.source_paths(int(u))[1]
        b = system500.source_paths(int(u))[1]
        assert np.array_equal(a, b)


def test_conservation_and_low_low_unused(gtg500, system500):
    assert system500.Z.sum() == system500.length_sum
    reps = system500.reps
    e = system500.edges
    ll = ~reps.high[e[:, 0]] & ~reps.high[e[:, 1]]
    assert np.all(system500.Z[ll] == 0)


def test_edge_stats_independent_route(gtg500, system500):
    part = build_partition(EXP, 500, system500.reps.high.mean(), d=2)
    stats = cn.edge_stats(gtg500, system500, part)
    rho = cn.compute_rho(gtg500, system500)
    assert abs(stats.rho - rho.value) <= 1e-9 * rho.value
    assert np.array_equal(stats.Z, system500.Z)
    assert np.allclose(stats.sigma, system500.sigma, rtol=1e-12)
    unused = stats.Z == 0
    assert np.all(stats.sigma[unused] == 0)
    (edge, lam), = stats.lam.items()
    eid = system500.edge_ids(np.array([edge[0]]), np.array([edge[1]]))[0]
    assert lam.sum() == stats.Z[eid]
    assert set(stats.load_class) <= set(cn.EDGE_CLASSES)
    assert np.all(stats.Z[stats.load_class == "LL"] == 0)


def test_sampled_mode_estimates_exact(gtg500, system500):
    reps = system500.reps
    exact = cn.compute_rho(gtg500, system500)
    sampled = cn.build_paths(gtg500, reps, seed=7, mode="sampled", pair_budget=250 * 499)
    est = cn.compute_rho(gtg500, sampled)
    assert not est.exact and est.stderr > 0
    # scaled tallies are unbiased for every edge; compare the totals
    assert sampled.Z.sum() * sampled.scale == pytest.approx(system500.Z.sum(), rel=0.05)
    # the max over noisy edge estimates is biased upward; judge it by its own error bar
    assert abs(est.value - exact.value) <= 3 * est.stderr


def test_rho_normalizations():
    out = cn.rho_normalizations(10.0, 1000, 2)
    assert out["rho_over_logn_2d"] == pytest.approx(10 / math.log(1000))
    assert out["rho_over_n_logn_2d"] == pytest.approx(10 / (1000 / math.log(1000)))


def test_path_failure_is_structured():
    # two high nodes in adjacent cubes with no edge between them
    pos = np.array([[0.1, 0.1], [0.6, 0.1]])
    g = graph_from_edges(2, [])
    g = type(g)(pos, np.array([5.0, 5.0]), g.indptr, g.indices, 1.0)
    reps = cn.Representatives(2, np.arange(2), np.array([True, True]), {})
    with pytest.raises(cn.PathBuildError):
        cn.build_paths(g, reps, seed=0, mode="exact")
