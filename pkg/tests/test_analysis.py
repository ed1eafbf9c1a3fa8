import math

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components as scipy_components

from gtgmix import analysis as an
from gtgmix.canonical import canonical_grid_side
from gtgmix.geometry import cells_of, flat_cell, toric_distance
from gtgmix.weights import WeightDistribution, admissible_alpha, admissible_c

from conftest import EXP, graph_from_edges, make_gtg


def _same_partition(a, b):
    # labels agree up to renaming
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


@pytest.mark.parametrize("c", [0.02, 0.2, 0.6])
def test_components_agree_across_methods(c):
    g = make_gtg(400, seed=2, c=c)
    bfs = an.connected_components(g)
    uf = an.union_find_components(g)
    count, labels = scipy_components(g.adjacency_matrix(), directed=False)
    assert bfs.count == uf.count == count
    assert _same_partition(bfs.labels, uf.labels)
    assert _same_partition(bfs.labels, labels)
    assert bfs.sizes.sum() == g.n


def test_components_small_graph():
    g = graph_from_edges(6, [(0, 1), (1, 2), (4, 5)])
    comps = an.connected_components(g)
    assert comps.count == 3 and not comps.connected
    assert comps.labels.tolist() == [0, 0, 0, 1, 2, 2]
    assert sorted(comps.sizes.tolist()) == [1, 2, 3]


def test_union_find():
    uf = an.UnionFind(5)
    assert uf.union(0, 1) and uf.union(3, 4) and not uf.union(1, 0)
    assert uf.find(0) == uf.find(1) != uf.find(3)


def test_handshake(gtg500):
    assert gtg500.degrees.sum() == 2 * gtg500.edge_count


def test_degree_constants():
    c1, c2 = an.degree_constants(1.0, 0.05, 2)
    assert c2 == pytest.approx(2 * math.pi / 0.05)
    assert c1 == pytest.approx((math.pi / 0.05) * (1 - math.sqrt(0.1 / math.pi)))
    c1, _ = an.degree_constants(1.0, 2.0, 2)
    assert math.isnan(c1)


def test_degree_report(gtg500):
    rep = an.degree_report(gtg500, EXP)
    assert rep.min_deg == gtg500.degrees.min() and rep.max_deg == gtg500.degrees.max()
    assert rep.defined and rep.interval[0] < rep.interval[1]


def test_expected_degree_matches_sample_mean():
    n, d = 4000, 2
    g = make_gtg(n, seed=3, c=2.0)
    # every reach stays well below 1/2 at this c, so no wraparound double counting
    assert (2 * g.weights.max() / g.theta) ** 0.5 < 0.5
    predicted = an.expected_degree(g.weights, n, g.theta, d, 1.0).mean()
    assert g.degrees.mean() == pytest.approx(predicted, rel=0.03)


def test_edge_ratio():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    assert an.edge_count_ratio(g) == pytest.approx(2 / (3 * math.log(3)))
    with pytest.raises(ValueError):
        an.edge_count_ratio(graph_from_edges(2, [(0, 1)]))


def test_high_low_partition(gtg500):
    alpha = 0.3
    high, low = an.high_low_partition(gtg500, alpha, EXP)
    cut = -math.log(alpha)
    assert np.all(gtg500.weights[high] > cut) and np.all(gtg500.weights[low] <= cut)
    assert len(high) + len(low) == gtg500.n
    assert len(high) / gtg500.n == pytest.approx(alpha, abs=0.07)


def test_cube_occupancy_counts(gtg500):
    k, alpha = 4, 0.3
    occ = an.cube_occupancy(gtg500, k, alpha, EXP)
    assert occ.high.sum() + occ.low.sum() == gtg500.n
    cells = flat_cell(cells_of(gtg500.positions, k), k)
    high = gtg500.weights > -math.log(alpha)
    for cube in range(k**2):
        assert occ.high[cube] == np.sum(high & (cells == cube))
    lo, hi = occ.band(gtg500.n)
    assert 0 <= lo <= hi


def test_cube_occupancy_warns_when_cells_exceed_nodes():
    g = make_gtg(30, seed=1)
    with pytest.warns(UserWarning):
        an.cube_occupancy(g, 8, 0.3, EXP)


def _hh_pairs_brute(g, k, high):
    cells = cells_of(g.positions, k)
    counts = {}
    A = g.adjacency_matrix().toarray()
    for i in high:
        for j in high:
            if i < j:
                diff = (cells[j] - cells[i]) % k
                moved = diff != 0
                if moved.sum() == 1 and int(diff[moved][0]) in (1, k - 1):
                    key = tuple(sorted((int(flat_cell(cells[i], k)), int(flat_cell(cells[j], k)))))
                    tot, hit = counts.get(key, (0, 0))
                    counts[key] = (tot + 1, hit + int(A[i, j] > 0))
    return counts


@pytest.mark.parametrize("k", [2, 3, 5])
def test_adjacent_cube_hh_counts_match_brute_force(k):
    g = make_gtg(300, seed=k, c=0.4)
    high, _ = an.high_low_partition(g, 0.3, EXP)
    rep = an.adjacent_cube_hh_edges(g, k, high)
    brute = _hh_pairs_brute(g, k, high)
    for (a, b), cnt, pos in zip(rep.pairs.tolist(), rep.counts, rep.possible):
        tot, hit = brute.get((a, b), (0, 0))
        assert (pos, cnt) == (tot, hit)
    assert rep.violations == sum(t - h for t, h in brute.values())


def test_completeness_whenever_guaranteed():
    dist = EXP
    alpha = admissible_alpha(dist)
    for seed in range(3):
        n = 3000
        g = make_gtg(n, seed=seed, c=admissible_c(dist, 2))
        k = canonical_grid_side(n, alpha, 2)
        cutoff = float(dist.isf(alpha))
        assert an.completeness_guaranteed(g.theta, cutoff, k, 2)
        high, _ = an.high_low_partition(g, alpha, dist)
        rep = an.adjacent_cube_hh_edges(g, k, high)
        assert rep.complete and rep.violations == 0
        assert rep.min_normalized(n) > 0


def test_completeness_can_fail_for_large_c():
    g = make_gtg(3000, seed=0, c=3.0)
    k = canonical_grid_side(3000, 0.3, 2)
    high, _ = an.high_low_partition(g, 0.3, EXP)
    assert not an.completeness_guaranteed(g.theta, -math.log(0.3), k, 2)
    assert an.adjacent_cube_hh_edges(g, k, high).violations > 0


def test_far_corners_of_adjacent_cubes_bound():
    # sqrt(d+3)/k covers every H-H pair in adjacent cubes, so the guarantee is exact
    g = make_gtg(2000, seed=4)
    k = 6
    cells = cells_of(g.positions, k)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        i, j = rng.integers(0, g.n, 2)
        diff = (cells[j] - cells[i]) % k
        moved = diff != 0
        if moved.sum() == 1 and int(diff[moved][0]) in (1, k - 1):
            assert toric_distance(g.positions[i], g.positions[j]) <= math.sqrt(5) / k


def test_pareto_weights_analysis_runs():
    dist = WeightDistribution.pareto(3.0)
    g = make_gtg(800, seed=1, dist=dist)
    high, low = an.high_low_partition(g, 0.5, dist)
    assert len(high) + len(low) == 800
    assert an.connected_components(g).connected
