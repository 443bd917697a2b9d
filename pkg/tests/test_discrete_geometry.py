import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csgraph

from geolab import cdlo_metrics as cm
from geolab import discrete_geometry as dg
from geolab import local_models as lm
from geolab.experiments import random_bad_sets, random_connected_graph, random_walk


def bellman_ford(n, edges, weights, src):
    d = np.full(n, np.inf)
    d[src] = 0.0
    for _ in range(n - 1):
        changed = False
        for (i, j), w in zip(edges, weights):
            if d[i] + w < d[j]:
                d[j] = d[i] + w
                changed = True
            if d[j] + w < d[i]:
                d[i] = d[j] + w
                changed = True
        if not changed:
            break
    return d


def graph_from(n, edges, weights):
    return dg.GeodesicGraph(None, n, np.asarray(edges), np.asarray(weights, dtype=float))


# -- graph container ----------------------------------------------------------


def test_graph_rejects_bad_weights_and_loops():
    with pytest.raises(ValueError):
        graph_from(3, [[0, 1]], [0.0])
    with pytest.raises(ValueError):
        graph_from(3, [[0, 1]], [np.inf])
    with pytest.raises(ValueError):
        graph_from(3, [[1, 1]], [1.0])


def test_graph_weights_are_symmetric():
    G = graph_from(3, [[0, 1], [1, 2]], [0.5, 2.0])
    assert G.weight(0, 1) == G.weight(1, 0) == 0.5
    assert np.allclose(G.csr.toarray(), G.csr.toarray().T)


def test_disconnected_space_raises():
    G = graph_from(4, [[0, 1], [2, 3]], [1.0, 1.0])
    assert G.n_components() == 2
    with pytest.raises(dg.DisconnectedGraphError):
        dg.all_pairs_distances(G)


# -- all pairs shortest paths -------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_all_pairs_against_bellman_ford(seed):
    rng = np.random.default_rng(seed)
    G = random_connected_graph(rng, 100, 0.04)
    S = dg.all_pairs_distances(G)
    for src in rng.choice(100, 10, replace=False):
        ref = bellman_ford(100, G.edges, G.weights, src)
        assert np.allclose(S.D[src], ref, rtol=1e-12, atol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 25))
def test_distance_matrix_is_a_metric(seed, m):
    G = random_connected_graph(np.random.default_rng(seed), m, 0.3)
    S = dg.all_pairs_distances(G)
    assert np.all(np.diag(S.D) == 0)
    assert np.array_equal(S.D, S.D.T)
    report = S.check_axioms()
    assert report["ok"]
    tri = S.D[:, None, :] <= S.D[:, :, None] + S.D[None, :, :].transpose(0, 2, 1) + 1e-9
    assert tri.all()


def test_space_file_round_trip(tmp_path):
    G = random_connected_graph(np.random.default_rng(1), 12)
    S = dg.all_pairs_distances(G)
    S.to_files(tmp_path)
    back = dg.read_space(tmp_path)
    assert np.allclose(back.D, S.D, rtol=1e-15)


# -- intrinsic diameter and paths ---------------------------------------------


def test_intrinsic_diameter_uses_only_subset_paths():
    # square 0-1-2-3-0 with a shortcut 0-2 through node 4 outside the subset
    edges = [[0, 1], [1, 2], [2, 3], [3, 0], [0, 4], [4, 2]]
    G = graph_from(5, edges, [1, 1, 1, 1, 0.1, 0.1])
    assert dg.all_pairs_distances(G).D[0, 2] == pytest.approx(0.2)
    assert dg.intrinsic_diameter(G, [0, 1, 2, 3]) == pytest.approx(2.0)
    assert dg.intrinsic_diameter(G, [0, 4, 2]) == pytest.approx(0.2)


def test_intrinsic_diameter_of_disconnected_subset_raises():
    G = graph_from(3, [[0, 1], [1, 2]], [1.0, 1.0])
    with pytest.raises(dg.DisconnectedGraphError):
        dg.intrinsic_diameter(G, [0, 2])


def test_shortest_path_has_optimal_length():
    G = random_connected_graph(np.random.default_rng(4), 30)
    D = dg.all_pairs_distances(G).D
    p = dg.shortest_path(G, 3, 17)
    assert p[0] == 3 and p[-1] == 17
    assert G.path_length(p) == pytest.approx(D[3, 17], rel=1e-12)


# -- curve reduction ----------------------------------------------------------


def _count_intervals(path, members):
    inside = [v in members for v in path]
    return sum(1 for i, b in enumerate(inside) if b and (i == 0 or not inside[i - 1]))


def test_reduction_on_twelve_node_graph_brute_force():
    # cycle of 12 with unit weights; gamma enters Q1 = {3, 4} twice
    n = 12
    edges = [[i, (i + 1) % n] for i in range(n)]
    G = graph_from(n, edges, [1.0] * n)
    Q = dg.BadSetFamily([[3, 4]])
    gamma = [1, 2, 3, 4, 5, 6, 5, 4, 3, 2, 1, 0, 11, 10]
    assert _count_intervals(gamma, {3, 4}) == 2
    mu = dg.reduce_curve(G, gamma, Q)
    assert _count_intervals(mu, {3, 4}) == 1
    assert mu[0] == gamma[0] and mu[-1] == gamma[-1]
    assert G.path_length(mu) <= G.path_length(gamma) + 1.0 + 1e-12
    adj = {frozenset(e) for e in map(tuple, edges)}
    assert all(frozenset((a, b)) in adj for a, b in zip(mu, mu[1:]))
    # enumeration of all walks up to the bound's length: the shortest walk that
    # visits Q1 in one interval is no longer than mu, and mu meets the bound
    bound = G.path_length(gamma) + dg.intrinsic_diameter(G, [3, 4])
    valid = [
        len(p) - 1
        for L in range(1, int(bound) + 1)
        for p in _walks(G, gamma[0], gamma[-1], L)
        if _count_intervals(p, {3, 4}) <= 1
    ]
    assert valid and min(valid) <= G.path_length(mu) <= bound


def _walks(G, start, end, length):
    def rec(path):
        if len(path) == length + 1:
            if path[-1] == end:
                yield list(path)
            return
        for v in G.neighbors(path[-1]):
            path.append(int(v))
            yield from rec(path)
            path.pop()

    yield from rec([start])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reduction_properties(seed):
    rng = np.random.default_rng(seed)
    G = random_connected_graph(rng, int(rng.integers(5, 16)))
    Q = random_bad_sets(rng, G, int(rng.integers(1, 4)))
    gamma = random_walk(rng, G, int(rng.integers(2, 25)))
    mu = dg.reduce_curve(G, gamma, Q)
    assert mu[0] == gamma[0] and mu[-1] == gamma[-1]
    for k, q in enumerate(Q.sets):
        assert _count_intervals(mu, set(q)) <= 1
        # agrees with the library's counter
        assert dg.visit_intervals(mu, Q.labels(G.n), k) == _count_intervals(mu, set(q))
    bound = G.path_length(gamma) + sum(dg.intrinsic_diameter(G, q) for q in Q.sets)
    assert G.path_length(mu) <= bound + 1e-12
    edges = {frozenset(map(int, e)) for e in G.edges}
    assert all(frozenset((a, b)) in edges for a, b in zip(mu, mu[1:]) if a != b)


def test_bad_sets_must_be_disjoint_and_connected():
    G = graph_from(4, [[0, 1], [1, 2], [2, 3]], [1.0] * 3)
    with pytest.raises(ValueError):
        dg.BadSetFamily([[0, 1], [1, 2]]).validate(G)
    with pytest.raises(ValueError):
        dg.BadSetFamily([[0, 2]]).validate(G)


# -- graphs on the local models -----------------------------------------------


def test_flat_slice_calibration():
    # flat metric on the unit square in the lam-plane; corners are nodes 0 and 1
    n = 4000
    rng = np.random.default_rng(0)
    xy = rng.random((n, 2))
    xy[0], xy[1] = (0.0, 0.0), (1.0, 1.0)
    coords = np.zeros((n, 3), complex)
    coords[:, 0] = xy[:, 0] + 1j * xy[:, 1]
    cloud = lm.PointCloud(lm.Cone(), coords, np.zeros(n, np.int8), coords.copy(), 0)
    G = dg.build_graph(cloud, 12, metric=cm.FlatMetric(), proxy=xy)
    d = csgraph.dijkstra(G.csr, indices=0)[1]
    assert abs(d / np.sqrt(2) - 1) < 0.03


def test_edge_weights_are_metric_lengths():
    cloud = lm.sample_region(lm.Resolution(0.5), lm.Region.tube(1.0), 300, seed=1)
    G = dg.build_graph(cloud, 8)
    e = G.edges[:5]
    metric = cm.ResolutionMetric(0.5)
    for (i, j), w in zip(e, G.weights[:5]):
        c0, c1, ch = dg.align_charts(cloud.coords[[i]], cloud.chart[[i]], cloud.coords[[j]], cloud.chart[[j]])
        a0, a1 = c0[0], c1[0]
        pos = lambda s: np.array([cm.edge_path(a0, a1, si)[0] for si in np.atleast_1d(s)])
        vel = lambda s: np.array([cm.edge_path(a0, a1, si)[1] for si in np.atleast_1d(s)])
        L = cm.curve_length(cm.Curve(pos, vel, (0.0, 1.0), "chart", int(ch[0])), metric)
        # graph weights use a 5/9-point rule with relative tolerance 1e-4
        assert w == pytest.approx(L, rel=5e-4)


def test_cone_graph_radial_distances():
    cloud = lm.sample_region(lm.Cone(), lm.Region.disc(1.0), 1500, seed=0, layout="rays")
    G = dg.build_graph(cloud)
    d = csgraph.dijkstra(G.csr, indices=cloud.vertex)
    r = cloud.radii
    nz = r > 0
    assert np.max(np.abs(d[nz] - r[nz]) / r[nz]) < 0.03


def test_build_graph_requires_enough_neighbours():
    cloud = lm.sample_region(lm.Cone(), lm.Region.disc(1.0), 100, seed=0)
    with pytest.raises(ValueError):
        dg.build_graph(cloud, 3)


def test_graph_construction_is_deterministic():
    a = dg.build_graph(lm.sample_region(lm.Resolution(0.3), lm.Region.tube(1.0), 300, seed=5))
    b = dg.build_graph(lm.sample_region(lm.Resolution(0.3), lm.Region.tube(1.0), 300, seed=5))
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.weights, b.weights)


# -- volumes ------------------------------------------------------------------


def test_cone_disc_volume_closed_form():
    # cone over the link: Vol D_0(R) = Vol(L) R^6 / 6 with Vol(L) = 16 pi^3 / 27
    est, err = dg.monte_carlo_volume(lm.Cone(), lm.Region.disc(1.0), n=200_000, seed=3)
    exact = 16 * np.pi**3 / 27 / 6
    assert abs(est - exact) < 3 * err
    assert err / est < 0.01


def test_flat_cube_volume():
    def cube(c):
        x = np.concatenate([c.real, c.imag], axis=1)
        return np.all((x >= 0) & (x <= 1), axis=1)

    est, err = dg.monte_carlo_volume(None, lm.Region.tube(2.5), metric=cm.FlatMetric(),
                                        n=400_000, seed=2, indicator=cube)
    assert abs(est - 1.0) < 3 * err


def test_tube_volume_scales_like_a_to_the_sixth():
    v1, e1 = dg.monte_carlo_volume(lm.Resolution(1.0), lm.Region.tube(2.0), n=100_000, seed=0)
    va, ea = dg.monte_carlo_volume(lm.Resolution(0.5), lm.Region.tube(1.0), n=100_000, seed=1)
    ratio = va / v1 / 0.5**6
    assert abs(ratio - 1) < 3 * np.hypot(e1 / v1, ea / va)


def test_volume_rejects_smoothing():
    with pytest.raises(lm.GeometryError):
        dg.monte_carlo_volume(lm.Smoothing(0.1), lm.Region.disc(1.0), n=10)
