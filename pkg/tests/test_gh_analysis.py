import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolab import cdlo_metrics as cm
from geolab import discrete_geometry as dg
from geolab import gh_analysis as gh
from geolab import local_models as lm


def random_space(rng, m):
    x = rng.random((m, 2))
    return gh.finite_space(np.linalg.norm(x[:, None] - x[None], axis=-1))


def exhaustive_eps(DX, DY):
    """Smallest epsilon over every map X -> Y, by listing all of them."""
    best = np.inf
    for m in itertools.product(range(DY.shape[0]), repeat=DX.shape[0]):
        m = np.array(m)
        dist = np.abs(DX - DY[np.ix_(m, m)]).max()
        gap = DY[:, np.unique(m)].min(axis=1).max()
        best = min(best, max(dist, gap))
    return best


# -- distortion ---------------------------------------------------------------


def test_two_point_spaces():
    X = gh.points_on_line([0.0, 1.0])
    Y = gh.points_on_line([0.0, 2.0])
    assert gh.gh_bruteforce(X, Y) == 1.0
    eps = [gh.distortion(gh.CandidateMap(X, Y, m)).epsilon for m in itertools.product(range(2), repeat=2)]
    assert sorted(eps) == [1.0, 1.0, 2.0, 2.0]


def test_distortion_witnesses_attain_the_sups():
    rng = np.random.default_rng(0)
    X, Y = random_space(rng, 7), random_space(rng, 5)
    f = gh.CandidateMap(X, Y, rng.integers(0, 5, 7))
    rep = gh.distortion(f)
    i, j = rep.pair_witness
    m = f.mapping
    assert abs(X.D[i, j] - Y.D[m[i], m[j]]) == rep.metric_distortion
    assert Y.D[rep.node_witness, np.unique(m)].min() == rep.density_gap
    assert rep.epsilon == max(rep.metric_distortion, rep.density_gap)


def test_distortion_of_isometry_is_zero():
    X = gh.points_on_line([0.0, 0.3, 1.7, 2.0])
    f = gh.CandidateMap(X, X, np.arange(4))
    assert gh.distortion(f).epsilon == 0.0


def test_candidate_map_validation():
    X = gh.points_on_line([0.0, 1.0])
    with pytest.raises(ValueError):
        gh.CandidateMap(X, X, [0])
    with pytest.raises(ValueError):
        gh.CandidateMap(X, X, [0, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_composition_distortion_adds(seed):
    rng = np.random.default_rng(seed)
    X, Y, Z = random_space(rng, 5), random_space(rng, 4), random_space(rng, 6)
    f = gh.CandidateMap(X, Y, rng.integers(0, 4, 5))
    g = gh.CandidateMap(Y, Z, rng.integers(0, 6, 4))
    h = gh.compose(f, g)
    assert gh.distortion(h).metric_distortion <= (
        gh.distortion(f).metric_distortion + gh.distortion(g).metric_distortion + 1e-12
    )


def test_compose_checks_spaces():
    X, Y = gh.points_on_line([0.0, 1.0]), gh.points_on_line([0.0, 1.0])
    f = gh.CandidateMap(X, Y, [0, 1])
    with pytest.raises(ValueError):
        gh.compose(f, f)


# -- GH bounds ----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_bruteforce_against_exhaustive_enumeration(seed):
    rng = np.random.default_rng(seed)
    X, Y = random_space(rng, int(rng.integers(1, 5))), random_space(rng, int(rng.integers(1, 5)))
    ref = max(exhaustive_eps(X.D, Y.D), exhaustive_eps(Y.D, X.D))
    assert gh.gh_bruteforce(X, Y) == pytest.approx(ref, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_upper_bound_dominates_bruteforce(seed):
    rng = np.random.default_rng(seed)
    X, Y = random_space(rng, int(rng.integers(1, 6))), random_space(rng, int(rng.integers(1, 6)))
    exact, f_opt, g_opt = gh.gh_bruteforce(X, Y, return_maps=True)
    f = gh.CandidateMap(X, Y, rng.integers(0, len(Y), len(X)))
    g = gh.CandidateMap(Y, X, rng.integers(0, len(X), len(Y)))
    assert float(gh.gh_upper_bound(f, g)) >= exact - 1e-15
    assert float(gh.gh_upper_bound(f_opt, g_opt)) == pytest.approx(exact, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_approximate_inverse_three_eps(seed):
    rng = np.random.default_rng(seed)
    X, Y = random_space(rng, 6), random_space(rng, 5)
    f = gh.CandidateMap(X, Y, rng.integers(0, 5, 6))
    b = gh.gh_upper_bound(f)
    assert b.one_sided and b.three_eps_holds
    assert b.eps_g <= 3 * b.eps_f + 1e-12


def test_gh_symmetry_and_triangle():
    rng = np.random.default_rng(9)
    X, Y, Z = random_space(rng, 4), random_space(rng, 3), random_space(rng, 4)
    dxy, dyz, dxz = gh.gh_bruteforce(X, Y), gh.gh_bruteforce(Y, Z), gh.gh_bruteforce(X, Z)
    assert dxy == pytest.approx(gh.gh_bruteforce(Y, X))
    # the two-sided epsilon-isometry convention composes with a factor of at most 2
    assert dxz <= 2 * (dxy + dyz) + 1e-12


def test_bruteforce_size_limit():
    X = gh.points_on_line(np.arange(9.0))
    with pytest.raises(ValueError):
        gh.gh_bruteforce(X, X)


# -- uniform convergence ------------------------------------------------------


@pytest.fixture(scope="module")
def tube_space():
    cloud = lm.sample_region(lm.Resolution(0.5), lm.Region.tube(1.0), 400, seed=3, layout="rays")
    return dg.all_pairs_distances(dg.build_graph(cloud))


def test_conformal_scaling_is_exact(tube_space):
    beta = cm.ResolutionMetric(0.5)
    rep = gh.uniform_convergence_check(tube_space, cm.ScaledMetric(beta, 1.1**2), beta)
    # |c h - h|_h = (c - 1) sqrt(3) in real dimension six
    assert rep.eps == pytest.approx(0.21 * np.sqrt(3), rel=1e-9)
    assert rep.lambda_min == pytest.approx(1.21, rel=1e-9)
    assert rep.eps_prime == pytest.approx(0.21, rel=1e-9)
    assert rep.max_abs_diff == pytest.approx(0.1 * rep.diam_beta, rel=1e-12)
    assert rep.holds


def test_nearby_resolution_metrics(tube_space):
    beta = cm.ResolutionMetric(0.5)
    rep = gh.uniform_convergence_check(tube_space, cm.ResolutionMetric(0.55), beta)
    assert rep.holds
    assert rep.max_abs_diff <= rep.bound
    assert json.loads(json.dumps(rep.to_dict(), default=str))["holds"] is True


# -- matched meshes and the audit ---------------------------------------------


@pytest.fixture(scope="module")
def cone():
    return gh.cone_mesh(800, 12, 0)


def test_resolution_distortion_shrinks_with_a(cone):
    eps = [gh.distortion(gh.resolution_matched(a, 800, 12, 0, cone=cone).candidate()).epsilon
           for a in (0.3, 0.1)]
    assert eps[1] < eps[0]


def test_matched_resolution_map_is_the_blowdown(cone):
    P = gh.resolution_matched(0.2, 800, 12, 0, cone=cone)
    cl, cc = P.source.cloud, P.target.cloud
    off = np.flatnonzero(cl.level > 0)
    on = np.flatnonzero(cl.level == 0)
    for c in (0, 1):
        sel = off[cl.chart[off] == c]
        z = lm.blowdown(cl.coords[sel], c)
        assert np.allclose(z, cc.points[P.mapping[sel]], atol=1e-12)
    assert np.all(P.mapping[on] == cc.vertex)


def test_smoothing_map_pairs_images_with_preimages(cone):
    t = 0.3
    P = gh.smoothing_matched(t, 800, 12, 0, cone=cone)
    src, tgt = P.source.cloud, P.target.cloud
    outer = np.flatnonzero(src.radii >= lm.critical_radius(t) * (1 + 1e-9))
    assert outer.size > 0
    w = lm.phi_t(src.points[outer], t)
    assert np.allclose(w, tgt.points[P.mapping[outer]], atol=1e-12)


def test_audit_flags_follow_recorded_numbers(cone):
    fam = [(a, gh.resolution_matched(a, 800, 12, 0, cone=cone)) for a in (0.1, 0.05)]
    eps = 0.8
    audit = gh.main_lemma_audit(fam, [gh.disc_nodes(cone, 0.4 * eps)], eps)
    for r in audit.records:
        assert r.flags["iii_diam0_G"] == (max(r.diam0_G) < eps)
        assert r.flags["iv_diam_alpha_preimage"] == (max(r.diam_alpha_preimage) < eps)
        assert r.flags["ii_uniform_on_complement"] == (r.sup_complement <= eps)
        assert r.bound == pytest.approx(3 * eps)
    assert audit.passed
    json.loads(audit.to_json())
