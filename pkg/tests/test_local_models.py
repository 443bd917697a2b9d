import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geolab import local_models as lm

finite = st.floats(-3.0, 3.0, allow_nan=False)
cplx = st.builds(complex, finite, finite)
positive = st.floats(0.05, 5.0)
nonzero_t = st.builds(lambda m, a: m * np.exp(1j * a), st.floats(0.01, 3.0), st.floats(0.0, 2 * np.pi))


def cone_point(seed, r):
    return lm.sample_link(1, seed)[0] * r**1.5


# -- charts and blowdown ------------------------------------------------------


@given(cplx, cplx, cplx)
def test_transition_is_an_involution(lam, u, v):
    if abs(lam) < 1e-3:
        return
    c = np.array([[lam, u, v]])
    back = lm.transition(lm.transition(c, np.array([0])), np.array([1]))
    assert np.allclose(back, c, rtol=1e-12, atol=1e-12)


@given(cplx, cplx, cplx)
def test_blowdown_lands_on_the_cone(lam, u, v):
    z = lm.blowdown(np.array([[lam, u, v]]))
    scale = max(1.0, float(np.sum(abs(z) ** 2)))
    assert abs(np.sum(z**2)) <= 1e-12 * scale


@given(cplx, cplx, cplx)
def test_blowdown_agrees_across_charts(lam, u, v):
    if abs(lam) < 1e-3:
        return
    c = np.array([[lam, u, v]])
    z0 = lm.blowdown(c, lm.Chart.U)
    z1 = lm.blowdown(lm.transition(c, np.array([0])), lm.Chart.Uprime)
    assert np.allclose(z0, z1, rtol=1e-10, atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 10_000), positive)
def test_blowdown_inverse_round_trip(seed, r):
    z = cone_point(seed, r)[None, :]
    coords, chart = lm.blowdown_inverse(z)
    assert np.allclose(lm.blowdown(coords, chart[0]), z, rtol=1e-12, atol=1e-12)


def test_blowdown_inverse_chart_rule():
    # max(|p|,|q|) >= max(|m|,|s|) selects U, otherwise U'
    z = cone_point(3, 1.0)[None, :]
    coords, chart = lm.blowdown_inverse(z)
    assert chart.shape == (1,)
    assert lm.chart_radius(coords)[0] == pytest.approx(1.0, rel=1e-12)


def test_blowdown_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    c = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    J = lm.blowdown_jacobian(c[None, :])[0]
    h = 1e-6
    for k in range(3):
        e = np.zeros(3, complex)
        e[k] = h
        fd = (lm.blowdown((c + e)[None])[0] - lm.blowdown((c - e)[None])[0]) / (2 * h)
        assert np.allclose(J[:, k], fd, atol=1e-7)


def test_transition_refuses_the_pole():
    with pytest.raises(lm.GeometryError):
        lm.transition(np.array([[0.0, 1.0, 1.0]], dtype=complex), np.array([0]))


# -- radius and scaling -------------------------------------------------------


@given(st.integers(0, 10_000), positive, positive)
def test_radius_is_homogeneous(seed, r, R):
    z = cone_point(seed, r)
    assert lm.ambient_radius(z * R**1.5) == pytest.approx(R * lm.ambient_radius(z), rel=1e-12)


@given(cplx, cplx, cplx, positive)
def test_chart_scaling_commutes_with_blowdown(lam, u, v, R):
    c = np.array([[lam, u, v]])
    lhs = lm.blowdown(lm.scale_chart(c, R))
    rhs = R**1.5 * lm.blowdown(c)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


# -- smoothing map ------------------------------------------------------------


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.floats(0.2, 4.0), nonzero_t)
def test_phi_t_lands_on_v_t_with_radius_beta(seed, r, t):
    z = cone_point(seed, r)
    w = lm.phi_t(z, t)
    assert abs(np.sum(w**2) - t) <= 1e-12 * max(1.0, np.sum(abs(w) ** 2))
    assert lm.ambient_radius(w) == pytest.approx(lm.beta(t, r), rel=1e-12)


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.floats(0.2, 4.0), nonzero_t)
def test_phi_t_inverse_round_trip(seed, r, t):
    r = max(r, 1.01 * lm.critical_radius(t))
    z = cone_point(seed, r)
    w = lm.phi_t(z, t)
    if lm.ambient_radius(w) ** 3 <= 1.0001 * abs(t):
        return
    assert np.allclose(lm.phi_t_inverse(w, t), z, rtol=1e-9, atol=1e-12)


def test_phi_inverse_sign_of_imaginary_part():
    # (2g/(2g-1)) with a plus sign; the minus variant fails the round trip
    z = cone_point(0, 2.0)
    w = lm.phi(z)
    B = np.sum(abs(w) ** 2)
    g = 0.5 * (B + np.sqrt(B * B - 1))
    wrong = (2 * g / (2 * g + 1)) * w.real - 1j * (2 * g / (2 * g - 1)) * w.imag
    assert np.allclose(lm.phi_inverse(w), z, atol=1e-13)
    assert not np.allclose(wrong, z, atol=1e-3)


@given(st.integers(0, 10_000), st.floats(0.3, 3.0), nonzero_t)
def test_phi_t_by_scaling_agrees(seed, r, t):
    z = cone_point(seed, r)
    assert np.allclose(lm.phi_t(z, t), lm.phi_t_by_scaling(z, t), rtol=1e-12, atol=1e-13)


def test_phi_t_differential_matches_finite_differences():
    rng = np.random.default_rng(5)
    z = cone_point(5, 1.3)
    t = 0.4 - 0.2j
    for _ in range(4):
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        h = 1e-6
        fd = (lm.phi_t(z + h * v, t) - lm.phi_t(z - h * v, t)) / (2 * h)
        assert np.allclose(lm.phi_t_differential(z[None], v[None], t)[0], fd, atol=1e-8)


@given(nonzero_t, st.floats(1.0001, 50.0))
def test_beta_inverse(t, x):
    r = np.cbrt(x * abs(t))
    rho = lm.beta_inverse(t, r)
    assert rho >= lm.critical_radius(t) * (1 - 1e-12)
    assert lm.beta(t, rho) == pytest.approx(r, rel=1e-10)


def test_beta_minimum_at_critical_radius():
    t = 0.7
    rc = lm.critical_radius(t)
    assert lm.beta(t, rc) == pytest.approx(abs(t) ** (1 / 3), rel=1e-14)
    rho = np.linspace(0.5 * rc, 3 * rc, 101)
    assert np.all(lm.beta(t, rho) >= abs(t) ** (1 / 3) * (1 - 1e-14))


@settings(max_examples=30)
@given(nonzero_t, st.floats(0.0, 3.0), st.integers(0, 1000))
def test_smoothing_point_and_preimage(t, extra, seed):
    rng = np.random.default_rng(seed)
    x, y = lm._link_frames(1, rng)
    r = np.cbrt(abs(t)) * (1.0 + extra)
    z, z0 = lm.smoothing_point(t, x[0], y[0], r)
    assert lm.ambient_radius(z) == pytest.approx(r, rel=1e-12)
    assert abs(np.sum(z**2) - t) <= 1e-12 * max(1.0, r**3)
    assert np.allclose(lm.phi_t(z0, t), z, atol=1e-12 * max(1.0, r**1.5))


# -- sampling -----------------------------------------------------------------


def test_link_points_are_on_the_cone_at_unit_radius():
    z = lm.sample_link(200, 4)
    assert np.allclose(lm.ambient_radius(z), 1.0, rtol=1e-13)
    assert np.max(abs(np.sum(z**2, axis=1))) < 1e-13


def test_sampling_is_deterministic():
    a = lm.sample_region(lm.Resolution(0.3), lm.Region.tube(1.0), 300, seed=11)
    b = lm.sample_region(lm.Resolution(0.3), lm.Region.tube(1.0), 300, seed=11)
    c = lm.sample_region(lm.Resolution(0.3), lm.Region.tube(1.0), 300, seed=12)
    assert np.array_equal(a.coords, b.coords)
    assert not np.array_equal(a.coords, c.coords)


@pytest.mark.parametrize("model,region", [
    (lm.Cone(), lm.Region.disc(1.0)),
    (lm.Cone(), lm.Region.annulus(0.5, 1.0)),
    (lm.Resolution(0.2), lm.Region.tube(1.0)),
    (lm.Smoothing(0.3), lm.Region.annulus(0.3 ** (1 / 3), 1.0)),
])
def test_samples_stay_in_region(model, region):
    cloud = lm.sample_region(model, region, 400, seed=2)
    r = cloud.radii
    assert np.all(r <= region.outer_radius * (1 + 1e-12))
    assert np.all(r >= region.inner_radius * (1 - 1e-12))
    assert np.isfinite(cloud.fill_distance)


def test_resolution_zero_section_is_not_starved():
    a = 0.1
    cloud = lm.sample_region(lm.Resolution(a), lm.Region.tube(1.0), 2000, seed=0)
    assert np.sum(cloud.radii < a) >= 2000 / 20


def test_ray_layout_contains_vertex_and_rays():
    cloud = lm.sample_region(lm.Cone(), lm.Region.disc(1.0), 500, seed=0, layout="rays")
    assert cloud.vertex == 0
    assert cloud.radii[0] == 0.0
    rays = cloud.ray[1:]
    assert np.all(np.diff(rays) >= 0)
    for k in np.unique(rays):
        idx = np.flatnonzero(cloud.ray == k)
        z = cloud.points[idx] / cloud.radii[idx, None] ** 1.5
        assert np.allclose(z, z[0], atol=1e-12)


def test_cloud_json_round_trip(tmp_path):
    cloud = lm.sample_region(lm.Resolution(0.5), lm.Region.tube(1.0), 300, seed=3)
    cloud.save(tmp_path / "c.json")
    back = lm.load_cloud(tmp_path / "c.json")
    assert np.array_equal(back.coords, cloud.coords)
    assert np.array_equal(back.chart, cloud.chart)


def test_invalid_parameters_raise():
    with pytest.raises(ValueError):
        lm.Resolution(0.0)
    with pytest.raises(ValueError):
        lm.Smoothing(0.0)
    with pytest.raises(ValueError):
        lm.Region.annulus(1.0, 0.5)
    with pytest.raises(lm.GeometryError):
        lm.phi_t(np.zeros(4, complex), 1.0)
