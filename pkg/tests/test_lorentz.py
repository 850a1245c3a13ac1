import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from horocount import lorentz as lz

from conftest import random_boundary, random_element, random_k, random_point, random_rotation

dims = st.sampled_from([2, 3, 4])
seeds = st.integers(0, 2**32 - 1)


# ---------------------------------------------------------------- subgroups


@pytest.mark.parametrize("n", [2, 3, 4])
def test_zero_u_parameter_is_identity(n):
    assert np.array_equal(lz.subgroup_element("U", np.zeros(n - 1)), np.eye(n + 1))


@given(dims, seeds)
def test_u_is_additive(n, seed):
    rng = np.random.default_rng(seed)
    t1, t2 = rng.normal(size=(2, n - 1))
    lhs = lz.subgroup_element("U", t1) @ lz.subgroup_element("U", t2)
    assert np.allclose(lhs, lz.subgroup_element("U", t1 + t2), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_a_conjugates_u_by_dilation(n):
    s = math.log(2.0)
    t = np.ones(n - 1)
    g = lz.a_matrix(s, n) @ lz.u_matrix(t) @ lz.a_matrix(-s, n)
    assert np.allclose(g, lz.u_matrix(2 * t), atol=1e-14)


def test_m_rejects_non_rotation():
    with pytest.raises(lz.FormViolation):
        lz.m_matrix(np.diag([1.0, -1.0]))


@given(dims, seeds)
def test_products_preserve_form(n, seed):
    rng = np.random.default_rng(seed)
    g, h = random_element(rng, n), random_element(rng, n)
    gh = g @ h
    eps = np.finfo(float).eps
    bound = 50 * eps * (n + 1) * lz.max_norm(g) ** 2 * lz.max_norm(h) ** 2
    assert lz.form_residual(gh) <= bound
    assert lz.form_residual(lz.inverse(g)) <= 50 * eps * (n + 1) * lz.max_norm(g) ** 2
    assert np.allclose(lz.inverse(g) @ g, np.eye(n + 1), atol=1e-9 * lz.max_norm(g) ** 2)


def test_check_element_rejects_bad_matrices():
    with pytest.raises(lz.FormViolation):
        lz.check_element(np.diag([1.0, -1.0, 1.0]))  # det -1
    with pytest.raises(lz.FormViolation):
        lz.check_element(-np.eye(3))  # swaps the light cones
    with pytest.raises(lz.FormViolation):
        lz.check_element(np.eye(3) * 2)


# ---------------------------------------------------------------- max norm


def test_max_norm_examples():
    assert lz.max_norm(np.eye(4)) == 1.0
    for s in (0.0, 0.7, -2.0):
        assert lz.max_norm(lz.a_matrix(s, 3)) == pytest.approx(math.exp(abs(s)), rel=1e-15)
    assert lz.max_norm(lz.u_matrix([3.0])) == 4.5


def test_max_norm_stacks():
    g = np.stack([lz.u_matrix([3.0]), np.eye(3)])
    assert lz.max_norm(g).tolist() == [4.5, 1.0]


# ---------------------------------------------------------------- Iwasawa


@pytest.mark.parametrize("n", [2, 3, 4])
def test_iwasawa_normal_forms(n, rng):
    t = rng.normal(size=n - 1)
    s = 0.8
    f = lz.iwasawa(lz.u_matrix(t) @ lz.a_matrix(s, n))
    assert np.allclose(f.t, t, atol=1e-12) and f.s == pytest.approx(s, abs=1e-12)
    assert np.allclose(f.k, np.eye(n + 1), atol=1e-12)
    f = lz.iwasawa(lz.a_matrix(s, n) @ lz.u_matrix(t))
    assert np.allclose(f.t, math.exp(s) * t, atol=1e-12) and f.s == pytest.approx(s, abs=1e-12)
    k = random_k(rng, n)
    f = lz.iwasawa(k)
    assert np.allclose(f.t, 0, atol=1e-12) and abs(f.s) < 1e-12
    assert np.allclose(f.k, k, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_iwasawa_round_trip(n, rng):
    for _ in range(2000):
        g = random_element(rng, n, tmax=5, smax=5)
        f = lz.iwasawa(g)
        back = lz.u_matrix(f.t) @ lz.a_matrix(f.s, n) @ f.k
        assert lz.max_norm(back - g) <= 1e-9 * lz.max_norm(g)
        # k inherits the conditioning of g
        tol = 1e-13 * lz.max_norm(g) ** 2
        assert lz.form_residual(f.k) <= tol
        assert lz.max_norm(f.k @ f.k.T - np.eye(n + 1)) <= tol


@given(dims, seeds)
def test_psi_is_well_defined_on_cosets(n, seed):
    rng = np.random.default_rng(seed)
    g = random_element(rng, n)
    r = rng.uniform(-3, 3, size=n - 1)
    a, b = lz.iwasawa(g), lz.iwasawa(lz.u_matrix(r) @ g)
    assert abs(a.s - b.s) <= 1e-9
    assert lz.max_norm(a.k - b.k) <= 1e-9
    assert np.allclose(b.t, a.t + r, atol=1e-9 * max(1, np.max(np.abs(r))))


# ---------------------------------------------------------------- endpoints


@pytest.mark.parametrize("n", [2, 3, 4])
def test_endpoints_of_identity(n):
    fwd, bwd = lz.endpoints(np.eye(n + 1))
    assert np.allclose(fwd, np.eye(n + 1)[0]) and np.allclose(bwd, np.eye(n + 1)[-1])


@given(dims, seeds)
def test_parabolic_subgroup_fixes_forward_point(n, seed):
    rng = np.random.default_rng(seed)
    rot = np.eye(n - 1) if n == 2 else random_rotation(rng, n - 1)
    p = lz.m_matrix(rot) @ lz.a_matrix(rng.normal(), n) @ lz.u_matrix(rng.normal(size=n - 1)).T
    assert np.allclose(lz.endpoints(p)[0], np.eye(n + 1)[0], atol=1e-12)
    # U fixes the backward point
    u = lz.u_matrix(rng.normal(size=n - 1))
    assert np.array_equal(np.eye(n + 1)[-1] @ u, np.eye(n + 1)[-1])


# ---------------------------------------------------------------- Busemann / distance


@given(dims, seeds)
def test_busemann_cocycle_and_zero(n, seed):
    rng = np.random.default_rng(seed)
    xi = random_boundary(rng, n)
    x, y, z = (random_point(rng, n) for _ in range(3))
    assert lz.busemann(xi, x, x) == 0.0
    lhs = lz.busemann(xi, x, y) + lz.busemann(xi, y, z)
    assert abs(lhs - lz.busemann(xi, x, z)) <= 1e-10


def _ray(x, xi, t):
    """Point at distance t from x on the geodesic ray towards xi."""
    return math.exp(-t) * x + math.sinh(t) * xi / lz.bilinear(x, xi)


@given(dims, seeds)
def test_busemann_matches_limit_along_ray(n, seed):
    rng = np.random.default_rng(seed)
    xi = random_boundary(rng, n)
    x, y = random_point(rng, n, smax=2), random_point(rng, n, smax=2)
    p = _ray(lz.base_point(n), xi, 30.0)
    oracle = lz.hyp_distance(x, p) - lz.hyp_distance(y, p)
    assert abs(lz.busemann(xi, x, y) - oracle) <= 1e-6


@given(dims, seeds)
def test_busemann_isometry_invariance(n, seed):
    rng = np.random.default_rng(seed)
    xi = random_boundary(rng, n)
    x, y = random_point(rng, n), random_point(rng, n)
    g = random_element(rng, n, tmax=2, smax=2)
    assert abs(lz.busemann(xi @ g, x @ g, y @ g) - lz.busemann(xi, x, y)) <= 1e-9


@pytest.mark.parametrize("n", [2, 3, 4])
def test_distance_along_geodesic_flow(n):
    o = lz.base_point(n)
    assert lz.hyp_distance(o, o) == 0.0
    for s in (-3.0, 0.5, 2.0):
        assert lz.hyp_distance(o, o @ lz.a_matrix(s, n)) == pytest.approx(abs(s), abs=1e-9)
        assert lz.distance_from_base(lz.a_matrix(s, n)) == pytest.approx(abs(s), abs=1e-9)


def test_triangle_inequality(rng):
    for n in (2, 3):
        for _ in range(1000):
            x, y, z = (random_point(rng, n) for _ in range(3))
            dxy, dyz, dxz = lz.hyp_distance(x, y), lz.hyp_distance(y, z), lz.hyp_distance(x, z)
            assert dxz <= dxy + dyz + 1e-9
            assert dxy == pytest.approx(lz.hyp_distance(y, x), abs=1e-9)


def test_distance_rejects_non_points():
    with pytest.raises(lz.GeometryError):
        lz.hyp_distance(np.array([0.0, 1.0, 0.0]), lz.base_point(2))


# ---------------------------------------------------------------- star product


def test_star_examples():
    for n in (2, 3):
        assert lz.star(np.eye(n + 1), np.eye(n + 1)) == pytest.approx(math.sqrt(0.5), abs=1e-15)
        assert lz.star(np.eye(n + 1), lz.a_matrix(math.log(2), n)) == pytest.approx(0.5, abs=1e-15)


def _random_light(rng, n):
    return rng.lognormal(sigma=1.5) * random_boundary(rng, n)


@pytest.mark.parametrize("n", [2, 3])
def test_star_vectors_comparable_to_geometric_mean(n, rng):
    ratios = []
    for _ in range(10_000 if n == 2 else 2000):
        v, u = _random_light(rng, n), _random_light(rng, n)
        ratios.append(float(lz.star_vectors_closed(v, u)) / math.sqrt(np.linalg.norm(v) * np.linalg.norm(u)))
    ratios = np.array(ratios)
    assert ratios.min() > 0.1 and ratios.max() < 2.0


@given(dims, seeds)
def test_star_closed_form_matches_matrices(n, seed):
    rng = np.random.default_rng(seed)
    v, u = _random_light(rng, n), _random_light(rng, n)
    assert float(lz.star_vectors_closed(v, u)) == pytest.approx(lz.star_vectors(v, u), rel=1e-9)


@given(dims, seeds)
def test_star_ignores_u_factor(n, seed):
    rng = np.random.default_rng(seed)
    x, y = random_element(rng, n), random_element(rng, n)
    u = lz.u_matrix(rng.normal(size=n - 1))
    base = lz.star(lz.psi(x), lz.psi(y))
    assert lz.star(lz.psi(u @ x), lz.psi(y)) == pytest.approx(base, rel=1e-9)
    assert lz.star(lz.psi(x), lz.psi(u @ y)) == pytest.approx(base, rel=1e-9)


@given(st.sampled_from([3, 4]), seeds)
def test_star_independent_of_m_lift(n, seed):
    rng = np.random.default_rng(seed)
    v, u = _random_light(rng, n), _random_light(rng, n)
    m = lz.m_matrix(random_rotation(rng, n - 1))
    xv = lz.light_psi(v)
    # m x has the same light vector as x, so it is another lift of v
    assert np.allclose((m @ xv)[-1], v, atol=1e-9 * np.linalg.norm(v))
    assert lz.star(m @ xv, lz.light_psi(u)) == pytest.approx(lz.star(xv, lz.light_psi(u)), rel=1e-9)


# ---------------------------------------------------------------- U components


@given(dims, seeds)
def test_u_component_rules(n, seed):
    rng = np.random.default_rng(seed)
    e = np.eye(n + 1)
    t = rng.normal(size=n - 1)
    assert np.allclose(lz.u_component(e, lz.u_matrix(t)), t, atol=1e-12)
    g, h = random_element(rng, n), random_element(rng, n)
    s = rng.uniform(-2, 2)
    assert np.allclose(lz.u_component(e, lz.a_matrix(s, n) @ g), math.exp(s) * lz.u_component(e, g), atol=1e-9 * math.exp(abs(s)) * 10)
    lhs = lz.u_component(e, h @ g)
    rhs = lz.u_component(e, h) + lz.u_component(lz.psi(h), g)
    assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.max(np.abs(lhs))))


# ---------------------------------------------------------------- visual map


@pytest.mark.parametrize("n", [2, 3, 4])
def test_visual_inverse_at_identity(n):
    assert np.allclose(lz.visual_inverse(np.eye(n + 1), np.eye(n + 1)[0]), 0)


@given(dims, seeds)
def test_visual_inverse_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    g = random_element(rng, n, tmax=2, smax=2)
    t = rng.uniform(-3, 3, size=n - 1)
    lam = lz.endpoints(lz.u_matrix(t) @ g)[0]
    assert np.allclose(lz.visual_inverse(g, lam), t, atol=1e-8)
    m = lam @ lz.inverse(g)
    m = m / m[0]
    assert m[-1] == pytest.approx(0.5 * t @ t, abs=1e-9 * max(1, t @ t))


def test_visual_inverse_pole():
    g = np.eye(3)
    with pytest.raises(lz.PoleError):
        lz.visual_inverse(g, np.eye(3)[-1])
    t, pole = lz.visual_inverse_safe(g, np.stack([np.eye(3)[-1], np.eye(3)[0]]))
    assert pole.tolist() == [True, False]


# ---------------------------------------------------------------- light vectors


@pytest.mark.parametrize("n", [2, 3, 4])
def test_recover_k(n, rng):
    e = np.eye(n + 1)
    k0 = lz.recover_k(e[-1])
    assert np.allclose(e[-1] @ k0, e[-1], atol=1e-15)
    worst = 0.0
    for _ in range(10_000 if n == 2 else 3000):
        v = _random_light(rng, n)
        k = lz.recover_k(v)
        worst = max(worst, float(np.max(np.abs(e[-1] @ k - v / np.linalg.norm(v)))))
    assert worst <= 1e-10


def test_light_vector_validation():
    with pytest.raises(lz.GeometryError):
        lz.LightVector(np.zeros(3))
    with pytest.raises(lz.GeometryError):
        lz.LightVector(np.array([1.0, 0.0, 1.0]))  # timelike
    with pytest.raises(lz.GeometryError):
        lz.LightVector(-np.eye(3)[0])  # lower cone


def test_boundary_point_rejects_timelike():
    with pytest.raises(lz.GeometryError):
        lz.boundary_point(np.array([1.0, 0.0, 1.0]))


@given(st.sampled_from([2, 3]), seeds, st.floats(0.5, 6.0))
def test_hyperbolic_element_has_prescribed_axis(n, seed, length):
    rng = np.random.default_rng(seed)
    xp, xm = random_boundary(rng, n), random_boundary(rng, n)
    if lz.chordal(xp, xm) < 0.1:
        return
    h = lz.hyperbolic_element(xp, xm, length)
    lz.check_element(h, tol=1e-9)
    assert np.allclose(lz.normalize_boundary(xp @ h), lz.normalize_boundary(xp), atol=1e-9)
    assert np.linalg.norm(xp @ h) / np.linalg.norm(xp) == pytest.approx(math.exp(length), rel=1e-9)
    # the contracting eigenvalue sits under round-off of size eps * |h|
    assert np.linalg.norm(xm @ h) / np.linalg.norm(xm) == pytest.approx(math.exp(-length), rel=1e-9, abs=1e-14 * lz.max_norm(h))
