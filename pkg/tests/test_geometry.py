import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathheat.errors import CutLocusError, DomainError, UnsupportedFeatureError
from pathheat.geometry import Euclidean, Hyperbolic, Sphere, Torus, make_manifold
from pathheat.quadrature import integrate_manifold, semigroup_defect

RNG = np.random.default_rng(20240811)

MANIFOLDS = [
    Euclidean(2),
    Euclidean(3),
    Torus(1, periods=(2 * math.pi,)),
    Torus(2, periods=(2 * math.pi, 4.0)),
    Sphere(2, radius=1.0),
    Sphere(2, radius=2.5),
    Sphere(3, radius=1.0),
    Hyperbolic(2, radius=1.0),
    Hyperbolic(2, radius=1.7),
]


def ids(ms):
    return [f"{m.kind}{m.dim}r{getattr(m, 'radius', 0)}" for m in ms]


# --- closed-form examples -----------------------------------------------------


def test_distance_quarter_great_circle():
    S = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    eq = np.array([1.0, 0.0, 0.0])
    assert math.isclose(float(S.distance(north, eq)), math.pi / 2, abs_tol=1e-14)


def test_distance_flat_345():
    E = Euclidean(2)
    assert float(E.distance([0.0, 0.0], [3.0, 4.0])) == pytest.approx(5.0, abs=1e-15)


def test_distance_antipodal():
    S = Sphere(2)
    p = np.array([0.0, 0.0, 1.0])
    assert float(S.distance(p, -p)) == pytest.approx(math.pi, abs=1e-12)


def test_exp_pole_to_equator():
    S = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    v = (math.pi / 2) * np.array([1.0, 0.0, 0.0])
    out = S.exp(north, v)
    assert np.allclose(out, [1.0, 0.0, 0.0], atol=1e-14)


def test_exp_zero_identity():
    for M in MANIFOLDS:
        p = M.random_point(RNG)
        out = M.exp(p, np.zeros(M.ambient_dim))
        assert np.allclose(out, p, atol=1e-14)


def test_exp_flat_translation():
    E = Euclidean(3)
    p = RNG.standard_normal(3)
    v = RNG.standard_normal(3)
    assert np.allclose(E.exp(p, v), p + v, atol=0)


def test_log_flat():
    E = Euclidean(3)
    p, q = RNG.standard_normal(3), RNG.standard_normal(3)
    assert np.allclose(E.log(p, q), q - p, atol=0)


def test_log_pole_equator_norm():
    S = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    eq = np.array([0.0, 1.0, 0.0])
    v = S.log(north, eq)
    assert float(np.linalg.norm(v)) == pytest.approx(math.pi / 2, abs=1e-13)


def test_log_antipodal_cut_locus():
    S = Sphere(2)
    p = np.array([0.0, 0.0, 1.0])
    with pytest.raises(CutLocusError):
        S.log(p, -p)


def test_torus_half_period_cut_locus():
    T = Torus(1, periods=(2.0,))
    with pytest.raises(CutLocusError):
        T.log(np.array([0.0]), np.array([1.0]))


def test_transport_geodesic_velocity():
    # geodesics are auto-parallel: transported initial velocity = final velocity
    S = Sphere(2, radius=1.3)
    p = S.random_point(RNG)
    q = S.random_point(RNG)
    v = S.log(p, q)
    w = S.transport(p, q, v)
    back = S.log(q, p)
    assert np.allclose(w, -back, atol=1e-10)


def test_transport_right_angle_triangle_holonomy():
    """Transport around the octant triangle rotates tangent vectors by pi/2.

    Oracle: numerical integration of the transport ODE gamma' . dv = 0 along
    the same loop, realized by composing many small closed-form transports.
    """
    S = Sphere(2)
    A = np.array([0.0, 0.0, 1.0])
    B = np.array([1.0, 0.0, 0.0])
    C = np.array([0.0, 1.0, 0.0])
    v0 = np.array([1.0, 0.0, 0.0])  # tangent at A

    def leg(p, q, v, steps=1):
        for k in range(steps):
            a = S.exp(p, S.log(p, q) * (k / steps))
            b = S.exp(p, S.log(p, q) * ((k + 1) / steps))
            v = S.transport(a, b, v)
        return v

    v = leg(A, B, v0)
    v = leg(B, C, v)
    v = leg(C, A, v)
    # fine-step oracle (acts as an ODE integrator for the transport equation)
    w = leg(A, B, v0, steps=200)
    w = leg(B, C, w, steps=200)
    w = leg(C, A, w, steps=200)
    assert np.allclose(v, w, atol=1e-9)
    # enclosed area = 4pi/8 = pi/2 -> rotation by pi/2 in the tangent plane
    ang = math.atan2(float(v0[0] * v[1] - v0[1] * v[0]), float(np.dot(v0, v)))
    assert abs(abs(ang) - math.pi / 2) < 1e-10


def test_curvature_closed_forms():
    a = np.array([1.0, 0.0])
    b = np.array([0.0, 1.0])
    c = RNG.standard_normal(2)
    assert np.allclose(Euclidean(2).curvature_op(a, b), 0.0)
    Om_s = Sphere(2).curvature_op(a, b)
    assert np.allclose(Om_s @ c, np.dot(b, c) * a - np.dot(a, c) * b, atol=1e-15)
    Om_h = Hyperbolic(2).curvature_op(a, b)
    assert np.allclose(Om_h @ c, -(np.dot(b, c) * a - np.dot(a, c) * b), atol=1e-15)


def test_ricci_scalar_closed_forms():
    S2 = Sphere(2)
    p = S2.random_point(RNG)
    v = S2.tangent_project(p, RNG.standard_normal(3))
    assert np.allclose(S2.ricci(p, v), v, atol=1e-14)
    assert S2.scalar_curvature() == pytest.approx(2.0)
    assert Sphere(3).scalar_curvature() == pytest.approx(6.0)
    E = Euclidean(4)
    assert E.scalar_curvature() == 0.0
    assert np.allclose(E.ricci(None, np.ones(4)), 0.0)
    assert np.allclose(S2.grad_scalar(p), 0.0)


def test_kappa0_samples_bound_curvature():
    # |Omega_u(a,b)c| <= kappa0 for random unit a, b, c
    for M in MANIFOLDS:
        d = M.dim
        if d < 2:
            continue
        for _ in range(50):
            a, b, c = RNG.standard_normal((3, d))
            a, b, c = (x / np.linalg.norm(x) for x in (a, b, c))
            val = float(np.linalg.norm(M.curvature_op(a, b) @ c))
            assert val <= M.kappa0 + 1e-12


def test_inj_radius_closed_forms():
    assert Sphere(2, radius=2.0).inj_radius == pytest.approx(2 * math.pi)
    assert Euclidean(3).inj_radius == math.inf
    assert Hyperbolic(2).inj_radius == math.inf
    assert Torus(2, periods=(2.0, 6.0)).inj_radius == pytest.approx(1.0)


# --- property tests -----------------------------------------------------------


@pytest.mark.parametrize("M", MANIFOLDS, ids=ids(MANIFOLDS))
def test_exp_log_roundtrip(M):
    rng = np.random.default_rng(7)
    for _ in range(25):
        p = M.random_point(rng)
        frame = M.canonical_frame(p)
        a = rng.standard_normal(M.dim)
        a *= rng.uniform(0, 0.9) * min(M.inj_radius, 3.0) / np.linalg.norm(a)
        v = M.frame_apply(frame, a)
        q = M.exp(p, v)
        back = M.log(p, q)
        assert np.allclose(back, v, atol=1e-9)
        assert abs(float(M.distance(p, q)) - float(np.linalg.norm(a))) < 1e-9


@pytest.mark.parametrize("M", MANIFOLDS, ids=ids(MANIFOLDS))
def test_transport_isometry_and_roundtrip(M):
    rng = np.random.default_rng(11)
    for _ in range(25):
        p = M.random_point(rng)
        q = M.random_point(rng)
        if float(M.distance(p, q)) >= 0.95 * M.inj_radius:
            continue
        f = M.canonical_frame(p)
        v = M.frame_apply(f, rng.standard_normal(M.dim))
        w = M.frame_apply(f, rng.standard_normal(M.dim))
        Pv, Pw = M.transport(p, q, v), M.transport(p, q, w)
        assert abs(float(M.metric(q, Pv, Pw) - M.metric(p, v, w))) < 1e-10
        assert np.allclose(M.transport(q, p, Pv), v, atol=1e-10)


@pytest.mark.parametrize("M", MANIFOLDS, ids=ids(MANIFOLDS))
def test_first_bianchi_sampled(M):
    d = M.dim
    if d < 2:
        pytest.skip("needs dim >= 2")
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b, c = rng.standard_normal((3, d))
        total = (
            M.curvature_op(a, b) @ c
            + M.curvature_op(b, c) @ a
            + M.curvature_op(c, a) @ b
        )
        assert np.allclose(total, 0.0, atol=1e-10)


def test_curvature_op_skew_and_antisymmetric():
    for M in MANIFOLDS:
        if M.dim < 2:
            continue
        a, b = RNG.standard_normal((2, M.dim))
        Om = M.curvature_op(a, b)
        assert np.allclose(Om + Om.T, 0.0, atol=1e-12)
        assert np.allclose(M.curvature_op(b, a), -Om, atol=1e-12)


def test_ricci_frame_independence():
    S = Sphere(2, radius=1.4)
    p = S.random_point(RNG)
    # trace of R(v, e_i)e_i over two different frames
    v = S.tangent_project(p, RNG.standard_normal(3))
    for seed in (1, 2):
        rng = np.random.default_rng(seed)
        f = S.random_frame(p, rng)
        ric = sum(
            S.kappa
            * (
                S.metric(p, f[:, i], f[:, i]) * v
                - S.metric(p, v, f[:, i]) * f[:, i]
            )
            for i in range(2)
        )
        assert np.allclose(ric, S.ricci(p, v), atol=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    for M in (Sphere(2), Torus(2, periods=(2.0, 3.0)), Hyperbolic(2)):
        p, q, r = (M.random_point(rng) for _ in range(3))
        assert float(M.distance(p, q)) <= float(
            M.distance(p, r) + M.distance(r, q)
        ) + 1e-10


# --- heat kernels -------------------------------------------------------------


def test_heat_kernel_flat_at_zero():
    E = Euclidean(3)
    p = np.zeros(3)
    val = float(E.heat_kernel(0.7, p, p))
    assert val == pytest.approx((2 * math.pi * 0.7) ** -1.5, rel=1e-14)


def test_heat_kernel_circle_equilibrium():
    C = Torus(1, periods=(2 * math.pi,))
    p, q = np.array([0.3]), np.array([2.0])
    assert float(C.heat_kernel(60.0, p, q)) == pytest.approx(1 / (2 * math.pi), abs=1e-12)


def test_heat_kernel_sphere_normalization():
    # Gauss-Legendre quadrature oracle: integral over S^2 equals 1
    S = Sphere(2)
    north = np.array([0.0, 0.0, 1.0])
    total = integrate_manifold(S, lambda r: S.heat_kernel(0.5, north, r), order=48)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_heat_kernel_symmetric():
    S = Sphere(2, radius=1.2)
    p, q = S.random_point(RNG), S.random_point(RNG)
    assert float(S.heat_kernel(0.4, p, q)) == pytest.approx(
        float(S.heat_kernel(0.4, q, p)), rel=1e-13
    )
    C = Torus(1)
    a, b = C.random_point(RNG), C.random_point(RNG)
    assert float(C.heat_kernel(0.3, a, b)) == pytest.approx(
        float(C.heat_kernel(0.3, b, a)), rel=1e-13
    )


@pytest.mark.parametrize(
    "M,p,q",
    [
        (Torus(1), np.array([0.1]), np.array([2.5])),
        (Sphere(2), np.array([0.0, 0.0, 1.0]), np.array([0.6, 0.0, 0.8])),
    ],
    ids=["circle", "sphere"],
)
def test_heat_kernel_semigroup(M, p, q):
    assert semigroup_defect(M, 0.3, 0.5, p, q, order=48) < 1e-6


def test_heat_kernel_unsupported():
    H = Hyperbolic(2)
    with pytest.raises(UnsupportedFeatureError):
        H.heat_kernel(1.0, H.random_point(RNG), H.random_point(RNG))


def test_heat_kernel_t_positive():
    with pytest.raises(DomainError):
        Euclidean(2).heat_kernel(0.0, np.zeros(2), np.zeros(2))


# --- constructors / errors ----------------------------------------------------


def test_make_manifold_specs():
    assert make_manifold("sphere", 2, radius=1.0).kind == "sphere"
    assert make_manifold("circle", 1, radius=2.0).periods[0] == pytest.approx(4 * math.pi)
    assert make_manifold("euclidean", 5).dim == 5
    assert make_manifold("hyperbolic", 2).kappa == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        make_manifold("klein-bottle", 2)


def test_check_point_rejects_off_manifold():
    S = Sphere(2)
    with pytest.raises(DomainError):
        S.check_point(np.array([1.0, 1.0, 1.0]))


def test_point_constraint_tolerance():
    for M in MANIFOLDS:
        p = M.random_point(RNG)
        assert float(np.max(M.constraint_violation(p))) < 1e-12
