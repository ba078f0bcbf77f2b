"""Boundary convexity, distance jets, free tests, the torus threshold, and
quadratic hulls."""

import math

import numpy as np
import pytest

from calgeo.catalog import make_calibration
from calgeo.convexity import (
    HullProblem,
    NotStrictlyConvexError,
    SurfaceJet,
    boundary_margin,
    dist_sq_jet,
    free_test,
    log_delta_margin,
    quad_hull_membership,
    second_fundamental,
    stabilize_defining,
    torus_scan,
)
from calgeo.grassmann import OptOptions
from calgeo.pshcheck import Jet2, psh_classify, quadratic_jet

DXY3 = make_calibration("coordinate", n=3, indices=(0, 1))
KA2 = make_calibration("kahler", n=2)
SL3 = make_calibration("special_lagrangian", n=3)


def sphere_jet(n, r, axis=-1):
    """Jet of rho = |x| - r at the boundary point r * e_axis."""
    e = np.eye(n)[axis]
    hess = (np.eye(n) - np.outer(e, e)) / r
    return SurfaceJet(Jet2(0.0, e, hess))


# ---------------------------------------------------------------------------
# second fundamental form
# ---------------------------------------------------------------------------


def test_sphere_second_fundamental():
    for r in (1.0, 2.5):
        II, T = second_fundamental(sphere_jet(3, r))
        assert np.allclose(II, -np.eye(2) / r, atol=1e-12)


def test_hyperplane_second_fundamental():
    s = SurfaceJet(Jet2(0.0, np.eye(3)[2], np.zeros((3, 3))))
    II, _ = second_fundamental(s)
    assert np.allclose(II, 0.0)


def test_cylinder_principal_curvatures():
    # rho = sqrt(x^2 + y^2) - r at (r, 0, 0); FD cross-check of the jet
    r = 1.5
    x0 = np.array([r, 0.0, 0.0])

    def rho(x):
        return math.hypot(x[0], x[1]) - r

    h = 1e-5
    grad = np.array([(rho(x0 + h * e) - rho(x0 - h * e)) / (2 * h)
                     for e in np.eye(3)])
    hess = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            hess[i, j] = (rho(x0 + h * (np.eye(3)[i] + np.eye(3)[j]))
                          - rho(x0 + h * np.eye(3)[i])
                          - rho(x0 + h * np.eye(3)[j]) + rho(x0)) / h**2
    s = SurfaceJet(Jet2(0.0, grad, (hess + hess.T) / 2))
    II, _ = second_fundamental(s)
    curv = sorted(np.linalg.eigvalsh(II))
    assert abs(curv[0] + 1.0 / r) <= 1e-4
    assert abs(curv[1]) <= 1e-4


def test_surface_jet_requires_gradient():
    with pytest.raises(ValueError, match="gradient"):
        SurfaceJet(Jet2(0.0, np.zeros(3), np.eye(3)))


# ---------------------------------------------------------------------------
# boundary margins
# ---------------------------------------------------------------------------


def test_sphere_margin_formula_various_calibrations():
    # tr_xi II = -p / r on every tangential p-plane, so margin = p |grad| / r
    for cal, r in [(DXY3, 2.0), (KA2, 1.5), (SL3, 3.0)]:
        s = sphere_jet(cal.n, r)
        rep = boundary_margin(s, cal, opts=OptOptions(seed=1, restarts=10))
        assert rep.classification == "strictly_convex"
        assert abs(rep.tangential_margin - cal.p / r) <= 1e-6
        assert abs(rep.upper_margin - cal.p / r) <= 1e-6
        assert rep.status == "ok"
        assert rep.cross_check_residual <= 1e-6


def test_hyperplane_flat():
    s = SurfaceJet(Jet2(0.0, np.eye(3)[2], np.zeros((3, 3))))
    rep = boundary_margin(s, DXY3)
    assert rep.classification == "flat"


def test_vacuous_when_no_tangential_plane():
    # normal along e1: the x1 x2 plane is never tangential
    s = SurfaceJet(Jet2(0.0, np.eye(3)[0], np.eye(3) / 3.0))
    rep = boundary_margin(s, DXY3)
    assert rep.classification == "vacuous"


def test_defining_function_rescale_invariance():
    rng = np.random.default_rng(2)
    for _ in range(5):
        H = rng.standard_normal((3, 3))
        H = (H + H.T) / 2
        g = np.array([0.0, 0.0, 1.0])
        u = float(rng.uniform(0.4, 2.5))
        du = rng.standard_normal(3)
        # Hess(u rho) = u Hess rho + du grad^T + grad du^T at rho = 0
        H2 = u * H + np.outer(du, g) + np.outer(g, du)
        r1 = boundary_margin(SurfaceJet(Jet2(0.0, g, H)), DXY3)
        r2 = boundary_margin(SurfaceJet(Jet2(0.0, u * g, H2)), DXY3)
        assert abs(r2.tangential_margin - u * r1.tangential_margin) <= 1e-10
        assert r1.classification == r2.classification


# ---------------------------------------------------------------------------
# -log(delta) margins and defining-function stabilization
# ---------------------------------------------------------------------------


def test_log_delta_strictly_convex_sphere():
    s = sphere_jet(3, 2.0)
    for delta in (1e-2, 1e-3):
        assert log_delta_margin(s, DXY3, delta) > 0.0


def test_log_delta_flat_hyperplane_nonnegative():
    s = SurfaceJet(Jet2(0.0, np.eye(3)[2], np.zeros((3, 3))))
    val = log_delta_margin(s, DXY3, 0.1)
    assert abs(val) <= 1e-9  # tangential plane exists: cos theta = 0


def test_log_delta_reduces_to_boundary_margin_tangentially():
    # on tangential planes the distance term drops
    s = sphere_jet(3, 2.0)
    delta = 0.05
    rep = boundary_margin(s, DXY3)
    full = log_delta_margin(s, DXY3, delta)
    assert full <= rep.tangential_margin / delta + 1e-9


def test_stabilize_defining_sphere_and_identity():
    s = sphere_jet(3, 2.0)
    out = stabilize_defining(s, DXY3)
    assert out["A"] >= 0.0
    assert out["margin_at_A"] >= 1e-6
    # Hess = Id is already strictly plurisubharmonic: A = 0
    s2 = SurfaceJet(Jet2(0.0, np.eye(3)[2], np.eye(3)))
    out2 = stabilize_defining(s2, DXY3)
    assert out2["A"] == 0.0


def test_stabilize_defining_rejects_flat():
    s = SurfaceJet(Jet2(0.0, np.eye(3)[2], np.zeros((3, 3))))
    with pytest.raises(NotStrictlyConvexError) as err:
        stabilize_defining(s, DXY3)
    assert err.value.witness is not None


# ---------------------------------------------------------------------------
# free / isotropic
# ---------------------------------------------------------------------------


def test_free_below_degree():
    out = free_test(np.eye(6)[:, :2], SL3)
    assert out["free"] and out["isotropic"]
    assert out["sup_phi"] == 0.0
    assert out["routes_consistent"]


def test_free_complex_subspace_under_sl():
    # C^2 inside C^3 (the first four interleaved coordinates)
    out = free_test(np.eye(6)[:, :4], SL3, opts=OptOptions(seed=3, restarts=16))
    assert out["free"]
    assert out["sup_phi"] < 1.0 - 1e-3
    assert out["routes_consistent"]


def test_not_free_complex_line_under_kahler():
    out = free_test(np.eye(4)[:, :2], KA2)
    assert not out["free"]
    assert abs(out["sup_phi"] - 1.0) <= 1e-9
    assert out["routes_consistent"]


def test_isotropic_but_not_only_free():
    # a totally real plane in C^2 is omega-isotropic and free
    T = np.eye(4)[:, [0, 2]]
    out = free_test(T, KA2)
    assert out["free"] and out["isotropic"]


# ---------------------------------------------------------------------------
# distance-squared jets
# ---------------------------------------------------------------------------


def test_affine_dist_jet_exact():
    B = np.eye(5)[:, :2]
    x = np.array([0.3, -0.2, 1.0, 0.5, 0.0])
    j = dist_sq_jet({"kind": "affine", "basis": B}, x)
    P_N = np.diag([0, 0, 1, 1, 1.0])
    assert np.allclose(j.hessian, P_N)
    assert np.allclose(j.gradient, P_N @ x)
    assert abs(j.value - 0.5 * (1.0 + 0.25)) <= 1e-14


def test_sphere_dist_jet_on_surface_equals_projection():
    j = dist_sq_jet({"kind": "sphere", "r": 2.0}, np.array([0, 0, 2.0]))
    assert np.allclose(j.hessian, np.diag([0, 0, 1.0]), atol=1e-12)
    # finite-difference cross-check off the surface
    x0 = np.array([0.3, -0.4, 1.9])

    def f(x):
        return 0.5 * (np.linalg.norm(x) - 2.0) ** 2

    h = 1e-4
    j2 = dist_sq_jet({"kind": "sphere", "r": 2.0}, x0)
    for i in range(3):
        e = np.eye(3)[i]
        fd = (f(x0 + h * e) - f(x0 - h * e)) / (2 * h)
        assert abs(fd - j2.gradient[i]) <= 1e-6


def test_torus_dist_jet_fd_cross_check():
    R, r = 2.0, 0.5
    x0 = np.array([0.2, 0.3, 2.4])

    def f(x):
        u = math.hypot(x[0], x[2])
        return 0.5 * (math.hypot(u - R, x[1]) - r) ** 2

    j = dist_sq_jet({"kind": "torus", "R": R, "r": r}, x0)
    h = 1e-5
    for i in range(3):
        e = np.eye(3)[i]
        fd = (f(x0 + h * e) - f(x0 - h * e)) / (2 * h)
        assert abs(fd - j.gradient[i]) <= 1e-7
        fdd = (f(x0 + h * e) - 2 * f(x0) + f(x0 - h * e)) / h**2
        assert abs(fdd - j.hessian[i, i]) <= 1e-4


def test_graph_dist_jet_matches_plane_case():
    # the graph of the zero quadratic is the hyperplane x3 = 0
    j = dist_sq_jet({"kind": "graph", "Q": np.zeros((2, 2))},
                    np.array([0.4, -0.2, 0.3]))
    assert abs(j.value - 0.5 * 0.09) <= 1e-8
    assert np.allclose(j.hessian, np.diag([0, 0, 1.0]), atol=1e-3)


def test_sphere_center_rejected():
    with pytest.raises(ValueError, match="focal"):
        dist_sq_jet({"kind": "sphere", "r": 1.0}, np.zeros(3))


def test_free_iff_strict_distance_jet():
    # Hess of the squared distance at a surface point is P_N; strictness of
    # its classification is exactly freeness of the tangent space
    cases = [
        (KA2, np.eye(4)[:, :2], False),
        (KA2, np.eye(4)[:, [0, 2]], True),
        (SL3, np.eye(6)[:, [0, 2, 4]], False),
        (SL3, np.eye(6)[:, :4], True),
        (DXY3, np.eye(3)[:, :2], False),
        (DXY3, np.eye(3)[:, [0, 2]], True),
    ]
    for cal, T, expect_free in cases:
        jet = dist_sq_jet({"kind": "affine", "basis": T}, np.zeros(cal.n))
        rep = psh_classify(jet, cal, opts=OptOptions(seed=4, restarts=12))
        assert (rep.classification == "strictly_psh") == expect_free
        assert free_test(T, cal)["free"] == expect_free


def test_kernel_of_strict_jet_is_free():
    # strictly plurisubharmonic jets have free Hessian kernels
    rng = np.random.default_rng(5)
    for _ in range(3):
        B = rng.standard_normal((4, 4))
        Q = B @ B.T + 0.5 * np.eye(4)
        jet = Jet2(0.0, np.zeros(4), Q)
        rep = psh_classify(jet, KA2)
        assert rep.classification == "strictly_psh"
        lam, V = np.linalg.eigh(Q)
        ker = V[:, lam <= 1e-10]
        out = free_test(ker, KA2)
        assert out["free"]


# ---------------------------------------------------------------------------
# the torus
# ---------------------------------------------------------------------------


def test_torus_scan_threshold_sides():
    out = torus_scan(2.0, 0.9, resolution=8)
    assert out["convex"] is True
    assert abs(out["min_margin"] - (2.0 - 1.8) / (0.9 * 1.1)) <= 1e-9
    out = torus_scan(2.0, 1.1, resolution=8)
    assert out["convex"] is False
    assert out["witness_point"] is not None
    # the witness sits on the inner crown circle
    w = np.asarray(out["witness_point"])
    assert abs(math.hypot(w[0], w[2]) - 0.9) <= 1e-9


def test_torus_threshold_bisection():
    lo, hi = 0.8, 1.2
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        if torus_scan(2.0, mid, resolution=8)["convex"]:
            lo = mid
        else:
            hi = mid
    assert abs(0.5 * (lo + hi) - 1.0) <= 0.01


def test_torus_scan_validates():
    with pytest.raises(ValueError):
        torus_scan(1.0, 1.5)


# ---------------------------------------------------------------------------
# quadratic hull
# ---------------------------------------------------------------------------


def circle_points(m, radius=1.0):
    ts = np.linspace(0.0, 2.0 * math.pi, m + 1)[:-1]
    return radius * np.column_stack([np.cos(ts), np.sin(ts)])


def test_hull_query_in_k():
    vol2 = make_calibration("volume", n=2)
    K = circle_points(12)
    out = quad_hull_membership(HullProblem(K, K[0], vol2))
    assert out["inside"] is True


def test_hull_circle_center_inside_volume_form():
    vol2 = make_calibration("volume", n=2)
    out = quad_hull_membership(HullProblem(circle_points(12), np.zeros(2), vol2))
    assert out["inside"] is True
    assert out["value"] <= 1e-6


def test_hull_z_offset_outside_with_linear_separator():
    K = np.column_stack([circle_points(12), np.zeros(12)])
    out = quad_hull_membership(HullProblem(K, np.array([0, 0, 0.6]), DXY3))
    assert out["inside"] is False
    sep = out["separator"]
    # the separator is essentially linear in z
    assert abs(sep["b"][2]) > 0.1
    assert sep["hessian_margin"] >= -1e-7
    # and the center itself is inside
    out2 = quad_hull_membership(HullProblem(K, np.zeros(3), DXY3))
    assert out2["inside"] is True


def test_hull_monotone_under_adding_points():
    vol2 = make_calibration("volume", n=2)
    rng = np.random.default_rng(6)
    for trial in range(20):
        K = rng.standard_normal((5, 2))
        x0 = rng.standard_normal(2) * 0.5
        r1 = quad_hull_membership(HullProblem(K, x0, vol2))
        K2 = np.vstack([K, rng.standard_normal((3, 2))])
        r2 = quad_hull_membership(HullProblem(K2, x0, vol2))
        if r1["inside"]:
            assert r2["inside"], f"trial {trial}: adding points ejected x0"


def test_hull_validates_inputs():
    vol2 = make_calibration("volume", n=2)
    with pytest.raises(ValueError):
        HullProblem(np.zeros((0, 2)), np.zeros(2), vol2)
    with pytest.raises(ValueError):
        HullProblem(np.array([[np.inf, 0.0]]), np.zeros(2), vol2)
