"""Cones: spans, projections, membership certificates, hyperplane boundary,
normality, pluriharmonic mod d."""

import math

import numpy as np
import pytest

from calgeo.catalog import make_calibration
from calgeo.cones import (
    check_certificate,
    essential_subspace,
    hyperplane_boundary_test,
    lambda_span,
    nnls,
    normality_check,
    pluriharmonic_mod_d_test,
    positive_cone_membership,
    project_to_lambda,
)
from calgeo.exterior import (
    Form,
    as_form,
    interior,
    lambda_phi,
    pair,
    plucker,
    vector_form,
    wedge,
)
from calgeo.grassmann import OptOptions, form_margin, random_plane
from calgeo.pshcheck import Jet2, pluriharmonic_quadratic_space, quadratic_jet

KA2 = make_calibration("kahler", n=2)
SL3 = make_calibration("special_lagrangian", n=3)
DXY3 = make_calibration("coordinate", n=3, indices=(0, 1))
DP3 = make_calibration("double_point", n=3)


# ---------------------------------------------------------------------------
# the in-repo active-set solver
# ---------------------------------------------------------------------------


def test_nnls_kkt_optimal_and_not_worse_than_scipy():
    # the problem is convex, so the KKT conditions certify global optimality;
    # also require at least scipy's achieved residual (comparing against the
    # actual |Ax - b| of scipy's solution vector)
    from scipy.optimize import nnls as sp_nnls

    rng = np.random.default_rng(0)
    for _ in range(300):
        m = int(rng.integers(2, 14))
        k = int(rng.integers(2, 14))
        A = rng.standard_normal((m, k))
        b = rng.standard_normal(m)
        x, r = nnls(A, b)
        assert np.all(x >= 0.0)
        assert abs(r - np.linalg.norm(A @ x - b)) <= 1e-12
        w = A.T @ (b - A @ x)
        scale = max(1.0, float(np.linalg.norm(b)))
        assert np.all(w <= 1e-8 * scale)              # dual feasibility
        assert abs(float(x @ w)) <= 1e-8 * scale      # complementarity
        x2, _ = sp_nnls(A, b)
        assert r <= np.linalg.norm(A @ x2 - b) + 1e-8


def test_nnls_exact_fit():
    A = np.eye(3)
    x, r = nnls(A, np.array([1.0, 2.0, 3.0]))
    assert r <= 1e-14 and np.allclose(x, [1, 2, 3])


# ---------------------------------------------------------------------------
# spans
# ---------------------------------------------------------------------------


def test_lambda_span_single_plane():
    s = lambda_span(DXY3)
    assert s.rank == 1


def test_lambda_span_double_point():
    s = lambda_span(DP3)
    assert s.rank == 2


def test_lambda_span_kahler_c2_regression():
    # complex lines span the (1,1)-type 4-dimensional subspace of Lambda^2 R^4
    s = lambda_span(KA2, seed=1)
    assert s.rank == 4
    assert s.rank_gap >= 1e10
    # oracle: enumeration of complex lines over a grid reproduces the span
    from calgeo.catalog import complex_structure

    J = complex_structure(2)
    rows = []
    rng = np.random.default_rng(2)
    for _ in range(200):
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        rows.append(plucker(np.column_stack([v, J @ v])).coeffs)
    oracle_rank = np.linalg.matrix_rank(np.array(rows), tol=1e-10)
    assert oracle_rank == 4


def test_lambda_span_requires_samples():
    with pytest.raises(ValueError, match="need samples"):
        lambda_span(KA2, samples=3)


def test_project_to_lambda_idempotent_and_span_preserving():
    rng = np.random.default_rng(3)
    a = Form(4, 2, rng.standard_normal(6))
    pa = project_to_lambda(a, KA2)
    ppa = project_to_lambda(pa, KA2)
    assert np.max(np.abs(pa.coeffs - ppa.coeffs)) <= 1e-12
    for F in KA2.sampler_fn(np.random.default_rng(4), 20):
        xi = plucker(F)
        assert abs(pair(a, xi) - pair(pa, xi)) <= 1e-10


def test_project_member_unchanged():
    F = KA2.sampler_fn(np.random.default_rng(5), 1)[0]
    a = as_form(plucker(F))
    pa = project_to_lambda(a, KA2)
    assert np.max(np.abs(pa.coeffs - a.coeffs)) <= 1e-10


def test_reduced_hessian_same_margins_quaternionic():
    psi = make_calibration("quaternionic", n=2)
    rng = np.random.default_rng(6)
    Q = rng.standard_normal((8, 8))
    Q = (Q + Q.T) / 2
    h = lambda_phi(Q, psi.form)
    hred = project_to_lambda(h, psi)
    opts = OptOptions(seed=7, restarts=12)
    m1 = form_margin(h, psi, "min", opts=opts)
    m2 = form_margin(hred, psi, "min", opts=opts)
    assert abs(m1.value - m2.value) <= 1e-6


# ---------------------------------------------------------------------------
# essential subspace
# ---------------------------------------------------------------------------


def test_essential_subspace_plane_pair():
    pp = make_calibration("plane_pair", lam=0.5)
    s = essential_subspace(pp)
    assert s.rank == 2
    B = s.basis
    assert np.max(np.abs(B[2:, :])) <= 1e-9  # spans only e0, e1


def test_essential_subspace_full():
    assert essential_subspace(make_calibration("volume", n=4)).rank == 4
    assert essential_subspace(DP3).rank == 6


# ---------------------------------------------------------------------------
# membership certificates
# ---------------------------------------------------------------------------


def test_membership_found_plane_inside():
    F = SL3.sampler_fn(np.random.default_rng(8), 1)[0]
    x = plucker(F)
    cert = positive_cone_membership(x, SL3, OptOptions(seed=9, restarts=10))
    assert cert.verdict == "inside"
    chk = check_certificate(cert, x, SL3)
    assert chk["ok"] and chk["reconstruction_error"] <= 1e-6


def test_membership_unit_simple_dichotomy():
    # Cor 5.15 at the sample level: inside <=> phi(xi) >= 1 - tol
    opts = OptOptions(seed=10, restarts=10)
    for i in range(6):
        pl = random_plane(4, 2, 100 + i)
        val = pair(KA2.form, pl.plucker)
        cert = positive_cone_membership(pl.plucker, KA2, opts)
        if val >= 1 - 1e-6:
            assert cert.verdict == "inside"
        else:
            assert cert.verdict in ("outside", "boundary")
            chk = check_certificate(cert, pl.plucker, KA2)
            assert chk["ok"]


def test_membership_outside_has_separator_in_polar_cone():
    pl = random_plane(6, 3, 11)
    cert = positive_cone_membership(pl.plucker, SL3,
                                    OptOptions(seed=12, restarts=10))
    assert cert.verdict == "outside"
    assert cert.separator is not None
    rep = form_margin(cert.separator, SL3, "min",
                      opts=OptOptions(seed=13, restarts=10))
    assert rep.value >= -1e-8
    assert float(cert.separator.coeffs @ pl.plucker.coeffs) < -1e-6


def test_membership_convex_combination_inside():
    rng = np.random.default_rng(14)
    frames = KA2.sampler_fn(rng, 3)
    w = rng.uniform(0.2, 1.0, 3)
    target = sum(wi * plucker(F).coeffs for wi, F in zip(w, frames))
    from calgeo.exterior import Multivector

    cert = positive_cone_membership(Multivector(4, 2, target), KA2,
                                    OptOptions(seed=15, restarts=10))
    assert cert.verdict == "inside"
    chk = check_certificate(cert, Multivector(4, 2, target), KA2)
    assert chk["ok"]


def test_membership_negative_multiple_outside():
    F = DXY3.plane_enum[0]
    x = plucker(np.asarray(F)[:, [1, 0]])  # reversed orientation
    cert = positive_cone_membership(x, DXY3, OptOptions(seed=16, restarts=8))
    assert cert.verdict == "outside"
    assert check_certificate(cert, x, DXY3)["ok"]


def test_certificate_json_shape():
    pl = random_plane(4, 2, 17)
    cert = positive_cone_membership(pl.plucker, KA2,
                                    OptOptions(seed=18, restarts=8))
    d = cert.to_dict()
    for key in ("verdict", "weights", "separator", "margin", "iters", "seed"):
        assert key in d


# ---------------------------------------------------------------------------
# hyperplane boundary (reflects whether e lies in some calibrated plane)
# ---------------------------------------------------------------------------


def test_hyperplane_boundary_simple_cases():
    r = hyperplane_boundary_test(DXY3, np.eye(3)[0])
    assert r["on_boundary"] is True and abs(r["margin"]) <= 1e-9
    r = hyperplane_boundary_test(DXY3, np.eye(3)[2])
    assert r["on_boundary"] is False and abs(r["margin"] - 1.0) <= 1e-9


def test_hyperplane_boundary_sl_real_direction():
    r = hyperplane_boundary_test(SL3, np.eye(6)[0],
                                 opts=OptOptions(seed=19, restarts=10))
    assert r["on_boundary"] is True


def test_hyperplane_boundary_constructed_batch():
    # e in the span of a sampled plane => boundary; for double_point a mixed
    # direction is strictly interior
    rng = np.random.default_rng(20)
    for cal in (KA2, SL3):
        F = cal.sampler_fn(rng, 1)[0]
        c = rng.standard_normal(cal.p)
        e = F @ c
        e /= np.linalg.norm(e)
        r = hyperplane_boundary_test(cal, e, opts=OptOptions(seed=21, restarts=10))
        assert r["on_boundary"] is True
    e = np.zeros(6)
    e[0] = e[3] = 1.0 / math.sqrt(2.0)
    r = hyperplane_boundary_test(DP3, e)
    assert r["on_boundary"] is False
    assert abs(r["margin"] - 0.5) <= 1e-12  # 1 - max |P e|^2 = 1/2


def test_hyperplane_boundary_validates_unit():
    with pytest.raises(ValueError, match="unit"):
        hyperplane_boundary_test(KA2, np.ones(4))


# ---------------------------------------------------------------------------
# normality
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name,kw", [
    ("kahler", dict(n=2)),
    ("associative", {}),
    ("coassociative", {}),
    ("quaternionic", dict(n=2)),
])
def test_normality_fast_calibrations(name, kw):
    cal = make_calibration(name, **kw)
    out = normality_check(cal, trials=2, seed=3)
    assert out["normal"] is True
    assert out["worst_angle"] <= 1e-4


@pytest.mark.slow
def test_normality_special_lagrangian():
    out = normality_check(SL3, trials=2, seed=3)
    assert out["normal"] is True
    assert out["worst_angle"] <= 1e-4


def test_normality_double_point_regression():
    # not listed in the catalog of normal calibrations; recorded by direct
    # computation: restriction commutes with annihilators on hyperplanes
    out = normality_check(DP3, trials=2, seed=4)
    assert out["normal"] is True


# ---------------------------------------------------------------------------
# pluriharmonic mod d
# ---------------------------------------------------------------------------


def test_plh_mod_d_pluriharmonic_jet():
    qs = pluriharmonic_quadratic_space(SL3, seed=5)
    Q = qs.basis[0]
    x = np.random.default_rng(6).standard_normal(6)
    jet = quadratic_jet(Q, np.zeros(6), 0.0, x)
    out = pluriharmonic_mod_d_test(jet, SL3)
    assert out["residual"] <= 1e-8
    assert not out["gradient_degenerate"]


def test_plh_mod_d_synthetic_feasible():
    # f = psi(<u, x>) gives dd^phi f = df ^ [(psi''/psi') (u .| phi)]
    rng = np.random.default_rng(7)
    u = rng.standard_normal(6)
    u /= np.linalg.norm(u)
    d1, d2 = 1.3, 0.8
    jet = Jet2(0.0, d1 * u, d2 * np.outer(u, u))
    out = pluriharmonic_mod_d_test(jet, SL3)
    assert out["residual"] <= 1e-8
    # recovered alpha reproduces the same wedge as the analytic one
    beta = (d2 / d1) * interior(u, SL3.form)
    df = vector_form(jet.gradient)
    lhs = wedge(df, out["alpha"])
    rhs = wedge(df, beta)
    assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) <= 1e-8


def test_plh_mod_d_norm_squared_infeasible():
    # |x|^2/2 has dd^phi f = p phi, not of the feasible shape at generic x
    rng = np.random.default_rng(8)
    x = rng.standard_normal(6)
    jet = quadratic_jet(np.eye(6), np.zeros(6), 0.0, x)
    out = pluriharmonic_mod_d_test(jet, SL3)
    assert out["residual"] > 1e-3
    # oracle: explicit least squares with the same column construction
    from calgeo.exterior import basis_form, multi_indices

    span = lambda_span(SL3)
    B = span.basis
    comp = np.eye(20) - B @ B.T
    U, s, _ = np.linalg.svd(comp)
    cols = [wedge(vector_form(jet.gradient), basis_form(6, J)).coeffs
            for J in multi_indices(6, 2)]
    cols += [U[:, i] for i in range(20) if s[i] > 1e-8]
    A = np.array(cols).T
    target = lambda_phi(jet.hessian, SL3.form).coeffs
    resid = np.linalg.lstsq(A, target, rcond=None)[1]
    oracle = math.sqrt(float(resid[0])) if len(resid) else \
        float(np.linalg.norm(A @ np.linalg.lstsq(A, target, rcond=None)[0] - target))
    assert abs(out["residual"] - oracle) <= 1e-8


def test_plh_mod_d_zero_gradient_flagged():
    jet = Jet2(0.0, np.zeros(6), np.eye(6))
    out = pluriharmonic_mod_d_test(jet, SL3)
    assert out["gradient_degenerate"] is True
    assert out["residual"] > 0.1


def test_flatness_link_on_plh_mod_d_jets():
    # residual <= 1e-8 implies the level hypersurface is flat on tangential
    # calibrated planes (and conversely at these jets)
    from calgeo.convexity import SurfaceJet, boundary_margin

    rng = np.random.default_rng(9)
    qs = pluriharmonic_quadratic_space(SL3, seed=10)
    jets = []
    for Q in qs.basis[:2]:
        for _ in range(2):
            x = rng.standard_normal(6)
            j = quadratic_jet(Q, np.zeros(6), 0.0, x)
            if np.linalg.norm(j.gradient) > 1e-3:
                jets.append(j)
    u = rng.standard_normal(6)
    u /= np.linalg.norm(u)
    jets.append(Jet2(0.0, 2.0 * u, 0.7 * np.outer(u, u)))
    for jet in jets:
        out = pluriharmonic_mod_d_test(jet, SL3)
        assert out["residual"] <= 1e-8
        rep = boundary_margin(SurfaceJet(jet), SL3,
                              opts=OptOptions(seed=11, restarts=10))
        if rep.classification == "vacuous":
            continue
        assert max(abs(rep.tangential_margin), abs(rep.upper_margin)) <= 1e-5
