"""Registered invariant suites, runnable from the CLI.

Each invariant is a named callable returning a dict with at least
``passed`` (bool) and ``residual`` (float).  Suites are deterministic in the
given seed.  These are quick self-checks; the exhaustive versions live in
the pytest suite.
"""

from __future__ import annotations

import math

import numpy as np

from . import catalog, cones, convexity, exterior, grassmann, pshcheck
from .exterior import (
    Form,
    as_form,
    as_multivector,
    interior,
    lambda_phi,
    pair,
    plucker,
    vector_form,
    wedge,
)
from .grassmann import OptOptions

__all__ = ["run_suite", "SUITES"]


def _ok(name, residual, tol, **details):
    return {"name": name, "passed": bool(residual <= tol),
            "residual": float(residual), "tolerance": tol, **details}


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def _identity_graded_commutativity(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(3, 8))
        pa = int(rng.integers(1, min(4, n)))
        pb = int(rng.integers(1, min(4, n - pa) + 1))
        a = Form(n, pa, rng.standard_normal(math.comb(n, pa)))
        b = Form(n, pb, rng.standard_normal(math.comb(n, pb)))
        lhs = wedge(a, b)
        rhs = (-1.0) ** (pa * pb) * wedge(b, a)
        worst = max(worst, float(np.max(np.abs(lhs.coeffs - rhs.coeffs))))
    return _ok("graded_commutativity", worst, 1e-12)


def _identity_cartan(seed):
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(3, 8))
        p = int(rng.integers(1, min(4, n)))
        a = Form(n, p, rng.standard_normal(math.comb(n, p)))
        v = rng.standard_normal(n)
        lhs = interior(v, wedge(vector_form(v), a)) + \
            wedge(vector_form(v), interior(v, a))
        rhs = float(v @ v) * a
        worst = max(worst, float(np.max(np.abs(lhs.coeffs - rhs.coeffs))))
    return _ok("cartan_contraction", worst, 1e-12)


def _identity_star(seed):
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for _ in range(60):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(0, n + 1))
        if min(p, n - p) > 4:
            continue
        a = Form(n, p, rng.standard_normal(math.comb(n, p)))
        ss = exterior.hodge_star(exterior.hodge_star(a))
        sgn = (-1.0) ** (p * (n - p))
        worst = max(worst, float(np.max(np.abs(ss.coeffs - sgn * a.coeffs))))
    return _ok("double_star_sign", worst, 1e-12)


def _identity_pairing_transpose(seed):
    rng = np.random.default_rng(seed + 3)
    worst = 0.0
    for _ in range(60):
        n, p = 6, 3
        a = Form(n, p, rng.standard_normal(20))
        x = exterior.Multivector(n, p, rng.standard_normal(20))
        A = rng.standard_normal((n, n))
        lhs = pair(exterior.derivation_extend(A.T, a), x)
        rhs = pair(a, exterior.derivation_extend_mv(A, x))
        worst = max(worst, abs(lhs - rhs))
    return _ok("derivation_transpose_pairing", worst, 1e-10)


def _cal_set():
    return [
        catalog.make_calibration("kahler", n=2),
        catalog.make_calibration("special_lagrangian", n=3),
        catalog.make_calibration("associative"),
    ]


def _identity_first_cousin(seed):
    worst = 0.0
    for cal in _cal_set():
        planes = pshcheck.sample_planes(cal, 6, seed)
        for pl in planes:
            cb = grassmann.first_cousin_basis(pl)
            for d in cb.directions:
                worst = max(worst, abs(pair(cal.form, d)))
    return _ok("first_cousin_principle", worst, 1e-8)


def _identity_trace(seed):
    rng = np.random.default_rng(seed + 4)
    worst = 0.0
    for cal in _cal_set():
        n = cal.n
        planes = pshcheck.sample_planes(cal, 6, seed + n)
        for pl in planes:
            P = pl.frame @ pl.frame.T
            for _ in range(10):
                A = rng.standard_normal((n, n))
                A = (A + A.T) / 2
                lhs = pair(lambda_phi(A, cal.form), pl.plucker)
                worst = max(worst, abs(lhs - float(np.sum(A * P))))
    return _ok("trace_identity", worst, 1e-8)


def _identity_skew(seed):
    rng = np.random.default_rng(seed + 5)
    worst = 0.0
    for cal in _cal_set():
        n = cal.n
        planes = pshcheck.sample_planes(cal, 4, seed + n)
        for pl in planes:
            for _ in range(10):
                A = rng.standard_normal((n, n))
                A = (A - A.T) / 2
                worst = max(worst, abs(pair(lambda_phi(A, cal.form), pl.plucker)))
    return _ok("skew_vanishing", worst, 1e-8)


def _identity_cousin_decomposition(seed):
    rng = np.random.default_rng(seed + 6)
    worst = 0.0
    for cal in _cal_set():
        n = cal.n
        for i in range(8):
            pl = grassmann.random_plane(n, cal.p, seed + 17 * i)
            F = pl.frame
            P = F @ F.T
            A = rng.standard_normal((n, n))
            At = (np.eye(n) - P) @ A @ P
            lhs = pair(lambda_phi(A, cal.form), pl.plucker)
            rhs = float(np.sum(A * P)) * pair(cal.form, pl.plucker) + \
                pair(cal.form, exterior.derivation_extend_mv(At, pl.plucker))
            worst = max(worst, abs(lhs - rhs))
    return _ok("cousin_decomposition", worst, 1e-10)


def _identity_gradient_square(seed):
    rng = np.random.default_rng(seed + 7)
    worst = 0.0
    for cal in _cal_set():
        n = cal.n
        planes = pshcheck.sample_planes(cal, 4, seed + n + 1)
        for pl in planes:
            for _ in range(5):
                g = rng.standard_normal(n)
                df = vector_form(g)
                val = pair(wedge(df, interior(g, cal.form)), pl.plucker)
                proj = pl.frame.T @ g
                worst = max(worst, abs(val - float(proj @ proj)))
    return _ok("gradient_square_positivity", worst, 1e-8)


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------


def _cones_certificates(seed):
    cal = catalog.make_calibration("kahler", n=2)
    opts = OptOptions(seed=seed, restarts=10)
    bad = 0
    checks = []
    for i in range(4):
        pl = grassmann.random_plane(4, 2, seed + 31 * i)
        cert = cones.positive_cone_membership(pl.plucker, cal, opts)
        chk = cones.check_certificate(cert, pl.plucker, cal)
        inside_expected = pair(cal.form, pl.plucker) >= 1 - 1e-6
        okv = chk["ok"] and ((cert.verdict == "inside") == inside_expected)
        checks.append({"verdict": cert.verdict, "ok": chk["ok"]})
        if not okv:
            bad += 1
    for F in cal.sampler_fn(np.random.default_rng(seed), 2):
        x = plucker(F)
        cert = cones.positive_cone_membership(x, cal, opts)
        chk = cones.check_certificate(cert, x, cal)
        if not (cert.verdict == "inside" and chk["ok"]):
            bad += 1
    return {"name": "cone_certificates_self_verify", "passed": bad == 0,
            "residual": float(bad), "tolerance": 0, "checks": checks}


def _cones_hyperplane(seed):
    cal = catalog.make_calibration("coordinate", n=3, indices=(0, 1))
    r1 = cones.hyperplane_boundary_test(cal, np.eye(3)[0])
    r2 = cones.hyperplane_boundary_test(cal, np.eye(3)[2])
    ok = r1["on_boundary"] is True and r2["on_boundary"] is False
    return {"name": "hyperplane_boundary_cor", "passed": bool(ok),
            "residual": 0.0 if ok else 1.0, "tolerance": 0,
            "margins": [r1["margin"], r2["margin"]]}


def _cones_span_ranks(seed):
    co = catalog.make_calibration("coordinate", n=3, indices=(0, 1))
    dp = catalog.make_calibration("double_point", n=3)
    ka = catalog.make_calibration("kahler", n=2)
    ranks = (cones.lambda_span(co, seed=seed).rank,
             cones.lambda_span(dp, seed=seed).rank,
             cones.lambda_span(ka, seed=seed).rank)
    ok = ranks == (1, 2, 4)
    return {"name": "lambda_span_ranks", "passed": bool(ok),
            "residual": 0.0 if ok else 1.0, "tolerance": 0, "ranks": ranks}


def _cones_positive_forms(seed):
    # df ^ d^phi f and grad f .| (df ^ phi) both lie in the polar cone
    rng = np.random.default_rng(seed)
    cal = catalog.make_calibration("special_lagrangian", n=3)
    opts = OptOptions(seed=seed, restarts=8)
    worst = math.inf
    for _ in range(3):
        g = rng.standard_normal(6)
        df = vector_form(g)
        a1 = wedge(df, interior(g, cal.form))
        a2 = float(g @ g) * cal.form - a1
        for a in (a1, a2):
            rep = grassmann.form_margin(a, cal, "min", opts=opts)
            worst = min(worst, rep.value)
    return {"name": "jet_forms_in_polar_cone", "passed": worst >= -1e-8,
            "residual": float(max(0.0, -worst)), "tolerance": 1e-8}


# ---------------------------------------------------------------------------
# convexity
# ---------------------------------------------------------------------------


def _convexity_sphere(seed):
    co = catalog.make_calibration("coordinate", n=3, indices=(0, 1))
    r = 2.0
    jet = pshcheck.Jet2(0.0, np.array([0, 0, 1.0]),
                        np.diag([1 / r, 1 / r, 0.0]))
    rep = convexity.boundary_margin(convexity.SurfaceJet(jet), co)
    resid = abs(rep.tangential_margin - 2.0 / r)
    return _ok("sphere_margin_formula", resid, 1e-8,
               classification=rep.classification)


def _convexity_torus_threshold(seed):
    lo, hi = 0.8, 1.2
    for _ in range(7):
        mid = (lo + hi) / 2
        out = convexity.torus_scan(2.0, mid, resolution=8)
        if out["convex"]:
            lo = mid
        else:
            hi = mid
    rstar = (lo + hi) / 2
    return _ok("torus_threshold", abs(rstar - 1.0), 5e-3, r_star=rstar)


def _convexity_defining_invariance(seed):
    rng = np.random.default_rng(seed)
    co = catalog.make_calibration("coordinate", n=3, indices=(0, 1))
    worst = 0.0
    for _ in range(3):
        H = rng.standard_normal((3, 3))
        H = (H + H.T) / 2
        g = np.array([0.0, 0.0, 1.0])
        jet = pshcheck.Jet2(0.0, g, H)
        u = float(rng.uniform(0.5, 2.0))
        du = rng.standard_normal(3)
        H2 = u * H + np.outer(du, g) + np.outer(g, du)
        jet2 = pshcheck.Jet2(0.0, u * g, H2)
        r1 = convexity.boundary_margin(convexity.SurfaceJet(jet), co)
        r2 = convexity.boundary_margin(convexity.SurfaceJet(jet2), co)
        if r1.classification == "vacuous":
            continue
        worst = max(worst, abs(r2.tangential_margin - u * r1.tangential_margin))
    return _ok("defining_function_invariance", worst, 1e-8)


def _convexity_free_strict(seed):
    ka = catalog.make_calibration("kahler", n=2)
    sl = catalog.make_calibration("special_lagrangian", n=3)
    J = catalog.complex_structure(3)
    cases = [
        (ka, np.eye(4)[:, :2], False),          # complex line: not free
        (ka, np.eye(4)[:, [0, 2]], True),       # totally real plane: free
        (sl, np.eye(6)[:, [0, 2, 4]], False),   # the real SL plane: not free
        (sl, np.eye(6)[:, :4], True),           # complex C^2 inside C^3: free
    ]
    bad = 0
    for cal, T, expect_free in cases:
        ft = convexity.free_test(T, cal)
        jet = convexity.dist_sq_jet({"kind": "affine", "basis": T},
                                    np.zeros(cal.n))
        rep = pshcheck.psh_classify(jet, cal)
        strict = rep.classification == "strictly_psh"
        if ft["free"] != expect_free or strict != expect_free:
            bad += 1
    return {"name": "free_iff_strict_distance_jet", "passed": bad == 0,
            "residual": float(bad), "tolerance": 0}


SUITES = {
    "identities": [
        _identity_graded_commutativity,
        _identity_cartan,
        _identity_star,
        _identity_pairing_transpose,
        _identity_first_cousin,
        _identity_trace,
        _identity_skew,
        _identity_cousin_decomposition,
        _identity_gradient_square,
    ],
    "cones": [
        _cones_certificates,
        _cones_hyperplane,
        _cones_span_ranks,
        _cones_positive_forms,
    ],
    "convexity": [
        _convexity_sphere,
        _convexity_torus_threshold,
        _convexity_defining_invariance,
        _convexity_free_strict,
    ],
}


def run_suite(suite: str, seed: int = 0) -> dict:
    """Run a named invariant suite; 'all' runs every suite."""
    if suite == "all":
        names = list(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        raise ValueError(f"unknown suite '{suite}'; "
                         f"choose from {sorted(SUITES)} or 'all'")
    results = []
    for name in names:
        for fn in SUITES[name]:
            out = fn(seed)
            out["suite"] = name
            results.append(out)
    return {
        "suites": names,
        "seed": seed,
        "results": results,
        "all_passed": all(r["passed"] for r in results),
        "failed": [r["name"] for r in results if not r["passed"]],
    }
