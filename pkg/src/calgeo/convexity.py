"""Boundary convexity, free submanifolds, and quadratic hulls.

Hypersurfaces enter through the jet of a defining function at a boundary
point, with the domain on the side where the function is negative and the
outward normal along its gradient.  Convexity is the sign of the Hessian
trace over calibrated planes tangent to the boundary; the second fundamental
form route is computed independently and used as a live cross-check.

The quadratic hull is an outer approximation of the full plurisubharmonic
hull: separators are quadratic-plus-affine functions whose Hessians have
nonnegative trace on every calibrated plane (enforced by cutting planes),
so fewer separators exist than in the smooth class and the reported hull
contains the true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exterior import Form, lambda_phi, pair, plucker, restrict_form
from .grassmann import (
    OptOptions,
    OrientedPlane,
    comass,
    form_margin,
    plane_from_frame,
    trace_margin,
)
from .pshcheck import Jet2, psh_classify, quadratic_jet

__all__ = [
    "SurfaceJet",
    "BoundaryReport",
    "HullProblem",
    "second_fundamental",
    "boundary_margin",
    "log_delta_margin",
    "stabilize_defining",
    "free_test",
    "dist_sq_jet",
    "torus_scan",
    "quad_hull_membership",
    "NotStrictlyConvexError",
]

CLASS_TOL = 1e-6


@dataclass(frozen=True)
class SurfaceJet:
    """Jet of a defining function at a boundary point; domain = {rho < 0}."""

    rho_jet: Jet2

    def __post_init__(self):
        if np.linalg.norm(self.rho_jet.gradient) < 1e-8:
            raise ValueError("surface jet: defining gradient too small")

    @property
    def n(self) -> int:
        return self.rho_jet.n

    @property
    def normal(self) -> np.ndarray:
        g = self.rho_jet.gradient
        return g / np.linalg.norm(g)

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.rho_jet.gradient))

    def tangent_basis(self) -> np.ndarray:
        nv = self.normal
        return np.linalg.svd(nv.reshape(-1, 1), full_matrices=True)[0][:, 1:]


@dataclass
class BoundaryReport:
    tangential_margin: float
    upper_margin: float
    classification: str  # strictly_convex | convex | flat | not_convex | vacuous
    second_fundamental: np.ndarray | None
    tangent_basis: np.ndarray | None
    witness_plane: OrientedPlane | None
    cross_check_residual: float = math.nan
    status: str = "ok"

    def to_dict(self) -> dict:
        from .grassmann import plane_to_dict

        return {
            "tangential_margin": self.tangential_margin,
            "upper_margin": self.upper_margin,
            "class": self.classification,
            "witness_plane": (plane_to_dict(self.witness_plane)
                              if self.witness_plane is not None else None),
            "cross_check_residual": self.cross_check_residual,
            "status": self.status,
        }


@dataclass(frozen=True)
class HullProblem:
    """Membership query for the quadratic hull of a finite point set."""

    points: np.ndarray
    query: np.ndarray
    phi: object

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        q = np.asarray(self.query, dtype=float)
        if P.shape[0] < 1 or P.shape[1] != q.size:
            raise ValueError("hull problem: need >= 1 point of matching dim")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(q))):
            raise ValueError("hull problem: points must be finite")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "query", q)


class NotStrictlyConvexError(RuntimeError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


# ---------------------------------------------------------------------------
# curvature of hypersurfaces
# ---------------------------------------------------------------------------


def second_fundamental(s: SurfaceJet):
    """Second fundamental form w.r.t. the outward normal grad rho / |grad rho|.

    Returns (II, tangent_basis): II = -Hess rho restricted to the tangent
    space, divided by |grad rho|, as a matrix in the returned orthonormal
    tangent basis.
    """
    T = s.tangent_basis()
    II = -(T.T @ s.rho_jet.hessian @ T) / s.grad_norm
    return II, T


def boundary_margin(s: SurfaceJet, phi, tol: float = CLASS_TOL,
                    opts: OptOptions | None = None) -> BoundaryReport:
    """Extrema of the phi-Hessian of the defining function over tangential
    calibrated planes, cross-checked against the curvature route."""
    opts = opts or OptOptions(restarts=12)
    f = phi if isinstance(phi, Form) else phi.form
    H = s.rho_jet.hessian
    T = s.tangent_basis()
    hess_form = lambda_phi(H, f)
    low = form_margin(hess_form, phi, "min", restrict_to=T, opts=opts)
    II, _ = second_fundamental(s)
    if low.status == "infeasible":
        return BoundaryReport(math.nan, math.nan, "vacuous", II, T, None,
                              status="ok")
    if low.status != "ok":
        return BoundaryReport(math.nan, math.nan, "vacuous", II, T, None,
                              status=low.status)
    high = form_margin(hess_form, phi, "max", restrict_to=T,
                       opts=OptOptions(**{**opts.__dict__, "seed": opts.seed + 1}))
    # curvature route: dd^phi rho = -|grad rho| tr_xi II on tangential planes
    II_emb = T @ II @ T.T
    cross = trace_margin(II_emb, phi, "max", restrict_to=T,
                         opts=OptOptions(**{**opts.__dict__, "seed": opts.seed + 2}))
    residual = abs(low.value - (-s.grad_norm) * cross.value) \
        if cross.status == "ok" else math.inf

    lo, hi = low.value, high.value
    if max(abs(lo), abs(hi)) <= tol:
        cls = "flat"
    elif lo > tol:
        cls = "strictly_convex"
    elif lo >= -tol:
        cls = "convex"
    else:
        cls = "not_convex"
    status = "ok" if residual <= 1e-6 * max(1.0, abs(lo)) else "cross_check_failed"
    witness = low.argplanes[0] if low.argplanes else None
    return BoundaryReport(lo, hi, cls, II, T, witness, residual, status)


def log_delta_margin(s: SurfaceJet, phi, delta: float,
                     opts: OptOptions | None = None) -> float:
    """Smallest value over all calibrated planes of the -log(distance)
    Hessian trace: (1/delta) tr_xi Hess rho + (|grad rho|^2/delta^2) cos^2."""
    if delta <= 0:
        raise ValueError("log_delta_margin: delta must be positive")
    opts = opts or OptOptions(restarts=12)
    f = phi if isinstance(phi, Form) else phi.form
    nv = s.normal
    M = s.rho_jet.hessian / delta + \
        (s.grad_norm ** 2 / delta ** 2) * np.outer(nv, nv)
    rep = form_margin(lambda_phi(M, f), phi, "min", opts=opts)
    if rep.status != "ok":
        raise RuntimeError(f"log_delta_margin: optimizer status {rep.status}")
    return float(rep.value)


def stabilize_defining(s: SurfaceJet, phi, eps0: float = 1e-6,
                       rel_resolution: float = 1e-3,
                       opts: OptOptions | None = None) -> dict:
    """Smallest A >= 0 making rho + A rho^2 strictly plurisubharmonic at the
    boundary point, by bisection on the unrestricted margin."""
    opts = opts or OptOptions(restarts=12)
    if abs(s.rho_jet.value) > 1e-8:
        raise ValueError("stabilize_defining: expects a boundary point (rho=0)")
    rep0 = boundary_margin(s, phi, opts=opts)
    if rep0.classification not in ("strictly_convex",) and \
            rep0.classification != "vacuous":
        raise NotStrictlyConvexError(
            f"boundary is {rep0.classification} (tangential margin "
            f"{rep0.tangential_margin:.3e}); stabilization needs strict convexity",
            witness=rep0.witness_plane,
        )
    f = phi if isinstance(phi, Form) else phi.form
    nv = s.normal
    N = np.outer(nv, nv) * (2.0 * s.grad_norm ** 2)

    def margin(A: float) -> float:
        rep = form_margin(lambda_phi(s.rho_jet.hessian + A * N, f), phi, "min",
                          opts=opts)
        if rep.status != "ok":
            raise RuntimeError(f"stabilize_defining: status {rep.status}")
        return float(rep.value)

    if margin(0.0) >= eps0:
        return {"A": 0.0, "margin_at_A": margin(0.0)}
    hi = 1.0
    for _ in range(60):
        if margin(hi) >= eps0:
            break
        hi *= 2.0
    else:
        raise RuntimeError("stabilize_defining: no stabilizing A found")
    lo = 0.0
    while hi - lo > rel_resolution * max(1.0, hi):
        mid = (hi + lo) / 2.0
        if margin(mid) >= eps0:
            hi = mid
        else:
            lo = mid
    return {"A": float(hi), "margin_at_A": margin(hi)}


# ---------------------------------------------------------------------------
# free / isotropic tests
# ---------------------------------------------------------------------------


def free_test(T: np.ndarray, phi, opts: OptOptions | None = None,
              tol: float = CLASS_TOL) -> dict:
    """No calibrated plane tangent to the subspace T?

    sup_phi is the maximum of phi over planes inside T (vacuously 0 below the
    degree); the normal-margin route min over all calibrated planes of
    <P_N, P_xi> must agree on the free/not-free decision and is returned too.
    """
    opts = opts or OptOptions(restarts=16)
    f = phi if isinstance(phi, Form) else phi.form
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != f.n:
        raise ValueError("free_test: T must be an n x k orthonormal basis")
    if T.shape[1] and np.max(np.abs(T.T @ T - np.eye(T.shape[1]))) > 1e-8:
        raise ValueError("free_test: basis not orthonormal")
    tol_plane = getattr(phi, "tol_plane", 1e-6)
    if T.shape[1] < f.p:
        sup_phi = 0.0
        iso_max = 0.0
    else:
        rep = comass(restrict_form(f, T), opts)
        sup_phi = float(rep.value)
        iso_max = sup_phi  # both orientations are in the Grassmannian
    free = sup_phi <= 1.0 - tol_plane
    isotropic = iso_max <= 1e-8

    P_N = np.eye(f.n) - T @ T.T if T.shape[1] else np.eye(f.n)
    nrep = form_margin(lambda_phi(P_N, f), phi, "min",
                       opts=OptOptions(**{**opts.__dict__, "seed": opts.seed + 5}))
    normal_margin = float(nrep.value) if nrep.status == "ok" else math.nan
    consistent = (nrep.status == "ok") and ((normal_margin > tol) == free)
    return {
        "free": bool(free),
        "sup_phi": sup_phi,
        "isotropic": bool(isotropic),
        "normal_margin": normal_margin,
        "routes_consistent": bool(consistent),
    }


# ---------------------------------------------------------------------------
# distance-squared jets
# ---------------------------------------------------------------------------


def _torus_rho_jet(x: np.ndarray, R: float, r: float) -> Jet2:
    """Jet of rho = dist(x, core circle) - r for the torus around the circle
    x^2 + z^2 = R^2 in the xz-plane (tube coordinate along y)."""
    x = np.asarray(x, dtype=float)
    u = math.hypot(x[0], x[2])
    if u < 1e-9:
        raise ValueError("torus jet: point on the symmetry axis")
    du = np.array([x[0] / u, 0.0, x[2] / u])
    Pxz = np.diag([1.0, 0.0, 1.0])
    Hu = (Pxz - np.outer(du, du)) / u
    v = np.array([u - R, x[1]])
    s = float(np.linalg.norm(v))
    if s < 1e-9:
        raise ValueError("torus jet: point on the core circle")
    ey = np.array([0.0, 1.0, 0.0])
    ds = (v[0] * du + v[1] * ey) / s
    Hs = (np.outer(du, du) + np.outer(ey, ey) - np.outer(ds, ds)) / s \
        + (v[0] / s) * Hu
    return Jet2(s - r, ds, Hs)


def dist_sq_jet(surface: dict, x: np.ndarray) -> Jet2:
    """Jet of f = dist(., M)^2 / 2 for a supported surface.

    surface kinds:
      {"kind": "affine", "basis": n x k, "point": optional offset}
      {"kind": "sphere", "r": radius, "center": optional}
      {"kind": "torus", "R": ..., "r": ...}          (ambient R^3)
      {"kind": "graph", "Q": (n-1) x (n-1) quadratic coefficient matrix}
    Analytic everywhere except graphs, which use a nearest-point solve plus
    central finite differences.
    """
    x = np.asarray(x, dtype=float)
    kind = surface["kind"]
    if kind == "affine":
        B = np.asarray(surface["basis"], dtype=float)
        q = np.asarray(surface.get("point", np.zeros(x.size)), dtype=float)
        P_N = np.eye(x.size) - (B @ B.T if B.size else 0.0)
        d = P_N @ (x - q)
        return Jet2(0.5 * float(d @ d), d, P_N)
    if kind == "sphere":
        r = float(surface["r"])
        c = np.asarray(surface.get("center", np.zeros(x.size)), dtype=float)
        y = x - c
        ny = float(np.linalg.norm(y))
        if ny < 1e-9:
            raise ValueError("dist_sq_jet: sphere center is a focal point")
        u = y / ny
        delta = ny - r
        hess = np.outer(u, u) + (delta / ny) * (np.eye(x.size) - np.outer(u, u))
        return Jet2(0.5 * delta * delta, delta * u, hess)
    if kind == "torus":
        R, r = float(surface["R"]), float(surface["r"])
        rho = _torus_rho_jet(x, R, r)
        delta = rho.value
        grad = delta * rho.gradient
        hess = np.outer(rho.gradient, rho.gradient) + delta * rho.hessian
        return Jet2(0.5 * delta * delta, grad, hess)
    if kind == "graph":
        return _graph_dist_jet(surface, x)
    raise ValueError(f"dist_sq_jet: unknown surface kind '{kind}'")


def _graph_dist_jet(surface: dict, x: np.ndarray, h: float = 1e-4) -> Jet2:
    from scipy.optimize import minimize

    Q = np.asarray(surface["Q"], dtype=float)
    n = x.size
    if Q.shape != (n - 1, n - 1):
        raise ValueError("graph surface: Q must be (n-1) x (n-1)")

    def nearest_sq(y: np.ndarray) -> float:
        def cost(u):
            du = y[:-1] - u
            dz = y[-1] - 0.5 * u @ Q @ u
            return float(du @ du + dz * dz)

        sols = []
        for u0 in (y[:-1], np.zeros(n - 1)):
            res = minimize(cost, u0, method="BFGS",
                           options={"gtol": 1e-12, "maxiter": 200})
            sols.append((res.fun, res.x))
        best = min(s[0] for s in sols)
        spread = max(abs(s[0] - best) for s in sols)
        us = [s[1] for s in sols]
        if spread > 1e-8 * max(1.0, best) and \
                max(np.linalg.norm(u - us[0]) for u in us) > 1e-4:
            raise ValueError("dist_sq_jet: outside the tubular radius "
                             "(ambiguous nearest point)")
        return 0.5 * best

    val = nearest_sq(x)
    grad = np.empty(n)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.eye(n)[i]
        fp, fm = nearest_sq(x + h * ei), nearest_sq(x - h * ei)
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * val + fm) / h**2
    for i in range(n):
        for j in range(i + 1, n):
            ei, ej = np.eye(n)[i], np.eye(n)[j]
            fpp = nearest_sq(x + h * (ei + ej))
            fpm = nearest_sq(x + h * (ei - ej))
            fmp = nearest_sq(x - h * (ei - ej))
            fmm = nearest_sq(x - h * (ei + ej))
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    hess = (hess + hess.T) / 2
    return Jet2(val, grad, hess)


# ---------------------------------------------------------------------------
# the torus scan
# ---------------------------------------------------------------------------


def torus_scan(R: float, r: float, resolution: int = 32, phi=None,
               tol: float = CLASS_TOL, opts: OptOptions | None = None) -> dict:
    """Scan the torus boundary for phi-convexity with phi = dx^dy.

    The solid torus is swept around the circle x^2 + z^2 = R^2; grid points
    include the four poles where the xy-plane is exactly tangential (an even
    resolution guarantees this).  Points with no tangential calibrated plane
    are vacuous and skipped.
    """
    if not 0 < r < R:
        raise ValueError("torus_scan: need 0 < r < R")
    from .catalog import make_calibration

    if phi is None:
        phi = make_calibration("coordinate", n=3, indices=(0, 1))
    opts = opts or OptOptions(restarts=6)
    resolution = int(resolution)
    if resolution % 2:
        resolution += 1
    rows = []
    min_margin = math.inf
    witness = None
    for i in range(resolution):
        a = 2.0 * math.pi * i / resolution
        for j in range(resolution):
            b = 2.0 * math.pi * j / resolution
            u = R + r * math.cos(a)
            pt = np.array([u * math.sin(b), r * math.sin(a), u * math.cos(b)])
            s = SurfaceJet(_torus_rho_jet(pt, R, r))
            rep = boundary_margin(s, phi, tol=tol, opts=opts)
            vac = rep.classification == "vacuous"
            margin = math.nan if vac else rep.tangential_margin
            rows.append((a, b, pt[0], pt[1], pt[2], vac, margin))
            if not vac and margin < min_margin:
                min_margin = margin
                witness = pt
    if not math.isfinite(min_margin):
        return {"min_margin": math.nan, "convex": True, "rows": rows,
                "witness_point": None, "note": "no tangential planes on grid"}
    return {
        "min_margin": float(min_margin),
        "convex": bool(min_margin >= -tol),
        "witness_point": None if witness is None else [float(v) for v in witness],
        "rows": rows,
    }


# ---------------------------------------------------------------------------
# quadratic hulls
# ---------------------------------------------------------------------------


def quad_hull_membership(hp: HullProblem, opts: OptOptions | None = None,
                         tol: float = 1e-6, max_outer: int = 20) -> dict:
    """Can a quadratic-plus-affine function with plane-nonnegative Hessian
    separate the query point from the point set?

    Semi-infinite program solved with cutting planes: maximize f(query)
    subject to f <= 0 on the points, a norm normalization, and nonnegative
    Hessian trace on a working set of calibrated planes; the margin
    optimizer supplies violated planes.  inside <=> optimal value <= tol.
    """
    import cvxpy as cp

    opts = opts or OptOptions(restarts=10)
    phi = hp.phi
    f = phi if isinstance(phi, Form) else phi.form
    n = f.n
    if hp.query.size != n:
        raise ValueError("quad_hull_membership: dimension mismatch with phi")
    from .pshcheck import sample_planes

    work = [pl.frame for pl in sample_planes(phi, max(2 * n, 20), opts.seed)]
    history = []
    for it in range(1, max_outer + 1):
        Q = cp.Variable((n, n), symmetric=True)
        b = cp.Variable(n)
        c = cp.Variable()
        x0 = hp.query
        obj = cp.Maximize(0.5 * cp.quad_form(x0, Q) + b @ x0 + c)
        cons = [cp.norm(Q, "fro") + cp.norm(b, 2) <= 1.0]
        for k in hp.points:
            cons.append(0.5 * cp.quad_form(k, Q) + b @ k + c <= 0.0)
        for F in work:
            cons.append(cp.trace(F.T @ Q @ F) >= 0.0)
        prob = cp.Problem(obj, cons)
        try:
            prob.solve(solver="CLARABEL")
        except cp.SolverError:
            prob.solve(solver="SCS")
        if prob.status not in ("optimal", "optimal_inaccurate"):
            return {"inside": None, "status": "undecided",
                    "reason": f"solver_{prob.status}", "iters": it}
        Qv = np.asarray(Q.value)
        Qv = (Qv + Qv.T) / 2
        bv, cv = np.asarray(b.value), float(c.value)
        val = float(prob.value)
        history.append(val)
        rep = form_margin(lambda_phi(Qv, f), phi, "min",
                          opts=OptOptions(**{**opts.__dict__,
                                             "seed": opts.seed + it}))
        if rep.status != "ok":
            return {"inside": None, "status": "undecided",
                    "reason": f"margin_{rep.status}", "iters": it}
        scale = max(1.0, float(np.linalg.norm(Qv)))
        if rep.value < -1e-7 * scale:
            work.append(rep.argplanes[0].frame)
            continue
        inside = val <= tol
        out = {
            "inside": bool(inside),
            "status": "ok",
            "value": val,
            "iters": it,
            "working_planes": len(work),
        }
        if not inside:
            margin_sep = float(rep.value)
            out["separator"] = {"Q": Qv, "b": bv, "c": cv,
                                "hessian_margin": margin_sep}
        return out
    return {"inside": None, "status": "undecided",
            "reason": "iteration_budget", "iters": max_outer,
            "history": history}
