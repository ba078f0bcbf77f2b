"""Geometry and optimization on the Grassmannian of oriented p-planes.

Planes are n x p matrices with orthonormal columns; the objective machinery
works on pairings of forms with Plucker vectors.  The tangent space at a
plane is spanned by the first-cousin directions (replace one frame column by
a unit vector orthogonal to the plane), which makes the Riemannian gradient
of any form pairing a cheap exact computation.

Three solvers live here:

* ``comass`` -- multi-start Riemannian ascent of pair(phi, xi) with Armijo
  backtracking and QR retraction;
* ``form_margin`` -- extremization of pair(a, xi) over the calibrated set
  G(phi), by a penalized two-phase ascent followed by a reprojection onto
  G(phi) and a Newton-refined tangential descent along the null directions
  of the constraint Hessian;
* ``critical_planes`` -- minimization of the squared cousin-gradient norm.

Calibrations with a finite plane set (volume forms, coordinate forms,
``plane_pair``, ``double_point``) are handled by exact enumeration instead of
the penalty method; every report records which method produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exterior import (
    Form,
    Multivector,
    _interior2_table,
    _interior_table,
    _subsets_array,
    as_form,
    pair,
    plucker,
    restrict_form,
)

__all__ = [
    "OrientedPlane",
    "CousinBasis",
    "OptReport",
    "OptOptions",
    "random_plane",
    "first_cousin_basis",
    "comass",
    "calibrated_planes",
    "form_margin",
    "trace_margin",
    "critical_planes",
    "plane_distance",
    "principal_angles",
    "plane_to_dict",
    "plane_from_dict",
]


# ---------------------------------------------------------------------------
# planes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrientedPlane:
    """An oriented p-plane: orthonormal frame plus cached Plucker vector."""

    frame: np.ndarray
    plucker: Multivector

    @property
    def n(self) -> int:
        return self.frame.shape[0]

    @property
    def p(self) -> int:
        return self.frame.shape[1]

    def reversed(self) -> "OrientedPlane":
        F = self.frame.copy()
        F[:, 0] = -F[:, 0]
        return plane_from_frame(F)


def plane_from_frame(frame: np.ndarray, *, tol: float = 1e-10) -> OrientedPlane:
    F = np.asarray(frame, dtype=float).copy()
    x = plucker(F, tol=tol)
    F.setflags(write=False)
    return OrientedPlane(F, x)


def plane_to_dict(plane: OrientedPlane) -> dict:
    return {
        "n": plane.n,
        "p": plane.p,
        "frame": [[float(format(v, ".17g")) for v in row] for row in plane.frame],
    }


def plane_from_dict(d: dict, *, where: str = "plane") -> OrientedPlane:
    for key in ("n", "p", "frame"):
        if key not in d:
            raise ValueError(f"{where}: missing field '{key}'")
    F = np.asarray(d["frame"], dtype=float)
    if F.shape != (d["n"], d["p"]):
        raise ValueError(
            f"{where}.frame: shape {F.shape} does not match (n, p) = "
            f"({d['n']}, {d['p']})"
        )
    return plane_from_frame(F, tol=1e-8)


def random_plane(n: int, p: int, rng_seed: int) -> OrientedPlane:
    """Deterministic random plane: QR of a standard Gaussian n x p matrix."""
    if not 1 <= p <= n:
        raise ValueError("random_plane: need 1 <= p <= n")
    rng = np.random.default_rng(rng_seed)
    return plane_from_frame(_retract(rng.standard_normal((n, p))))


def _retract(A: np.ndarray) -> np.ndarray:
    """QR retraction with the R-diagonal sign fixed (orientation stable)."""
    Q, R = np.linalg.qr(A)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


def _complement_basis(F: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the column span."""
    n, p = F.shape
    U = np.linalg.svd(F, full_matrices=True)[0]
    return U[:, p:]


@dataclass(frozen=True)
class CousinBasis:
    """First-cousin tangent directions b ^ (a .| xi) at a plane."""

    plane: OrientedPlane
    directions: list

    def __len__(self) -> int:
        return len(self.directions)


def first_cousin_basis(xi: OrientedPlane) -> CousinBasis:
    F = xi.frame
    n, p = F.shape
    B = _complement_basis(F)
    dirs = []
    for j in range(p):
        for b in range(n - p):
            G = F.copy()
            G[:, j] = B[:, b]
            dirs.append(plucker(G))
    assert len(dirs) == p * (n - p)
    return CousinBasis(xi, dirs)


def principal_angles(F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(F1.T @ F2, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def plane_distance(F1: np.ndarray, F2: np.ndarray) -> float:
    """Largest principal angle; pi if the orientations disagree."""
    M = F1.T @ F2
    if np.linalg.det(M) <= 0:
        return math.pi
    return float(np.max(principal_angles(F1, F2)))


# ---------------------------------------------------------------------------
# options and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptOptions:
    seed: int = 0
    restarts: int = 64
    max_iter: int = 400
    stat_tol: float = 1e-9
    tol_plane: float = 1e-6
    cluster_radius: float = 1e-3
    mu_schedule: tuple = (10.0, 100.0, 1000.0, 10000.0)
    refine_top: int = 4
    refine_iters: int = 80
    use_sampler_starts: bool = True
    sampler_start_count: int = 16
    warm_starts: tuple = ()

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "restarts": self.restarts,
            "max_iter": self.max_iter,
            "stat_tol": self.stat_tol,
            "tol_plane": self.tol_plane,
            "cluster_radius": self.cluster_radius,
            "mu_schedule": list(self.mu_schedule),
        }


@dataclass
class OptReport:
    value: float
    argplanes: list
    restarts: int
    converged: bool
    gradient_norm: float
    seed: int
    status: str = "ok"  # ok | infeasible | non_converged
    method: str = "ascent"
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argplanes": [plane_to_dict(pl) for pl in self.argplanes],
            "restarts": self.restarts,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "seed": self.seed,
            "status": self.status,
            "method": self.method,
            "tolerances": self.tolerances,
            "extra": self.extra,
        }


class InfeasibleError(RuntimeError):
    """No calibrated plane satisfies the requested restriction."""


# ---------------------------------------------------------------------------
# calibration resolution (duck-typed; catalog.Calibration carries these)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Resolved:
    form: Form
    sampler_fn: object = None
    plane_enum: object = None
    subspace_sampler_fn: object = None
    tol_plane: float = 1e-6


def _resolve(phi) -> _Resolved:
    if isinstance(phi, Form):
        return _Resolved(form=phi)
    form = getattr(phi, "form", None)
    if not isinstance(form, Form):
        raise TypeError("expected a Form or an object with a .form attribute")
    return _Resolved(
        form=form,
        sampler_fn=getattr(phi, "sampler_fn", None),
        plane_enum=getattr(phi, "plane_enum", None),
        subspace_sampler_fn=getattr(phi, "subspace_sampler_fn", None),
        tol_plane=getattr(phi, "tol_plane", 1e-6),
    )


# ---------------------------------------------------------------------------
# objective machinery (raw ndarray frames in the hot loop)
# ---------------------------------------------------------------------------


def _minors(F: np.ndarray) -> np.ndarray:
    n, p = F.shape
    if p == 0:
        return np.ones(1)
    return np.linalg.det(F[_subsets_array(n, p), :])


class _FormObjective:
    """value(F) = pair(c, plucker(F)) for a coefficient vector c."""

    def __init__(self, n: int, p: int, coeffs: np.ndarray):
        self.n, self.p = n, p
        self.coeffs = np.asarray(coeffs, dtype=float)
        if p >= 1:
            self.tab = _interior_table(n, p)
        self.scale = max(1.0, float(np.linalg.norm(self.coeffs)))

    def tangent_hessian(self, F: np.ndarray, U: np.ndarray) -> np.ndarray:
        return _tangent_hessian(self, F, U, self.value(F))

    def value(self, F: np.ndarray) -> float:
        return float(self.coeffs @ _minors(F))

    def value_and_zgrad(self, F: np.ndarray):
        n, p = self.n, self.p
        if p == 1:
            return float(self.coeffs @ F[:, 0]), self.coeffs.reshape(n, 1).copy()
        ii, jj, kk, sg = self.tab
        cols = list(range(p))
        Z = np.empty((n, p))
        val = None
        for j in range(p):
            w = _minors(F[:, cols[:j] + cols[j + 1:]])
            out = np.zeros(n)
            np.add.at(out, ii, sg * self.coeffs[kk] * w[jj])
            Z[:, j] = out if j % 2 == 0 else -out
        val = float(self.coeffs @ _minors(F))
        return val, Z


class _TraceObjective:
    """value(F) = <H, P_xi> = tr(F^T H F) for a symmetric matrix H."""

    def __init__(self, H: np.ndarray):
        self.H = np.asarray(H, dtype=float)
        self.scale = max(1.0, float(np.linalg.norm(self.H)))

    def value(self, F: np.ndarray) -> float:
        return float(np.sum(F * (self.H @ F)))

    def value_and_zgrad(self, F: np.ndarray):
        HF = self.H @ F
        return float(np.sum(F * HF)), 2.0 * HF

    def tangent_hessian(self, F: np.ndarray, U: np.ndarray) -> np.ndarray:
        # second derivative of tr(retract(F + U T)^T H retract(F + U T))
        q = U.shape[1]
        p = F.shape[1]
        UHU = U.T @ self.H @ U
        FHF = F.T @ self.H @ F
        FHF = (FHF + FHF.T) / 2.0
        H2 = 2.0 * (np.kron(UHU, np.eye(p)) - np.kron(np.eye(q), FHF))
        return H2


class _PenalizedObjective:
    """sense * objective - mu * (1 - phi(xi))^2.

    The penalty weight is scaled by the objective magnitude so the schedule
    keeps its meaning for objectives of any size.
    """

    def __init__(self, obj, phi_obj: _FormObjective, sense: float, mu: float):
        self.obj, self.phi_obj, self.sense = obj, phi_obj, sense
        self.mu = mu * obj.scale

    def value_and_zgrad(self, F: np.ndarray):
        va, Za = self.obj.value_and_zgrad(F)
        vp, Zp = self.phi_obj.value_and_zgrad(F)
        gap = 1.0 - vp
        val = self.sense * va - self.mu * gap * gap
        Z = self.sense * Za + 2.0 * self.mu * gap * Zp
        return val, Z


def _ascend(objective, F, max_iter, stat_tol, step0=0.25):
    """Riemannian gradient ascent with Armijo backtracking, QR retraction."""
    val, Z = objective.value_and_zgrad(F)
    step = step0
    gn = np.inf
    converged = False
    for _ in range(max_iter):
        G = Z - F @ (F.T @ Z)
        gn = float(np.linalg.norm(G))
        if gn <= stat_tol:
            converged = True
            break
        moved = False
        t = step
        for _ in range(45):
            F2 = _retract(F + t * G)
            val2, Z2 = objective.value_and_zgrad(F2)
            if val2 >= val + 1e-4 * t * gn * gn:
                moved = True
                break
            t *= 0.5
        if not moved:
            break
        F, val, Z = F2, val2, Z2
        step = min(t * 1.8, 4.0)
    return F, val, gn, converged


# --- tangential (constraint-manifold) machinery ----------------------------


def _tangent_hessian(phi_obj: _FormObjective, F: np.ndarray, U: np.ndarray,
                     vphi: float) -> np.ndarray:
    """Hessian of t -> phi(retract(F + U T)) at T = 0, in flattened (b, j)
    coordinates (index b*p + j).

    The pairing is multilinear in the frame columns, so the only second-order
    contributions are two-column replacements plus the QR-retraction
    normalization term -phi(xi) * |T|^2 / 2.  Exact at critical points of phi
    (the cousin-gradient cross terms vanish there).
    """
    n, p = F.shape
    q = U.shape[1]
    k = q * p
    H = -vphi * np.eye(k)
    if p < 2:
        return H
    aa, jj, kk, sg = _interior2_table(n, p)
    pairs2 = _subsets_array(n, 2)
    cols = list(range(p))
    for j1 in range(p):
        for j2 in range(j1 + 1, p):
            rest = [c for c in cols if c not in (j1, j2)]
            w = _minors(F[:, rest])
            beta = np.zeros(len(pairs2))
            np.add.at(beta, aa, sg * phi_obj.coeffs[kk] * w[jj])
            M = np.zeros((n, n))
            M[pairs2[:, 0], pairs2[:, 1]] = beta
            M -= M.T
            sign = -1.0 if (j1 + j2 + 1) % 2 else 1.0
            B = sign * (U.T @ M @ U)
            r1 = np.arange(q) * p + j1
            r2 = np.arange(q) * p + j2
            H[np.ix_(r1, r2)] += B
            H[np.ix_(r2, r1)] += B.T
    return H


def _polish_to_plane(phi_obj: _FormObjective, F: np.ndarray, tol_plane: float,
                     newton_iters: int = 8, pre_iters: int = 200):
    """Drive phi(xi) to its local maximum: ascent, then tangent Newton."""
    F, val, gn, _ = _ascend(phi_obj, F, pre_iters, 1e-7 * phi_obj.scale)
    n, p = F.shape
    if n == p:
        return F, phi_obj.value(F)
    for _ in range(newton_iters):
        val, Z = phi_obj.value_and_zgrad(F)
        U = _complement_basis(F)
        g = (U.T @ Z).reshape(-1)
        gn = float(np.linalg.norm(g))
        if gn <= 1e-14 * phi_obj.scale:
            break
        H = _tangent_hessian(phi_obj, F, U, val)
        lam, V = np.linalg.eigh(H)
        thresh = 1e-6 * max(1.0, float(np.max(np.abs(lam))))
        coef = V.T @ g
        step = np.zeros(len(lam))
        neg = lam < -thresh
        step[neg] = -coef[neg] / lam[neg]
        step = V @ step
        sn = float(np.linalg.norm(step))
        if not np.all(np.isfinite(step)) or sn < 1e-17:
            break
        if sn > 1.0:
            step *= 1.0 / sn
        F2 = _retract(F + U @ step.reshape(U.shape[1], p))
        val2, Z2 = phi_obj.value_and_zgrad(F2)
        gn2 = float(np.linalg.norm((_complement_basis(F2).T @ Z2)))
        # near the maximum the value sits on a float plateau; judge the step
        # by gradient contraction as well
        if val2 >= val or gn2 <= 0.9 * gn:
            F = F2
        else:
            F = _ascend(phi_obj, F, 60, 1e-13 * phi_obj.scale)[0]
            break
    return F, phi_obj.value(F)


def _refine_on_gphi(obj, phi_obj: _FormObjective, F: np.ndarray, sense: float,
                    opts: OptOptions):
    """Optimize sense*obj over G(phi) near F.

    Moves along the null directions of the constraint Hessian (the tangent
    space of the calibrated family), reprojecting onto G(phi) after each
    step.  Steps are Newton steps of the objective restricted to the null
    space, with a gradient fallback: the valleys of restricted margins can
    be extremely flat relative to the constraint curvature, where first
    order steps would crawl.
    """
    n, p = F.shape
    if n == p:
        return F, obj.value(F), 0.0
    F, _ = _polish_to_plane(phi_obj, F, opts.tol_plane)
    dn = 0.0
    for _ in range(opts.refine_iters):
        U = _complement_basis(F)
        vphi = phi_obj.value(F)
        H = _tangent_hessian(phi_obj, F, U, vphi)
        lam, V = np.linalg.eigh(H)
        null_thresh = 1e-3 * max(1.0, float(np.max(np.abs(lam))))
        Vn = V[:, np.abs(lam) <= null_thresh]
        va, Za = obj.value_and_zgrad(F)
        g = (U.T @ (Za - F @ (F.T @ Za))).reshape(-1)
        if Vn.shape[1] == 0:
            return F, va, 0.0
        gn_vec = Vn @ (Vn.T @ g)
        dn = float(np.linalg.norm(gn_vec))
        if dn <= opts.stat_tol * 10.0 * obj.scale:
            return F, va, dn
        # Newton step of sense*obj within the null space
        A = Vn.T @ (sense * obj.tangent_hessian(F, U)) @ Vn
        b = Vn.T @ (sense * g)
        lamA, VA = np.linalg.eigh(A)
        tau = 1e-9 * max(1.0, float(np.max(np.abs(lamA))), obj.scale)
        coef = VA.T @ b
        step0 = np.zeros(len(lamA))
        concave = lamA < -tau
        step0[concave] = -coef[concave] / lamA[concave]
        flat = ~concave
        if np.any(flat):
            step0[flat] = coef[flat] / max(tau, float(np.max(np.abs(lamA))))
        d = Vn @ (VA @ step0)
        ds = float(np.linalg.norm(d))
        if not np.isfinite(ds) or ds < 1e-17:
            d = gn_vec * sense
            ds = dn
        if ds > 1.0:
            d *= 1.0 / ds
        moved = False
        t = 1.0
        for _ in range(40):
            F2 = _retract(F + t * (U @ d.reshape(U.shape[1], p)))
            F2, _ = _polish_to_plane(phi_obj, F2, opts.tol_plane,
                                     newton_iters=4, pre_iters=60)
            va2 = obj.value(F2)
            if sense * va2 > sense * va:
                moved = True
                break
            t *= 0.5
        if not moved:
            # fall back to the plain projected gradient before giving up
            t = 0.1
            d = gn_vec * sense
            for _ in range(40):
                F2 = _retract(F + t * (U @ d.reshape(U.shape[1], p)))
                F2, _ = _polish_to_plane(phi_obj, F2, opts.tol_plane,
                                         newton_iters=4, pre_iters=60)
                va2 = obj.value(F2)
                if sense * va2 > sense * va:
                    moved = True
                    break
                t *= 0.5
        if not moved:
            return F, va, dn
        F = F2
    va = obj.value(F)
    return F, va, dn


# ---------------------------------------------------------------------------
# clustering and start generation
# ---------------------------------------------------------------------------


def _cluster_frames(entries, radius):
    """entries: list of (sortkey, frame, payload); greedy dedup, deterministic."""
    entries = sorted(entries, key=lambda e: (e[0], np.round(e[1], 10).tobytes()))
    reps = []
    for key, F, payload in entries:
        if all(plane_distance(F, G) > radius for _, G, _ in reps):
            reps.append((key, F, payload))
    return reps


def _starts(n, p, res: _Resolved, opts: OptOptions, obj=None, sense=1.0):
    """Warm starts, sampler starts, then random restarts.

    When a closed-form sampler and an objective are both available, a large
    sampled batch is ranked by the objective and the best frames (plus an
    even subsample for diversity) become starts: the feasible set is exactly
    the sampler's family, so this targets the global basin directly.
    """
    out = [np.asarray(w, dtype=float) for w in opts.warm_starts]
    n_sampler = 0
    if res is not None and res.sampler_fn is not None and opts.use_sampler_starts:
        n_sampler = min(max(opts.sampler_start_count, opts.restarts // 2),
                        max(0, opts.restarts - 4))
        rng = np.random.default_rng(opts.seed ^ 0x5EED5A17)
        if obj is not None and n_sampler > 0:
            batch = [np.asarray(f, dtype=float)
                     for f in res.sampler_fn(rng, max(512, 8 * opts.restarts))]
            order = np.argsort([sense * -obj.value(F) for F in batch])
            keep = list(order[: (n_sampler + 1) // 2])
            stride = max(1, len(batch) // max(1, n_sampler - len(keep)))
            keep.extend(i for i in range(0, len(batch), stride)
                        if i not in keep)
            out.extend(batch[i] for i in keep[:n_sampler])
        else:
            out.extend(np.asarray(f, dtype=float)
                       for f in res.sampler_fn(rng, n_sampler))
    for i in range(max(opts.restarts - n_sampler, 4)):
        out.append(random_plane(n, p, opts.seed + i).frame.copy())
    return out


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------


def comass(phi, opts: OptOptions | None = None) -> OptReport:
    """Maximize pair(phi, xi) over the oriented Grassmannian by multi-start
    Riemannian ascent; argplanes holds the clustered maximizers."""
    opts = opts or OptOptions()
    res = _resolve(phi)
    form = res.form
    if form.p < 1:
        raise ValueError("comass: degree must be >= 1")
    n, p = form.n, form.p
    obj = _FormObjective(n, p, form.coeffs)
    runs = []
    any_conv = False
    for i in range(opts.restarts):
        F0 = random_plane(n, p, opts.seed + i).frame.copy()
        F, val, gn, conv = _ascend(obj, F0, opts.max_iter, max(opts.stat_tol, 1e-8))
        F, val = _polish_to_plane(obj, F, opts.tol_plane)
        gn = _cousin_grad_norm(obj, F)
        conv = gn <= opts.stat_tol * 100 * obj.scale
        any_conv = any_conv or conv
        runs.append((val, F, gn, conv))
    for w in opts.warm_starts:
        F, val = _polish_to_plane(obj, np.asarray(w, dtype=float), opts.tol_plane)
        gn = _cousin_grad_norm(obj, F)
        runs.append((val, F, gn, gn <= opts.stat_tol * 100 * obj.scale))
        any_conv = any_conv or runs[-1][3]
    best = max(r[0] for r in runs)
    keep = [
        (-r[0], r[1], r) for r in runs if r[0] >= best - 1e-7 * max(1.0, abs(best))
    ]
    reps = _cluster_frames(keep, opts.cluster_radius)
    argplanes = [plane_from_frame(F) for _, F, _ in reps]
    best_gn = min(r[2][2] for r in reps)
    return OptReport(
        value=best,
        argplanes=argplanes,
        restarts=opts.restarts,
        converged=any_conv,
        gradient_norm=best_gn,
        seed=opts.seed,
        status="ok" if any_conv else "non_converged",
        method="multi_start_ascent",
        tolerances=opts.to_dict(),
    )


def _cousin_grad_norm(obj: _FormObjective, F: np.ndarray) -> float:
    _, Z = obj.value_and_zgrad(F)
    G = Z - F @ (F.T @ Z)
    return float(np.linalg.norm(G))


def calibrated_planes(phi, count: int, opts: OptOptions | None = None) -> list:
    """Find ``count`` distinct planes with phi(xi) >= 1 - tol_plane."""
    opts = opts or OptOptions()
    res = _resolve(phi)
    form = res.form
    tol_plane = min(opts.tol_plane, res.tol_plane)
    obj = _FormObjective(form.n, form.p, form.coeffs)

    found = []

    def _admit(F):
        F = np.asarray(F, dtype=float)
        val = obj.value(F)
        if val < 1.0 - tol_plane:
            F, val = _polish_to_plane(obj, F, tol_plane)
        if val < 1.0 - tol_plane:
            return
        if all(plane_distance(F, G) > opts.cluster_radius for G in
               (pl.frame for pl in found)):
            found.append(plane_from_frame(F))

    for w in opts.warm_starts:
        _admit(np.asarray(w, dtype=float))

    if res.plane_enum is not None:
        for F in res.plane_enum:
            _admit(F)
            if len(found) >= count:
                return found[:count]
        raise InfeasibleError(
            f"only {len(found)} distinct calibrated planes exist; "
            f"{count} requested"
        )

    if res.sampler_fn is not None:
        rng = np.random.default_rng(opts.seed)
        budget = 40 * count + 40
        while len(found) < count and budget > 0:
            batch = res.sampler_fn(rng, min(2 * count + 8, budget))
            budget -= len(batch)
            for F in batch:
                _admit(F)
                if len(found) >= count:
                    break
        if len(found) < count:
            raise InfeasibleError(
                f"sampler produced only {len(found)} distinct planes "
                f"of {count} requested"
            )
        return found[:count]

    for i in range(opts.restarts):
        F0 = random_plane(form.n, form.p, opts.seed + i).frame.copy()
        F, val, gn, conv = _ascend(obj, F0, opts.max_iter, 1e-8)
        _admit(F)
        if len(found) >= count:
            return found[:count]
    if len(found) < count:
        raise InfeasibleError(
            f"optimizer found only {len(found)} distinct calibrated planes "
            f"of {count} requested after {opts.restarts} restarts"
        )
    return found[:count]


def _enum_planes_in_subspace(enum, W, ortho_tol=1e-8):
    """Filter enumerated frames to those inside span(W); return W-coords."""
    out = []
    P = W @ W.T
    for F in enum:
        F = np.asarray(F, dtype=float)
        if np.max(np.abs(F - P @ F)) <= ortho_tol:
            out.append(W.T @ F)
    return out


def form_margin(a: Form, phi, sense: str = "min", restrict_to=None,
                opts: OptOptions | None = None) -> OptReport:
    """Extremize pair(a, xi) over {xi in G(phi) : span xi inside restrict_to}."""
    return _margin(_FormObjective(a.n, a.p, a.coeffs), a, phi, sense,
                   restrict_to, opts)


def trace_margin(H: np.ndarray, phi, sense: str = "min", restrict_to=None,
                 opts: OptOptions | None = None) -> OptReport:
    """Extremize <H, P_xi> over G(phi); independent of the form machinery
    on the objective side (used as the dual route in cross-checks)."""
    H = np.asarray(H, dtype=float)
    return _margin(_TraceObjective(H), None, phi, sense, restrict_to, opts)


def _margin(obj, a_form, phi, sense, restrict_to, opts) -> OptReport:
    opts = opts or OptOptions()
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    s = -1.0 if sense == "min" else 1.0
    res = _resolve(phi)
    form = res.form
    n, p = form.n, form.p
    if a_form is not None and (a_form.n, a_form.p) != (n, p):
        raise ValueError("form_margin: objective and calibration degrees differ")
    tol_plane = min(opts.tol_plane, res.tol_plane)

    W = None
    if restrict_to is not None:
        W = np.asarray(restrict_to, dtype=float)
        if W.ndim != 2 or W.shape[0] != n:
            raise ValueError("restrict_to must be an n x m orthonormal basis")
        if np.max(np.abs(W.T @ W - np.eye(W.shape[1]))) > 1e-8:
            raise ValueError("restrict_to basis is not orthonormal")
        if W.shape[1] < p:
            return OptReport(
                value=math.nan, argplanes=[], restarts=0, converged=True,
                gradient_norm=0.0, seed=opts.seed, status="infeasible",
                method="dimension", tolerances=opts.to_dict(),
            )

    # --- enumeration fast path -------------------------------------------
    if res.plane_enum is not None:
        frames = [np.asarray(F, dtype=float) for F in res.plane_enum]
        method = "enumeration"
        if W is not None:
            frames = _enum_planes_in_subspace(frames, W)
            frames = [W @ F for F in frames]
        if not frames:
            return OptReport(
                value=math.nan, argplanes=[], restarts=0, converged=True,
                gradient_norm=0.0, seed=opts.seed, status="infeasible",
                method=method, tolerances=opts.to_dict(),
            )
        vals = [obj.value(F) for F in frames]
        idx = int(np.argmin(vals) if sense == "min" else np.argmax(vals))
        return OptReport(
            value=float(vals[idx]),
            argplanes=[plane_from_frame(frames[idx])],
            restarts=0, converged=True, gradient_norm=0.0, seed=opts.seed,
            status="ok", method=method, tolerances=opts.to_dict(),
        )

    # --- continuous path: restrict everything to W coordinates -----------
    if W is not None:
        m = W.shape[1]
        phi_w = restrict_form(form, W)
        if isinstance(obj, _FormObjective):
            obj_w = _FormObjective(m, p, restrict_form(a_form, W).coeffs)
        else:
            obj_w = _TraceObjective(W.T @ obj.H @ W)
        warm = []
        P = W @ W.T
        for f in opts.warm_starts:
            f = np.asarray(f, dtype=float)
            if f.shape == (n, p) and np.max(np.abs(f - P @ f)) <= 1e-8:
                warm.append(W.T @ f)
        if res.subspace_sampler_fn is not None and opts.use_sampler_starts:
            rng = np.random.default_rng(opts.seed ^ 0x5EED5A17)
            for f in res.subspace_sampler_fn(W, rng, opts.sampler_start_count):
                warm.append(W.T @ np.asarray(f, dtype=float))
        sub = replace(opts, warm_starts=tuple(warm))
        rep = _margin_continuous(obj_w, _FormObjective(m, p, phi_w.coeffs),
                                 None, s, sense, tol_plane, sub)
        rep.argplanes = [plane_from_frame(W @ pl.frame) for pl in rep.argplanes]
        rep.extra["restricted_dim"] = m
        return rep

    phi_obj = _FormObjective(n, p, form.coeffs)
    return _margin_continuous(obj, phi_obj, res, s, sense, tol_plane, opts)


def _margin_continuous(obj, phi_obj, res, s, sense, tol_plane, opts) -> OptReport:
    n, p = phi_obj.n, phi_obj.p
    starts = _starts(n, p, res, opts, obj=obj, sense=s) if res is not None else \
        [np.asarray(w, dtype=float) for w in opts.warm_starts] + \
        [random_plane(n, p, opts.seed + i).frame.copy()
         for i in range(opts.restarts)]

    feasible = []
    best_phi = -np.inf
    phi_conv = False
    for F0 in starts:
        F = F0
        if phi_obj.value(F) < 1.0 - tol_plane:
            # two-phase penalized ascent toward the constrained optimum
            for mu in opts.mu_schedule:
                pen = _PenalizedObjective(obj, phi_obj, s, mu)
                F, _, _, _ = _ascend(
                    pen, F, opts.max_iter // len(opts.mu_schedule),
                    opts.stat_tol * obj.scale)
        F, vphi = _polish_to_plane(phi_obj, F, tol_plane)
        gnp = _cousin_grad_norm(phi_obj, F)
        best_phi = max(best_phi, vphi)
        phi_conv = phi_conv or gnp <= 1e-6
        if vphi >= 1.0 - tol_plane:
            feasible.append((s * -obj.value(F), F))

    if not feasible:
        status = "infeasible" if phi_conv else "non_converged"
        return OptReport(
            value=math.nan, argplanes=[], restarts=len(starts), converged=phi_conv,
            gradient_norm=math.nan, seed=opts.seed, status=status,
            method="penalty_ascent",
            tolerances=opts.to_dict(),
            extra={"best_phi": float(best_phi)},
        )

    reps = _cluster_frames([(key, F, None) for key, F in feasible],
                           opts.cluster_radius)
    refined = []
    for _, F, _ in reps[: max(1, opts.refine_top)]:
        F2, v2, gn2 = _refine_on_gphi(obj, phi_obj, F, s, opts)
        if phi_obj.value(F2) >= 1.0 - tol_plane:
            refined.append((v2, F2, gn2))
    if not refined:
        refined = [(obj.value(F), F, math.nan) for _, F, _ in reps[:1]]
    refined.sort(key=lambda r: (s * -r[0], np.round(r[1], 10).tobytes()))
    v_best, F_best, gn_best = refined[0]
    return OptReport(
        value=float(v_best),
        argplanes=[plane_from_frame(F_best)],
        restarts=len(starts),
        converged=True,
        gradient_norm=float(gn_best),
        seed=opts.seed,
        status="ok",
        method="penalty_ascent+tangential_newton",
        tolerances=opts.to_dict(),
        extra={"feasible_clusters": len(reps), "sense": sense},
    )


def critical_planes(phi, opts: OptOptions | None = None) -> list:
    """Stationary points of phi on the Grassmannian, with their values.

    Minimizes the squared cousin-gradient norm from many restarts; returns a
    deduplicated list of (OrientedPlane, value) with gradient norm below the
    stationarity tolerance.
    """
    from scipy.optimize import minimize

    opts = opts or OptOptions()
    res = _resolve(phi)
    form = res.form
    if form.p < 1:
        raise ValueError("critical_planes: degree must be >= 1")
    n, p = form.n, form.p
    obj = _FormObjective(n, p, form.coeffs)

    if n == p:
        F = np.eye(n)
        return [
            (plane_from_frame(F), obj.value(F)),
            (plane_from_frame(_flip(F)), obj.value(_flip(F))),
        ]

    def sqgrad(F):
        _, Z = obj.value_and_zgrad(F)
        G = Z - F @ (F.T @ Z)
        return float(np.sum(G * G))

    starts = [np.asarray(w, dtype=float) for w in opts.warm_starts]
    starts += [random_plane(n, p, opts.seed + i).frame.copy()
               for i in range(opts.restarts)]
    hits = []
    for F in starts:
        for _outer in range(6):
            U = _complement_basis(F)

            def fun(t, F=F, U=U):
                T = t.reshape(n - p, p)
                return sqgrad(_retract(F + U @ T))

            r = minimize(fun, np.zeros((n - p) * p), method="BFGS",
                         options={"maxiter": 60, "gtol": 1e-12})
            F = _retract(F + U @ r.x.reshape(n - p, p))
            if sqgrad(F) < (opts.stat_tol * obj.scale) ** 2:
                break
        g2 = sqgrad(F)
        if g2 <= (1e-7 * obj.scale) ** 2:
            hits.append((obj.value(F), F, math.sqrt(g2)))

    reps = _cluster_frames([(( -v, ), F, (v, g)) for v, F, g in hits],
                           opts.cluster_radius)
    return [(plane_from_frame(F), payload[0]) for _, F, payload in reps]


def _flip(F: np.ndarray) -> np.ndarray:
    G = F.copy()
    G[:, 0] = -G[:, 0]
    return G


def gphi_walk(phi: Form, F0: np.ndarray, steps: int, seed: int,
              step_size: float = 0.25, tol_plane: float = 1e-6) -> list:
    """Random walk along the set of calibrated planes.

    From a calibrated plane, steps are taken in the null directions of the
    constraint Hessian and reprojected by the Newton polish; the visited
    frames are returned (all with phi(xi) >= 1 - tol_plane).  Used to enrich
    span estimates of positive-dimensional calibrated families.
    """
    obj = _FormObjective(phi.n, phi.p, phi.coeffs)
    rng = np.random.default_rng(seed)
    F, v = _polish_to_plane(obj, np.asarray(F0, dtype=float), tol_plane)
    if v < 1.0 - tol_plane:
        return []
    out = [F]
    n, p = F.shape
    if n == p:
        return out
    for _ in range(steps):
        U = _complement_basis(F)
        H = _tangent_hessian(obj, F, U, obj.value(F))
        lam, V = np.linalg.eigh(H)
        null_thresh = 1e-3 * max(1.0, float(np.max(np.abs(lam))))
        Vn = V[:, np.abs(lam) <= null_thresh]
        if Vn.shape[1] == 0:
            break
        d = Vn @ rng.standard_normal(Vn.shape[1])
        d *= step_size / max(np.linalg.norm(d), 1e-12)
        F2 = _retract(F + U @ d.reshape(U.shape[1], p))
        F2, v2 = _polish_to_plane(obj, F2, tol_plane, newton_iters=6,
                                  pre_iters=80)
        if v2 >= 1.0 - tol_plane:
            F = F2
            out.append(F)
    return out
