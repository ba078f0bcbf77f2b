"""Convex-cone layer: spans of calibrated planes, membership certificates,
hyperplane boundary tests, normality, and pluriharmonic-mod-d feasibility.

Membership in the positivity cone is decided by a cutting-plane bipolar
loop: a working set of calibrated planes is maintained; a nonnegative
least-squares fit (in-repo active-set solver) either reproduces the target,
or its residual proposes a separating form which the margin optimizer then
certifies or refutes (refutation adds the violating plane to the working
set).  Certificates are self-contained and re-checked by an independent
routine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exterior import (
    Form,
    Multivector,
    as_form,
    basis_form,
    form_from_dict,
    form_to_dict,
    interior,
    lambda_phi,
    multi_indices,
    pair,
    plucker,
    restrict_form,
    vector_form,
    wedge,
)
from .grassmann import (
    OptOptions,
    OrientedPlane,
    calibrated_planes,
    comass,
    form_margin,
    gphi_walk,
    plane_from_dict,
    plane_from_frame,
    plane_to_dict,
    principal_angles,
)

__all__ = [
    "SubspaceBasis",
    "ConeCertificate",
    "nnls",
    "lambda_span",
    "project_to_lambda",
    "essential_subspace",
    "positive_cone_membership",
    "check_certificate",
    "hyperplane_boundary_test",
    "normality_check",
    "pluriharmonic_mod_d_test",
]


@dataclass
class SubspaceBasis:
    """Orthonormal basis (columns) of a numerically determined subspace."""

    ambient: str
    basis: np.ndarray
    singular_values: np.ndarray
    rank_gap: float
    stable: bool = True

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass
class ConeCertificate:
    verdict: str  # inside | outside | boundary | undecided
    weights: list | None = None          # [(OrientedPlane, w > 0)]
    separator: Form | None = None
    margin: float = math.nan
    iters: int = 0
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "weights": ([{"plane": plane_to_dict(pl), "w": float(w)}
                         for pl, w in self.weights]
                        if self.weights is not None else None),
            "separator": (form_to_dict(self.separator)
                          if self.separator is not None else None),
            "margin": self.margin,
            "iters": self.iters,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# in-repo nonnegative least squares (Lawson-Hanson active set)
# ---------------------------------------------------------------------------


def nnls(A: np.ndarray, b: np.ndarray, max_iter: int | None = None):
    """Minimize |A x - b| subject to x >= 0.  Returns (x, residual_norm)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = A.shape
    if max_iter is None:
        max_iter = 6 * k + 30
    x = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    w = A.T @ b
    tol = 1e-11 * max(1.0, float(np.linalg.norm(A.T @ b, np.inf)))
    for _ in range(max_iter):
        if passive.all() or np.all(w[~passive] <= tol):
            break
        free = np.where(~passive)[0]
        j = free[int(np.argmax(w[free]))]
        passive[j] = True
        while True:
            idx = np.where(passive)[0]
            z = np.zeros(k)
            z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                break
            neg = idx[z[idx] <= 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = x[neg] / (x[neg] - z[neg])
            alpha = np.min(ratios)
            x = x + alpha * (z - x)
            passive[x <= 1e-14] = False
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


# ---------------------------------------------------------------------------
# plane collection helpers
# ---------------------------------------------------------------------------


def _collect_planes(phi, count: int, seed: int, enrich: bool = True) -> list:
    """Frames of calibrated planes, walk-enriched when only the optimizer is
    available (so positive-dimensional families get span coverage)."""
    enum = getattr(phi, "plane_enum", None)
    if enum is not None:
        return [np.asarray(F, dtype=float) for F in enum]
    sampler = getattr(phi, "sampler_fn", None)
    if sampler is not None:
        rng = np.random.default_rng(seed)
        return [np.asarray(F, dtype=float) for F in sampler(rng, count)]
    form = phi if isinstance(phi, Form) else phi.form
    planes = calibrated_planes(phi, max(4, count // 8),
                               OptOptions(seed=seed, restarts=48,
                                          cluster_radius=1e-2))
    frames = [pl.frame.copy() for pl in planes]
    if enrich:
        out = []
        for i, F in enumerate(frames):
            out.extend(gphi_walk(form, F, max(8, count // max(1, len(frames))),
                                 seed + 77 * i))
        frames = frames + out
    return frames[: max(count, len(frames))]


def _span_basis(vectors: np.ndarray, rel_tol: float, ambient: str) -> SubspaceBasis:
    """Column span of the rows of ``vectors`` with an SVD rank decision."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        dim = vectors.shape[1] if vectors.ndim == 2 else 0
        return SubspaceBasis(ambient, np.zeros((dim, 0)), np.zeros(0), math.inf)
    U, s, Vt = np.linalg.svd(vectors, full_matrices=False)
    if len(s) == 0 or s[0] == 0.0:
        return SubspaceBasis(ambient, np.zeros((vectors.shape[1], 0)),
                             s, math.inf)
    keep = s > rel_tol * s[0]
    r = int(np.sum(keep))
    if r < len(s) and s[r] > 0:
        gap = float(s[r - 1] / s[r]) if r > 0 else math.inf
    else:
        gap = math.inf
    return SubspaceBasis(ambient, Vt[:r].T.copy(), s, gap, stable=gap >= 10.0)


def lambda_span(phi, samples: int | None = None, seed: int = 0,
                rel_tol: float = 1e-7) -> SubspaceBasis:
    """Span of the Plucker vectors of calibrated planes."""
    form = phi if isinstance(phi, Form) else phi.form
    dim = len(form.coeffs)
    if samples is None:
        samples = 4 * dim
    if getattr(phi, "plane_enum", None) is None and samples < 4 * dim:
        raise ValueError(f"lambda_span: need samples >= {4 * dim}")
    frames = _collect_planes(phi, samples, seed)
    rows = np.array([plucker(F).coeffs for F in frames])
    out = _span_basis(rows, rel_tol, f"Lambda^{form.p}(R^{form.n})")
    cache = getattr(phi, "meta", None)
    if isinstance(cache, dict):
        cache["lambda_span_cache"] = out
    return out


def _lambda_span_cached(phi) -> SubspaceBasis:
    cache = getattr(phi, "meta", None)
    if isinstance(cache, dict) and "lambda_span_cache" in cache:
        return cache["lambda_span_cache"]
    return lambda_span(phi)


def project_to_lambda(a: Form, phi) -> Form:
    """Orthogonal projection of a form onto the span of calibrated planes."""
    span = _lambda_span_cached(phi)
    B = span.basis
    return Form(a.n, a.p, B @ (B.T @ a.coeffs))


def essential_subspace(phi, seed: int = 0) -> SubspaceBasis:
    """Span of all vectors of all calibrated planes (the subspace where the
    geometry genuinely lives); verifies that the restricted calibration
    reproduces calibrated planes inside it."""
    form = phi if isinstance(phi, Form) else phi.form
    frames = _collect_planes(phi, 4 * form.n, seed)
    cols = np.hstack(frames)
    out = _span_basis(cols.T, 1e-8, f"R^{form.n}")
    W = out.basis
    checks = {"planes_inside": True, "restriction_reproduces": True}
    P = W @ W.T
    for F in frames[: min(len(frames), 24)]:
        if np.max(np.abs(F - P @ F)) > 1e-6:
            checks["planes_inside"] = False
    if W.shape[1] >= form.p:
        phi_w = restrict_form(form, W)
        rep = comass(phi_w, OptOptions(seed=seed + 1, restarts=24))
        if abs(rep.value - 1.0) > 1e-6:
            checks["restriction_reproduces"] = False
        else:
            for pl in rep.argplanes[:8]:
                full = plucker(W @ pl.frame)
                if pair(form, full) < 1.0 - 1e-6:
                    checks["restriction_reproduces"] = False
    out_meta = checks
    out.stable = out.stable and all(checks.values())
    return out


# ---------------------------------------------------------------------------
# membership with certificates
# ---------------------------------------------------------------------------


def positive_cone_membership(target: Multivector, phi,
                             opts: OptOptions | None = None,
                             max_outer: int = 25,
                             tol_inside: float = 1e-7) -> ConeCertificate:
    """Decide membership of a p-vector in the convex cone on the calibrated
    planes, with a self-verifying certificate either way."""
    opts = opts or OptOptions(restarts=12)
    form = phi if isinstance(phi, Form) else phi.form
    if (target.n, target.p) != (form.n, form.p):
        raise ValueError("positive_cone_membership: degree mismatch")
    dim = len(form.coeffs)

    pool_frames = _collect_planes(phi, max(2 * dim, 60), opts.seed)
    # the plane best aligned with the target helps inside decisions
    rep_align = form_margin(as_form(target), phi, "max",
                            opts=OptOptions(**{**opts.__dict__,
                                               "seed": opts.seed + 3}))
    if rep_align.status == "ok":
        pool_frames = pool_frames + [pl.frame for pl in rep_align.argplanes]

    work = [np.asarray(F, dtype=float) for F in pool_frames]
    t = target.coeffs
    tnorm = max(1.0, float(np.linalg.norm(t)))

    def certify_separator(alpha_coeffs, it, resid):
        alpha = Form(form.n, form.p,
                     alpha_coeffs / np.linalg.norm(alpha_coeffs))
        rep = form_margin(alpha, phi, "min",
                          opts=OptOptions(**{**opts.__dict__,
                                             "seed": opts.seed + it}))
        if rep.status != "ok":
            return None, rep, alpha
        if rep.value >= -1e-8:
            s = float(alpha.coeffs @ t)
            verdict = "outside" if s < -1e-6 * tnorm else "boundary"
            return ConeCertificate(
                verdict, separator=alpha, margin=float(rep.value), iters=it,
                seed=opts.seed,
                diagnostics={"pairing": s, "residual": resid},
            ), rep, alpha
        return None, rep, alpha

    # a component outside the span of the calibrated planes separates at
    # once (it annihilates every calibrated plane); try it first
    span = _lambda_span_cached(phi)
    B = span.basis
    chi = t - B @ (B.T @ t)
    if float(np.linalg.norm(chi)) > 1e-6 * tnorm:
        cert, rep, _ = certify_separator(-chi, 0, math.nan)
        if cert is not None and cert.verdict == "outside":
            cert.diagnostics["route"] = "span_complement"
            return cert

    for it in range(1, max_outer + 1):
        A = np.array([plucker(F).coeffs for F in work]).T
        w, resid = nnls(A, t)
        if resid <= tol_inside * tnorm:
            keep = [(plane_from_frame(work[i]), float(w[i]))
                    for i in range(len(work)) if w[i] > 1e-12]
            rebuilt = sum(wi * pl.plucker.coeffs for pl, wi in keep) \
                if keep else np.zeros_like(t)
            err = float(np.linalg.norm(rebuilt - t))
            return ConeCertificate(
                "inside", weights=keep, margin=err, iters=it, seed=opts.seed,
                diagnostics={"residual": resid, "working_set": len(work)},
            )
        r = t - A @ w
        cert, rep, alpha = certify_separator(-r, it, resid)
        if cert is not None:
            return cert
        if rep.status != "ok":
            return ConeCertificate(
                "undecided", iters=it, seed=opts.seed,
                diagnostics={"reason": f"margin_{rep.status}",
                             "residual": resid},
            )
        work.append(rep.argplanes[0].frame.copy())
    return ConeCertificate(
        "undecided", iters=max_outer, seed=opts.seed,
        diagnostics={"reason": "iteration_budget", "working_set": len(work)},
    )


def check_certificate(cert: ConeCertificate, target: Multivector, phi,
                      opts: OptOptions | None = None) -> dict:
    """Independent re-verification of a membership certificate."""
    form = phi if isinstance(phi, Form) else phi.form
    tol_plane = getattr(phi, "tol_plane", 1e-6)
    out = {"ok": False, "verdict": cert.verdict}
    if cert.verdict == "inside":
        if not cert.weights:
            out["reason"] = "no weights"
            return out
        if any(w <= 0 for _, w in cert.weights):
            out["reason"] = "nonpositive weight"
            return out
        bad = [pair(form, pl.plucker) for pl, _ in cert.weights
               if pair(form, pl.plucker) < 1.0 - tol_plane]
        if bad:
            out["reason"] = "weight plane not calibrated"
            return out
        rebuilt = sum(w * pl.plucker.coeffs for pl, w in cert.weights)
        err = float(np.linalg.norm(rebuilt - target.coeffs))
        out["reconstruction_error"] = err
        out["ok"] = err <= 1e-6
        return out
    if cert.verdict in ("outside", "boundary"):
        if cert.separator is None:
            out["reason"] = "no separator"
            return out
        opts = opts or OptOptions(restarts=12, seed=9876)
        rep = form_margin(cert.separator, phi, "min", opts=opts)
        s = float(cert.separator.coeffs @ target.coeffs)
        out["separator_margin"] = rep.value
        out["pairing"] = s
        if cert.verdict == "outside":
            out["ok"] = rep.status == "ok" and rep.value >= -1e-8 and s <= -1e-6
        else:
            out["ok"] = rep.status == "ok" and rep.value >= -1e-8 and abs(s) <= 1e-5
        return out
    out["reason"] = "undecided certificates cannot verify"
    return out


# ---------------------------------------------------------------------------
# hyperplane boundary and normality
# ---------------------------------------------------------------------------


def hyperplane_boundary_test(phi, e: np.ndarray,
                             opts: OptOptions | None = None,
                             tol: float = 1e-6) -> dict:
    """Is the restriction of phi to the hyperplane orthogonal to e on the
    boundary of the polar cone?  Equivalently (and this is what is computed):
    does some calibrated plane contain e?"""
    form = phi if isinstance(phi, Form) else phi.form
    e = np.asarray(e, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-8:
        raise ValueError("hyperplane_boundary_test: e must be a unit vector")
    opts = opts or OptOptions(restarts=12)
    phi_e = form - wedge(vector_form(e), interior(e, form))
    rep = form_margin(phi_e, phi, "min", opts=opts)
    if rep.status != "ok":
        return {"on_boundary": None, "margin": math.nan, "status": rep.status}
    return {"on_boundary": bool(rep.value <= tol), "margin": float(rep.value),
            "status": "ok"}


def _restricted_plane_span(phi, W: np.ndarray, seed: int,
                           rel_tol: float = 1e-7) -> SubspaceBasis:
    """Span of G(phi|_W) inside Lambda^p of the subspace coordinates."""
    form = phi if isinstance(phi, Form) else phi.form
    n, p = form.n, form.p
    m = W.shape[1]
    frames_w = []
    sub = getattr(phi, "subspace_sampler_fn", None)
    if sub is not None:
        rng = np.random.default_rng(seed)
        count = 4 * math.comb(m, p)
        frames_w = [W.T @ np.asarray(F, dtype=float)
                    for F in sub(W, rng, count)]
    enum = getattr(phi, "plane_enum", None)
    if enum is not None:
        P = W @ W.T
        for F in enum:
            F = np.asarray(F, dtype=float)
            if np.max(np.abs(F - P @ F)) <= 1e-8:
                frames_w.append(W.T @ F)
        # the enumeration is complete: no planes inside W means G is empty
        if not frames_w:
            return SubspaceBasis(f"Lambda^{p}(W)",
                                 np.zeros((math.comb(m, p), 0)),
                                 np.zeros(0), math.inf)
    if not frames_w:
        # optimizer fallback: restricted multi-start plus manifold walks
        phi_w = restrict_form(form, W)
        rep = comass(phi_w, OptOptions(seed=seed, restarts=64,
                                       cluster_radius=1e-2))
        if rep.value < 1.0 - getattr(phi, "tol_plane", 1e-6):
            return SubspaceBasis(f"Lambda^{p}(W)",
                                 np.zeros((math.comb(m, p), 0)),
                                 np.zeros(0), math.inf)
        seeds = [pl.frame for pl in rep.argplanes]
        for i, F in enumerate(seeds):
            frames_w.extend(gphi_walk(phi_w, F, 40, seed + 131 * i))
    rows = np.array([plucker(F).coeffs for F in frames_w])
    return _span_basis(rows, rel_tol, f"Lambda^{p}(W)")


def normality_check(phi, trials: int = 3, seed: int = 0,
                    angle_tol: float = 1e-4) -> dict:
    """Does restriction to hyperplanes commute with taking the annihilator
    of the calibrated span?  Tested on random and axis-aligned hyperplanes
    by comparing the two subspaces with principal angles."""
    form = phi if isinstance(phi, Form) else phi.form
    n, p = form.n, form.p
    glob = _lambda_span_cached(phi)
    B = glob.basis
    full = np.eye(len(form.coeffs))
    comp = full - B @ B.T
    Cg = _span_basis(comp, 1e-8, "complement").basis  # columns: Lambda(phi)^perp

    rng = np.random.default_rng(seed)
    normals = [np.eye(n)[0], np.eye(n)[n - 1]]
    for _ in range(trials):
        v = rng.standard_normal(n)
        normals.append(v / np.linalg.norm(v))

    worst = 0.0
    per_w = []
    ok = True
    if p > n - 1:
        # restrictions to hyperplanes live in a zero space of p-forms
        return {"normal": True, "worst_angle": 0.0,
                "hyperplanes": [{"trivial": True}] * len(normals)}

    for t, nv in enumerate(normals):
        W = np.linalg.svd(nv.reshape(-1, 1), full_matrices=True)[0][:, 1:]
        # restriction of the global annihilator to the hyperplane
        rows = np.array([restrict_form(Form(n, p, Cg[:, j]), W).coeffs
                         for j in range(Cg.shape[1])])
        rows = rows.reshape(Cg.shape[1], math.comb(n - 1, p))
        Bres = _span_basis(rows, 1e-8, "restricted complement").basis
        span_w = _restricted_plane_span(phi, W, seed + 1000 * t)
        Sw = span_w.basis
        dim_all = math.comb(n - 1, p)
        Aperp = _span_basis((np.eye(dim_all) - Sw @ Sw.T), 1e-8,
                            "restricted annihilator").basis
        entry = {"normal_index": t, "dim_restricted_annihilator": Aperp.shape[1],
                 "dim_global_restricted": Bres.shape[1]}
        if Aperp.shape[1] != Bres.shape[1]:
            entry["mismatch"] = True
            ok = False
            per_w.append(entry)
            continue
        if Aperp.shape[1] == 0:
            entry["worst_angle"] = 0.0
            per_w.append(entry)
            continue
        sv = np.linalg.svd(Aperp.T @ Bres, compute_uv=False)
        ang = float(np.max(np.arccos(np.clip(sv, -1.0, 1.0))))
        entry["worst_angle"] = ang
        worst = max(worst, ang)
        per_w.append(entry)
    return {"normal": bool(ok and worst <= angle_tol),
            "worst_angle": worst, "hyperplanes": per_w}


# ---------------------------------------------------------------------------
# pluriharmonic mod d
# ---------------------------------------------------------------------------


def pluriharmonic_mod_d_test(jet, phi, opts: OptOptions | None = None) -> dict:
    """Least-squares split of the phi-Hessian form into df ^ alpha plus a
    component annihilating every calibrated plane.

    alpha has degree p-1 (the wedge with the 1-form df must reproduce a
    p-form).  A vanishing gradient degenerates the first summand; the solve
    then runs against the annihilator alone and is flagged.
    """
    from .pshcheck import phi_hessian_point

    form = phi if isinstance(phi, Form) else phi.form
    n, p = form.n, form.p
    target = phi_hessian_point(jet, phi).coeffs
    span = _lambda_span_cached(phi)
    B = span.basis
    comp = _span_basis(np.eye(len(form.coeffs)) - B @ B.T, 1e-8,
                       "complement").basis

    grad_ok = float(np.linalg.norm(jet.gradient)) > 1e-8
    cols = []
    alpha_idx = []
    if grad_ok:
        df = vector_form(jet.gradient)
        for J in multi_indices(n, p - 1):
            cols.append(wedge(df, basis_form(n, J)).coeffs)
            alpha_idx.append(J)
    ncols_alpha = len(cols)
    for j in range(comp.shape[1]):
        cols.append(comp[:, j])
    A = np.array(cols).T if cols else np.zeros((len(target), 0))
    if A.shape[1]:
        x, *_ = np.linalg.lstsq(A, target, rcond=None)
        resid = float(np.linalg.norm(A @ x - target))
    else:
        x = np.zeros(0)
        resid = float(np.linalg.norm(target))
    alpha_coeffs = np.zeros(math.comb(n, p - 1))
    if grad_ok:
        for r, J in enumerate(alpha_idx):
            from .exterior import rank_of_index
            alpha_coeffs[rank_of_index(n, J)] = x[r]
    sigma = A[:, ncols_alpha:] @ x[ncols_alpha:] if A.shape[1] > ncols_alpha \
        else np.zeros_like(target)
    return {
        "residual": resid,
        "alpha": Form(n, p - 1, alpha_coeffs),
        "sigma_norm": float(np.linalg.norm(sigma)),
        "gradient_degenerate": not grad_ok,
    }
