"""Pointwise plurisubharmonicity analysis for calibrated geometries.

A scalar function enters only through its second-order data at a point (a
``Jet2``: value, gradient, symmetric Hessian in an orthonormal frame).  The
central objects:

* ``d_phi_point``       -- the contraction  grad f .| phi;
* ``phi_hessian_point`` -- the degree-p form obtained by letting the Hessian
                           act on phi as a derivation (plus a caller-supplied
                           first-order correction when phi is not parallel);
* ``psh_classify``      -- margins of the Hessian trace over calibrated
                           planes, decided with a dead band, cross-checked by
                           an independent trace-objective optimization.

Everything downstream of the margins (Laplacian, witnesses, pluriharmonic
spaces, richness) reduces to linear algebra plus the grassmann solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exterior import (
    Form,
    as_multivector,
    basis_form,
    interior,
    lambda_phi,
    pair,
    plucker,
    restrict_form,
    vector_form,
    wedge,
)
from .grassmann import (
    OptOptions,
    OptReport,
    OrientedPlane,
    calibrated_planes,
    comass,
    form_margin,
    plane_from_frame,
    trace_margin,
)

__all__ = [
    "Jet2",
    "PshReport",
    "QuadraticSpace",
    "quadratic_jet",
    "jet_to_dict",
    "jet_from_dict",
    "d_phi_point",
    "phi_hessian_point",
    "psh_classify",
    "phi_laplacian",
    "ellipticity_report",
    "jet_compose",
    "log_sum_exp",
    "nonconvex_psh_witness",
    "pluriharmonic_quadratic_space",
    "richness_check",
    "sample_planes",
]

CLASS_TOL = 1e-6


@dataclass(frozen=True)
class Jet2:
    """Second-order data of a scalar function at a point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=float)
        H = np.asarray(self.hessian, dtype=float)
        if H.shape != (g.size, g.size):
            raise ValueError("jet: hessian shape does not match gradient")
        if np.max(np.abs(H - H.T)) > 1e-12 * max(1.0, np.max(np.abs(H))):
            raise ValueError("jet: hessian is not symmetric")
        H = (H + H.T) / 2.0
        g = g.copy()
        g.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", H)

    @property
    def n(self) -> int:
        return self.gradient.size


def quadratic_jet(Q: np.ndarray, b: np.ndarray, c: float, x: np.ndarray) -> Jet2:
    """Jet of f(x) = x^T Q x / 2 + b^T x + c at the point x."""
    Q = np.asarray(Q, dtype=float)
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    return Jet2(float(x @ Q @ x / 2.0 + b @ x + c), Q @ x + b, Q)


def jet_to_dict(j: Jet2) -> dict:
    return {
        "value": float(j.value),
        "grad": [float(v) for v in j.gradient],
        "hess": [[float(v) for v in row] for row in j.hessian],
    }


def jet_from_dict(d: dict, *, where: str = "jet") -> Jet2:
    for key in ("value", "grad", "hess"):
        if key not in d:
            raise ValueError(f"{where}: missing field '{key}'")
    return Jet2(float(d["value"]), np.asarray(d["grad"], dtype=float),
                np.asarray(d["hess"], dtype=float))


@dataclass
class PshReport:
    lower_margin: float
    upper_margin: float
    classification: str  # strictly_psh | psh | pluriharmonic | not_psh | indeterminate
    witness_plane: OrientedPlane | None
    tolerance: float
    cross_check_residual: float = math.nan
    status: str = "ok"

    def to_dict(self) -> dict:
        from .grassmann import plane_to_dict

        return {
            "lower_margin": self.lower_margin,
            "upper_margin": self.upper_margin,
            "class": self.classification,
            "witness_plane": (plane_to_dict(self.witness_plane)
                              if self.witness_plane is not None else None),
            "tolerance": self.tolerance,
            "cross_check_residual": self.cross_check_residual,
            "status": self.status,
        }


@dataclass
class QuadraticSpace:
    dimension: int
    basis: list
    residual: float
    singular_values: np.ndarray = None
    rank_gap: float = math.inf
    stable: bool = True


# ---------------------------------------------------------------------------
# pointwise operators
# ---------------------------------------------------------------------------


def _form_of(phi) -> Form:
    return phi if isinstance(phi, Form) else phi.form


def d_phi_point(jet: Jet2, phi) -> Form:
    """The (p-1)-form  grad f .| phi."""
    f = _form_of(phi)
    if jet.n != f.n:
        raise ValueError("d_phi_point: dimension mismatch")
    return interior(jet.gradient, f)


def phi_hessian_point(jet: Jet2, phi, nonparallel_correction: Form | None = None) -> Form:
    """Hessian of f acting on phi as a derivation.

    For a parallel calibration this equals the exterior derivative of
    d_phi_point; for a non-parallel one the caller supplies the first-order
    correction term and the result is the corrected p-form.
    """
    f = _form_of(phi)
    if jet.n != f.n:
        raise ValueError("phi_hessian_point: dimension mismatch")
    out = lambda_phi(jet.hessian, f)
    if nonparallel_correction is not None:
        if (nonparallel_correction.n, nonparallel_correction.p) != (f.n, f.p):
            raise ValueError("phi_hessian_point: correction has wrong degree")
        out = out + nonparallel_correction
    return out


def psh_classify(jet: Jet2, phi, tol: float = CLASS_TOL,
                 opts: OptOptions | None = None,
                 cross_check: bool = True) -> PshReport:
    """Classify the jet by the extrema of tr_xi Hess f over calibrated planes.

    The lower margin is computed twice: from the form pairing of the
    phi-Hessian and from a direct trace optimization; disagreement beyond
    1e-6 (or optimizer failure) yields 'indeterminate', never a wrong class.
    """
    opts = opts or OptOptions(restarts=16)
    f = _form_of(phi)
    # classification is invariant under positive scaling of the Hessian;
    # optimize the normalized problem and scale the margins back
    hnorm = float(np.linalg.norm(jet.hessian))
    if hnorm == 0.0:
        return PshReport(0.0, 0.0, "pluriharmonic", None, tol, 0.0, "ok")
    Hn = jet.hessian / hnorm
    hess_form = lambda_phi(Hn, f)
    low = form_margin(hess_form, phi, "min", opts=opts)
    high = form_margin(hess_form, phi, "max",
                       opts=OptOptions(**{**opts.__dict__, "seed": opts.seed + 1}))
    residual = math.nan
    status = "ok"
    if low.status != "ok" or high.status != "ok":
        status = "optimizer_" + (low.status if low.status != "ok" else high.status)
    elif cross_check:
        dual = trace_margin(Hn, phi, "min",
                            opts=OptOptions(**{**opts.__dict__, "seed": opts.seed + 2}))
        residual = abs(dual.value - low.value) if dual.status == "ok" else math.inf
        if not residual <= 1e-6 * max(1.0, abs(low.value)):
            status = "cross_check_failed"
        residual *= hnorm

    if status != "ok":
        return PshReport(math.nan, math.nan, "indeterminate", None, tol,
                         residual, status)

    lo, hi = hnorm * low.value, hnorm * high.value
    if max(abs(lo), abs(hi)) <= tol:
        cls = "pluriharmonic"
    elif lo > tol:
        cls = "strictly_psh"
    elif lo >= -tol:
        cls = "psh"
    else:
        cls = "not_psh"
    witness = low.argplanes[0] if low.argplanes else None
    return PshReport(lo, hi, cls, witness, tol, residual, status)


def phi_laplacian(jet: Jet2, phi) -> float:
    """Inner product of the phi-Hessian form with phi itself."""
    f = _form_of(phi)
    h = phi_hessian_point(jet, phi)
    return float(h.coeffs @ f.coeffs)


# ---------------------------------------------------------------------------
# symbol and ellipticity
# ---------------------------------------------------------------------------


def sample_planes(phi, count: int, seed: int = 0) -> list:
    """Calibrated planes from the cheapest available source."""
    if getattr(phi, "plane_enum", None) is not None:
        return [plane_from_frame(F) for F in phi.plane_enum]
    return calibrated_planes(phi, count, OptOptions(seed=seed, restarts=max(count, 32)))


def ellipticity_report(phi, plane_count: int = 48, seed: int = 0) -> dict:
    """Symbol nondegeneracy of the second-order operator and its reduction.

    min_symbol_norm = min over unit zeta of |zeta .| phi| (an exact eigenvalue
    computation: the squared norm is a quadratic form in zeta); the reduced
    test asks whether the calibrated planes jointly involve every direction.
    """
    f = _form_of(phi)
    n = f.n
    C = np.array([interior(np.eye(n)[i], f).coeffs for i in range(n)])
    M = C @ C.T
    evals = np.linalg.eigvalsh(M)
    min_symbol = math.sqrt(max(evals[0], 0.0))
    dd_elliptic = bool(evals[0] > 1e-10 * max(1.0, evals[-1]))

    flags = []
    try:
        planes = sample_planes(phi, plane_count, seed)
    except Exception as e:  # plane search failed: report honestly
        planes = []
        flags.append(f"plane_search_failed: {e}")
    if planes:
        projs = [pl.frame @ pl.frame.T for pl in planes]
        value = _min_max_projection(projs, seed)
        # min-max over finitely many projectors vanishes exactly when the
        # projector sum is singular; decide by the eigenvalue, report the
        # min-max descent value as a diagnostic
        ev = np.linalg.eigvalsh(sum(projs))
        reduced = bool(ev[0] > 1e-8 * max(1.0, ev[-1]))
    else:
        value = math.nan
        reduced = False
        flags.append("no_planes_found")
    return {
        "min_symbol_norm": float(min_symbol),
        "dd_elliptic": dd_elliptic,
        "reduced_elliptic": reduced,
        "reduced_min_max": float(value) if value == value else None,
        "planes_used": len(planes),
        "flags": flags,
    }


def _min_max_projection(projs: list, seed: int) -> float:
    """min over unit u of max_k |P_k u|^2 by multi-start projected descent."""
    n = projs[0].shape[0]
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(16):
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        step = 0.5
        val = max(float(u @ P @ u) for P in projs)
        for _ in range(200):
            k = int(np.argmax([u @ P @ u for P in projs]))
            g = 2.0 * (projs[k] @ u)
            g -= (g @ u) * u
            if np.linalg.norm(g) < 1e-12:
                break
            moved = False
            t = step
            for _ in range(30):
                u2 = u - t * g
                u2 /= np.linalg.norm(u2)
                val2 = max(float(u2 @ P @ u2) for P in projs)
                if val2 < val - 1e-12:
                    moved = True
                    break
                t *= 0.5
            if not moved:
                break
            u, val = u2, val2
            step = min(t * 1.5, 1.0)
        best = min(best, val)
    return best


# ---------------------------------------------------------------------------
# jet calculus
# ---------------------------------------------------------------------------


def jet_compose(outer, f: Jet2) -> Jet2:
    """Chain rule for psi(f): outer = (psi(f), psi'(f), psi''(f))."""
    _, d1, d2 = (float(v) for v in outer)
    val = float(outer[0])
    g = f.gradient
    return Jet2(val, d1 * g, d1 * f.hessian + d2 * np.outer(g, g))


def log_sum_exp(f: Jet2, g: Jet2) -> Jet2:
    """Jet of log(e^f + e^g), overflow-guarded by a max shift."""
    if f.n != g.n:
        raise ValueError("log_sum_exp: dimension mismatch")
    m = max(f.value, g.value)
    ef = math.exp(f.value - m)
    eg = math.exp(g.value - m)
    s = ef + eg
    wf, wg = ef / s, eg / s
    val = m + math.log(s)
    grad = wf * f.gradient + wg * g.gradient
    diff = f.gradient - g.gradient
    hess = wf * f.hessian + wg * g.hessian + wf * wg * np.outer(diff, diff)
    return Jet2(val, grad, hess)


# ---------------------------------------------------------------------------
# witnesses and pluriharmonic spaces
# ---------------------------------------------------------------------------


def nonconvex_psh_witness(phi, seed: int = 0, opts: OptOptions | None = None,
                          target_eig: float = -0.1):
    """A symmetric matrix with a negative eigenvalue whose trace is
    nonnegative on every calibrated plane, or None when the repair loop
    cannot produce one.

    Found by linear programming over sampled plane constraints with an
    eigenvalue-pushing objective, then margin-verified with cutting-plane
    repair.
    """
    from scipy.optimize import linprog

    opts = opts or OptOptions(restarts=12, seed=seed)
    f = _form_of(phi)
    n = f.n
    try:
        planes = sample_planes(phi, max(4 * n * (n + 1) // 2, 60), seed)
    except Exception:
        return None
    projs = [pl.frame @ pl.frame.T for pl in planes]

    iu = np.triu_indices(n)
    nq = len(iu[0])

    def row_of(P):
        R = 2.0 * P - np.diag(np.diag(P))
        return R[iu]

    def unpack(q):
        Q = np.zeros((n, n))
        Q[iu] = q
        Q = Q + Q.T - np.diag(np.diag(Q))
        return Q

    S = sum(projs)
    candidates = [np.linalg.eigh(S)[1][:, 0]]
    rng = np.random.default_rng(seed)
    for _ in range(4):
        v = rng.standard_normal(n)
        candidates.append(v / np.linalg.norm(v))
    candidates.extend(np.eye(n)[i] for i in range(min(n, 3)))

    delta = 0.05
    for v in candidates:
        work = list(projs)
        cvec = row_of(np.outer(v, v))
        for _repair in range(12):
            A_ub = -np.array([row_of(P) for P in work])
            b_ub = -delta * np.ones(len(work))
            res = linprog(cvec, A_ub=A_ub, b_ub=b_ub,
                          bounds=[(-1.0, 1.0)] * nq, method="highs")
            if not res.success:
                break
            Q = unpack(res.x)
            if np.linalg.eigvalsh(Q)[0] > -0.02:
                break  # this direction cannot be pushed negative
            rep = form_margin(lambda_phi(Q, f), phi, "min", opts=opts)
            if rep.status != "ok":
                break
            if rep.value >= -1e-9:
                lam_min = np.linalg.eigvalsh(Q)[0]
                scale = max(1.0, abs(target_eig) * 1.05 / abs(lam_min))
                return scale * Q
            work.append(rep.argplanes[0].frame @ rep.argplanes[0].frame.T)
    return None


def pluriharmonic_quadratic_space(phi, samples: int | None = None,
                                  seed: int = 0,
                                  zero_rel: float = 1e-8) -> QuadraticSpace:
    """Null space of Q -> (tr_xi Q) over sampled calibrated planes.

    Singular values below zero_rel * sigma_max count as zero; a spectral gap
    below 10x flags instability.  The residual is the largest |tr_xi Q| of
    the reported basis over a fresh plane batch.
    """
    f = _form_of(phi)
    n = f.n
    N = n * (n + 1) // 2
    if samples is None:
        samples = 4 * N
    enum = getattr(phi, "plane_enum", None)
    if enum is None and samples < 4 * N:
        raise ValueError(f"pluriharmonic_quadratic_space: need >= {4 * N} samples")

    def rows_from(planes):
        iu = np.triu_indices(n)
        out = np.empty((len(planes), N))
        for r, pl in enumerate(planes):
            P = pl.frame @ pl.frame.T
            R = P * math.sqrt(2.0)
            R[np.diag_indices(n)] = np.diag(P)
            out[r] = R[iu]
        return out

    planes = sample_planes(phi, samples, seed)
    A = rows_from(planes)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    s = np.concatenate([s, np.zeros(max(0, N - len(s)))])
    smax = s[0] if len(s) else 0.0
    zero = s <= zero_rel * smax
    rank = int(np.sum(~zero))
    dim = N - rank
    if dim == 0:
        gap = math.inf
    elif rank == 0:
        gap = math.inf
    else:
        tiny = s[rank] if s[rank] > 0 else 1e-300
        gap = float(s[rank - 1] / tiny)
    stable = gap >= 10.0

    iu = np.triu_indices(n)

    def unvech(q):
        Q = np.zeros((n, n))
        Q[iu] = q
        Q = Q + Q.T
        Q[np.diag_indices(n)] /= 2.0
        # undo the sqrt(2) scaling of off-diagonal coordinates
        off = ~np.eye(n, dtype=bool)
        Q[off] /= math.sqrt(2.0)
        return Q

    basis = [unvech(Vt[rank + i]) for i in range(dim)]

    fresh = sample_planes(phi, min(max(2 * N, 40), samples), seed + 10_001)
    residual = 0.0
    for Q in basis:
        for pl in fresh:
            residual = max(residual, abs(float(np.sum(
                (pl.frame.T @ Q @ pl.frame).diagonal()))))
    return QuadraticSpace(dim, basis, residual, s, gap, stable)


def richness_check(phi, P: np.ndarray, ell: np.ndarray,
                   opts: OptOptions | None = None) -> dict:
    """Search for a (p-1)-plane xi0 inside the orthocomplement of the 2-plane
    P making ell ^ xi0 calibrated (up to sign of ell)."""
    opts = opts or OptOptions(restarts=24)
    f = _form_of(phi)
    n, p = f.n, f.p
    P = np.asarray(P, dtype=float)
    ell = np.asarray(ell, dtype=float)
    ell = ell / np.linalg.norm(ell)
    if P.shape != (n, 2):
        raise ValueError("richness_check: P must be an n x 2 orthonormal basis")
    if np.linalg.norm(ell - P @ (P.T @ ell)) > 1e-8:
        raise ValueError("richness_check: ell must lie inside P")
    if n < p + 1:
        raise ValueError("richness_check: need ambient dimension >= p + 1")
    U = np.linalg.svd(P, full_matrices=True)[0][:, 2:]
    contracted = restrict_form(interior(ell, f), U)
    tol_plane = getattr(phi, "tol_plane", 1e-6)
    if p - 1 == 0:
        value = abs(float(contracted.coeffs[0]))
        return {"found": value >= 1.0 - tol_plane, "xi0": None, "value": value}
    rep = comass(contracted, opts)
    found = bool(rep.value >= 1.0 - tol_plane)
    xi0 = None
    if found and rep.argplanes:
        xi0 = plane_from_frame(U @ rep.argplanes[0].frame)
    return {"found": found, "xi0": xi0, "value": float(rep.value)}
