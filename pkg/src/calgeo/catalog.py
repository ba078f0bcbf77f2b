"""Construction of the standard constant-coefficient calibrations.

Conventions fixed here and used everywhere downstream:

* complex coordinates on C^n are interleaved, (x1, y1, ..., xn, yn), with
  J x_k = y_k;
* quaternion coordinates on H^n come in consecutive 4-blocks (1, i, j, k)
  per quaternion line, and the three complex structures I, J, K act by
  right multiplication;
* the octonions are built by Cayley-Dickson doubling of the quaternions,
  (a, b)(c, d) = (ac - conj(d) b, da + b conj(c)), imaginary units ordered
  (i, j, k, eps, i eps, j eps, k eps).

Each calibration carries, when available, a closed-form sampler of its
calibrated planes, an explicit finite plane list, and a sampler of planes
contained in a given subspace.  Downstream solvers use whichever is present.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exterior import (
    Form,
    basis_form,
    form_from_dict,
    form_from_terms,
    form_to_dict,
    hodge_star,
    interior,
    pair,
    plucker,
    wedge,
    zero_form,
)

__all__ = [
    "AlgebraTable",
    "Calibration",
    "quaternion_table",
    "octonion_table",
    "complex_structure",
    "quaternion_structures",
    "make_calibration",
    "save_calibration",
    "load_calibration",
    "calibration_from_dict",
    "calibration_to_dict",
    "parse_builtin",
    "BUILTIN_NAMES",
]


# ---------------------------------------------------------------------------
# composition algebras
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgebraTable:
    """Multiplication table of a Cayley-Dickson algebra over R.

    ``table[i, j]`` is the coefficient vector of e_i * e_j; ``conj_sign`` is
    +1 on the real unit and -1 on imaginary units.
    """

    dimension: int
    table: np.ndarray
    conj_sign: np.ndarray

    def multiply(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijk->k", x, y, self.table)

    def conj(self, x: np.ndarray) -> np.ndarray:
        return self.conj_sign * x

    def double(self) -> "AlgebraTable":
        d = self.dimension
        t = np.zeros((2 * d, 2 * d, 2 * d))
        cs = np.concatenate([self.conj_sign, -np.ones(d)])
        for i in range(d):
            for j in range(d):
                ei = np.eye(d)[i]
                ej = np.eye(d)[j]
                # (a,0)(c,0) = (ac, 0)
                t[i, j, :d] = self.multiply(ei, ej)
                # (a,0)(0,d) = (0, d a)
                t[i, d + j, d:] = self.multiply(ej, ei)
                # (0,b)(c,0) = (0, b conj(c))
                t[d + i, j, d:] = self.multiply(ei, self.conj(ej))
                # (0,b)(0,d) = (-conj(d) b, 0)
                t[d + i, d + j, :d] = -self.multiply(self.conj(ej), ei)
        return AlgebraTable(2 * d, t, cs)


@lru_cache(maxsize=None)
def quaternion_table() -> AlgebraTable:
    reals = AlgebraTable(1, np.ones((1, 1, 1)), np.ones(1))
    return reals.double().double()


@lru_cache(maxsize=None)
def octonion_table() -> AlgebraTable:
    return quaternion_table().double()


def complex_structure(n: int) -> np.ndarray:
    """J on R^{2n} with interleaved coordinates: J x_k = y_k."""
    J = np.zeros((2 * n, 2 * n))
    for k in range(n):
        J[2 * k + 1, 2 * k] = 1.0
        J[2 * k, 2 * k + 1] = -1.0
    return J


@lru_cache(maxsize=None)
def quaternion_structures(n: int):
    """Right-multiplication matrices (I, J, K) on H^n = R^{4n}."""
    q = quaternion_table()
    out = []
    for a in (1, 2, 3):  # i, j, k
        blk = np.zeros((4, 4))
        for m in range(4):
            blk[:, m] = q.multiply(np.eye(4)[m], np.eye(4)[a])
        R = np.kron(np.eye(n), blk)
        R.setflags(write=False)
        out.append(R)
    return tuple(out)


# ---------------------------------------------------------------------------
# calibration type
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Calibration:
    """A comass-one form with metadata and optional plane generators.

    Treated as immutable after construction; sampler callables are not part
    of the serialized surface (only the tag is).
    """

    form: Form
    name: str
    sampler: str | None = None
    comass_certified: bool = True
    tol_plane: float = 1e-6
    sampler_fn: object = field(default=None, repr=False, compare=False)
    plane_enum: object = field(default=None, repr=False, compare=False)
    subspace_sampler_fn: object = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.form.n

    @property
    def p(self) -> int:
        return self.form.p


# ---------------------------------------------------------------------------
# shared sampling helpers
# ---------------------------------------------------------------------------


def _unit(rng, subspace: np.ndarray | None, n: int) -> np.ndarray:
    """Random unit vector, optionally inside the span of subspace columns."""
    if subspace is None:
        v = rng.standard_normal(n)
    else:
        v = subspace @ rng.standard_normal(subspace.shape[1])
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        raise ValueError("degenerate sample")
    return v / nv


def _orthonormalize_against(v: np.ndarray, others: list) -> np.ndarray:
    for u in others:
        v = v - (u @ v) * u
    nv = np.linalg.norm(v)
    if nv < 1e-10:
        raise ValueError("degenerate orthogonalization")
    return v / nv


def _subspace_orth(vs: list, n: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(vs)."""
    if not vs:
        return np.eye(n)
    A = np.array(vs).T
    U, s, _ = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > 1e-10))
    return U[:, r:]


def _intersect(*bases: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the intersection of column spans."""
    n = bases[0].shape[0]
    rows = []
    for B in bases:
        P = B @ B.T
        rows.append(np.eye(n) - P)
    M = np.vstack(rows)
    _, s, Vt = np.linalg.svd(M)
    null = s <= 1e-10 * max(1.0, s[0])
    k = len(s) - int(np.sum(null))
    return Vt[k:].T if Vt.shape[0] == n else Vt[k:].T


def _complex_frame(vs_pairs: list) -> np.ndarray:
    cols = []
    for v, jv in vs_pairs:
        cols.extend([v, jv])
    return np.array(cols).T


def _embed_form(a: Form, n_new: int, offset: int) -> Form:
    """Reindex a form: coordinate i becomes i + offset inside R^{n_new}."""
    from .exterior import multi_indices, rank_of_index
    import math as _m

    idx = multi_indices(a.n, a.p)
    c = np.zeros(_m.comb(n_new, a.p))
    for r, I in enumerate(idx):
        if a.coeffs[r] != 0.0:
            c[rank_of_index(n_new, tuple(i + offset for i in I))] = a.coeffs[r]
    return Form(n_new, a.p, c)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _kahler_form(n: int) -> Form:
    return form_from_terms(2 * n, 2, {(2 * k, 2 * k + 1): 1.0 for k in range(n)})


def _build_kahler(n: int) -> Calibration:
    om = _kahler_form(n)
    J = complex_structure(n)

    def sampler(rng, count):
        out = []
        for _ in range(count):
            v = _unit(rng, None, 2 * n)
            out.append(np.column_stack([v, J @ v]))
        return out

    def sub_sampler(W, rng, count):
        K = _intersect(W, J @ W)
        if K.shape[1] < 2:
            return []
        out = []
        for _ in range(count):
            v = _unit(rng, K, 2 * n)
            out.append(np.column_stack([v, J @ v]))
        return out

    return Calibration(om, "kahler", sampler=f"kahler?n={n}",
                       sampler_fn=sampler, subspace_sampler_fn=sub_sampler)


def _complex_p_frame(K: np.ndarray, J: np.ndarray, p: int, rng):
    """Orthonormal J-closed 2p-frame inside the J-invariant span of K."""
    n = K.shape[0]
    cols = []
    for _ in range(p):
        for _try in range(60):
            v = _unit(rng, K, n)
            try:
                v = _orthonormalize_against(v, cols)
            except ValueError:
                continue
            jv = J @ v
            jv = _orthonormalize_against(jv, cols + [v])
            # within a J-invariant subspace J v is already orthogonal to v
            cols.extend([v, jv])
            break
        else:
            raise ValueError("could not build a complex frame in subspace")
    return np.array(cols).T


def _build_kahler_power(n: int, p: int) -> Calibration:
    om = _kahler_form(n)
    f = om
    for _ in range(p - 1):
        f = wedge(f, om)
    f = f * (1.0 / math.factorial(p))
    J = complex_structure(n)

    def sampler(rng, count):
        out = []
        for _ in range(count):
            out.append(_complex_p_frame(np.eye(2 * n), J, p, rng))
        return out

    def sub_sampler(W, rng, count):
        K = _intersect(W, J @ W)
        if K.shape[1] < 2 * p:
            return []
        out = []
        for _ in range(count):
            out.append(_complex_p_frame(K, J, p, rng))
        return out

    return Calibration(f, "kahler_power", sampler=f"kahler_power?n={n}&p={p}",
                       sampler_fn=sampler, subspace_sampler_fn=sub_sampler)


def _sl_form(n: int, theta: float) -> Form:
    # Re(e^{-i theta} dz_1 ^ ... ^ dz_n): expand over the subsets of factors
    # contributing dy rather than dx; the index tuple is already increasing.
    terms = {}
    for mask in range(1 << n):
        size = bin(mask).count("1")
        coeff = math.cos(size * math.pi / 2.0 - theta)
        if abs(coeff) < 1e-15:
            continue
        idx = tuple(2 * k + ((mask >> k) & 1) for k in range(n))
        terms[idx] = coeff
    return form_from_terms(2 * n, n, terms)


def _complex_to_real_frame(U: np.ndarray) -> np.ndarray:
    """Embed the columns of a complex n x p matrix into R^{2n} (interleaved)."""
    n, p = U.shape
    F = np.empty((2 * n, p))
    F[0::2, :] = U.real
    F[1::2, :] = U.imag
    return F


def _build_special_lagrangian(n: int, theta: float) -> Calibration:
    f = _sl_form(n, theta)

    def sampler(rng, count):
        out = []
        for _ in range(count):
            Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            Q, R = np.linalg.qr(Z)
            d = np.diagonal(R)
            Q = Q * (d / np.abs(d))
            det = np.linalg.det(Q)
            Q = Q * np.exp(1j * (theta - np.angle(det)) / n)
            out.append(_complex_to_real_frame(Q))
        return out

    return Calibration(
        f, "special_lagrangian",
        sampler=f"special_lagrangian?n={n}&theta={theta!r}",
        sampler_fn=sampler,
    )


@lru_cache(maxsize=None)
def _associative_form() -> Form:
    o = octonion_table()
    terms = {}
    # phi(x, y, z) = <x, y z> on Im O; coefficients over increasing triples
    for i in range(7):
        for j in range(7):
            for k in range(7):
                if not (i < j < k):
                    continue
                prod = o.multiply(np.eye(8)[j + 1], np.eye(8)[k + 1])
                c = prod[i + 1]
                if abs(c) > 1e-14:
                    terms[(i, j, k)] = c
    return form_from_terms(7, 3, terms)


def _cross_completion(phi: Form, vecs: list) -> np.ndarray:
    """Unit vector w with <w, e_l> = phi(v_1, ..., v_k, e_l)."""
    a = phi
    for v in vecs:
        a = interior(np.asarray(v), a)
    w = a.coeffs.copy()
    nw = np.linalg.norm(w)
    if abs(nw - 1.0) > 1e-8:
        raise ValueError(f"completion is not a unit vector (norm {nw:.3e})")
    return w / nw


def _build_associative() -> Calibration:
    f = _associative_form()

    def sampler(rng, count):
        out = []
        for _ in range(count):
            a = _unit(rng, None, 7)
            b = _orthonormalize_against(_unit(rng, None, 7), [a])
            c = _cross_completion(f, [a, b])
            out.append(np.column_stack([a, b, c]))
        return out

    def sub_sampler(W, rng, count):
        nrm = _subspace_orth([W[:, j] for j in range(W.shape[1])], 7)
        if nrm.shape[1] != 1:
            return []
        nv = nrm[:, 0]
        out = []
        for _ in range(count):
            a = _unit(rng, W, 7)
            gamma = interior(nv, interior(a, f)).coeffs
            basis = _subspace_orth([nv, a, gamma], 7)
            if basis.shape[1] < 1:
                continue
            b = _unit(rng, basis, 7)
            c = _cross_completion(f, [a, b])
            out.append(np.column_stack([a, b, c]))
        return out

    return Calibration(f, "associative", sampler="associative",
                       sampler_fn=sampler, subspace_sampler_fn=sub_sampler)


def _oriented_complement(F: np.ndarray, psi: Form) -> np.ndarray:
    """Orthonormal complement frame, oriented so psi evaluates positively."""
    n, p = F.shape
    U, s, _ = np.linalg.svd(F, full_matrices=True)
    G = U[:, p:]
    if pair(psi, plucker(G)) < 0:
        G = G.copy()
        G[:, 0] = -G[:, 0]
    return G


def _build_coassociative() -> Calibration:
    fa = _associative_form()
    f = hodge_star(fa)
    assoc = _build_associative()

    def sampler(rng, count):
        return [_oriented_complement(F, f) for F in assoc.sampler_fn(rng, count)]

    def sub_sampler(W, rng, count):
        nrm = _subspace_orth([W[:, j] for j in range(W.shape[1])], 7)
        if nrm.shape[1] != 1:
            return []
        nv = nrm[:, 0]
        out = []
        for _ in range(count):
            basis = _subspace_orth([nv], 7)
            b = _unit(rng, basis, 7)
            c = _cross_completion(fa, [nv, b])
            eta = np.column_stack([nv, b, c])
            out.append(_oriented_complement(eta, f))
        return out

    return Calibration(f, "coassociative", sampler="coassociative",
                       sampler_fn=sampler, subspace_sampler_fn=sub_sampler)


@lru_cache(maxsize=None)
def _cayley_form() -> Form:
    fa = _associative_form()
    psi = hodge_star(fa)
    e0 = basis_form(8, (0,))
    return wedge(e0, _embed_form(fa, 8, 1)) + _embed_form(psi, 8, 1)


def _build_cayley() -> Calibration:
    f = _cayley_form()

    def sampler(rng, count):
        out = []
        for _ in range(count):
            M = rng.standard_normal((8, 3))
            Q = np.linalg.qr(M)[0]
            w = _cross_completion(f, [Q[:, 0], Q[:, 1], Q[:, 2]])
            out.append(np.column_stack([Q, w]))
        return out

    def sub_sampler(W, rng, count):
        nrm = _subspace_orth([W[:, j] for j in range(W.shape[1])], 8)
        if nrm.shape[1] != 1:
            return []
        nv = nrm[:, 0]
        out = []
        for _ in range(count):
            x = _unit(rng, W, 8)
            y = _orthonormalize_against(_unit(rng, W, 8), [x, nv])
            beta = interior(np.asarray(y), interior(np.asarray(x), f))
            q = interior(nv, beta).coeffs
            basis = _subspace_orth([nv, x, y, q], 8)
            if basis.shape[1] < 1:
                continue
            z = _unit(rng, basis, 8)
            w = _cross_completion(f, [x, y, z])
            out.append(np.column_stack([x, y, z, w]))
        return out

    return Calibration(f, "cayley", sampler="cayley",
                       sampler_fn=sampler, subspace_sampler_fn=sub_sampler)


def _form_from_skew(S: np.ndarray) -> Form:
    n = S.shape[0]
    terms = {}
    for u in range(n):
        for v in range(u + 1, n):
            if abs(S[v, u]) > 1e-14:
                terms[(u, v)] = S[v, u]
    return form_from_terms(n, 2, terms)


def _quaternionic_form(n: int, weights=(1.0, 1.0, 1.0), scale=1.0 / 6.0) -> Form:
    RI, RJ, RK = quaternion_structures(n)
    total = zero_form(4 * n, 4)
    for R, w in zip((RI, RJ, RK), weights):
        om = _form_from_skew(R)
        total = total + w * wedge(om, om)
    return scale * total


def _quaternion_line_sampler(n: int, f: Form):
    RI, RJ, RK = quaternion_structures(n)

    def frame_from(v):
        F = np.column_stack([v, RI @ v, RJ @ v, RK @ v])
        if pair(f, plucker(F)) < 0:
            F = F[:, [0, 1, 3, 2]]
        return F

    def sampler(rng, count):
        return [frame_from(_unit(rng, None, 4 * n)) for _ in range(count)]

    def sub_sampler(W, rng, count):
        nrm = _subspace_orth([W[:, j] for j in range(W.shape[1])], 4 * n)
        constraints = [nrm[:, j] for j in range(nrm.shape[1])]
        vecs = list(constraints)
        for R in (RI, RJ, RK):
            vecs.extend(R.T @ c for c in constraints)
        K = _subspace_orth(vecs, 4 * n)
        if K.shape[1] < 1:
            return []
        return [frame_from(_unit(rng, K, 4 * n)) for _ in range(count)]

    return sampler, sub_sampler


def _build_quaternionic(n: int) -> Calibration:
    f = _quaternionic_form(n)
    sampler, sub_sampler = _quaternion_line_sampler(n, f)
    return Calibration(f, "quaternionic", sampler=f"quaternionic?n={n}",
                       sampler_fn=sampler, subspace_sampler_fn=sub_sampler)


def _build_generalized_cayley(n: int) -> Calibration:
    f = _quaternionic_form(n, weights=(1.0, -1.0, -1.0), scale=0.5)
    return Calibration(f, "generalized_cayley",
                       sampler=f"generalized_cayley?n={n}")


def _build_double_point(n: int) -> Calibration:
    f = form_from_terms(2 * n, n, {
        tuple(range(n)): 1.0,
        tuple(range(n, 2 * n)): 1.0,
    })
    enum = None
    if n >= 3:
        ident = np.eye(2 * n)
        enum = [ident[:, :n].copy(), ident[:, n:].copy()]
    return Calibration(f, "double_point", sampler=f"double_point?n={n}",
                       plane_enum=enum)


def _build_volume(n: int) -> Calibration:
    f = basis_form(n, tuple(range(n)))
    return Calibration(f, "volume", sampler=f"volume?n={n}",
                       plane_enum=[np.eye(n)])


def _build_coordinate(n: int, indices) -> Calibration:
    indices = tuple(int(i) for i in indices)
    f = basis_form(n, indices)
    frame = np.eye(n)[:, list(indices)]
    idx_str = ",".join(str(i) for i in indices)
    return Calibration(f, "coordinate",
                       sampler=f"coordinate?n={n}&indices={idx_str}",
                       plane_enum=[frame])


def _build_plane_pair(lam: float) -> Calibration:
    f = form_from_terms(4, 2, {(0, 1): 1.0, (2, 3): lam})
    enum = None
    sampler_fn = None
    if abs(lam) < 1.0 - 1e-12:
        enum = [np.eye(4)[:, :2]]
    elif abs(abs(lam) - 1.0) <= 1e-12:
        # a Kahler form for the complex structure e0 -> e1, e2 -> sign * e3
        J = np.zeros((4, 4))
        J[1, 0], J[0, 1] = 1.0, -1.0
        J[3, 2], J[2, 3] = np.sign(lam), -np.sign(lam)

        def sampler_fn(rng, count):
            out = []
            for _ in range(count):
                v = _unit(rng, None, 4)
                out.append(np.column_stack([v, J @ v]))
            return out

    return Calibration(f, "plane_pair", sampler=f"plane_pair?lam={lam!r}",
                       comass_certified=abs(lam) <= 1.0 + 1e-12,
                       plane_enum=enum, sampler_fn=sampler_fn)


def _build_lie_three_form(constants) -> Calibration:
    c = np.asarray(constants, dtype=float)
    if c.ndim != 3 or len(set(c.shape)) != 1:
        raise ValueError("lie_three_form: constants must be a d x d x d array")
    d = c.shape[0]
    terms = {}
    for i in range(d):
        for j in range(i + 1, d):
            for k in range(j + 1, d):
                # phi(e_i, e_j, e_k) = <e_i, [e_j, e_k]>, alternated
                val = (c[j, k, i] - c[k, j, i] + c[k, i, j]
                       - c[i, k, j] + c[i, j, k] - c[j, i, k]) / 6.0
                if abs(val) > 1e-14:
                    terms[(i, j, k)] = val
    raw = form_from_terms(d, 3, terms)
    if raw.norm() == 0.0:
        raise ValueError("lie_three_form: structure constants give a zero form")
    from .grassmann import OptOptions, comass

    rep = comass(raw, OptOptions(seed=20, restarts=48))
    scale = rep.value
    f = raw * (1.0 / scale)
    return Calibration(
        f, "lie_three_form", sampler=None,
        meta={"normalization_constant": scale,
              "comass_converged": bool(rep.converged)},
    )


# ---------------------------------------------------------------------------
# public factory and serialization
# ---------------------------------------------------------------------------

BUILTIN_NAMES = (
    "kahler", "kahler_power", "special_lagrangian", "associative",
    "coassociative", "cayley", "quaternionic", "generalized_cayley",
    "double_point", "volume", "coordinate", "plane_pair", "lie_three_form",
)


def make_calibration(name: str, **params) -> Calibration:
    """Build a catalog calibration by name.

    Supported names and parameters:
      kahler(n), kahler_power(n, p), special_lagrangian(n, theta=0.0),
      associative(), coassociative(), cayley(), quaternionic(n),
      generalized_cayley(n), double_point(n), volume(n),
      coordinate(n, indices), plane_pair(lam), lie_three_form(constants).
    """
    if name == "kahler":
        return _build_kahler(int(params["n"]))
    if name == "kahler_power":
        return _build_kahler_power(int(params["n"]), int(params["p"]))
    if name == "special_lagrangian":
        theta = float(params.get("theta", 0.0))
        if not 0.0 <= theta < 2.0 * math.pi:
            raise ValueError("special_lagrangian: theta must lie in [0, 2*pi)")
        return _build_special_lagrangian(int(params["n"]), theta)
    if name == "associative":
        return _build_associative()
    if name == "coassociative":
        return _build_coassociative()
    if name == "cayley":
        return _build_cayley()
    if name == "quaternionic":
        return _build_quaternionic(int(params["n"]))
    if name == "generalized_cayley":
        return _build_generalized_cayley(int(params["n"]))
    if name == "double_point":
        n = int(params["n"])
        if n < 2:
            raise ValueError("double_point: need n >= 2")
        return _build_double_point(n)
    if name == "volume":
        return _build_volume(int(params["n"]))
    if name == "coordinate":
        return _build_coordinate(int(params["n"]), params["indices"])
    if name == "plane_pair":
        return _build_plane_pair(float(params["lam"]))
    if name == "lie_three_form":
        return _build_lie_three_form(params["constants"])
    raise ValueError(f"unknown calibration name '{name}'")


def parse_builtin(uri: str) -> Calibration:
    """Parse a builtin calibration URI like 'builtin:kahler?n=2'."""
    body = uri[len("builtin:"):] if uri.startswith("builtin:") else uri
    name, _, query = body.partition("?")
    params = {}
    if query:
        for item in query.split("&"):
            key, _, val = item.partition("=")
            if key == "indices":
                params[key] = tuple(int(x) for x in val.split(",") if x != "")
            elif key in ("n", "p"):
                params[key] = int(val)
            else:
                params[key] = float(val)
    return make_calibration(name, **params)


def calibration_to_dict(c: Calibration) -> dict:
    d = form_to_dict(c.form)
    d.update({
        "name": c.name,
        "sampler": c.sampler,
        "comass_certified": bool(c.comass_certified),
        "tol_plane": float(c.tol_plane),
    })
    return d


def calibration_from_dict(d: dict, *, where: str = "calibration") -> Calibration:
    form = form_from_dict(d, where=where)
    for key in ("name", "sampler", "comass_certified", "tol_plane"):
        if key not in d:
            raise ValueError(f"{where}: missing field '{key}'")
    cal = Calibration(
        form=form,
        name=str(d["name"]),
        sampler=d["sampler"],
        comass_certified=bool(d["comass_certified"]),
        tol_plane=float(d["tol_plane"]),
    )
    tag = d["sampler"]
    if tag:
        try:
            template = parse_builtin(tag)
        except (ValueError, KeyError):
            template = None
        if template is not None and (template.n, template.p) == (cal.n, cal.p):
            cal.sampler_fn = template.sampler_fn
            cal.plane_enum = template.plane_enum
            cal.subspace_sampler_fn = template.subspace_sampler_fn
    return cal


def save_calibration(c: Calibration, path) -> None:
    with open(path, "w") as fh:
        json.dump(calibration_to_dict(c), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_calibration(path) -> Calibration:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    return calibration_from_dict(d, where=str(path))
