"""Dense exterior algebra over R^n.

Forms and multivectors are stored as coefficient vectors over the
lexicographically ordered strictly-increasing multi-indices of their degree.
Basis covectors are orthonormal, the pairing of a form with a multivector is
the plain dot product of coefficient vectors, and the orientation used by the
Hodge star is e_0 ^ ... ^ e_{n-1}.

Everything here is exact multilinear arithmetic: no optimizers, no tolerances
beyond float rounding.  Capacity is capped at n <= 12 with min(p, n-p) <= 6 so
all coefficient vectors stay dense and small (at most C(12,6) = 924 entries).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

MAX_DIM = 12
MAX_COSMALL_DEGREE = 6

__all__ = [
    "Form",
    "Multivector",
    "CapacityError",
    "multi_indices",
    "rank_of_index",
    "zero_form",
    "basis_form",
    "form_from_terms",
    "vector_form",
    "as_form",
    "as_multivector",
    "wedge",
    "interior",
    "hodge_star",
    "derivation_extend",
    "lambda_phi",
    "lambda_phi_adjoint",
    "plucker",
    "pair",
    "contract_multivector",
    "restrict_form",
    "form_to_json",
    "form_from_json",
    "form_to_dict",
    "form_from_dict",
]


class CapacityError(ValueError):
    """Raised for shapes outside the supported dense range."""


def _check_capacity(n: int, p: int) -> None:
    if not 0 <= p <= n:
        raise ValueError(f"degree p={p} must satisfy 0 <= p <= n={n}")
    if n > MAX_DIM or min(p, n - p) > MAX_COSMALL_DEGREE:
        raise CapacityError(
            f"shape (n={n}, p={p}) exceeds dense capacity "
            f"(n <= {MAX_DIM}, min(p, n-p) <= {MAX_COSMALL_DEGREE})"
        )


@lru_cache(maxsize=None)
def multi_indices(n: int, p: int) -> tuple[tuple[int, ...], ...]:
    """All strictly increasing p-tuples in [0, n), lexicographic order."""
    _check_capacity(n, p)
    return tuple(itertools.combinations(range(n), p))


@lru_cache(maxsize=None)
def _rank_table(n: int, p: int) -> dict[tuple[int, ...], int]:
    return {idx: r for r, idx in enumerate(multi_indices(n, p))}


def rank_of_index(n: int, idx: tuple[int, ...]) -> int:
    """Lexicographic rank of a strictly increasing multi-index."""
    return _rank_table(n, len(idx))[tuple(idx)]


def _sorted_with_sign(seq) -> tuple[tuple[int, ...], int]:
    """Sort distinct integers, returning (sorted tuple, permutation sign)."""
    seq = list(seq)
    sign = 1
    # insertion sort; inputs have length <= 12
    for i in range(1, len(seq)):
        j = i
        while j > 0 and seq[j - 1] > seq[j]:
            seq[j - 1], seq[j] = seq[j], seq[j - 1]
            sign = -sign
            j -= 1
    return tuple(seq), sign


@dataclass(frozen=True)
class _Tensor:
    n: int
    p: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_capacity(self.n, self.p)
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (comb(self.n, self.p),):
            raise ValueError(
                f"coefficient vector has shape {c.shape}, expected "
                f"({comb(self.n, self.p)},) for (n={self.n}, p={self.p})"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        self._compat(other)
        return type(self)(self.n, self.p, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._compat(other)
        return type(self)(self.n, self.p, self.coeffs - other.coeffs)

    def __mul__(self, s: float):
        return type(self)(self.n, self.p, self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.n, self.p, -self.coeffs)

    def _compat(self, other):
        if not isinstance(other, type(self)) or (self.n, self.p) != (other.n, other.p):
            raise ValueError("mismatched ambient dimension or degree")


class Form(_Tensor):
    """Alternating p-tensor (a constant-coefficient p-form) on R^n."""


class Multivector(_Tensor):
    """Element of Lambda_p R^n; unit simple ones are oriented p-planes."""


def zero_form(n: int, p: int) -> Form:
    return Form(n, p, np.zeros(comb(n, p)))


def basis_form(n: int, idx: tuple[int, ...]) -> Form:
    """The basis form dx_I for a strictly increasing index tuple I."""
    idx = tuple(idx)
    c = np.zeros(comb(n, len(idx)))
    c[rank_of_index(n, idx)] = 1.0
    return Form(n, len(idx), c)


def form_from_terms(n: int, p: int, terms: dict) -> Form:
    """Build a form from {index tuple: coefficient}; tuples may be unsorted."""
    c = np.zeros(comb(n, p))
    for idx, val in terms.items():
        if len(set(idx)) != len(idx):
            continue
        s_idx, sign = _sorted_with_sign(idx)
        c[rank_of_index(n, s_idx)] += sign * float(val)
    return Form(n, p, c)


def vector_form(v: np.ndarray) -> Form:
    """The 1-form metrically equivalent to a vector."""
    v = np.asarray(v, dtype=float)
    return Form(v.size, 1, v)


def as_form(x: Multivector) -> Form:
    """Metric equivalence Lambda_p -> Lambda^p (coefficients unchanged)."""
    return Form(x.n, x.p, x.coeffs)


def as_multivector(a: Form) -> Multivector:
    return Multivector(a.n, a.p, a.coeffs)


# ---------------------------------------------------------------------------
# index tables, cached per shape
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _wedge_table(n: int, pa: int, pb: int):
    """Index arrays (ia, ib, iout, sign) for the wedge of degrees pa, pb."""
    _check_capacity(n, pa + pb)
    ta = multi_indices(n, pa)
    tb = multi_indices(n, pb)
    rk = _rank_table(n, pa + pb)
    ia, ib, io, sg = [], [], [], []
    for ra, A in enumerate(ta):
        sa = set(A)
        for rb, B in enumerate(tb):
            if sa & set(B):
                continue
            merged, sign = _sorted_with_sign(A + B)
            ia.append(ra)
            ib.append(rb)
            io.append(rk[merged])
            sg.append(sign)
    return (
        np.array(ia, dtype=np.intp),
        np.array(ib, dtype=np.intp),
        np.array(io, dtype=np.intp),
        np.array(sg, dtype=float),
    )


@lru_cache(maxsize=None)
def _interior_table(n: int, p: int):
    """Arrays (i, rank_J, rank_K, sign) with K = {i} u J and sign = (-1)^pos.

    pos is the position of i inside sorted K, so that e_i ^ e_J = sign * e_K
    and simultaneously (e_i .| e_K) = sign * e_J.
    """
    tk = multi_indices(n, p)
    rj = _rank_table(n, p - 1)
    ii, jj, kk, sg = [], [], [], []
    for rK, K in enumerate(tk):
        for pos, i in enumerate(K):
            J = K[:pos] + K[pos + 1:]
            ii.append(i)
            jj.append(rj[J])
            kk.append(rK)
            sg.append(-1.0 if pos % 2 else 1.0)
    return (
        np.array(ii, dtype=np.intp),
        np.array(jj, dtype=np.intp),
        np.array(kk, dtype=np.intp),
        np.array(sg, dtype=float),
    )


@lru_cache(maxsize=None)
def _interior2_table(n: int, p: int):
    """Arrays (rank_ab, rank_J, rank_K, sign) over pairs a<b and (p-2)-indices
    J disjoint from {a,b}, with e_a ^ e_b ^ e_J = sign * e_K."""
    if p < 2:
        raise ValueError("_interior2_table needs p >= 2")
    rk2 = _rank_table(n, 2)
    tJ = multi_indices(n, p - 2)
    rk = _rank_table(n, p)
    aa, jj, kk, sg = [], [], [], []
    for rJ, J in enumerate(tJ):
        sJ = set(J)
        for a in range(n):
            if a in sJ:
                continue
            for b in range(a + 1, n):
                if b in sJ:
                    continue
                merged, sign = _sorted_with_sign((a, b) + J)
                aa.append(rk2[(a, b)])
                jj.append(rJ)
                kk.append(rk[merged])
                sg.append(sign)
    return (
        np.array(aa, dtype=np.intp),
        np.array(jj, dtype=np.intp),
        np.array(kk, dtype=np.intp),
        np.array(sg, dtype=float),
    )


@lru_cache(maxsize=None)
def _derivation_table(n: int, p: int):
    """Arrays (rank_in, j, k, rank_out, sign) for the derivation extension.

    Replacing slot value k inside the index K by j yields sign * e_{K'} with
    K' = sorted(K \\ {k} u {j}); entries with j in K \\ {k} vanish and are
    omitted.
    """
    tk = multi_indices(n, p)
    rk = _rank_table(n, p)
    r_in, jj, kk, r_out, sg = [], [], [], [], []
    for rK, K in enumerate(tk):
        others = [set(K) - {k} for k in K]
        for pos, k in enumerate(K):
            rest = K[:pos] + K[pos + 1:]
            for j in range(n):
                if j in others[pos]:
                    continue
                merged, sign = _sorted_with_sign(rest + (j,))
                # moving j from the last slot back to slot pos
                sign *= -1.0 if (len(rest) - pos) % 2 else 1.0
                r_in.append(rK)
                jj.append(j)
                kk.append(k)
                r_out.append(rk[merged])
                sg.append(sign)
    return (
        np.array(r_in, dtype=np.intp),
        np.array(jj, dtype=np.intp),
        np.array(kk, dtype=np.intp),
        np.array(r_out, dtype=np.intp),
        np.array(sg, dtype=float),
    )


@lru_cache(maxsize=None)
def _star_table(n: int, p: int):
    """(rank_out, sign) per input rank: *(e_I) = sign * e_{complement(I)}."""
    tk = multi_indices(n, p)
    rk = _rank_table(n, n - p)
    out = np.empty(len(tk), dtype=np.intp)
    sg = np.empty(len(tk), dtype=float)
    full = set(range(n))
    for rI, I in enumerate(tk):
        J = tuple(sorted(full - set(I)))
        _, sign = _sorted_with_sign(I + J)
        out[rI] = rk[J]
        sg[rI] = sign
    return out, sg


@lru_cache(maxsize=None)
def _subsets_array(n: int, p: int) -> np.ndarray:
    return np.array(multi_indices(n, p), dtype=np.intp).reshape(comb(n, p), p)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def wedge(a: Form, b: Form) -> Form:
    """Exterior product a ^ b."""
    if a.n != b.n:
        raise ValueError("wedge: ambient dimensions differ")
    if a.p + b.p > a.n:
        raise ValueError(f"wedge: degree {a.p}+{b.p} exceeds n={a.n}")
    ia, ib, io, sg = _wedge_table(a.n, a.p, b.p)
    out = np.zeros(comb(a.n, a.p + b.p))
    np.add.at(out, io, sg * a.coeffs[ia] * b.coeffs[ib])
    return Form(a.n, a.p + b.p, out)


def interior(v: np.ndarray, a: Form) -> Form:
    """Interior product v .| a, contracting the first slot of a."""
    if a.p < 1:
        raise ValueError("interior: degree 0 form cannot be contracted")
    v = np.asarray(v, dtype=float)
    if v.shape != (a.n,):
        raise ValueError("interior: vector length does not match ambient dim")
    ii, jj, kk, sg = _interior_table(a.n, a.p)
    out = np.zeros(comb(a.n, a.p - 1))
    np.add.at(out, jj, sg * v[ii] * a.coeffs[kk])
    return Form(a.n, a.p - 1, out)


def contract_multivector(a: Form, w: Multivector) -> np.ndarray:
    """Vector c with c[i] = pair(a, e_i ^ w) for a (p-1)-multivector w."""
    if a.n != w.n or w.p != a.p - 1:
        raise ValueError("contract_multivector: shape mismatch")
    ii, jj, kk, sg = _interior_table(a.n, a.p)
    out = np.zeros(a.n)
    np.add.at(out, ii, sg * a.coeffs[kk] * w.coeffs[jj])
    return out


def hodge_star(a: Form) -> Form:
    """Hodge star for the orientation e_0 ^ ... ^ e_{n-1}."""
    out_rank, sg = _star_table(a.n, a.p)
    out = np.zeros(comb(a.n, a.n - a.p))
    out[out_rank] = sg * a.coeffs
    return Form(a.n, a.n - a.p, out)


def derivation_extend(B: np.ndarray, a: Form) -> Form:
    """Extend the matrix B (acting on coefficient vectors of 1-forms by
    left multiplication) to degree p as a derivation."""
    B = np.asarray(B, dtype=float)
    if B.shape != (a.n, a.n):
        raise ValueError("derivation_extend: matrix shape mismatch")
    if a.p == 0:
        return zero_form(a.n, 0)
    r_in, jj, kk, r_out, sg = _derivation_table(a.n, a.p)
    out = np.zeros(comb(a.n, a.p))
    np.add.at(out, r_out, sg * B[jj, kk] * a.coeffs[r_in])
    return Form(a.n, a.p, out)


def derivation_extend_mv(B: np.ndarray, x: Multivector) -> Multivector:
    """Derivation extension of B acting on multivectors."""
    return as_multivector(derivation_extend(B, as_form(x)))


def lambda_phi(A: np.ndarray, phi: Form) -> Form:
    """The map A -> D_{A^t} phi; pairs with xi as pair(phi, D_A xi)."""
    if phi.p < 1:
        raise ValueError("lambda_phi: phi must have degree >= 1")
    A = np.asarray(A, dtype=float)
    return derivation_extend(A.T, phi)


def lambda_phi_adjoint(a: Form, phi: Form) -> np.ndarray:
    """Adjoint of lambda_phi for <A,B> = tr(A B^T): returns the matrix M with
    <lambda_phi(A), a> = <A, M> for all A."""
    if a.n != phi.n or a.p != phi.p:
        raise ValueError("lambda_phi_adjoint: degree or dimension mismatch")
    n = phi.n
    r_in, jj, kk, r_out, sg = _derivation_table(n, phi.p)
    # <D_{A^T} phi, a> = sum over entries sg * A[k,j] * phi[r_in] * a[r_out]
    M = np.zeros((n, n))
    np.add.at(M, (kk, jj), sg * phi.coeffs[r_in] * a.coeffs[r_out])
    return M


def plucker(frame: np.ndarray, *, tol: float = 1e-10) -> Multivector:
    """Unit Plucker multivector of an n x p matrix with orthonormal columns."""
    F = np.asarray(frame, dtype=float)
    if F.ndim != 2:
        raise ValueError("plucker: frame must be an n x p matrix")
    n, p = F.shape
    gram_err = np.max(np.abs(F.T @ F - np.eye(p)))
    if gram_err > tol:
        raise ValueError(f"plucker: columns not orthonormal (error {gram_err:.3e})")
    return Multivector(n, p, _minors(F))


def _minors(F: np.ndarray) -> np.ndarray:
    """All p x p row minors of an n x p matrix, in lexicographic order."""
    n, p = F.shape
    if p == 0:
        return np.ones(1)
    subs = _subsets_array(n, p)
    return np.linalg.det(F[subs, :])


def pair(a: Form, x: Multivector) -> float:
    """Evaluation a(x); dot product of coefficient vectors."""
    if not isinstance(a, Form) or not isinstance(x, Multivector):
        raise TypeError("pair expects (Form, Multivector)")
    if (a.n, a.p) != (x.n, x.p):
        raise ValueError("pair: degree or dimension mismatch")
    return float(a.coeffs @ x.coeffs)


def restrict_form(a: Form, W: np.ndarray) -> Form:
    """Pull a back to the subspace spanned by the orthonormal columns of W,
    expressed in the column coordinates."""
    W = np.asarray(W, dtype=float)
    n, m = W.shape
    if n != a.n:
        raise ValueError("restrict_form: ambient dimension mismatch")
    if a.p > m:
        raise ValueError("restrict_form: degree exceeds subspace dimension")
    subs = _subsets_array(m, a.p)
    out = np.empty(len(subs))
    ksubs = _subsets_array(n, a.p)
    # coefficient on e_J of the pullback = a(W e_{j1} ^ ... ^ W e_{jp});
    # evaluate through the row minors of the selected columns of W.
    for r, J in enumerate(subs):
        cols = W[:, J]
        out[r] = a.coeffs @ np.linalg.det(cols[ksubs, :])
    return Form(m, a.p, out)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> float:
    # 17 significant digits round-trips doubles exactly
    return float(format(float(x), ".17g"))


def form_to_dict(a: _Tensor) -> dict:
    idx = multi_indices(a.n, a.p)
    terms = [
        {"idx": list(idx[r]), "c": _fmt(c)}
        for r, c in enumerate(a.coeffs)
        if c != 0.0
    ]
    return {"n": a.n, "p": a.p, "terms": terms}


def form_from_dict(d: dict, *, kind=Form, where: str = "form"):
    for key in ("n", "p", "terms"):
        if key not in d:
            raise ValueError(f"{where}: missing field '{key}'")
    n, p = d["n"], d["p"]
    if not (isinstance(n, int) and isinstance(p, int)):
        raise ValueError(f"{where}: 'n' and 'p' must be integers")
    _check_capacity(n, p)
    c = np.zeros(comb(n, p))
    for t, term in enumerate(d["terms"]):
        loc = f"{where}.terms[{t}]"
        if not isinstance(term, dict) or "idx" not in term or "c" not in term:
            raise ValueError(f"{loc}: each term needs 'idx' and 'c'")
        idx = term["idx"]
        if (
            not isinstance(idx, list)
            or len(idx) != p
            or any(not isinstance(i, int) for i in idx)
        ):
            raise ValueError(f"{loc}.idx: expected {p} integer indices")
        if any(i < 0 or i >= n for i in idx):
            raise ValueError(f"{loc}.idx: index out of range [0, {n})")
        if any(idx[i] >= idx[i + 1] for i in range(p - 1)):
            raise ValueError(
                f"{loc}.idx: indices {idx} must be strictly increasing"
            )
        c[rank_of_index(n, tuple(idx))] = float(term["c"])
    return kind(n, p, c)


def form_to_json(a: _Tensor) -> str:
    return json.dumps(form_to_dict(a), sort_keys=True)


def form_from_json(s: str, *, kind=Form):
    return form_from_dict(json.loads(s), kind=kind)
