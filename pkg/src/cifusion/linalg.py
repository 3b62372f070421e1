"""Dense symmetric-matrix primitives.

Everything spectral funnels through ``numpy.linalg.eigh`` so that ordering
comparisons, PSD certification, square roots, pseudo-inverses and adjugates
share one audited kernel.  Matrices here are small and dense (state
dimensions of a few dozen at most).  Tolerances are relative to
``max(1, magnitude)`` so ill-scaled covariances behave like well-scaled ones.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import (
    DimensionMismatchError,
    InternalInconsistencyError,
    NotPdError,
    NotPsdError,
)

DEFAULT_TOL = 1e-9
#: eigenvalues below PINV_RTOL * |lambda|_max count as zero in pseudo-inverses
PINV_RTOL = 1e-12
#: relative threshold below which a symmetric matrix counts as singular
SINGULAR_RTOL = 1e-12


def _square(entries) -> np.ndarray:
    a = np.array(entries, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


class SymMatrix:
    """A real symmetric matrix.

    ``(A + A.T) / 2`` is applied on construction, silently healing the
    floating-point asymmetry that matrix products accumulate.  The backing
    array is frozen, so instances are safe to share between threads.
    """

    __slots__ = ("data",)

    def __init__(self, entries):
        a = _square(entries)
        a = 0.5 * (a + a.T)
        a.flags.writeable = False
        self.data = a

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim})"


class PsdMatrix:
    """A symmetric matrix with a certified smallest eigenvalue.

    Build instances through :func:`psd_certify`; ``strict`` records whether
    the certificate established positive definiteness.
    """

    __slots__ = ("base", "min_eig", "strict")

    def __init__(self, base: SymMatrix, min_eig: float, strict: bool):
        self.base = base
        self.min_eig = float(min_eig)
        self.strict = bool(strict)

    @property
    def data(self) -> np.ndarray:
        return self.base.data

    @property
    def dim(self) -> int:
        return self.base.dim

    def __repr__(self) -> str:
        kind = "PD" if self.strict else "PSD"
        return f"PsdMatrix(dim={self.dim}, min_eig={self.min_eig:.3g}, {kind})"


class LoewnerRelation(enum.Enum):
    STRICTLY_GREATER = "strictly_greater"
    GREATER_EQUAL = "greater_equal"
    EQUAL = "equal"
    LESS_EQUAL = "less_equal"
    STRICTLY_LESS = "strictly_less"
    INCOMPARABLE = "incomparable"

    @property
    def is_ge(self) -> bool:
        """A - B is PSD (possibly strictly, possibly zero)."""
        return self in (
            LoewnerRelation.STRICTLY_GREATER,
            LoewnerRelation.GREATER_EQUAL,
            LoewnerRelation.EQUAL,
        )

    @property
    def is_le(self) -> bool:
        return self in (
            LoewnerRelation.STRICTLY_LESS,
            LoewnerRelation.LESS_EQUAL,
            LoewnerRelation.EQUAL,
        )


def sym_data(m) -> np.ndarray:
    """Raw symmetric ndarray from a SymMatrix, PsdMatrix or array-like."""
    if isinstance(m, PsdMatrix):
        return m.base.data
    if isinstance(m, SymMatrix):
        return m.data
    a = _square(m)
    return 0.5 * (a + a.T)


def loewner_compare(a, b, tol: float = DEFAULT_TOL) -> LoewnerRelation:
    """Classify A versus B in the semidefinite matrix order.

    The spectrum of ``A - B`` decides the variant: all eigenvalues above
    ``tol * scale`` mean strictly greater, all above ``-tol * scale`` mean
    greater-or-equal, mixed signs beyond tolerance mean incomparable, with
    the mirrored cases for the less variants.  Equality is spectral
    (``max |eig(A - B)| <= tol * scale``), which for symmetric matrices also
    bounds every entry of the difference.  ``scale`` is
    ``max(1, |A|_max, |B|_max)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    da = sym_data(a)
    db = sym_data(b)
    if da.shape != db.shape:
        raise DimensionMismatchError(f"shape {da.shape} vs {db.shape}")
    eigs = np.linalg.eigvalsh(da - db)
    scale = max(1.0, np.abs(da).max(), np.abs(db).max())
    bound = tol * scale
    lo, hi = eigs[0], eigs[-1]
    if max(abs(lo), abs(hi)) <= bound:
        return LoewnerRelation.EQUAL
    if lo > bound:
        return LoewnerRelation.STRICTLY_GREATER
    if hi < -bound:
        return LoewnerRelation.STRICTLY_LESS
    if lo >= -bound:
        return LoewnerRelation.GREATER_EQUAL
    if hi <= bound:
        return LoewnerRelation.LESS_EQUAL
    return LoewnerRelation.INCOMPARABLE


def psd_certify(a, tol: float = DEFAULT_TOL) -> PsdMatrix:
    """Certify PSD membership, or raise :class:`NotPsdError`.

    Accepts a minimum eigenvalue down to ``-tol * scale`` where
    ``scale = max(1, |lambda|_max)``; the ``strict`` flag marks matrices with
    the minimum eigenvalue above ``+tol * scale`` (positive definite).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    sym = a if isinstance(a, SymMatrix) else SymMatrix(sym_data(a))
    eigs = np.linalg.eigvalsh(sym.data)
    scale = max(1.0, float(np.abs(eigs).max()))
    min_eig = float(eigs[0])
    if min_eig < -tol * scale:
        raise NotPsdError(min_eig)
    return PsdMatrix(sym, min_eig, strict=min_eig > tol * scale)


def sqrt_psd(a: PsdMatrix) -> SymMatrix:
    """Symmetric PSD square root via eigendecomposition.

    Negative eigenvalues inside the certification tolerance are clamped to
    zero before taking the root.
    """
    w, v = np.linalg.eigh(a.data)
    w = np.clip(w, 0.0, None)
    return SymMatrix((v * np.sqrt(w)) @ v.T)


def inv_sqrt_pd(a: PsdMatrix) -> np.ndarray:
    """Inverse symmetric square root of a strictly PD matrix."""
    if not a.strict:
        raise NotPdError("inverse square root needs a strictly PD matrix")
    w, v = np.linalg.eigh(a.data)
    return (v / np.sqrt(w)) @ v.T


def inv_pd(a) -> np.ndarray:
    """Inverse of a PD matrix through its Cholesky factor."""
    m = sym_data(a)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPdError(f"Cholesky failed: {exc}") from exc
    linv = np.linalg.solve(chol, np.eye(m.shape[0]))
    out = linv.T @ linv
    return 0.5 * (out + out.T)


def pinv_sym(a) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric matrix.

    Eigenvalues with magnitude below ``PINV_RTOL * |lambda|_max`` are
    treated as exact zeros.
    """
    m = sym_data(a)
    w, v = np.linalg.eigh(m)
    amax = np.abs(w).max()
    if amax == 0.0:
        return np.zeros_like(m)
    keep = np.abs(w) > PINV_RTOL * amax
    winv = np.zeros_like(w)
    winv[keep] = 1.0 / w[keep]
    return (v * winv) @ v.T


def _det2(m) -> float:
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def _det3(m) -> float:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def _det_small(m) -> float:
    d = m.shape[0]
    if d == 0:
        return 1.0
    if d == 1:
        return m[0, 0]
    if d == 2:
        return _det2(m)
    return _det3(m)


def _adjugate_cofactor(a: np.ndarray) -> np.ndarray:
    d = a.shape[0]
    out = np.empty_like(a)
    for i in range(d):
        rows = np.delete(a, i, axis=0)
        for j in range(d):
            minor = np.delete(rows, j, axis=1)
            out[j, i] = (-1) ** (i + j) * _det_small(minor)
    return out


def adjugate(a) -> SymMatrix:
    """Adjugate satisfying ``A @ adj(A) = det(A) * I``, defined at singular A.

    Dimensions up to four use exact cofactor expansion (a polynomial in the
    entries, so singular inputs are fine).  Larger matrices use
    ``det(A) * inv(A)`` when well conditioned and fall back to the spectral
    formula ``V diag(prod_{j != i} w_j) V.T`` near singularity.
    """
    m = sym_data(a)
    d = m.shape[0]
    if d == 1:
        return SymMatrix([[1.0]])
    if d <= 4:
        return SymMatrix(_adjugate_cofactor(m))
    w, v = np.linalg.eigh(m)
    amax = np.abs(w).max()
    if amax > 0.0 and np.abs(w).min() > 1e-8 * amax:
        return SymMatrix(np.linalg.det(m) * np.linalg.inv(m))
    adj_w = np.empty_like(w)
    for i in range(d):
        adj_w[i] = np.prod(np.delete(w, i))
    return SymMatrix((v * adj_w) @ v.T)


def _decided(margin: float, band: float) -> bool:
    """Whether a signed PSD margin is clearly away from the tolerance band."""
    return abs(margin) > 10.0 * band


def block_psd_check(q, s, r, tol: float = DEFAULT_TOL) -> bool:
    """Whether the block matrix ``[Q S; S.T R]`` is PSD.

    The verdict is computed twice: from the eigenvalues of the assembled
    block and from the generalized Schur-complement criterion
    ``R >= 0``, ``Q - S R^+ S.T >= 0``, ``S (I - R R^+) = 0``.  The two
    routes must agree; a disagreement with both margins clearly outside
    the tolerance band raises :class:`InternalInconsistencyError`,
    borderline cases resolve to the direct eigenvalue verdict.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    qd = sym_data(q)
    rd = sym_data(r)
    sd = np.atleast_2d(np.asarray(s, dtype=float))
    if sd.shape != (qd.shape[0], rd.shape[0]):
        raise DimensionMismatchError(
            f"S has shape {sd.shape}, expected {(qd.shape[0], rd.shape[0])}"
        )
    nq, nr = qd.shape[0], rd.shape[0]
    block = np.zeros((nq + nr, nq + nr))
    block[:nq, :nq] = qd
    block[:nq, nq:] = sd
    block[nq:, :nq] = sd.T
    block[nq:, nq:] = rd

    eigs = np.linalg.eigvalsh(block)
    scale = max(1.0, float(np.abs(eigs).max()))
    direct = bool(eigs[0] >= -tol * scale)

    r_eigs = np.linalg.eigvalsh(rd)
    r_scale = max(1.0, float(np.abs(r_eigs).max()))
    r_ok = bool(r_eigs[0] >= -tol * r_scale)
    r_pinv = pinv_sym(rd)
    schur = qd - sd @ r_pinv @ sd.T
    s_eigs = np.linalg.eigvalsh(0.5 * (schur + schur.T))
    s_scale = max(1.0, float(np.abs(s_eigs).max()))
    schur_ok = bool(s_eigs[0] >= -tol * s_scale)
    resid = sd @ (np.eye(nr) - rd @ r_pinv)
    resid_scale = max(1.0, float(np.abs(sd).max()))
    resid_ok = bool(np.abs(resid).max() <= tol * resid_scale)
    schur_route = r_ok and schur_ok and resid_ok

    if direct == schur_route:
        return direct
    clearly = _decided(eigs[0], tol * scale) and (
        (not r_ok and _decided(r_eigs[0], tol * r_scale))
        or (not schur_ok and _decided(s_eigs[0], tol * s_scale))
        or (not resid_ok and np.abs(resid).max() > 10.0 * tol * resid_scale)
        or schur_route
    )
    if clearly:
        raise InternalInconsistencyError(
            "block PSD criteria disagree: "
            f"direct min eig {eigs[0]:.3g}, Schur route {'PSD' if schur_route else 'not PSD'}"
        )
    return direct


def cross_factor(joint) -> np.ndarray:
    """Normalized cross block ``X = P1^{-1/2} P12 P2^{-1/2}`` of a joint.

    For PSD joints the largest singular value of X is at most one, strictly
    below one for PD joints; reassembling ``P1^{1/2} X P2^{1/2}`` recovers
    the cross block exactly.
    """
    p1, p2 = joint.P1, joint.P2
    if not (p1.strict and p2.strict):
        raise NotPdError("cross factorization needs strictly PD diagonal blocks")
    return inv_sqrt_pd(p1) @ np.asarray(joint.P12, dtype=float) @ inv_sqrt_pd(p2)


def assemble_cross(p1: PsdMatrix, x, p2: PsdMatrix) -> np.ndarray:
    """Inverse of :func:`cross_factor`: ``P12 = P1^{1/2} X P2^{1/2}``."""
    return sqrt_psd(p1).data @ np.asarray(x, dtype=float) @ sqrt_psd(p2).data
