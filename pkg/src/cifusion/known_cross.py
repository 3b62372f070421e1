"""Optimal unbiased fusion when the full joint covariance is known.

With the cross term available the fused estimate has a unique minimal error
covariance in the semidefinite order; the general weighted-least-squares
formula and its full-state two-track specialization are both provided, each
serving as an independent oracle for the other.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import (
    DimensionMismatchError,
    InternalInconsistencyError,
    SingularJointError,
)
from .linalg import (
    DEFAULT_TOL,
    PsdMatrix,
    assemble_cross,
    inv_pd,
    psd_certify,
    sym_data,
)
from .problem import FusionProblem


class JointCovariance:
    """Block covariance ``[P1 P12; P12.T P2]`` with PSD/PD classification."""

    def __init__(self, p1, p12, p2, tol: float = DEFAULT_TOL):
        cert1 = p1 if isinstance(p1, PsdMatrix) else psd_certify(p1, tol)
        cert2 = p2 if isinstance(p2, PsdMatrix) else psd_certify(p2, tol)
        p12 = np.atleast_2d(np.asarray(p12, dtype=float))
        if p12.shape != (cert1.dim, cert2.dim):
            raise DimensionMismatchError(
                f"P12 has shape {p12.shape}, expected {(cert1.dim, cert2.dim)}"
            )
        assembled = np.zeros((cert1.dim + cert2.dim,) * 2)
        assembled[: cert1.dim, : cert1.dim] = cert1.data
        assembled[: cert1.dim, cert1.dim :] = p12
        assembled[cert1.dim :, : cert1.dim] = p12.T
        assembled[cert1.dim :, cert1.dim :] = cert2.data
        cert = psd_certify(assembled, tol)  # raises NotPsdError on bad cross terms
        p12.flags.writeable = False
        self.P1 = cert1
        self.P2 = cert2
        self.P12 = p12
        self.pd = cert.strict
        self.assembled = cert

    @classmethod
    def from_cross_parameter(cls, p1, x, p2, tol: float = DEFAULT_TOL) -> "JointCovariance":
        """Build a joint from the normalized cross parameter X."""
        cert1 = p1 if isinstance(p1, PsdMatrix) else psd_certify(p1, tol)
        cert2 = p2 if isinstance(p2, PsdMatrix) else psd_certify(p2, tol)
        return cls(cert1, assemble_cross(cert1, x, cert2), cert2, tol)

    @property
    def p1_dim(self) -> int:
        return self.P1.dim

    @property
    def p2_dim(self) -> int:
        return self.P2.dim

    def swapped(self) -> "JointCovariance":
        return JointCovariance(self.P2, self.P12.T, self.P1)

    def __repr__(self) -> str:
        kind = "PD" if self.pd else "PSD"
        return f"JointCovariance(p1={self.p1_dim}, p2={self.p2_dim}, {kind})"


class KnownCrossResult:
    """Optimal gain ``K*`` and fused covariance ``P*`` for a known joint."""

    def __init__(self, k_star: np.ndarray, p_star: PsdMatrix, p1: int):
        self.K_star = k_star
        self.P_star = p_star
        self._p1 = p1

    @property
    def K1(self) -> np.ndarray:
        return self.K_star[:, : self._p1]

    @property
    def K2(self) -> np.ndarray:
        return self.K_star[:, self._p1 :]

    def fuse(self, x1, x2) -> np.ndarray:
        return self.K1 @ np.asarray(x1, float) + self.K2 @ np.asarray(x2, float)


def _check_within_intersection(
    p_star_inv: np.ndarray, joint: JointCovariance, problem: FusionProblem, tol: float
) -> None:
    """Post-hoc check that ``(P*)^{-1}`` dominates both prior informations.

    Violations within ten times the tolerance only warn; near-singular
    joints legitimately sit at the boundary.
    """
    for est, block in ((problem.est1, joint.P1), (problem.est2, joint.P2)):
        target = est.h.T @ inv_pd(block.data) @ est.h
        diff = p_star_inv - 0.5 * (target + target.T)
        min_eig = float(np.linalg.eigvalsh(diff)[0])
        scale = max(1.0, float(np.abs(p_star_inv).max()))
        if min_eig < -10.0 * tol * scale:
            raise InternalInconsistencyError(
                f"fused information fails the prior bound: min eig {min_eig:.3g}"
            )
        if min_eig < -tol * scale:
            warnings.warn(
                f"prior-information bound holds only to {min_eig:.3g} "
                "(within 10x tolerance)",
                RuntimeWarning,
                stacklevel=3,
            )


def optimal_fusion_known_cross(
    problem: FusionProblem, joint: JointCovariance, tol: float = DEFAULT_TOL
) -> KnownCrossResult:
    """Minimal-covariance unbiased fusion for a known PD joint covariance.

    ``K* = (H.T W H)^{-1} H.T W`` and ``P* = (H.T W H)^{-1}`` with
    ``W`` the inverse of the joint; ``P*`` is the unique semidefinite-order
    minimum over all unbiased gains.
    """
    if joint.p1_dim != problem.p1 or joint.p2_dim != problem.p2:
        raise DimensionMismatchError(
            f"joint blocks {(joint.p1_dim, joint.p2_dim)} do not match "
            f"problem dims {(problem.p1, problem.p2)}"
        )
    if not joint.pd:
        raise SingularJointError("joint covariance must be PD for the optimal gain")
    w = inv_pd(joint.assembled.data)
    h = problem.h_stacked
    p_star_inv = h.T @ w @ h
    p_star_inv = 0.5 * (p_star_inv + p_star_inv.T)
    p_star = psd_certify(inv_pd(p_star_inv), tol)
    k_star = p_star.data @ h.T @ w
    _check_within_intersection(p_star_inv, joint, problem, tol)
    return KnownCrossResult(k_star, p_star, problem.p1)


def bar_shalom_campo(joint: JointCovariance, tol: float = DEFAULT_TOL) -> KnownCrossResult:
    """Two-track fusion formula for the square full-state case.

    Specialization of :func:`optimal_fusion_known_cross` to
    ``p1 = p2 = n`` with identity observation maps:
    ``K2* = (P1 - P12) D^{-1}``, ``K1* = I - K2*`` and
    ``P* = P1 - (P1 - P12) D^{-1} (P1 - P12.T)`` where
    ``D = P1 + P2 - P12 - P12.T``.
    """
    if joint.p1_dim != joint.p2_dim:
        raise DimensionMismatchError("full-state form needs p1 == p2")
    if not joint.pd:
        raise SingularJointError("joint covariance must be PD")
    p1 = joint.P1.data
    p2 = joint.P2.data
    p12 = joint.P12
    delta = p1 + p2 - p12 - p12.T
    delta_inv = inv_pd(delta)  # PD because the joint is PD
    k2 = (p1 - p12) @ delta_inv
    k1 = np.eye(joint.p1_dim) - k2
    p_star = p1 - (p1 - p12) @ delta_inv @ (p1 - p12.T)
    p_star = psd_certify(sym_data(p_star), tol)
    return KnownCrossResult(np.hstack([k1, k2]), p_star, joint.p1_dim)
