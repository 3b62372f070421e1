"""The one-parameter fusion family and optimal weight selection.

The family blends the two information matrices,
``Sigma_alpha = alpha * Sigma1 + (1 - alpha) * Sigma0``, and fuses with
``P_hat = Sigma_alpha^{-1}``.  For the determinant cost the optimal weight
is characterized by the sign pattern and unique root of the polynomial
``Delta(alpha) = trace(adj(Sigma_alpha) (Sigma1 - Sigma0))``; for the trace
cost the optimum is found by golden-section search over the finite part of
the extended objective and cross-checked against a gain-ratio fixed point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import verifier
from .ellipsoids import Ellipsoid, kahan_interpose
from .errors import (
    InternalInconsistencyError,
    InvalidFamilyParameterError,
    NotPdError,
    NotPsdError,
    OutOfRangeError,
    SingularSigmaError,
)
from .linalg import (
    DEFAULT_TOL,
    SINGULAR_RTOL,
    LoewnerRelation,
    PsdMatrix,
    SymMatrix,
    adjugate,
    inv_pd,
    loewner_compare,
    psd_certify,
)
from .problem import FusionProblem

ROOT_TOL = 1e-12
GOLDEN_INTERVAL_TOL = 1e-12
GOLDEN_MAX_ITER = 200
_INV_GOLDEN = 2.0 / (1.0 + math.sqrt(5.0))


class Cost(enum.Enum):
    """Strictly isotone cost of the fused covariance."""

    DET = "det"
    TRACE = "trace"

    def of(self, matrix) -> float:
        m = np.asarray(matrix, dtype=float)
        if self is Cost.DET:
            return float(np.linalg.det(m))
        return float(np.trace(m))


def extended_cost(cost: Cost, sigma: np.ndarray) -> float:
    """Extended cost ``J((Sigma)^{-1})``, ``+inf`` when Sigma is singular.

    The infinity is an exact ``math.inf``, never a large float, so endpoint
    branch logic stays exact.
    """
    eigs = np.linalg.eigvalsh(sigma)
    scale = float(np.abs(eigs).max())
    if scale == 0.0 or eigs[0] <= SINGULAR_RTOL * scale:
        return math.inf
    if cost is Cost.DET:
        return float(np.prod(1.0 / eigs))
    return float(np.sum(1.0 / eigs))


@dataclass(frozen=True)
class SigmaPair:
    """The two prior information matrices of a fusion problem."""

    sigma1: PsdMatrix
    sigma0: PsdMatrix

    @classmethod
    def from_problem(cls, problem: FusionProblem, tol: float = DEFAULT_TOL) -> "SigmaPair":
        return cls(psd_certify(problem.sigma1, tol), psd_certify(problem.sigma0, tol))

    @property
    def dim(self) -> int:
        return self.sigma1.dim


def sigma_alpha(pair: SigmaPair, alpha: float) -> SymMatrix:
    """Convex blend ``alpha * Sigma1 + (1 - alpha) * Sigma0``."""
    if not 0.0 <= alpha <= 1.0:
        raise OutOfRangeError(f"alpha={alpha} outside [0, 1]")
    return SymMatrix(alpha * pair.sigma1.data + (1.0 - alpha) * pair.sigma0.data)


def delta_value(pair: SigmaPair, alpha: float) -> float:
    """``trace(adj(Sigma_alpha) (Sigma1 - Sigma0))``, defined at singular blends."""
    adj = adjugate(sigma_alpha(pair, alpha))
    return float(np.trace(adj.data @ (pair.sigma1.data - pair.sigma0.data)))


def delta_poly_coeffs(pair: SigmaPair) -> np.ndarray:
    """Coefficients (descending powers) of the degree <= n-1 polynomial Delta.

    Recovered by interpolation on n evenly spaced weights; exact up to
    rounding because Delta is a polynomial of the stated degree.
    """
    n = pair.dim
    nodes = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.0])
    values = np.array([delta_value(pair, a) for a in nodes])
    vander = np.vander(nodes, n)  # columns: a^(n-1), ..., a, 1
    return np.linalg.solve(vander, values) if n > 1 else values


@dataclass(frozen=True)
class FusionResult:
    """Weights, fused covariance and diagnostics of one fusion."""

    alpha: float
    K1: np.ndarray
    K2: np.ndarray
    P_hat: PsdMatrix
    fused_x: np.ndarray
    cost_value: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def with_cost(self, cost_value: float, **extra_diagnostics) -> "FusionResult":
        diag = dict(self.diagnostics)
        diag.update(extra_diagnostics)
        return FusionResult(
            self.alpha, self.K1, self.K2, self.P_hat, self.fused_x, cost_value, diag
        )


def _sigma_min_eig_rel(sigma: np.ndarray) -> float:
    eigs = np.linalg.eigvalsh(sigma)
    scale = float(np.abs(eigs).max())
    return math.inf if scale == 0.0 else float(eigs[0]) / scale


def ku_rule(problem: FusionProblem, alpha: float, tol: float = DEFAULT_TOL) -> FusionResult:
    """Apply the fusion family member with the given weight.

    The weight is validated against the family case table: a strictly
    dominant second (first) information matrix forces ``alpha = 0``
    (``alpha = 1``), equal matrices admit any weight, and otherwise the
    blended information matrix must be nonsingular.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidFamilyParameterError(alpha, "outside [0, 1]")
    pair = SigmaPair.from_problem(problem, tol)
    rel = loewner_compare(pair.sigma0, pair.sigma1, tol)
    if rel is LoewnerRelation.STRICTLY_GREATER and alpha != 0.0:
        raise InvalidFamilyParameterError(
            alpha, "second information matrix strictly dominates; alpha must be 0"
        )
    if rel is LoewnerRelation.STRICTLY_LESS and alpha != 1.0:
        raise InvalidFamilyParameterError(
            alpha, "first information matrix strictly dominates; alpha must be 1"
        )
    corner = {
        LoewnerRelation.STRICTLY_GREATER: "sigma0_dominant",
        LoewnerRelation.STRICTLY_LESS: "sigma1_dominant",
        LoewnerRelation.EQUAL: "sigma_equal",
    }.get(rel, "general")
    sigma = sigma_alpha(pair, alpha)
    if _sigma_min_eig_rel(sigma.data) <= SINGULAR_RTOL:
        raise SingularSigmaError(
            f"blended information matrix is singular at alpha={alpha}"
        )
    try:
        p_hat = psd_certify(inv_pd(sigma.data), tol)
    except (NotPdError, NotPsdError) as exc:  # near-singular blends only
        raise SingularSigmaError(str(exc)) from exc
    if not p_hat.strict:
        raise SingularSigmaError("fused covariance is not strictly PD")
    est1, est2 = problem.est1, problem.est2
    k1 = alpha * (p_hat.data @ est1.h.T @ est1.p_inv)
    k2 = (1.0 - alpha) * (p_hat.data @ est2.h.T @ est2.p_inv)
    fused_x = k1 @ est1.x_hat + k2 @ est2.x_hat
    unbias = k1 @ est1.h + k2 @ est2.h - np.eye(problem.n)
    return FusionResult(
        alpha=float(alpha),
        K1=k1,
        K2=k2,
        P_hat=p_hat,
        fused_x=fused_x,
        diagnostics={
            "corner_case": corner,
            "unbias_residual": float(np.abs(unbias).max()),
        },
    )


def solve_ci_det(problem: FusionProblem, tol: float = DEFAULT_TOL) -> FusionResult:
    """Determinant-optimal weight via the Delta polynomial case table.

    ``alpha* = 0`` when ``Delta(0) <= 0`` (second matrix nonsingular),
    ``alpha* = 1`` when ``Delta(1) >= 0`` (first matrix nonsingular),
    0.5 by tie-break when the information matrices coincide, and otherwise
    the unique root of Delta in (0, 1), bisected to an interval of 1e-12.
    Delta is evaluated through the adjugate so singular endpoint blends are
    fine.
    """
    pair = SigmaPair.from_problem(problem, tol)
    rel = loewner_compare(pair.sigma0, pair.sigma1, tol)
    if rel is LoewnerRelation.EQUAL:
        alpha, branch = 0.5, "equal"
    else:
        d0 = delta_value(pair, 0.0)
        d1 = delta_value(pair, 1.0)
        sigma0_ok = _sigma_min_eig_rel(pair.sigma0.data) > SINGULAR_RTOL
        sigma1_ok = _sigma_min_eig_rel(pair.sigma1.data) > SINGULAR_RTOL
        # a singular endpoint has extended cost +inf, so it can never win
        # even when the derivative test there is inconclusive (Delta == 0)
        if d0 <= 0.0 and sigma0_ok:
            alpha, branch = 0.0, "endpoint_zero"
        elif d1 >= 0.0 and sigma1_ok:
            alpha, branch = 1.0, "endpoint_one"
        else:
            lo, hi = 0.0, 1.0  # Delta > 0 left of the root, < 0 right of it
            while hi - lo > ROOT_TOL:
                mid = 0.5 * (lo + hi)
                d_mid = delta_value(pair, mid)
                if d_mid == 0.0:
                    lo = hi = mid
                elif d_mid > 0.0:
                    lo = mid
                else:
                    hi = mid
            alpha, branch = 0.5 * (lo + hi), "interior_root"
    result = ku_rule(problem, alpha, tol)
    return result.with_cost(
        Cost.DET.of(result.P_hat.data),
        branch=branch,
        cost="det",
        delta_at_0=delta_value(pair, 0.0),
        delta_at_1=delta_value(pair, 1.0),
    )


def _golden_section(f, lo: float, hi: float) -> float:
    c = hi - (hi - lo) * _INV_GOLDEN
    d = lo + (hi - lo) * _INV_GOLDEN
    fc, fd = f(c), f(d)
    for _ in range(GOLDEN_MAX_ITER):
        if abs(hi - lo) <= GOLDEN_INTERVAL_TOL:
            break
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - (hi - lo) * _INV_GOLDEN
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + (hi - lo) * _INV_GOLDEN
            fd = f(d)
    return 0.5 * (lo + hi)


def _polish_trace_stationary(pair: SigmaPair, a: float, lo: float, hi: float) -> float:
    """Safeguarded Newton steps on the trace objective's stationarity condition.

    Value-based golden section stalls at the sqrt(eps) comparison floor of a
    flat minimum; the derivative ``-trace(S^-1 D S^-1)`` is computable in
    closed form and its root is well conditioned, so a few clipped Newton
    steps recover the minimizer to near machine precision.
    """
    d = pair.sigma1.data - pair.sigma0.data
    for _ in range(60):
        inv = np.linalg.inv(a * pair.sigma1.data + (1.0 - a) * pair.sigma0.data)
        inv_d = inv @ d
        slope = -float(np.trace(inv_d @ inv))
        curvature = 2.0 * float(np.trace(inv_d @ inv_d @ inv))
        if not curvature > 0.0:
            break
        new = min(hi, max(lo, a - slope / curvature))
        if abs(new - a) <= 1e-16:
            a = new
            break
        a = new
    return a


def _finite_bracket_edge(f, endpoint: float, interior: float) -> float:
    """Geometric shrink from a singular endpoint towards the interior.

    Halves the distance from ``interior`` towards ``endpoint`` until the
    objective stops decreasing; convexity of the objective on the finite
    segment guarantees the returned point still brackets the minimizer.
    """
    prev = interior
    f_prev = f(prev)
    while abs(prev - endpoint) > 1e-13:
        closer = 0.5 * (prev + endpoint)
        f_closer = f(closer)
        if f_closer >= f_prev:
            return closer
        prev, f_prev = closer, f_closer
    return prev


def solve_ci_trace(problem: FusionProblem, tol: float = DEFAULT_TOL) -> FusionResult:
    """Trace-optimal weight by bracketing plus golden-section refinement.

    Endpoints with a singular blend are assigned infinite cost; the finite
    bracket is located by geometric shrink from each endpoint, refined by
    golden section (iteration cap 200, interval tolerance 1e-12), and the
    result is snapped to an endpoint whenever that is at least as good.
    Diagnostics carry the gain-ratio fixed-point residual.
    """
    pair = SigmaPair.from_problem(problem, tol)
    rel = loewner_compare(pair.sigma0, pair.sigma1, tol)

    def f(a: float) -> float:
        return extended_cost(
            Cost.TRACE, a * pair.sigma1.data + (1.0 - a) * pair.sigma0.data
        )

    if rel is LoewnerRelation.EQUAL:
        alpha, branch = 0.5, "equal"
    elif rel is LoewnerRelation.STRICTLY_GREATER:
        alpha, branch = 0.0, "forced_zero"
    elif rel is LoewnerRelation.STRICTLY_LESS:
        alpha, branch = 1.0, "forced_one"
    else:
        lo = 0.0 if f(0.0) < math.inf else _finite_bracket_edge(f, 0.0, 0.5)
        hi = 1.0 if f(1.0) < math.inf else _finite_bracket_edge(f, 1.0, 0.5)
        alpha = _golden_section(f, lo, hi)
        branch = "golden_section"
        if 0.0 < alpha < 1.0:
            polished = _polish_trace_stationary(
                pair, alpha, max(lo, 1e-15), min(hi, 1.0 - 1e-15)
            )
            if f(polished) <= f(alpha):
                alpha = polished
        best = f(alpha)
        for endpoint in (0.0, 1.0):
            fe = f(endpoint)
            if fe <= best:
                alpha, best, branch = endpoint, fe, "endpoint_snap"
    result = ku_rule(problem, alpha, tol)
    r1 = math.sqrt(max(0.0, Cost.TRACE.of(result.K1 @ problem.est1.p_hat.data @ result.K1.T)))
    r2 = math.sqrt(max(0.0, Cost.TRACE.of(result.K2 @ problem.est2.p_hat.data @ result.K2.T)))
    residual = abs(result.alpha - r1 / (r1 + r2)) if r1 + r2 > 0.0 else math.nan
    return result.with_cost(
        Cost.TRACE.of(result.P_hat.data),
        branch=branch,
        cost="trace",
        fixed_point_residual=residual,
        gain_norms=(r1, r2),
    )


def solve_ci(problem: FusionProblem, cost: Cost, tol: float = DEFAULT_TOL) -> FusionResult:
    """Optimal fusion for the given cost, with the feasibility certificate.

    Dispatches to the determinant or trace solver; the returned weight is a
    valid family member by construction, and the semidefinite certificate of
    conservativeness is asserted on the result (its smallest eigenvalue is
    recorded in the diagnostics).
    """
    if cost is Cost.DET:
        result = solve_ci_det(problem, tol)
    elif cost is Cost.TRACE:
        result = solve_ci_trace(problem, tol)
    else:
        raise OutOfRangeError(f"unsupported cost {cost!r}")
    cert = verifier.lmi_certificate(result, problem, result.alpha)
    if not cert.passed:
        raise InternalInconsistencyError(
            f"optimal fusion failed its own certificate (min eig {cert.lmi_min_eig:.3g})"
        )
    result.diagnostics["lmi_min_eig"] = cert.lmi_min_eig
    return result


def lower_bound_witness(
    problem: FusionProblem,
    candidate_p: PsdMatrix,
    grid: int = 1001,
    tol: float = DEFAULT_TOL,
) -> float | None:
    """Weight witnessing that a candidate covariance obeys the family bound.

    Returns a grid weight ``a`` with the candidate dominating the blended
    covariance ``(a*Sigma1 + (1-a)*Sigma0)^{-1}``, or ``None`` when no grid
    point qualifies, which flags the candidate as violating the lower bound
    every conservative unbiased rule must satisfy.
    """
    if not candidate_p.strict:
        raise NotPdError("candidate covariance must be strictly PD")
    pair = SigmaPair.from_problem(problem, tol)
    target = Ellipsoid(psd_certify(inv_pd(candidate_p.data), tol))
    return kahan_interpose(
        Ellipsoid(pair.sigma1), Ellipsoid(pair.sigma0), target, grid, tol
    )
