"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np

from cifusion import FusionProblem, JointCovariance, PartialEstimate
from cifusion.optimizer import Cost, SigmaPair


def random_orthogonal(rng, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def random_spd(rng, dim: int, lo: float = 0.3, hi: float = 3.0) -> np.ndarray:
    q = random_orthogonal(rng, dim)
    eigs = rng.uniform(lo, hi, size=dim)
    return (q * eigs) @ q.T


def random_problem(
    rng, n: int | None = None, p1: int | None = None, p2: int | None = None,
    full_state: bool = False,
) -> FusionProblem:
    """An (A1)-valid random instance; Gaussian H's are full rank a.s."""
    if n is None:
        n = int(rng.integers(2, 6))
    if full_state:
        p1 = p2 = n
    if p1 is None:
        p1 = int(rng.integers(1, n + 1))
    if p2 is None:
        p2 = int(rng.integers(max(1, n - p1), n + 1))
    h1 = np.eye(n) if full_state else rng.standard_normal((p1, n))
    h2 = np.eye(n) if full_state else rng.standard_normal((p2, n))
    est1 = PartialEstimate(h1, rng.standard_normal(p1), random_spd(rng, p1))
    est2 = PartialEstimate(h2, rng.standard_normal(p2), random_spd(rng, p2))
    return FusionProblem(est1, est2)


def dominated_problem(rng, n: int, dominant_first: bool = True) -> FusionProblem:
    """Instance where one information matrix strictly dominates the other."""
    strong = PartialEstimate(np.eye(n), rng.standard_normal(n), 0.05 * np.eye(n))
    p_weak = int(rng.integers(1, n + 1))
    h_weak = rng.standard_normal((p_weak, n))
    h_weak /= np.linalg.norm(h_weak, axis=1, keepdims=True)
    weak = PartialEstimate(h_weak, rng.standard_normal(p_weak), 10.0 * np.eye(p_weak))
    return FusionProblem(strong, weak) if dominant_first else FusionProblem(weak, strong)


def random_joint(rng, p1: int, p2: int, pd: bool = True) -> JointCovariance:
    """Random joint covariance via the normalized-cross parameterization."""
    x = rng.standard_normal((p1, p2))
    smax = np.linalg.svd(x, compute_uv=False)[0]
    x *= rng.uniform(0.0, 0.95 if pd else 1.0) / max(smax, 1e-300)
    return JointCovariance.from_cross_parameter(
        random_spd(rng, p1), x, random_spd(rng, p2)
    )


def random_unbiased_gains(rng, problem: FusionProblem, count: int) -> np.ndarray:
    """Batch of gains K with K @ H = I, via the pseudo-inverse plus nullspace."""
    h = problem.h_stacked
    hp = np.linalg.pinv(h)
    proj = np.eye(h.shape[0]) - h @ hp
    z = rng.standard_normal((count, problem.n, h.shape[0]))
    return hp[None] + z @ proj


def grid_costs(problem: FusionProblem, cost: Cost, grid: int = 1001):
    """Brute-force extended cost on a uniform weight grid (batched)."""
    pair = SigmaPair.from_problem(problem)
    alphas = np.linspace(0.0, 1.0, grid)
    combos = (
        alphas[:, None, None] * pair.sigma1.data
        + (1.0 - alphas)[:, None, None] * pair.sigma0.data
    )
    eigs = np.linalg.eigvalsh(combos)
    scale = np.abs(eigs).max(axis=1)
    singular = eigs[:, 0] <= 1e-12 * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", over="ignore"):
        if cost is Cost.DET:
            vals = np.prod(1.0 / eigs, axis=1)
        else:
            vals = np.sum(1.0 / eigs, axis=1)
    vals[singular] = np.inf
    return alphas, vals


def well_scaled_problems(rng, count: int, cost_cap: float = 50.0):
    """Seeded instances whose optimal cost stays O(1) for both costs.

    The absolute 1e-9 optimality gates compare determinant values directly,
    so instances with huge objective magnitudes would drown the comparison
    in eigensolver rounding; filtering keeps the gates meaningful.
    """
    out = []
    while len(out) < count:
        problem = random_problem(rng)
        ok = True
        for cost in (Cost.DET, Cost.TRACE):
            _, vals = grid_costs(problem, cost, grid=101)
            if vals.min() > cost_cap:
                ok = False
                break
        if ok:
            out.append(problem)
    return out


def sample_intersection_points(
    rng, problem: FusionProblem, count: int, level: float = 0.99
) -> np.ndarray:
    """Points with both prior quadratic forms at most ``level`` (< 1)."""
    ys = rng.standard_normal((count, problem.n))
    q1 = np.einsum("si,ij,sj->s", ys, problem.sigma1, ys)
    q0 = np.einsum("si,ij,sj->s", ys, problem.sigma0, ys)
    worst = np.maximum(q1, q0)  # positive: the stacked observation has rank n
    targets = rng.uniform(0.05, level, size=count)
    return ys * np.sqrt(targets / worst)[:, None]
