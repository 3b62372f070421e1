"""In-process distributed-estimation simulator.

Nodes hold partial observations of one shared true state and fuse pairwise
over a message schedule.  The harness keeps the exact joint covariance of
all node errors (a single block matrix updated by the fusion gains), which
is the only way to assert conservativeness against ground truth without
Monte Carlo noise.  The fused result overwrites the first node of each
event; the second keeps its prior, so repeated fusions double-count
information exactly the way the fusion rule is built to survive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleError, UnreachableError
from .linalg import LoewnerRelation, PsdMatrix, loewner_compare, psd_certify
from .optimizer import Cost, solve_ci
from .problem import FusionProblem, PartialEstimate, matrix_rank

DEFAULT_SIM_TOL = 1e-8


@dataclass
class NoiseSpec:
    """Generation parameters for node observations and covariances.

    ``h_list``/``p_list`` pin the observation matrices and true covariances
    explicitly (e.g. to reproduce a textbook geometry); otherwise both are
    drawn from the seeded generator with condition number at most
    ``cond_max`` and a PSD inflation of relative trace at most
    ``inflation_frac``.
    """

    h_list: list | None = None
    p_list: list | None = None
    cond_max: float = 100.0
    inflation_frac: float = 0.5


@dataclass
class NodeState:
    node_id: int
    h: np.ndarray
    x_hat: np.ndarray
    p_hat: PsdMatrix
    lineage: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return self.h.shape[0]


class GroundTruth:
    """Exact error statistics hidden from the fusion rule."""

    def __init__(self, x_true: np.ndarray, blocks: list[np.ndarray]):
        self.x_true = x_true
        self.dims = [b.shape[0] for b in blocks]
        total = sum(self.dims)
        joint = np.zeros((total, total))
        off = 0
        for b in blocks:
            joint[off : off + b.shape[0], off : off + b.shape[0]] = b
            off += b.shape[0]
        self.joint = joint

    def _offset(self, i: int) -> int:
        return sum(self.dims[:i])

    def node_cov(self, i: int) -> np.ndarray:
        o, d = self._offset(i), self.dims[i]
        return self.joint[o : o + d, o : o + d]

    def apply_fusion(self, a: int, b: int, k1: np.ndarray, k2: np.ndarray) -> None:
        """Propagate the exact joint through one linear fusion into node a."""
        n_new = k1.shape[0]
        total_old = sum(self.dims)
        new_dims = list(self.dims)
        new_dims[a] = n_new
        t = np.zeros((sum(new_dims), total_old))
        row = 0
        for i, d in enumerate(new_dims):
            if i == a:
                t[row : row + d, self._offset(a) : self._offset(a) + self.dims[a]] = k1
                t[row : row + d, self._offset(b) : self._offset(b) + self.dims[b]] = k2
            else:
                o = self._offset(i)
                t[row : row + d, o : o + self.dims[i]] = np.eye(d)
            row += d
        self.joint = t @ self.joint @ t.T
        self.joint = 0.5 * (self.joint + self.joint.T)
        self.dims = new_dims


@dataclass(frozen=True)
class ScheduleEvent:
    node_a: int
    node_b: int
    cost: Cost


@dataclass(frozen=True)
class Schedule:
    events: tuple
    topology: str
    seed: int


def make_schedule(
    topology: str, nodes: int, events: int, cost: Cost, seed: int = 0
) -> Schedule:
    """Build a pairwise fusion schedule over the given topology."""
    if nodes < 2:
        raise ScheduleError(0, "need at least two nodes")
    pairs: list[tuple[int, int]] = []
    if topology == "chain":
        cycle = [(i, i + 1) for i in range(nodes - 1)]
    elif topology == "ring":
        cycle = [(i, (i + 1) % nodes) for i in range(nodes)]
    elif topology == "random":
        rng = np.random.default_rng(seed)
        cycle = []
        for _ in range(events):
            a = int(rng.integers(nodes))
            b = int(rng.integers(nodes - 1))
            if b >= a:
                b += 1
            cycle.append((a, b))
    else:
        raise ScheduleError(0, f"unknown topology {topology!r}")
    while len(pairs) < events:
        pairs.extend(cycle)
    pairs = pairs[:events]
    return Schedule(
        events=tuple(ScheduleEvent(a, b, cost) for a, b in pairs),
        topology=topology,
        seed=seed,
    )


def _random_spd(rng, dim: int, cond_max: float) -> np.ndarray:
    gauss = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    half_span = 0.5 * np.log10(cond_max)
    eigs = 10.0 ** rng.uniform(-half_span, half_span, size=dim)
    return (q * eigs) @ q.T


def _random_psd_inflation(rng, dim: int, trace_budget: float) -> np.ndarray:
    gauss = rng.standard_normal((dim, dim))
    w = gauss @ gauss.T
    target = trace_budget * rng.uniform(0.1, 1.0)
    return w * (target / np.trace(w))


def init_network(
    n: int, nodes: int, seed: int, noise_spec: NoiseSpec | None = None
) -> tuple[list[NodeState], GroundTruth]:
    """Create nodes with conservative covariances and the exact ground truth.

    Every node observes ``H_i x_true`` plus noise drawn from the exact joint
    (initially independent across nodes); the reported covariance is the true
    one inflated by a random PSD term, certified conservative on
    construction.  Raises when the stacked observation matrices cannot reach
    full state rank by any fusion order.
    """
    spec = noise_spec or NoiseSpec()
    rng = np.random.default_rng(seed)
    if spec.h_list is not None:
        hs = [np.atleast_2d(np.asarray(h, dtype=float)) for h in spec.h_list]
        if len(hs) != nodes:
            raise UnreachableError(f"h_list has {len(hs)} entries for {nodes} nodes")
    else:
        hs = []
        low = max(1, (n + 1) // 2)
        for _ in range(nodes):
            p = int(rng.integers(low, n + 1))
            h = rng.standard_normal((p, n))
            while matrix_rank(h) < p:  # essentially never for Gaussian draws
                h = rng.standard_normal((p, n))
            hs.append(h)
    if matrix_rank(np.vstack(hs)) < n:
        raise UnreachableError("stacked observations never reach full state rank")

    if spec.p_list is not None:
        p_true = [np.atleast_2d(np.asarray(p, dtype=float)) for p in spec.p_list]
    else:
        p_true = [_random_spd(rng, h.shape[0], spec.cond_max) for h in hs]

    x_true = rng.standard_normal(n)
    truth = GroundTruth(x_true, p_true)
    chol = np.linalg.cholesky(truth.joint)
    errors = chol @ rng.standard_normal(truth.joint.shape[0])

    node_states = []
    off = 0
    for i, h in enumerate(hs):
        p = h.shape[0]
        e_i = errors[off : off + p]
        off += p
        inflation = _random_psd_inflation(rng, p, spec.inflation_frac * np.trace(p_true[i]))
        p_hat = psd_certify(p_true[i] + inflation)
        if loewner_compare(p_hat, p_true[i]) not in (
            LoewnerRelation.GREATER_EQUAL,
            LoewnerRelation.STRICTLY_GREATER,
            LoewnerRelation.EQUAL,
        ):
            raise UnreachableError("inflated covariance failed conservativeness")
        node_states.append(
            NodeState(node_id=i, h=h, x_hat=h @ x_true + e_i, p_hat=p_hat)
        )
    return node_states, truth


@dataclass(frozen=True)
class EventRecord:
    event_id: int
    node_a: int
    node_b: int
    alpha: float
    cost_value: float
    margin: float


@dataclass
class SimReport:
    n: int
    nodes: int
    topology: str
    seed: int
    cost: str
    records: list[EventRecord] = field(default_factory=list)
    skipped: list[tuple[int, int, int, str]] = field(default_factory=list)
    violations: int = 0

    def to_text(self) -> str:
        lines = [
            "# cifusion sim report",
            f"# n={self.n} nodes={self.nodes} topology={self.topology} "
            f"seed={self.seed} cost={self.cost}",
            "# columns: event_id node_a node_b alpha cost margin",
        ]
        skip_at = {s[0]: s for s in self.skipped}
        rec_at = {r.event_id: r for r in self.records}
        for event_id in sorted(set(skip_at) | set(rec_at)):
            if event_id in rec_at:
                r = rec_at[event_id]
                lines.append(
                    f"{r.event_id} {r.node_a} {r.node_b} "
                    f"{r.alpha:.17g} {r.cost_value:.17g} {r.margin:.17g}"
                )
            else:
                _, a, b, reason = skip_at[event_id]
                lines.append(f"# skipped {event_id} ({a},{b}): {reason}")
        lines.append(f"# violations {self.violations}")
        return "\n".join(lines) + "\n"


def run_schedule(
    nodes: list[NodeState],
    truth: GroundTruth,
    schedule: Schedule,
    tol: float = DEFAULT_SIM_TOL,
) -> SimReport:
    """Execute the schedule, tracking exact conservativeness margins.

    Each event fuses the pair with the optimal-weight rule, writes the fused
    full-state estimate into the first node and propagates the exact joint
    through the gains.  Events whose pair cannot reach full state rank are
    skipped and logged.  The margin is the smallest eigenvalue of
    ``P_hat - P_true`` at the fused node; a margin below ``-tol * scale``
    counts as a conservativeness violation.
    """
    report = SimReport(
        n=truth.x_true.size,
        nodes=len(nodes),
        topology=schedule.topology,
        seed=schedule.seed,
        cost=schedule.events[0].cost.value if schedule.events else "det",
    )
    n = truth.x_true.size
    for event_id, ev in enumerate(schedule.events):
        if not (0 <= ev.node_a < len(nodes)) or not (0 <= ev.node_b < len(nodes)):
            raise ScheduleError(event_id, f"node pair ({ev.node_a},{ev.node_b}) invalid")
        if ev.node_a == ev.node_b:
            raise ScheduleError(event_id, "a node cannot fuse with itself")
        node_a, node_b = nodes[ev.node_a], nodes[ev.node_b]
        if matrix_rank(np.vstack([node_a.h, node_b.h])) < n:
            report.skipped.append(
                (event_id, ev.node_a, ev.node_b, "pair does not reach state rank")
            )
            continue
        problem = FusionProblem(
            PartialEstimate(node_a.h, node_a.x_hat, node_a.p_hat),
            PartialEstimate(node_b.h, node_b.x_hat, node_b.p_hat),
        )
        result = solve_ci(problem, ev.cost)
        truth.apply_fusion(ev.node_a, ev.node_b, result.K1, result.K2)
        node_a.h = np.eye(n)
        node_a.x_hat = result.fused_x
        node_a.p_hat = result.P_hat
        node_a.lineage.append((event_id, ev.node_b, result.alpha))
        p_true = truth.node_cov(ev.node_a)
        diff = result.P_hat.data - p_true
        margin = float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0])
        scale = max(1.0, float(np.abs(result.P_hat.data).max()))
        if margin < -tol * scale:
            report.violations += 1
        report.records.append(
            EventRecord(
                event_id=event_id,
                node_a=ev.node_a,
                node_b=ev.node_b,
                alpha=result.alpha,
                cost_value=float(result.cost_value),
                margin=margin,
            )
        )
    return report
