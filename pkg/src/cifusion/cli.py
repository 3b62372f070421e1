"""Command-line front end.

Subcommands: ``fuse``, ``scan``, ``verify``, ``known``, ``sim``.
Problem files are JSON documents with keys ``n``, ``est1``/``est2`` (each
``H`` p x n, ``x_hat`` length p, ``P_hat`` p x p) and optional ``truth``
(``P1``, ``P2``, ``P12``) and ``P_hat_override`` blocks.

Exit codes: 0 success, 1 certificate failure, 2 input or validation
failure, 3 internal inconsistency.  Diagnostics go to standard error; every
number is serialized with 17 significant digits so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import verifier
from .errors import (
    CiFusionError,
    InternalInconsistencyError,
    ProblemFileError,
    UnreachableError,
)
from .known_cross import JointCovariance, bar_shalom_campo, optimal_fusion_known_cross
from .linalg import LoewnerRelation, loewner_compare, psd_certify
from .optimizer import Cost, FusionResult, SigmaPair, extended_cost, solve_ci
from .problem import FusionProblem, PartialEstimate
from .simulator import NoiseSpec, init_network, make_schedule, run_schedule

EXIT_OK = 0
EXIT_CERT_FAIL = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def fmt(x: float) -> str:
    """One float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")


def dumps(obj, indent: int = 0) -> str:
    """Minimal JSON writer with deterministic 17-digit float formatting."""
    pad = " " * indent
    if isinstance(obj, dict):
        items = ",\n".join(
            f'{pad}  "{k}": {dumps(v, indent + 2).lstrip()}' for k, v in obj.items()
        )
        return f"{pad}{{\n{items}\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        inner = ", ".join(dumps(v).strip() for v in seq)
        return f"{pad}[{inner}]"
    if isinstance(obj, bool):
        return pad + ("true" if obj else "false")
    if obj is None:
        return pad + "null"
    if isinstance(obj, (int, np.integer)):
        return pad + str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return pad + fmt(obj)
    return pad + json.dumps(obj)


def _matrix(value, rows: int, cols: int, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(path, f"not numeric: {exc}") from None
    if arr.ndim == 1:
        if arr.size != rows * cols:
            raise ProblemFileError(
                path, f"flat array of {arr.size} values cannot fill {rows}x{cols}"
            )
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise ProblemFileError(path, f"shape {arr.shape}, expected {(rows, cols)}")
    return arr


def _estimate(doc: dict, key: str, n: int) -> PartialEstimate:
    block = doc.get(key)
    if not isinstance(block, dict):
        raise ProblemFileError(key, "missing estimate block")
    for field in ("H", "x_hat", "P_hat"):
        if field not in block:
            raise ProblemFileError(f"{key}.{field}", "missing")
    h_raw = np.asarray(block["H"], dtype=float)
    p = h_raw.shape[0] if h_raw.ndim == 2 else h_raw.size // n
    h = _matrix(block["H"], p, n, f"{key}.H")
    x_hat = np.atleast_1d(np.asarray(block["x_hat"], dtype=float))
    if x_hat.shape != (p,):
        raise ProblemFileError(f"{key}.x_hat", f"length {x_hat.size}, expected {p}")
    p_hat = _matrix(block["P_hat"], p, p, f"{key}.P_hat")
    try:
        return PartialEstimate(h, x_hat, p_hat)
    except CiFusionError as exc:
        raise ProblemFileError(key, str(exc)) from None


def load_problem_file(path: str) -> tuple[FusionProblem, dict]:
    """Parse and validate a problem file; extras carry optional blocks."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ProblemFileError(path, str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ProblemFileError(path, f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "n" not in doc:
        raise ProblemFileError("n", "missing state dimension")
    try:
        n = int(doc["n"])
    except (TypeError, ValueError):
        raise ProblemFileError("n", f"not an integer: {doc['n']!r}") from None
    if n < 1:
        raise ProblemFileError("n", f"state dimension must be positive, got {n}")
    est1 = _estimate(doc, "est1", n)
    est2 = _estimate(doc, "est2", n)
    try:
        problem = FusionProblem(est1, est2)
    except CiFusionError as exc:
        raise ProblemFileError(
            "est1/est2", f"Assumption (A1) validation failed: {exc}"
        ) from None
    extras: dict = {}
    if "truth" in doc:
        t = doc["truth"]
        for field in ("P1", "P2", "P12"):
            if field not in t:
                raise ProblemFileError(f"truth.{field}", "missing")
        p1 = _matrix(t["P1"], problem.p1, problem.p1, "truth.P1")
        p2 = _matrix(t["P2"], problem.p2, problem.p2, "truth.P2")
        p12 = _matrix(t["P12"], problem.p1, problem.p2, "truth.P12")
        try:
            extras["truth"] = JointCovariance(p1, p12, p2)
        except CiFusionError as exc:
            raise ProblemFileError("truth", str(exc)) from None
    if "P_hat_override" in doc:
        extras["p_hat_override"] = _matrix(
            doc["P_hat_override"], n, n, "P_hat_override"
        )
    return problem, extras


def _result_to_json(result: FusionResult) -> dict:
    out = {
        "alpha": result.alpha,
        "K1": result.K1,
        "K2": result.K2,
        "P_hat": result.P_hat.data,
        "fused_x": result.fused_x,
        "cost_value": result.cost_value,
        "lmi_min_eig": result.diagnostics.get("lmi_min_eig"),
        "branch": result.diagnostics.get("branch"),
    }
    if result.diagnostics.get("branch") == "equal":
        out["note"] = "degenerate: any alpha optimal"
    return out


def _write_out(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_fuse(args) -> int:
    problem, _ = load_problem_file(args.file)
    result = solve_ci(problem, Cost(args.cost))
    _write_out(dumps(_result_to_json(result)) + "\n", args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    if args.grid < 2:
        raise ProblemFileError("--grid", "needs at least two points")
    problem, _ = load_problem_file(args.file)
    pair = SigmaPair.from_problem(problem)
    cost = Cost(args.cost)
    alphas = np.linspace(0.0, 1.0, args.grid)
    rows = ["alpha,cost,finite"]
    values = []
    for a in alphas:
        v = extended_cost(cost, a * pair.sigma1.data + (1.0 - a) * pair.sigma0.data)
        values.append(v)
        if math.isinf(v):
            rows.append(f"{fmt(a)},,0")
        else:
            rows.append(f"{fmt(a)},{fmt(v)},1")
    argmin = int(np.argmin(values))
    rows.append(f"# argmin,{fmt(alphas[argmin])},{fmt(values[argmin])}")
    _write_out("\n".join(rows) + "\n", args.out)
    return EXIT_OK


def _load_result_file(path: str, problem: FusionProblem) -> FusionResult:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ProblemFileError(path, str(exc)) from None
    n = problem.n
    k1 = _matrix(doc["K1"], n, problem.p1, "K1")
    k2 = _matrix(doc["K2"], n, problem.p2, "K2")
    p_hat = psd_certify(_matrix(doc["P_hat"], n, n, "P_hat"))
    fused_x = np.asarray(doc["fused_x"], dtype=float)
    return FusionResult(
        alpha=float(doc["alpha"]),
        K1=k1,
        K2=k2,
        P_hat=p_hat,
        fused_x=fused_x,
        cost_value=doc.get("cost_value"),
        diagnostics={"branch": doc.get("branch")},
    )


def cmd_verify(args) -> int:
    problem, extras = load_problem_file(args.file)
    if args.result:
        result = _load_result_file(args.result, problem)
    else:
        result = solve_ci(problem, Cost(args.cost))
    if "p_hat_override" in extras:
        result = FusionResult(
            alpha=result.alpha,
            K1=result.K1,
            K2=result.K2,
            P_hat=psd_certify(extras["p_hat_override"]),
            fused_x=result.fused_x,
            cost_value=result.cost_value,
            diagnostics=dict(result.diagnostics),
        )
    tol = verifier.certificate_tolerance(result)
    rows = []

    cert = verifier.lmi_certificate(result, problem, result.alpha)
    rows.append(("lmi", cert.passed, f"min_eig={fmt(cert.lmi_min_eig)}"))

    q1, q2 = verifier.q_pair(result, problem)
    if np.abs(q1).max() <= verifier.ZERO_Q_TOL or np.abs(q2).max() <= verifier.ZERO_Q_TOL:
        live = q2 if np.abs(q1).max() <= verifier.ZERO_Q_TOL else q1
        direct = result.P_hat.data - live @ live.T
        min_eig = float(np.linalg.eigvalsh(0.5 * (direct + direct.T))[0])
        rows.append(
            ("petersen(direct)", min_eig >= -tol, f"min_eig={fmt(min_eig)}")
        )
    else:
        eps = verifier.petersen_certificate(result, problem)
        if eps is None:
            rows.append(("petersen", False, "infeasible"))
        else:
            rows.append(("petersen", True, f"eps={fmt(eps)}"))

    worst_x = verifier.adversarial_x_search(result, problem, args.samples, args.seed)
    rows.append(("adversarial-x", worst_x <= tol, f"worst={fmt(worst_x)}"))

    worst_mc = verifier.monte_carlo_joint(result, problem, args.samples, args.seed)
    rows.append(("monte-carlo", worst_mc <= tol, f"worst={fmt(worst_mc)}"))

    if "truth" in extras:
        joint = extras["truth"]
        k = np.hstack([result.K1, result.K2])
        fused_true = k @ joint.assembled.data @ k.T
        rel = loewner_compare(result.P_hat.data, fused_true, 1e-8)
        rows.append(
            (
                "truth-joint",
                rel
                in (
                    LoewnerRelation.GREATER_EQUAL,
                    LoewnerRelation.STRICTLY_GREATER,
                    LoewnerRelation.EQUAL,
                ),
                f"relation={rel.value}",
            )
        )

    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    all_pass = all(ok for _, ok, _ in rows)
    print(f"verdict: {'all certificates pass' if all_pass else 'certificate failure'}")
    return EXIT_OK if all_pass else EXIT_CERT_FAIL


def cmd_known(args) -> int:
    problem, extras = load_problem_file(args.file)
    if "truth" not in extras:
        raise ProblemFileError("truth", "the known-cross command needs a truth block")
    joint = extras["truth"]
    result = optimal_fusion_known_cross(problem, joint)
    out = {
        "K_star": result.K_star,
        "P_star": result.P_star.data,
        "P_star_inv": np.linalg.inv(result.P_star.data),
    }
    full_state = (
        problem.p1 == problem.p2 == problem.n
        and np.allclose(problem.est1.h, np.eye(problem.n))
        and np.allclose(problem.est2.h, np.eye(problem.n))
    )
    if full_state:
        bsc = bar_shalom_campo(joint)
        residual = float(
            max(
                np.abs(bsc.K_star - result.K_star).max(),
                np.abs(bsc.P_star.data - result.P_star.data).max(),
            )
        )
        out["bsc"] = {
            "K1": bsc.K1,
            "K2": bsc.K2,
            "P_star": bsc.P_star.data,
            "agreement_residual": residual,
        }
    _write_out(dumps(out) + "\n", getattr(args, "out", None))
    return EXIT_OK


_SIM_PRESETS = {
    # two scalar observers of a planar state, unit variances
    "example1": NoiseSpec(h_list=[[[1.0, 0.0]], [[0.0, 1.0]]], p_list=[[[1.0]], [[1.0]]]),
    # both nodes observe the same direction: full rank is unreachable
    "collinear": NoiseSpec(h_list=[[[1.0, 0.0]], [[1.0, 0.0]]], p_list=[[[1.0]], [[1.0]]]),
}


def cmd_sim(args) -> int:
    spec = None
    n = args.state_dim
    if args.preset:
        spec = _SIM_PRESETS[args.preset]
        n = 2
        if args.nodes != 2:
            raise ProblemFileError("--nodes", f"preset {args.preset} needs 2 nodes")
    nodes, truth = init_network(n, args.nodes, args.seed, spec)
    schedule = make_schedule(args.topology, args.nodes, args.events, Cost(args.cost), args.seed)
    report = run_schedule(nodes, truth, schedule)
    _write_out(report.to_text(), args.out)
    return EXIT_OK if report.violations == 0 else EXIT_CERT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cifusion",
        description="Conservative fusion of partial state estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fuse = sub.add_parser("fuse", help="solve the optimal fusion problem")
    p_fuse.add_argument("file")
    p_fuse.add_argument("--cost", choices=["det", "trace"], default="det")
    p_fuse.add_argument("--out", default=None)
    p_fuse.set_defaults(func=cmd_fuse)

    p_scan = sub.add_parser("scan", help="tabulate the cost over a weight grid")
    p_scan.add_argument("file")
    p_scan.add_argument("--cost", choices=["det", "trace"], default="det")
    p_scan.add_argument("--grid", type=int, default=101)
    p_scan.add_argument("--out", default=None)
    p_scan.set_defaults(func=cmd_scan)

    p_verify = sub.add_parser("verify", help="run the conservativeness certificates")
    p_verify.add_argument("file")
    p_verify.add_argument("--cost", choices=["det", "trace"], default="det")
    p_verify.add_argument("--samples", type=int, default=1000)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--result", default=None, help="verify a stored fuse output")
    p_verify.set_defaults(func=cmd_verify)

    p_known = sub.add_parser("known", help="optimal fusion with known cross covariance")
    p_known.add_argument("file")
    p_known.add_argument("--out", default=None)
    p_known.set_defaults(func=cmd_known)

    p_sim = sub.add_parser("sim", help="run a distributed fusion simulation")
    p_sim.add_argument("--nodes", type=int, default=5)
    p_sim.add_argument("--topology", choices=["chain", "ring", "random"], default="ring")
    p_sim.add_argument("--events", type=int, default=20)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--cost", choices=["det", "trace"], default="det")
    p_sim.add_argument("--state-dim", type=int, default=4)
    p_sim.add_argument("--preset", choices=sorted(_SIM_PRESETS), default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProblemFileError, UnreachableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InternalInconsistencyError as exc:
        print(f"internal inconsistency: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except CiFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
