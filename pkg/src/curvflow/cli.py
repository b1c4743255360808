"""Command-line interface: file ingestion, dispatch, and trace emission.

Commands cover the whole library surface: per-edge curvature tables,
the Ricci flow with its iteration trace, single resolvent solves,
separation flows, Ric_r bounds, Perron-Frobenius eigenvectors, chain
property verification, and the non-convergent counterexample chain.

Every JSON result embeds the full effective configuration (defaults and
waiver flags included), so identical configs and seeds reproduce
byte-identical outputs.  Iteration traces use a fixed CSV schema with
floats printed to 17 significant digits.

Exit codes: 0 success, 2 validation, 3 non-convergence, 4 precondition
unverified, 5 internal solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any

import numpy as np

from . import chains, curvature, plaplace, ricci_flow, separation
from .errors import PreconditionError, SolverError, ValidationError
from .graphs import (
    WeightedGraph,
    combinatorial_metric,
    laplacian_matrix,
    shortest_path_metric,
)

__all__ = ["parse_graph", "parse_partition", "emit_trace", "main"]

TRACE_HEADER = ("n,lambda_plus,lambda_minus,delta_sup,base_value,"
                "curvature_min,curvature_max,deleted_edge")
TRACE_KEYS = TRACE_HEADER.split(",")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_PRECONDITION = 4
EXIT_SOLVER = 5

SEED_ENV = "CURVFLOW_SEED"


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def parse_graph(path: str) -> WeightedGraph:
    """Load and validate the JSON graph format.

    Expected document: ``{"vertices": N, "edges": [{"u", "v", "w",
    "len"}, ...], "measure": [N floats]?}`` with 0 <= u < v < N, positive
    weights and lengths, no duplicate pairs, and a positive measure
    (default all 1.0).
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read graph file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: graph document must be a JSON object")
    n = doc.get("vertices")
    if not isinstance(n, int) or n < 1:
        raise ValidationError(f"{path}: 'vertices' must be a positive integer")
    edges = doc.get("edges")
    if not isinstance(edges, list):
        raise ValidationError(f"{path}: 'edges' must be an array")
    tuples = []
    for idx, e in enumerate(edges):
        if not isinstance(e, dict) or not {"u", "v", "w", "len"} <= set(e):
            raise ValidationError(
                f"{path}: edges[{idx}] needs fields u, v, w, len")
        u, v = e["u"], e["v"]
        if not (isinstance(u, int) and isinstance(v, int) and 0 <= u < v < n):
            raise ValidationError(
                f"{path}: edges[{idx}] must satisfy 0 <= u < v < {n}, "
                f"got u={u!r}, v={v!r}")
        tuples.append((u, v, float(e["w"]), float(e["len"])))
    measure = doc.get("measure")
    if measure is not None:
        if not isinstance(measure, list) or len(measure) != n:
            raise ValidationError(
                f"{path}: 'measure' must be an array of {n} numbers")
        if any(not isinstance(x, (int, float)) or x <= 0 for x in measure):
            raise ValidationError(f"{path}: 'measure' entries must be positive")
    try:
        return WeightedGraph.from_edges(n, tuples, measure=measure)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def parse_partition(path: str, g: WeightedGraph) -> separation.PartitionXKY:
    """Load ``{"X": [...], "K": [...], "Y": [...]}`` and validate it."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read partition file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not {"X", "K", "Y"} <= set(doc):
        raise ValidationError(f"{path}: partition needs arrays X, K, Y")
    try:
        return separation.PartitionXKY.build(g, doc["X"], doc["K"], doc["Y"])
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def emit_trace(rows: list[dict], fmt: str, path: str) -> None:
    """Write iteration trace rows in the fixed schema.

    CSV uses the exact header ``n,lambda_plus,...`` with empty fields
    where a column does not apply; JSON mirrors the same keys.
    """
    for idx, row in enumerate(rows):
        extra = set(row) - set(TRACE_KEYS)
        if extra:
            raise ValidationError(f"trace row {idx} has unknown fields {sorted(extra)}")
    try:
        if fmt == "csv":
            lines = [TRACE_HEADER]
            for row in rows:
                lines.append(",".join(_fmt(row.get(k)) for k in TRACE_KEYS))
            payload = "\n".join(lines) + "\n"
        elif fmt == "json":
            payload = _dump_json([{k: row.get(k) for k in TRACE_KEYS} for row in rows])
        else:
            raise ValidationError(f"unknown trace format {fmt!r}")
        with open(path, "w") as fh:
            fh.write(payload)
    except OSError as exc:
        raise ValidationError(f"cannot write trace to {path}: {exc}") from exc


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _engine_trace_rows(result: chains.IterationResult) -> list[dict]:
    return [{"n": r.n, "lambda_plus": r.lambda_plus,
             "lambda_minus": r.lambda_minus, "delta_sup": r.delta_sup,
             "base_value": r.base_value} for r in result.trace]


def _parse_vector(text: str | None, path: str | None, n: int,
                  default: np.ndarray | None = None) -> np.ndarray:
    if text is not None and path is not None:
        raise ValidationError("give the vector inline or as a file, not both")
    if text is not None:
        try:
            vec = np.array([float(t) for t in text.split(",")])
        except ValueError as exc:
            raise ValidationError(f"cannot parse vector {text!r}") from exc
    elif path is not None:
        with open(path) as fh:
            vec = np.asarray(json.load(fh), dtype=float)
    elif default is not None:
        return default
    else:
        raise ValidationError("a vector argument is required")
    if vec.shape != (n,):
        raise ValidationError(f"vector must have {n} entries, got {vec.shape[0]}")
    return vec


def _make_operator(spec: str, g: WeightedGraph | None) -> chains.ChainOperator:
    """Built-in operator factory for the ric/verify/separation commands.

    Specs: identity, shift:<c>, scale:<a>, counterexample:<eps0>,
    linear:<matrix.json>, pf:<matrices.json>, lazy-walk:<eps> (graph),
    resolvent:<p>,<eps> (graph).
    """
    kind, _, arg = spec.partition(":")
    if kind == "identity":
        n = _need_graph(g, kind).n
        return chains.linear_chain_operator(np.eye(n), name="identity")
    if kind == "shift":
        n = _need_graph(g, kind).n
        c = float(arg or 1.0)
        return chains.ChainOperator(dimension=n, apply=lambda f, c=c: f + c,
                                    declared={"monotone": None,
                                              "constant-additive": None,
                                              "non-expansive": None},
                                    name=f"shift({c:g})")
    if kind == "scale":
        n = _need_graph(g, kind).n
        a = float(arg or 2.0)
        return chains.ChainOperator(dimension=n, apply=lambda f, a=a: a * f,
                                    name=f"scale({a:g})")
    if kind == "counterexample":
        return chains.counterexample_operator(float(arg or 0.01))
    if kind == "linear":
        with open(arg) as fh:
            return chains.linear_chain_operator(np.asarray(json.load(fh), dtype=float))
    if kind == "pf":
        return chains.perron_frobenius_operator(_load_matrices(arg))
    if kind == "lazy-walk":
        graph = _need_graph(g, kind)
        eps = float(arg or 0.1)
        M = np.eye(graph.n) + eps * laplacian_matrix(graph)
        if np.any(np.diag(M) <= 0):
            raise ValidationError(f"lazy-walk eps {eps:g} makes a diagonal entry nonpositive")
        return chains.linear_chain_operator(M, name=f"lazy-walk({eps:g})")
    if kind == "resolvent":
        graph = _need_graph(g, kind)
        parts = arg.split(",") if arg else []
        p = float(parts[0]) if parts else 2.0
        eps = float(parts[1]) if len(parts) > 1 else 0.1
        return chains.ChainOperator(
            dimension=graph.n,
            apply=lambda f: plaplace.resolvent(graph, f, p, eps).g,
            declared={"monotone": None, "constant-additive": None,
                      "non-expansive": None},
            name=f"resolvent(p={p:g}, eps={eps:g})")
    raise ValidationError(f"unknown operator spec {spec!r}")


def _need_graph(g: WeightedGraph | None, kind: str) -> WeightedGraph:
    if g is None:
        raise ValidationError(f"operator {kind!r} needs a graph argument")
    return g


def _load_matrices(path: str) -> list[np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    mats = doc["matrices"] if isinstance(doc, dict) else doc
    return [np.asarray(m, dtype=float) for m in mats]


# ---------------------------------------------------------------------------
# command handlers: each returns (exit_code, result dict, trace rows)


def _cmd_curvature(args) -> tuple[int, dict, list[dict]]:
    g = parse_graph(args.graph)
    kinds = args.kinds.split(",")
    known = {"ollivier", "alpha", "lly", "phi-convex", "phi-concave"}
    unknown = set(kinds) - known
    if unknown:
        raise ValidationError(f"unknown curvature kinds: {sorted(unknown)}")
    d = shortest_path_metric(g)
    d0 = combinatorial_metric(g)
    table = []
    for u, v in g.edges():
        row: dict[str, Any] = {"u": u, "v": v}
        for kind in kinds:
            try:
                if kind == "ollivier":
                    row["kappa"] = curvature.ollivier_kappa(g, d, u, v)
                elif kind == "alpha":
                    row["kappa_alpha"] = curvature.kappa_alpha(g, d, u, v, args.alpha)
                elif kind == "lly":
                    row["kappa_lly"] = curvature.kappa_lly(g, d, u, v)
                elif kind == "phi-convex":
                    row["khat_convex"] = curvature.modified_kappa_phi(g, u, v, "convex", d0)
                elif kind == "phi-concave":
                    row["khat_concave"] = curvature.modified_kappa_phi(g, u, v, "concave", d0)
            except SolverError as exc:
                row[f"{kind}_error"] = str(exc)
        table.append(row)
    return EXIT_OK, {"edges": table}, []


def _cmd_flow(args) -> tuple[int, dict, list[dict]]:
    g = parse_graph(args.graph)
    cfg = ricci_flow.FlowConfig(alpha=args.alpha,
                                deletion_threshold=args.threshold,
                                tolerance=args.tol,
                                max_iterations=args.max_iter)
    result = ricci_flow.run_flow(g, cfg)
    rows = []
    for r in result.final.trace:
        rows.append({
            "n": r.n, "lambda_plus": r.lambda_plus, "lambda_minus": r.lambda_minus,
            "delta_sup": r.delta_sup,
            "curvature_min": r.kappa.min, "curvature_max": r.kappa.max,
            "deleted_edge": ";".join(f"{u}-{v}" for u, v in r.deleted_edges) or None,
        })
    final_spread = (result.final.trace[-1].kappa.max_spread
                    if result.final.trace else 0.0)
    payload = {
        "status": result.status,
        "iterations": result.final.iteration,
        "limits": {str(root): {f"{u}-{v}": val for (u, v), val in lim.items()}
                   for root, lim in result.limits.items()},
        "growth_rate": {str(k): v for k, v in result.growth_rate.items()},
        "final_curvature_spread": final_spread,
        "deletions": [{"iteration": it, "edge": f"{u}-{v}",
                       "length": ln, "shortest_adjacent": adj}
                      for it, (u, v), (ln, adj) in result.final.deletion_log],
    }
    code = EXIT_OK if result.status == ricci_flow.STATUS_CONVERGED else EXIT_NONCONVERGENCE
    return code, payload, rows


def _cmd_resolvent(args) -> tuple[int, dict, list[dict]]:
    g = parse_graph(args.graph)
    f = _parse_vector(args.f, args.f_file, g.n)
    sol = plaplace.resolvent(g, f, args.p, args.eps)
    payload = {"g": sol.g, "residual": sol.residual, "method": sol.method,
               "iterations": sol.iterations}
    if sol.subgradient_selection is not None:
        payload["subgradient_selection"] = sol.subgradient_selection
    return EXIT_OK, payload, []


def _cmd_separation(args) -> tuple[int, dict, list[dict]]:
    g = parse_graph(args.graph)
    part = parse_partition(args.partition, g)
    f0 = _parse_vector(args.f0, None, len(part.k_set),
                       default=np.zeros(len(part.k_set)))
    if args.mode == "linear":
        res = separation.separation_flow_linear(
            g, part, args.eps, f0, args.x0, args.tol,
            max_iter=args.max_iter, waive_curvature=args.waive_curvature)
        payload = {
            "status": res.status, "iterations": res.iterations,
            "laplacian_constant": res.laplacian_constant,
            "spread_on_k": res.spread_on_k,
            "sign_min_x": res.sign_min_x, "sign_max_y": res.sign_max_y,
            "g_on_k": res.g_on_k, "extension": res.extension,
            "curvature_verified": res.curvature_verified, "waived": res.waived,
        }
        rows = _engine_trace_rows(res.engine)
        code = EXIT_OK if res.status == chains.CONVERGED else EXIT_NONCONVERGENCE
        return code, payload, rows
    if args.mode == "p":
        res = separation.separation_flow_p(
            g, part, args.p, args.eps, f0, args.x0, args.tol,
            max_iter=args.max_iter, waive_curvature=args.waive_curvature)
        payload = {
            "status": res.status, "constant": res.constant,
            "spread_on_k": res.spread_on_k,
            "sign_min_x": res.sign_min_x, "sign_max_y": res.sign_max_y,
            "h": res.h, "g_sub": res.g_sub,
            "stages": res.stages,
            "defect_bound_coefficient": res.defect_bound_coefficient,
            "curvature_verified": res.curvature_verified, "waived": res.waived,
        }
        code = EXIT_OK if res.status == chains.CONVERGED else EXIT_NONCONVERGENCE
        return code, payload, []
    # generic
    P = _make_operator(args.operator, g)
    d = shortest_path_metric(g)
    res = separation.separation_flow_generic(
        P, part, d, f0, args.x0, args.tol, max_iter=args.max_iter,
        ric_samples=args.samples, seed=args.seed,
        allow_unverified=args.allow_unverified)
    payload = {
        "status": res.status, "iterations": res.iterations,
        "constant": res.laplacian_constant, "spread_on_k": res.spread_on_k,
        "sign_min_x": res.sign_min_x, "sign_max_y": res.sign_max_y,
        "g_on_k": res.g_on_k, "extension": res.extension,
        "ric_verified": res.curvature_verified, "waived": res.waived,
    }
    rows = _engine_trace_rows(res.engine)
    code = EXIT_OK if res.status == chains.CONVERGED else EXIT_NONCONVERGENCE
    return code, payload, rows


def _cmd_ric(args) -> tuple[int, dict, list[dict]]:
    g = parse_graph(args.graph)
    P = _make_operator(args.operator, g)
    d = shortest_path_metric(g)
    bounds = separation.ric_r(P, d, args.r, n_samples=args.samples, seed=args.seed)
    payload = {"lower": bounds.lower, "upper": bounds.upper,
               "sampled_amplification": bounds.sampled_amplification,
               "exact": bounds.exact, "operator": P.name}
    return EXIT_OK, payload, []


def _cmd_pf(args) -> tuple[int, dict, list[dict]]:
    mats = _load_matrices(args.matrices)
    P = chains.perron_frobenius_operator(mats)
    f0 = _parse_vector(args.f0, None, P.dimension, default=np.zeros(P.dimension))
    result = chains.iterate_normalized(P, f0, args.x0, args.tol, args.max_iter)
    payload: dict[str, Any] = {"status": result.status,
                               "iterations": result.iterations}
    if result.converged:
        v = np.exp(result.limit)
        factor = float(np.exp(2.0 * result.growth_constant))
        stack = np.stack(mats)
        residual = float(np.max(np.abs(np.min(stack @ v, axis=0) - factor * v)))
        payload.update({"g": result.limit, "eigenvector": v,
                        "growth_constant": result.growth_constant,
                        "eigenvalue_factor": factor,
                        "eigen_residual": residual})
    code = EXIT_OK if result.converged else EXIT_NONCONVERGENCE
    return code, payload, _engine_trace_rows(result)


def _cmd_verify(args) -> tuple[int, dict, list[dict]]:
    g = parse_graph(args.graph) if args.graph else None
    P = _make_operator(args.operator, g)
    report = chains.verify_properties(P, n_samples=args.samples,
                                      magnitude=args.magnitude, seed=args.seed)
    payload = {
        "operator": P.name, "seed": report.seed,
        "n_samples": report.n_samples,
        "conditions": {
            str(c): {"name": r.name, "passed": r.passed, "checked": r.checked,
                     "failures": r.failures, "estimate": r.estimate,
                     "first_counterexample": r.first_counterexample}
            for c, r in report.conditions.items()},
    }
    return EXIT_OK, payload, []


def _cmd_counterexample(args) -> tuple[int, dict, list[dict]]:
    P = chains.counterexample_operator(args.eps0)
    f0 = np.array([0.0, 0.0, -args.eps0, args.eps0])
    diffs = []
    f = f0.copy()
    for _ in range(args.steps):
        f = P(f)
        diffs.append(float(f[2] - f[3]))
    result = chains.iterate_normalized(P, f0, 0, args.tol, args.steps)
    payload = {"status": result.status, "iterations": result.iterations,
               "eps0": args.eps0, "x3_minus_x4": diffs}
    # oscillation is this chain's expected behavior, not a failure
    code = EXIT_OK if result.status == chains.OSCILLATING else EXIT_NONCONVERGENCE
    return code, payload, _engine_trace_rows(result)


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvflow",
        description="curvature flows and nonlinear Markov chains on finite graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    default_seed = int(os.environ.get(SEED_ENV, "0"))

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--output", "-o", help="write the JSON result here (default stdout)")
        p.add_argument("--trace", help="write the per-iteration trace here")
        p.add_argument("--format", choices=("json", "csv"), default="csv",
                       help="trace file format (default csv)")
        p.add_argument("--seed", type=int, default=default_seed,
                       help=f"random seed (default ${SEED_ENV} or 0)")

    p = sub.add_parser("curvature", help="per-edge curvature table")
    p.add_argument("graph")
    p.add_argument("--kinds", default="ollivier",
                   help="comma list: ollivier,alpha,lly,phi-convex,phi-concave")
    p.add_argument("--alpha", type=float, default=0.5)
    common(p)
    p.set_defaults(handler=_cmd_curvature)

    p = sub.add_parser("flow", help="Ricci flow with edge deletion")
    p.add_argument("graph")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=None,
                   help="deletion threshold C (default: 2x initial adjacent ratio)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000)
    common(p)
    p.set_defaults(handler=_cmd_flow)

    p = sub.add_parser("resolvent", help="single p-Laplace resolvent solve")
    p.add_argument("graph")
    p.add_argument("--f", help="comma-separated vertex values")
    p.add_argument("--f-file", help="JSON array of vertex values")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--eps", type=float, default=0.1)
    common(p)
    p.set_defaults(handler=_cmd_resolvent)

    p = sub.add_parser("separation", help="Laplacian separation flows")
    p.add_argument("graph")
    p.add_argument("partition")
    p.add_argument("--mode", choices=("linear", "p", "generic"), default="linear")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--f0", help="comma-separated initial values on K")
    p.add_argument("--x0", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--waive-curvature", action="store_true")
    p.add_argument("--allow-unverified", action="store_true")
    p.add_argument("--operator", default="lazy-walk:0.1",
                   help="chain operator for generic mode")
    p.add_argument("--samples", type=int, default=32, help="Ric_1 gate samples")
    common(p)
    p.set_defaults(handler=_cmd_separation)

    p = sub.add_parser("ric", help="Ric_r bounds of a chain")
    p.add_argument("graph")
    p.add_argument("--operator", default="lazy-walk:0.1")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=64)
    common(p)
    p.set_defaults(handler=_cmd_ric)

    p = sub.add_parser("pf", help="Perron-Frobenius eigenvector via the log chain")
    p.add_argument("matrices", help="JSON file with a list of matrices")
    p.add_argument("--f0", help="comma-separated initial log values")
    p.add_argument("--x0", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-iter", type=int, default=100_000)
    common(p)
    p.set_defaults(handler=_cmd_pf)

    p = sub.add_parser("verify", help="check chain conditions (1)-(7)")
    p.add_argument("--operator", required=True)
    p.add_argument("--graph", default=None)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--magnitude", type=float, default=1.0)
    common(p)
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("counterexample",
                       help="run the non-convergent oscillating chain")
    p.add_argument("--eps0", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)
    common(p)
    p.set_defaults(handler=_cmd_counterexample)

    return parser


def _effective_config(args: argparse.Namespace) -> dict:
    skip = {"handler", "output", "trace"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    rows: list[dict] = []
    code = EXIT_OK
    payload: dict = {}
    error: str | None = None
    try:
        code, payload, rows = args.handler(args)
    except ValidationError as exc:
        code, error = EXIT_VALIDATION, str(exc)
    except PreconditionError as exc:
        code, error = EXIT_PRECONDITION, str(exc)
    except SolverError as exc:
        code, error = EXIT_SOLVER, str(exc)
    finally:
        # flush whatever trace exists, even on failure
        if args.trace and rows is not None:
            try:
                emit_trace(rows, args.format, args.trace)
            except ValidationError as exc:
                print(f"trace: {exc}", file=sys.stderr)

    doc = {"command": args.command, "config": _effective_config(args),
           "results": _jsonable(payload)}
    if error is not None:
        doc["error"] = error
    text = _dump_json(doc)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
