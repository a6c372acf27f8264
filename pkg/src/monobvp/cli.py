"""Command line interface.

    monobvp validate|audit|eigen|solve|oracle PROBLEM [options]
    monobvp corpus

PROBLEM is a JSON problem file or the name of a built-in problem
(``spherical_mm`` or ``corpus/spherical_mm.json``). Reports are JSON with
floats printed to 17 significant digits; mesh functions are CSV ``x,y,w``.

Exit codes: 0 success, 1 hypotheses infeasible, 2 solver invariant violation
or solver failure, 3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import corpus, expr
from .conditions import HypothesisError, audit
from .linear import LinearSolveError, MeshFunction
from .monotone import Infeasible, MonotoneError, solve
from .oracle import OracleError, oracle_lambda1, oracle_solve
from .problem import ProblemSpec, SchemaError, validate
from .quadrature import QuadratureError
from .spectral import EigenvalueNotFound, first_eigenvalue

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunConfig:
    subcommand: str
    input: Optional[str]
    out_dir: Path
    mesh_size: Optional[int] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    emit_steps: bool = False
    seed: int = 0


def dumps(obj, indent: int = 0) -> str:
    """JSON text with every float written as %.17g; NaN/inf become null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{dumps(str(k))}: {dumps(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else "null"
    import json

    return json.dumps(str(obj))


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")


def resolve_problem(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    name = path.stem if path.parent.name in ("corpus", "") else None
    if name in corpus.corpus_names():
        return corpus.corpus_path(name)
    raise FileNotFoundError(f"no such problem file or corpus entry: {arg}")


def _load(cfg: RunConfig) -> ProblemSpec:
    spec = ProblemSpec.from_json(resolve_problem(cfg.input))
    return spec.with_mesh(cfg.mesh_size) if cfg.mesh_size else spec


def _emit(cfg: RunConfig, name: str, payload) -> str:
    text = dumps(payload)
    _write(cfg.out_dir / name, text)
    print(text)
    return text


def cmd_validate(cfg):
    rep = validate(_load(cfg))
    _emit(cfg, "validation.json", rep.to_dict())
    return EXIT_OK if rep.ok else EXIT_INFEASIBLE


def cmd_audit(cfg):
    rep, _ = audit(_load(cfg))
    _emit(cfg, "report.json", rep.to_dict())
    if not rep.feasible:
        print(f"error: {rep.failure}", file=sys.stderr)
        for w in rep.warnings:
            print(f"  {w}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_eigen(cfg):
    est = first_eigenvalue(_load(cfg))
    _emit(cfg, "eigen.json", est.to_dict())
    return EXIT_OK


def cmd_solve(cfg):
    spec = _load(cfg)
    kwargs = {}
    if cfg.tol:
        kwargs["tol"] = cfg.tol
    if cfg.max_iter:
        kwargs["max_iter"] = cfg.max_iter
    try:
        res = solve(spec, **kwargs)
    except Infeasible as exc:
        _write(cfg.out_dir / "report.json", dumps(exc.report.to_dict()))
        print(f"error: {exc.report.failure}", file=sys.stderr)
        for w in exc.report.warnings:
            print(f"  {w}", file=sys.stderr)
        return EXIT_INFEASIBLE
    summary = res.summary()
    summary["seed"] = cfg.seed
    _write(cfg.out_dir / "report.json", dumps(res.report.to_dict()))
    _emit(cfg, "trace.json", summary)
    res.trace.u_tilde.to_csv(cfg.out_dir / "u_tilde.csv")
    res.trace.v_tilde.to_csv(cfg.out_dir / "v_tilde.csv")
    if cfg.emit_steps:
        steps = cfg.out_dir / "steps"
        steps.mkdir(parents=True, exist_ok=True)
        for n, (u, v) in enumerate(zip(res.trace.u_seq, res.trace.v_seq)):
            u.to_csv(steps / f"u_{n:03d}.csv")
            v.to_csv(steps / f"v_{n:03d}.csv")
    return EXIT_OK


def cmd_oracle(cfg):
    spec = _load(cfg)
    x = spec.nodes
    guess = MeshFunction(x, np.full_like(x, spec.bc.gamma1 / spec.bc.alpha1), np.zeros_like(x))
    sol = oracle_solve(spec, guess)
    sol.solution.to_csv(cfg.out_dir / "oracle_solution.csv")
    _emit(cfg, "oracle.json", {
        "oracle_lambda1": oracle_lambda1(spec),
        "oracle_newton_iterations": sol.newton_iterations,
        "oracle_residual": sol.residual,
        "oracle_nodes": len(sol.solution.nodes),
    })
    return EXIT_OK


def cmd_corpus(cfg):
    print(dumps(corpus.corpus_list()))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "audit": cmd_audit,
    "eigen": cmd_eigen,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "corpus": cmd_corpus,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monobvp", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name != "corpus":
            sp.add_argument("problem", help="problem JSON file or corpus name")
        sp.add_argument("--out", default=None, help="output directory (default $BVP_OUT or .)")
        sp.add_argument("--mesh-size", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None, help="iteration step tolerance")
        sp.add_argument("--max-iter", type=int, default=None)
        sp.add_argument("--emit-steps", action="store_true", help="write every iterate (solve)")
        sp.add_argument("--seed", type=int, default=0)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_IO
    out = Path(args.out or os.environ.get("BVP_OUT") or ".")
    cfg = RunConfig(args.subcommand, getattr(args, "problem", None), out, args.mesh_size,
                    args.tol, args.max_iter, args.emit_steps, args.seed)
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (SchemaError, expr.ExprError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (HypothesisError, QuadratureError, EigenvalueNotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (MonotoneError, LinearSolveError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
