"""Command-line front end.

Subcommands
-----------
solve     load a Matrix Market bundle, run a CP-Krylov method, write ``x.mtx``,
          ``y.mtx`` and ``history.csv`` into ``--out``
gen       write a bundle from one of the generators
spectrum  eigenvalues of ``P^{-1} K`` for a bundle, as CSV
bench     toy interior-point benchmark over a seeded instance set

Exit codes: 0 converged (or success), 1 usage or I/O error, 2 iteration
limit reached, 3 breakdown, indefiniteness or a singular matrix.

Every CSV starts with a ``#`` manifest line listing the subcommand and all
option values, so identical flags give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings

import numpy as np

from .factor import SingularMatrixError
from .linops import (DimensionError, MatrixMarketError, as_storage, assemble_block_2x2,
                     read_matrix_market, read_vector, write_vector)
from .oracle import preconditioned_spectrum
from .problems import (FORMULATIONS, GenerationError, counterexample_system, gen_random_system,
                       toy_ip_solve, toy_qp_set, write_bundle)
from .saddle import AssumptionError, AssumptionWarning, RegularizedSaddleSystem
from .solvers import (BREAKDOWN, CONVERGED, INDEFINITE, MAX_ITERATIONS, METHODS,
                      SolverOptions, reg_cpkrylov)

__all__ = ["main", "build_parser", "cmd_solve", "cmd_gen", "cmd_spectrum", "cmd_bench",
           "EXIT_OK", "EXIT_USAGE", "EXIT_MAXIT", "EXIT_BREAKDOWN"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MAXIT = 2
EXIT_BREAKDOWN = 3

_STATUS_EXIT = {CONVERGED: EXIT_OK, MAX_ITERATIONS: EXIT_MAXIT,
                BREAKDOWN: EXIT_BREAKDOWN, INDEFINITE: EXIT_BREAKDOWN}
GEN_KINDS = ("random", "counterexample")


class UsageError(Exception):
    """Raised by the parser instead of exiting, so that usage errors map to exit 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_solver_flags(p):
    p.add_argument("--method", choices=METHODS, default="minres", help="Krylov method")
    p.add_argument("--atol", type=float, default=1e-8, help="absolute tolerance")
    p.add_argument("--rtol", type=float, default=1e-6, help="relative tolerance")
    p.add_argument("--maxit", type=int, default=None,
                   help="iteration limit (default 2(n+m))")
    p.add_argument("--mem", type=int, default=2, help="DQGMRES memory")
    p.add_argument("--restart", type=int, default=20, help="GMRES restart length")
    p.add_argument("--semi-refine", action="store_true", help="enable semi-refinement")
    p.add_argument("--refine-tol", type=float, default=1e-10,
                   help="relative residual target of iterative refinement")
    p.add_argument("--refine-max", type=int, default=2, help="maximum refinement steps")


def build_parser():
    """Return the argument parser for all subcommands."""
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="saddlekrylov", formatter_class=fmt,
                     description="Constraint-preconditioned Krylov solvers for "
                                 "regularized saddle-point systems.")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser, required=True)

    s = sub.add_parser("solve", formatter_class=fmt, help="solve a system from files")
    for name in ("A", "B", "C", "b1"):
        s.add_argument(f"--{name}", required=True, help=f"Matrix Market file for {name}")
    s.add_argument("--G", default=None, help="Matrix Market file for G (default diag(A))")
    s.add_argument("--b2", default=None, help="Matrix Market file for b2 (default zero)")
    _add_solver_flags(s)
    s.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("gen", formatter_class=fmt, help="write a generated bundle")
    g.add_argument("--kind", choices=GEN_KINDS, default="random", help="generator")
    g.add_argument("--n", type=int, default=10, help="number of primal unknowns")
    g.add_argument("--m", type=int, default=4, help="number of constraints")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--C-rank", type=int, default=None, help="rank of C (default m)")
    g.add_argument("--nonsymmetric", action="store_true", help="nonsymmetric A")
    g.add_argument("--b2", action="store_true", help="generate a nonzero b2")
    g.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("spectrum", formatter_class=fmt, help="eigenvalues of P^-1 K")
    for name in ("A", "B", "C"):
        e.add_argument(f"--{name}", required=True, help=f"Matrix Market file for {name}")
    e.add_argument("--G", default=None, help="Matrix Market file for G (default diag(A))")
    e.add_argument("--tol", type=float, default=1e-8, help="distance counted as 'at one'")
    e.add_argument("--out", required=True, help="output CSV file")

    b = sub.add_parser("bench", formatter_class=fmt, help="toy interior-point benchmark")
    b.add_argument("--count", type=int, default=5, help="number of instances")
    b.add_argument("--seed", type=int, default=0, help="instance-set seed")
    b.add_argument("--formulations", default=",".join(FORMULATIONS),
                   help="comma-separated subset of " + ",".join(FORMULATIONS))
    b.add_argument("--methods", default="cg,minres",
                   help="comma-separated subset of " + ",".join(METHODS))
    b.add_argument("--max-outer", type=int, default=50, help="outer iteration limit")
    b.add_argument("--tol", type=float, default=1e-6, help="scaled KKT tolerance")
    b.add_argument("--out", required=True, help="output CSV file")
    return parser


def _manifest(args):
    items = sorted((k, v) for k, v in vars(args).items() if k != "subcommand")
    return "# saddlekrylov " + args.subcommand + " " + " ".join(f"{k}={v}" for k, v in items)


def _write_csv(path, manifest, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(manifest + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _options(args):
    return SolverOptions(atol=args.atol, rtol=args.rtol, maxit=args.maxit, mem=args.mem,
                         restart=args.restart, semi_refine=args.semi_refine,
                         refine_tol=args.refine_tol, refine_max=args.refine_max)


def _load_blocks(args):
    A = read_matrix_market(args.A)
    B = read_matrix_market(args.B)
    C = read_matrix_market(args.C)
    G = None if args.G is None else read_matrix_market(args.G)
    return A, B, C, G


def _default_G(A):
    return as_storage(np.diag(A.toarray().diagonal()), symmetric=True)


def cmd_solve(args):
    """Solve a system read from Matrix Market files."""
    opts = _options(args)
    A, B, C, G = _load_blocks(args)
    b1 = read_vector(args.b1)
    b2 = None if args.b2 is None else read_vector(args.b2)
    system = RegularizedSaddleSystem(A, B, C, b1, b2)
    if G is None:
        G = _default_G(A)
    try:
        res = reg_cpkrylov(system, G, args.method, opts)
    except SingularMatrixError as exc:
        print(f"saddlekrylov: singular matrix: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except AssumptionError as exc:
        print(f"saddlekrylov: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    os.makedirs(args.out, exist_ok=True)
    write_vector(os.path.join(args.out, "x.mtx"), res.x)
    write_vector(os.path.join(args.out, "y.mtx"), res.y)
    est = int(res.history_is_estimate)
    rows = [(k, repr(float(h)), est) for k, h in enumerate(res.history)]
    _write_csv(os.path.join(args.out, "history.csv"), _manifest(args),
               ("iter", "seminorm_residual", "is_estimate"), rows)
    line = (f"{res.method}: {res.status} after {res.iterations} iterations, "
            f"relative residual {res.relative_residual:.3e}")
    print(line)
    if res.status != CONVERGED:
        print(f"saddlekrylov: {res.status}" + (f": {res.message}" if res.message else ""),
              file=sys.stderr)
    return _STATUS_EXIT[res.status]


def cmd_gen(args):
    """Write a Matrix Market bundle from a generator."""
    if args.kind == "counterexample":
        system = counterexample_system()
        G = _default_G(system.A.matrix)
    else:
        system, G = gen_random_system(args.n, args.m, args.seed, C_rank=args.C_rank,
                                      A_symmetric=not args.nonsymmetric, b2=args.b2)
    write_bundle(args.out, system, G, comment=_manifest(args)[2:])
    print(f"wrote {args.kind} bundle (n={system.n}, m={system.m}) to {args.out}")
    return EXIT_OK


def cmd_spectrum(args):
    """Write the eigenvalues of ``P^{-1} K`` and the count at one."""
    A, B, C, G = _load_blocks(args)
    if G is None:
        G = _default_G(A)
    K = assemble_block_2x2(A, B, C)
    P = assemble_block_2x2(as_storage(G, symmetric=True), B, C)
    try:
        rep = preconditioned_spectrum(P, K, tol=args.tol)
    except np.linalg.LinAlgError as exc:
        print(f"saddlekrylov: singular matrix: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    m = B.rows
    c = C.toarray()
    p = int(np.linalg.matrix_rank(c)) if m else 0
    eig = rep.eigenvalues[np.lexsort((rep.eigenvalues.imag, rep.eigenvalues.real))]
    rows = [(i, repr(float(v.real)), repr(float(v.imag))) for i, v in enumerate(eig)]
    manifest = _manifest(args) + f" count_near_one={rep.count_near_one} two_m_minus_p={2 * m - p}"
    _write_csv(args.out, manifest, ("index", "real", "imag"), rows)
    print(f"{rep.count_near_one} of {eig.size} eigenvalues within {args.tol:g} of one; "
          f"2m - p = {2 * m - p}")
    return EXIT_OK


def _split(value, allowed, what):
    items = [s.strip() for s in value.split(",") if s.strip()]
    bad = [s for s in items if s not in allowed]
    if bad:
        raise UsageError(f"unknown {what}: {', '.join(bad)}")
    if not items:
        raise UsageError(f"no {what} given")
    return items


def cmd_bench(args):
    """Run the toy interior-point method over an instance set."""
    forms = _split(args.formulations, FORMULATIONS, "formulation")
    methods = _split(args.methods, METHODS, "method")
    if args.count < 1:
        raise UsageError("the instance set is empty (--count must be positive)")
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        for qp in toy_qp_set(args.count, args.seed):
            for kind in forms:
                for method in methods:
                    rep = toy_ip_solve(qp, kind, method, max_outer=args.max_outer, tol=args.tol)
                    rows.append((qp.name, kind, method, rep.outer_it, rep.inner_it_total,
                                 int(rep.converged)))
    _write_csv(args.out, _manifest(args),
               ("name", "formulation", "method", "outer_it", "inner_it", "converged"), rows)
    done = sum(r[-1] for r in rows)
    print(f"{done} of {len(rows)} runs converged; summary in {args.out}")
    return EXIT_OK


_COMMANDS = {"solve": cmd_solve, "gen": cmd_gen, "spectrum": cmd_spectrum, "bench": cmd_bench}


def main(argv=None):
    """Entry point; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "maxit", None) is not None and args.maxit < 1:
            raise UsageError("--maxit must be at least 1")
        return _COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help exits through argparse with status 0
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (OSError, MatrixMarketError, DimensionError, GenerationError, ValueError) as exc:
        print(f"saddlekrylov: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
