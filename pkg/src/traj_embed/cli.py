"""Command-line entry point: ``traj-embed <subcommand> ...``.

Exit codes: 0 success, 1 invalid input, 2 statistical FAIL, 3 non-erasing
model refused by ``reverse``, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import NoConvergence, NonConvergent, NotErasingError, TrajEmbedError

DEFAULT_SEED = 20240917
DEFAULT_RATE = 1.0

EXIT_OK, EXIT_INVALID, EXIT_FAIL, EXIT_NOT_ERASING, EXIT_NONCONVERGENT = 0, 1, 2, 3, 4

log = logging.getLogger("traj_embed")


def _fmt_matrix(M: np.ndarray, indent: str = "  ") -> str:
    cells = [[f"{z.real:+.6f}{z.imag:+.6f}j" for z in row] for row in np.asarray(M, dtype=complex)]
    width = max((len(c) for row in cells for c in row), default=0)
    return "\n".join(indent + "  ".join(c.rjust(width) for c in row) for row in cells)


def _distinct_paths(*paths) -> None:
    seen = {}
    for p in paths:
        if p is None:
            continue
        key = Path(p).resolve()
        if key in seen:
            raise ValueError(f"path {p} is used for two different files")
        seen[key] = p


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_embed(args) -> int:
    from .embedding import embed_process

    _distinct_paths(args.spec, args.out, args.report)
    spec = io.read_spec(args.spec)
    lb, report = embed_process(spec, ladder=args.ladder, pathway=args.pathway, rate=args.rate,
                               rank_tol=args.rank_tol)
    io.write_lindblad(args.out, lb)
    if args.report and report is not None:
        io.write_json(args.report, report.to_dict())
    print(f"memory dimension: {lb.dim}")
    print("H_eff =")
    print(_fmt_matrix(lb.H_eff))
    for x, J in lb.jumps.items():
        print(f"J[{x}] =")
        print(_fmt_matrix(J))
    if report is not None:
        worst = max(report.residuals.values())
        print(f"extrapolation residual (max): {worst:.3e}   ladder: {report.ladder}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .trajectory_engine import run_trajectory, simulate_ensemble, trajectory_seeds

    _distinct_paths(args.model, args.out, args.state_path)
    lb = io.read_lindblad(args.model)
    if (args.events is None) == (args.time is None):
        raise ValueError("give exactly one of --events and --time")
    ev = simulate_ensemble(lb, args.trajectories, args.seed, n_events=args.events, t_total=args.time,
                           threads=args.threads)
    if args.trajectories == 1:
        ev.traj = None
    io.write_events(args.out, ev)
    meta = dict(ev.metadata)
    meta.update({"events": len(ev), "truncated": ev.truncated, "model": str(args.model)})
    io.write_json(str(args.out) + ".meta.json", meta)
    if args.state_path:
        first = trajectory_seeds(args.seed, args.trajectories)[0]
        _, path = run_trajectory(lb, None, first, args.events, args.time)
        path.write_csv(args.state_path)
    note = " (truncated: survival plateau)" if ev.truncated else ""
    print(f"wrote {len(ev)} events from {args.trajectories} trajectories to {args.out}{note}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .analysis import validate_run

    spec = io.read_spec(args.spec)
    ev = io.read_events(args.events)
    report = validate_run(spec, ev, alpha=args.alpha, rate=args.rate)
    if args.report:
        io.write_json(args.report, report.to_dict())
    print(report.summary())
    return EXIT_OK if report.verdict == "PASS" else EXIT_FAIL


def cmd_measures(args) -> int:
    from .embedding import memory_basis
    from .process_core import DiscreteProcessSpec, classical_measures, validate_spec
    from .quantum_model import discrete_model, quantum_measures

    spec = validate_spec(io.read_spec(args.spec))
    classical = classical_measures(spec)
    if isinstance(spec, DiscreteProcessSpec):
        basis = discrete_model(spec, args.rank_tol).basis
    else:
        basis = memory_basis(spec, args.pathway, rank_tol=args.rank_tol)
    quantum = quantum_measures(basis, spec)

    def cell(v):
        return f"{v:>12.6f}" if v is not None else f"{'inf':>12}"

    print(f"{'flavor':<10} {'D (bits)':>12} {'C (bits)':>12}  divergent")
    for m in (classical, quantum):
        print(f"{m.flavor:<10} {cell(m.D)} {cell(m.C)}  {'yes' if m.divergent else 'no'}")
    if args.json:
        io.write_json(args.json, {
            m.flavor: {"D": m.D, "C": m.C, "divergent": m.divergent} for m in (classical, quantum)
        })
    return EXIT_OK


def cmd_reverse(args) -> int:
    from .reverse_map import extract_hsmm, is_erasing, NotErasing

    _distinct_paths(args.model, args.out)
    lb = io.read_lindblad(args.model)
    verdict = is_erasing(lb, args.tol)
    if isinstance(verdict, NotErasing):
        print(f"refused: jump {verdict.symbol!r} is not erasing "
              f"(sigma2/sigma1 = {verdict.ratio:.6e} >= {args.tol:g})")
        return EXIT_NOT_ERASING
    spec = extract_hsmm(lb, tol=args.tol, grid_points=args.grid_points, grid_max=args.grid_max)
    io.write_spec(args.out, spec)
    for g in spec.modes:
        for b in spec.branches[g]:
            print(f"{g:>6} -> {b.symbol:<6} T = {b.prob:.10f}  dwell: {type(b.dwell).__name__}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .embedding import DEFAULT_LADDER
    from .quantum_model import RANK_TOL
    from .reverse_map import ERASING_TOL

    p = argparse.ArgumentParser(prog="traj-embed", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("embed", help="build the Lindblad generator of a process spec")
    e.add_argument("spec")
    e.add_argument("--out", required=True)
    e.add_argument("--report", help="write the extrapolation report here")
    e.add_argument("--rate", type=float, default=DEFAULT_RATE,
                   help="event rate for discrete-time chains (ignored otherwise)")
    e.add_argument("--ladder", type=float, nargs="+", default=list(DEFAULT_LADDER))
    e.add_argument("--pathway", choices=["auto", "analytic", "numeric"], default="auto")
    e.add_argument("--rank-tol", type=float, default=RANK_TOL)
    e.set_defaults(func=cmd_embed)

    s = sub.add_parser("simulate", help="sample quantum-jump trajectories")
    s.add_argument("--model", required=True)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--events", type=int)
    s.add_argument("--time", type=float)
    s.add_argument("--trajectories", type=int, default=1)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--state-path")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="test an event log against a process spec")
    v.add_argument("--spec", required=True)
    v.add_argument("--events", required=True)
    v.add_argument("--alpha", type=float, default=0.01)
    v.add_argument("--rate", type=float, default=DEFAULT_RATE,
                   help="event rate when the process is a discrete chain (ignored otherwise)")
    v.add_argument("--report")
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("measures", help="classical and quantum memory costs")
    m.add_argument("--spec", required=True)
    m.add_argument("--pathway", choices=["auto", "analytic", "numeric"], default="auto")
    m.add_argument("--rank-tol", type=float, default=RANK_TOL)
    m.add_argument("--json")
    m.set_defaults(func=cmd_measures)

    r = sub.add_parser("reverse", help="semi-Markov spec from an erasing Lindblad")
    r.add_argument("--model", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--grid-max", type=float)
    r.add_argument("--grid-points", type=int, default=2001)
    r.add_argument("--tol", type=float, default=ERASING_TOL)
    r.set_defaults(func=cmd_reverse)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NonConvergent, NoConvergence) as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENT
    except NotErasingError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_NOT_ERASING
    except (TrajEmbedError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
