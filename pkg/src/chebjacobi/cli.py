"""
Command-line front end.

Exit codes: 0 success, 2 non-convergence or divergence, 3 invalid
configuration, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import __version__
from .backend import make_backend
from .harness import (
    Experiment,
    convergence_order,
    format_ratio_table,
    ratio_table,
    read_records,
    run_experiment,
    run_single,
)
from .solver import CJM, JACOBI, REAL_ERROR, RESIDUAL, SolverError
from .spectral import bounds_for, schedule

EXIT_OK = 0
EXIT_NONCONVERGENCE = 2
EXIT_CONFIG = 3
EXIT_IO = 4

_STENCILS = ("5", "9", "17")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(choices):
    def parse(text):
        vals = [t.strip() for t in text.split(",") if t.strip()]
        bad = [v for v in vals if v not in choices]
        if bad or not vals:
            raise argparse.ArgumentTypeError(
                f"choose from {','.join(choices)}; got {text!r}"
            )
        return vals
    return parse


def _positive_n(text):
    n = int(text)
    if n < 8:
        raise argparse.ArgumentTypeError("n must be >= 8")
    return n


def _build_parser():
    p = _Parser(prog="chebjacobi", description="Chebyshev-Jacobi Poisson solver.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve the test problem once and write a JSON report")
    s.add_argument("--stencil", choices=_STENCILS, required=True)
    s.add_argument("--n", type=_positive_n, required=True)
    s.add_argument("--method", choices=(JACOBI, CJM), default=CJM)
    stop = s.add_mutually_exclusive_group()
    stop.add_argument("--tol", type=float, help="relative residual tolerance")
    stop.add_argument("--real-error", type=float, help="max-norm error tolerance")
    s.add_argument("--backend", choices=("serial", "parallel"), default="serial")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--max-cycles", type=int, default=100_000)
    s.add_argument("--trace", help="optional per-cycle convergence trace (CSV)")
    s.add_argument("--out", help="JSON report path (stdout if omitted)")

    b = sub.add_parser("bench", help="run the stencil x method x n matrix into a CSV")
    b.add_argument("--stencils", type=_str_list(_STENCILS), default=list(_STENCILS))
    b.add_argument("--methods", type=_str_list((JACOBI, CJM)), default=[JACOBI, CJM])
    b.add_argument("--n-list", type=_int_list, required=True)
    b.add_argument("--backends", type=_str_list(("serial", "parallel")), default=["serial"])
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--tol", type=float, default=None,
                   help="residual tolerance (default: resolution rule)")
    b.add_argument("--max-cycles", type=int, default=100_000)
    b.add_argument("--out", required=True)

    k = sub.add_parser("bounds", help="print kappa_min and kappa_max")
    k.add_argument("--stencil", choices=_STENCILS, required=True)
    k.add_argument("--n", type=_positive_n, required=True)

    w = sub.add_parser("schedule", help="print the cycle length and weights")
    w.add_argument("--stencil", choices=_STENCILS, required=True)
    w.add_argument("--n", type=_positive_n, required=True)
    w.add_argument("--tol", type=float, required=True)

    o = sub.add_parser("sweep-order", help="measure the order of accuracy")
    o.add_argument("--stencil", choices=_STENCILS, required=True)
    o.add_argument("--n-list", type=_int_list, required=True)
    o.add_argument("--safety", type=float, default=1e-2)
    o.add_argument("--out", required=True)

    r = sub.add_parser("ratios", help="print wall-time ratio tables from a bench CSV")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--n", type=int, required=True)
    return p


def _cmd_solve(a):
    if a.tol is not None and not 0 < a.tol < 1:
        raise ConfigError("--tol must lie in (0, 1)")
    if a.real_error is not None and not a.real_error > 0:
        raise ConfigError("--real-error must be positive")
    workers = a.workers if a.workers is not None else (1 if a.backend == "serial" else None)
    backend = make_backend(a.backend, workers)
    mode, tol = (REAL_ERROR, a.real_error) if a.real_error is not None else (RESIDUAL, a.tol)
    failure = None
    try:
        _, report, setup = run_single(a.stencil, a.n, a.method, mode, tol,
                                      max_cycles=a.max_cycles, backend=backend)
    except SolverError as err:
        report, setup, failure = err.report, 0.0, err
    finally:
        backend.shutdown()
    doc = {
        "config": {
            "stencil": f"{a.stencil}pt", "n": a.n, "method": a.method, "stop": mode,
            "tol": tol, "backend": a.backend, "workers": backend.workers,
        },
        "setup_time": setup,
        "report": report.to_dict(),
    }
    text = json.dumps(doc, indent=2)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if a.trace:
        report.write_trace(a.trace)
    print(f"{report.status}: {report.iterations} iterations, residual "
          f"{report.final_residual:.3e}, real error {report.final_real_error:.3e}",
          file=sys.stderr)
    return EXIT_NONCONVERGENCE if failure else EXIT_OK


def _cmd_bench(a):
    failed = False
    for backend in a.backends:
        if backend == "serial":
            workers = 1
        else:
            workers = a.workers or make_backend("parallel").workers
        for st in a.stencils:
            for m in a.methods:
                exp = Experiment(st, m, a.n_list, tol=a.tol, max_cycles=a.max_cycles,
                                 backend=backend, workers=workers, output=a.out)
                for rec in run_experiment(exp):
                    failed |= rec.status != "ok"
                    print(f"{rec.stencil:>4} {rec.method:<6} {rec.backend:<8} n={rec.n:<5} "
                          f"{rec.status:<13} it={rec.iterations:<8} t={rec.wall_time:.3f}s")
    return EXIT_NONCONVERGENCE if failed else EXIT_OK


def _cmd_bounds(a):
    b = bounds_for(a.stencil, a.n, a.n)
    print(f"kappa_min {b.kappa_min!r}")
    print(f"kappa_max {b.kappa_max!r}")
    return EXIT_OK


def _cmd_schedule(a):
    if not 0 < a.tol < 1:
        raise ConfigError("--tol must lie in (0, 1)")
    s = schedule(bounds_for(a.stencil, a.n, a.n), a.tol)
    print(f"M {s.m_count}")
    for m, w in enumerate(s.weights, 1):
        print(f"omega_{m} {float(w)!r}")
    return EXIT_OK


def _cmd_sweep_order(a):
    res = convergence_order(a.stencil, sorted(a.n_list), safety=a.safety)
    with open(a.out, "w", newline="") as fh:
        fh.write("#stencil,n,h,real_error,iterations\n")
        w = csv.writer(fh)
        for n, e, it in zip(res.n_list, res.errors, res.iterations):
            w.writerow([res.stencil, n, repr(1.0 / n), repr(e), it])
        fh.write(f"# slope {res.slope!r}\n")
    print(f"{res.stencil} slope {res.slope:.4f}")
    return EXIT_OK


def _cmd_ratios(a):
    tables = ratio_table(read_records(a.inp), a.n)
    print(format_ratio_table(tables, a.n))
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "bounds": _cmd_bounds,
    "schedule": _cmd_schedule,
    "sweep-order": _cmd_sweep_order,
    "ratios": _cmd_ratios,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SolverError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
