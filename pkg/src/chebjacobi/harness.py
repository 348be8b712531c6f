"""
Benchmark harness for the manufactured Poisson problem

    Laplace(u) = -(x^2 + y^2) exp(x y)  on  [0, 1]^2,   u = -exp(x y).

Runs solver configurations over grid sizes, measures observed order of
accuracy and builds wall-time ratio tables. Timings exclude problem setup
(grid, fields, compiled stencil, weight schedule), which is reported
separately as ``setup_time``.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backend import Backend, make_backend
from .grid import CARTESIAN, Field, Grid, fill_dirichlet, make_uniform_grid
from .solver import (
    CJM,
    JACOBI,
    MAX_ITERS,
    REAL_ERROR,
    RESIDUAL,
    Method,
    SolveReport,
    SolverError,
    StopRule,
    solve,
    tolerance_for,
)
from .spectral import bounds_for, schedule
from .stencil import compile, stencil_by_name

__all__ = [
    "exact_solution",
    "source",
    "setup_test_problem",
    "Experiment",
    "BenchRecord",
    "run_single",
    "run_experiment",
    "write_records",
    "append_records",
    "read_records",
    "OrderResult",
    "convergence_order",
    "ratio_table",
    "format_ratio_table",
    "RATIO_LABELS",
]


def exact_solution(x, y):
    return -np.exp(x * y)


def source(x, y):
    return -(x * x + y * y) * np.exp(x * y)


def setup_test_problem(grid: Grid):
    """Right-hand side, initial guess and exact solution on ``grid``.

    ``b`` holds the source at every stored node (ghosts too, so stencils
    with right-hand-side weights can use them); ``u0`` is zero on the
    unknowns with the exact solution in its ghost ring.
    """
    if grid.coords.kind != CARTESIAN:
        raise ValueError("the test problem is posed on a Cartesian grid")
    b = grid.sample(source)
    u0 = fill_dirichlet(grid.zeros(), exact_solution)
    return b, u0, exact_solution


def _stencil_name(s) -> str:
    s = str(s)
    return s if s.endswith("pt") else f"{s}pt"


@dataclass
class Experiment:
    """A family of solves differing only in grid size.

    ``tol`` is the stopping tolerance; ``None`` means the resolution rule
    ``tolerance_for(n) * safety``. CJM schedules always target
    ``tolerance_for(n) * safety`` per cycle.
    """

    stencil: str
    method: str
    n_list: list
    stop_mode: str = RESIDUAL
    tol: float | None = None
    safety: float = 1.0
    max_cycles: int = 100_000
    check_every: int = 16
    backend: str = "serial"
    workers: int = 1
    output: str | None = None
    experiment_id: str | None = None

    def __post_init__(self):
        self.stencil = _stencil_name(self.stencil)
        stencil_by_name(self.stencil)
        if self.method not in (JACOBI, CJM):
            raise ValueError(f"unknown method {self.method!r}")
        self.n_list = [int(n) for n in self.n_list]
        if not self.n_list or self.n_list != sorted(self.n_list) or self.n_list[0] < 8:
            raise ValueError("n_list must be non-empty, ascending and >= 8")
        if self.stop_mode not in (RESIDUAL, REAL_ERROR, MAX_ITERS):
            raise ValueError(f"unknown stop mode {self.stop_mode!r}")
        if self.backend not in ("serial", "parallel"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.experiment_id is None:
            self.experiment_id = f"{self.stencil}-{self.method}-{self.backend}"


@dataclass
class BenchRecord:
    experiment_id: str
    n: int
    method: str
    stencil: str
    backend: str
    workers: int
    m_count: int
    iterations: int
    cycles: int
    wall_time: float
    setup_time: float
    final_residual: float
    final_real_error: float | None
    status: str = "ok"


_FIELDS = [f.name for f in dataclasses.fields(BenchRecord)]
_INTS = {"n", "workers", "m_count", "iterations", "cycles"}
_FLOATS = {"wall_time", "setup_time", "final_residual", "final_real_error"}


def run_single(stencil: str, n: int, method: str = CJM, stop_mode: str = RESIDUAL,
               tol: float | None = None, safety: float = 1.0, max_cycles: int = 100_000,
               check_every: int = 16, backend: Backend | None = None,
               schedule_tol: float | None = None, stagnation: float | None = None):
    """Set up and solve the test problem once.

    ``tol`` defaults to ``tolerance_for(n) * safety``; the CJM per-cycle
    damping target ``schedule_tol`` defaults to the same value.

    Returns
    -------
    u : Field
    report : SolveReport
    setup_time : float
    """
    t0 = time.perf_counter()
    mask = stencil_by_name(stencil)
    grid = make_uniform_grid(n, ghost=mask.reach)
    st = compile(mask, grid)
    b, u0, exact = setup_test_problem(grid)
    eps = tolerance_for(n) * safety
    if tol is None:
        tol = eps
    if method == CJM:
        meth = Method.cjm(schedule(bounds_for(st), eps if schedule_tol is None else schedule_tol))
    elif method == JACOBI:
        meth = Method.jacobi(check_every=check_every)
    else:
        raise ValueError(f"unknown method {method!r}")
    stop = StopRule(stop_mode, tol if stop_mode != MAX_ITERS else 0.0, exact, max_cycles,
                    stagnation if stop_mode == RESIDUAL else None)
    setup = time.perf_counter() - t0
    u, report = solve(st, u0, b, meth, stop, backend)
    return u, report, setup


def _record(exp: Experiment, n: int, report: SolveReport, setup: float, status: str) -> BenchRecord:
    return BenchRecord(
        experiment_id=exp.experiment_id, n=n, method=exp.method, stencil=exp.stencil,
        backend=exp.backend, workers=exp.workers, m_count=report.m_count,
        iterations=report.iterations, cycles=report.cycles,
        wall_time=report.wall_time, setup_time=setup,
        final_residual=report.final_residual, final_real_error=report.final_real_error,
        status=status,
    )


def run_experiment(exp: Experiment) -> list[BenchRecord]:
    """Solve for every ``n`` in the experiment.

    A failed solve is recorded with its status and the run moves on. When
    ``exp.output`` is set each record is appended to that CSV as soon as it
    is available; an I/O error aborts with earlier records preserved.
    """
    backend = make_backend(exp.backend, exp.workers)
    records = []
    try:
        for n in exp.n_list:
            try:
                _, report, setup = run_single(
                    exp.stencil, n, exp.method, exp.stop_mode, exp.tol, exp.safety,
                    exp.max_cycles, exp.check_every, backend,
                )
                status = "ok"
            except SolverError as err:
                report, setup, status = err.report, 0.0, err.report.status
            rec = _record(exp, n, report, setup, status)
            records.append(rec)
            if exp.output:
                append_records(exp.output, [rec])
    finally:
        backend.shutdown()
    return records


def _fmt(name, value):
    if value is None:
        return ""
    if name in _FLOATS:
        return repr(float(value))
    return str(value)


def _parse(name, text):
    if name in _INTS:
        return int(text)
    if name in _FLOATS:
        return None if text == "" else float(text)
    return text


def write_records(path, records):
    """Write records as CSV atomically (temp file then rename).

    The header line starts with ``#`` so plotting tools skip it.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write("#" + ",".join(_FIELDS) + "\n")
            w = csv.writer(fh)
            for r in records:
                w.writerow([_fmt(k, getattr(r, k)) for k in _FIELDS])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_records(path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '#' header line")
    header = lines[0][1:].split(",")
    out = []
    for row in csv.reader(lines[1:]):
        if not row:
            continue
        rec = dict(zip(header, row))
        out.append(BenchRecord(**{k: _parse(k, rec[k]) for k in _FIELDS}))
    return out


def append_records(path, records):
    existing = read_records(path) if os.path.exists(path) else []
    write_records(path, existing + list(records))


@dataclass
class OrderResult:
    stencil: str
    slope: float
    n_list: list
    errors: list
    iterations: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    last_change: list = field(default_factory=list)

    @property
    def h(self):
        return [1.0 / n for n in self.n_list]


def convergence_order(stencil, n_list, stop: StopRule | None = None, safety: float = 1e-2,
                      backend: Backend | None = None, stagnation: float | None = 0.5) -> OrderResult:
    """Observed order of accuracy of a stencil on the test problem.

    Each size is solved with CJM down to ``safety * tolerance_for(n)``
    relative residual (or with ``stop`` if given), and the least-squares
    slope of ``log(real error)`` against ``log(h)`` is returned.

    On fine grids that tolerance can sit below the round-off floor of the
    residual; a run whose residual stops halving per cycle then ends as
    ``"stagnated"`` rather than spinning to ``max_cycles``. ``statuses``
    and ``last_change`` (relative change of the real error over the final
    cycle) let callers confirm the iteration error is negligible.

    Raises
    ------
    NonConvergenceError
        If any run neither meets its tolerance nor stagnates.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("need at least three grid sizes")
    name = _stencil_name(stencil)
    res = OrderResult(name, float("nan"), n_list, [])
    for n in n_list:
        if stop is None:
            _, rep, _ = run_single(name, n, CJM, RESIDUAL, None, safety, backend=backend,
                                   stagnation=stagnation)
        else:
            mode, tol = stop.mode, (stop.tol if stop.mode != MAX_ITERS else None)
            _, rep, _ = run_single(name, n, CJM, mode, tol, safety, stop.max_cycles,
                                   backend=backend, stagnation=stop.stagnation)
        res.errors.append(rep.final_real_error)
        res.iterations.append(rep.iterations)
        res.statuses.append(rep.status)
        e = rep.error_history
        res.last_change.append(abs(e[-1] - e[-2]) / e[-1] if len(e) > 1 and e[-1] else 0.0)
    res.slope = float(np.polyfit(np.log(res.h), np.log(res.errors), 1)[0])
    return res


RATIO_LABELS = ("j", "j_parallel", "cj", "cj_parallel")


def _label(rec: BenchRecord) -> str:
    base = "j" if rec.method == JACOBI else "cj"
    return base + ("_parallel" if rec.backend == "parallel" else "")


def ratio_table(records, n: int) -> dict:
    """Wall-time speed-up tables at grid size ``n``, one per stencil.

    ``table[stencil][row][col]`` is ``time(col) / time(row)``: how many
    times faster the row method is than the column method. Only the lower
    triangle (``col`` listed no later than ``row``) is filled.

    Raises
    ------
    ValueError
        Listing every missing (stencil, method) cell.
    """
    times: dict = {}
    for r in records:
        if r.n == n and r.status == "ok":
            times.setdefault(r.stencil, {})[_label(r)] = r.wall_time
    if not times:
        raise ValueError(f"no successful records at n = {n}")
    missing = [f"{s}:{lab}" for s in sorted(times) for lab in RATIO_LABELS if lab not in times[s]]
    if missing:
        raise ValueError("missing ratio cells: " + ", ".join(missing))
    out = {}
    for s, t in times.items():
        tab = {}
        for i, row in enumerate(RATIO_LABELS):
            tab[row] = {col: t[col] / t[row] for col in RATIO_LABELS[: i + 1]}
        out[s] = tab
    return out


def format_ratio_table(tables: dict, n: int) -> str:
    """Plain-text rendering of :func:`ratio_table` output."""
    lines = [f"# speed-up of row method over column method, n = {n}, measured locally"]
    width = max(len(x) for x in RATIO_LABELS) + 2
    for s in sorted(tables, key=lambda k: int(k.removesuffix("pt"))):
        lines.append("")
        lines.append(s.ljust(width) + "".join(c.rjust(width) for c in RATIO_LABELS))
        for row in RATIO_LABELS:
            cells = []
            for col in RATIO_LABELS:
                v = tables[s][row].get(col)
                cells.append(("-" if v is None else f"{v:.3g}").rjust(width))
            lines.append(row.ljust(width) + "".join(cells))
    return "\n".join(lines)
