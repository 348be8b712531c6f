"""
Weighted Jacobi and Chebyshev-Jacobi iterations.

A CJM cycle applies the schedule's ``M`` weights once each; the stopping
rule is only evaluated between complete cycles because intermediate
iterates of a Chebyshev cycle may transiently grow. Plain Jacobi is run in
blocks of ``check_every`` sweeps, each block counting as one cycle in the
report.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .backend import Backend
from .grid import Field
from .spectral import WeightSchedule, bounds_for, schedule
from .stencil import CompiledStencil, source_term

__all__ = [
    "JACOBI",
    "CJM",
    "RESIDUAL",
    "REAL_ERROR",
    "MAX_ITERS",
    "Method",
    "StopRule",
    "SolveReport",
    "SolverError",
    "NonConvergenceError",
    "DivergenceError",
    "sweep",
    "solve",
    "residual_norm",
    "real_error",
    "tolerance_for",
]

JACOBI = "jacobi"
CJM = "cjm"
RESIDUAL = "residual"
REAL_ERROR = "real_error"
MAX_ITERS = "max_iters"

_FLOOR = 1e-300


def tolerance_for(n: int, eps0: float = 1e-6, n0: int = 128) -> float:
    """Resolution-dependent tolerance ``eps0 * (n0 / n)**2``."""
    return eps0 * (n0 / n) ** 2


@dataclass(frozen=True)
class Method:
    """Iteration scheme.

    Use :meth:`jacobi` or :meth:`cjm` rather than the constructor.
    """

    kind: str
    jacobi_weight: float = 1.0
    schedule: WeightSchedule | None = None
    check_every: int = 16

    def __post_init__(self):
        if self.kind == JACOBI:
            if not (0.0 < self.jacobi_weight < 2.0):
                raise ValueError("Jacobi weight must lie in (0, 2/kappa_max)")
            if self.check_every < 1:
                raise ValueError("check_every must be >= 1")
        elif self.kind == CJM:
            if self.schedule is None:
                raise ValueError("CJM needs a weight schedule")
        else:
            raise ValueError(f"unknown method {self.kind!r}")

    @classmethod
    def jacobi(cls, weight: float = 1.0, check_every: int = 16) -> "Method":
        return cls(JACOBI, jacobi_weight=weight, check_every=check_every)

    @classmethod
    def cjm(cls, sched: WeightSchedule) -> "Method":
        return cls(CJM, schedule=sched)

    @classmethod
    def cjm_for(cls, stencil: CompiledStencil, tol: float) -> "Method":
        """CJM with the stencil's bounds and per-cycle damping ``tol``."""
        return cls.cjm(schedule(bounds_for(stencil), tol))

    def cycle_weights(self) -> np.ndarray:
        if self.kind == CJM:
            return self.schedule.applied()
        return np.full(self.check_every, float(self.jacobi_weight))


@dataclass(frozen=True)
class StopRule:
    """When to stop iterating.

    ``mode`` is ``"residual"`` (relative residual <= tol), ``"real_error"``
    (max-norm error against ``reference`` <= tol) or ``"max_iters"`` (run
    exactly ``max_cycles`` cycles).

    ``stagnation``, if set to a factor in ``(0, 1)``, ends a residual-mode
    run with status ``"stagnated"`` once a cycle fails to shrink the
    residual by that factor. This is for tolerances below the round-off
    floor of the residual, where further cycles cannot help.
    """

    mode: str = RESIDUAL
    tol: float = 1e-6
    reference: Callable | None = None
    max_cycles: int = 100_000
    stagnation: float | None = None

    def __post_init__(self):
        if self.mode not in (RESIDUAL, REAL_ERROR, MAX_ITERS):
            raise ValueError(f"unknown stop mode {self.mode!r}")
        if self.mode == REAL_ERROR and self.reference is None:
            raise ValueError("real-error stopping needs a reference solution")
        if self.mode != MAX_ITERS and not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if self.stagnation is not None and not 0.0 < self.stagnation < 1.0:
            raise ValueError("stagnation factor must lie in (0, 1)")

    @classmethod
    def residual(cls, tol: float, max_cycles: int = 100_000, reference=None,
                 stagnation: float | None = None) -> "StopRule":
        return cls(RESIDUAL, tol, reference, max_cycles, stagnation)

    @classmethod
    def real_error(cls, tol: float, reference: Callable, max_cycles: int = 100_000) -> "StopRule":
        return cls(REAL_ERROR, tol, reference, max_cycles)

    @classmethod
    def max_iters(cls, cycles: int, reference=None) -> "StopRule":
        return cls(MAX_ITERS, 0.0, reference, cycles)


@dataclass
class SolveReport:
    """Outcome of :func:`solve`.

    Histories hold one entry per completed cycle, preceded by the initial
    state (cycle 0).
    """

    method: str
    stencil: str
    n: int
    m_count: int
    iterations: int = 0
    cycles: int = 0
    final_residual: float = math.nan
    final_real_error: float | None = None
    wall_time: float = 0.0
    status: str = "running"
    iteration_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    error_history: list = field(default_factory=list)
    time_history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return asdict(self)

    def write_trace(self, path):
        """Per-cycle convergence trace as CSV."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            fh.write("#cycle,iterations,residual,real_error,elapsed_seconds\n")
            errs = self.error_history or [None] * len(self.residual_history)
            for c, (it, r, e, t) in enumerate(
                zip(self.iteration_history, self.residual_history, errs, self.time_history)
            ):
                w.writerow([c, it, repr(r), "" if e is None else repr(e), repr(t)])


class SolverError(RuntimeError):
    """Iteration failed; ``report`` holds the partial history."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


class NonConvergenceError(SolverError):
    pass


class DivergenceError(SolverError):
    pass


def _backend(backend):
    return backend if backend is not None else Backend.serial()


def _sweep_into(stencil, u, b, out, weight, backend):
    g, stride, m, qs = stencil.kernel_args()
    uf, bf, of = u.reshape(-1), b.reshape(-1), out.reshape(-1)

    def block(r0, r1):
        _kernels.sweep(uf, bf, of, stencil.offsets, stencil.coeffs, stencil.center,
                       weight, r0, r1, g, stride, m, qs)

    backend.run_rows(block, stencil.grid.nx - 1)


def _abs_max(grid, x, backend):
    g, stride, m = grid.ghost, grid.shape[1], grid.ny - 1
    xf = x.reshape(-1)
    return backend.max_rows(lambda r0, r1: _kernels.abs_max(xf, r0, r1, g, stride, m),
                            grid.nx - 1)


def _residual_abs(stencil, u, b, backend):
    g, stride, m, qs = stencil.kernel_args()
    uf, bf = u.reshape(-1), b.reshape(-1)

    def block(r0, r1):
        return _kernels.residual_max(uf, bf, stencil.offsets, stencil.coeffs, stencil.center,
                                     r0, r1, g, stride, m, qs)

    return backend.max_rows(block, stencil.grid.nx - 1)


def sweep(stencil: CompiledStencil, u: Field, b: Field, weight: float,
          backend: Backend | None = None) -> Field:
    """One weighted Jacobi sweep into a new field.

    ``u_new = u + weight * (jacobi_local - u)`` at every unknown; ghosts are
    copied from ``u``, which is left untouched. ``b`` is the right-hand side
    of the discrete system (see :func:`~chebjacobi.stencil.source_term`).
    """
    if not math.isfinite(weight):
        raise ValueError("weight must be finite")
    out = u.copy()
    _sweep_into(stencil, u.values, b.values, out.values, float(weight), _backend(backend))
    return out


def residual_norm(stencil: CompiledStencil, u: Field, b: Field,
                  backend: Backend | None = None) -> float:
    """``||b - A u||_inf / max(||b||_inf, 1e-300)`` over the unknowns."""
    backend = _backend(backend)
    beff = source_term(stencil, b, backend)
    r = _residual_abs(stencil, u.values, beff.values, backend)
    return r / max(_abs_max(stencil.grid, beff.values, backend), _FLOOR)


def real_error(u: Field, exact: Callable) -> float:
    """Max-norm difference between ``u`` and ``exact`` on the unknowns."""
    grid = u.grid
    X1, X2 = grid.mesh()
    sl = grid.interior
    diff = np.abs(u.values[sl] - np.asarray(exact(X1[sl], X2[sl]), dtype=float))
    if diff.size == 0:
        return 0.0
    return float(np.nan if np.isnan(diff).any() else diff.max())


def solve(stencil: CompiledStencil, u0: Field, b: Field, method: Method, stop: StopRule,
          backend: Backend | None = None) -> tuple[Field, SolveReport]:
    """Iterate from ``u0`` until ``stop`` is met.

    Returns
    -------
    u : Field
    report : SolveReport

    Raises
    ------
    NonConvergenceError
        ``stop.max_cycles`` cycles ran without meeting the tolerance (and,
        with a stagnation factor, without stagnating).
    DivergenceError
        A non-finite value appeared in the iterate.
    """
    backend = _backend(backend)
    grid = stencil.grid
    if u0.values.shape != grid.shape or b.values.shape != grid.shape:
        raise ValueError("u0 and b must live on the stencil's grid")
    beff = source_term(stencil, b, backend).values
    bnorm = max(_abs_max(grid, beff, backend), _FLOOR)
    weights = method.cycle_weights()
    ref = stop.reference

    report = SolveReport(
        method=method.kind, stencil=stencil.name, n=grid.nx, m_count=int(weights.size),
    )
    if ref is not None:
        report.final_real_error = math.nan

    src = u0.values.copy()
    dst = u0.values.copy()

    def record(elapsed):
        res = _residual_abs(stencil, src, beff, backend) / bnorm
        report.iteration_history.append(report.iterations)
        report.residual_history.append(res)
        report.time_history.append(elapsed)
        report.final_residual = res
        err = None
        if ref is not None:
            err = real_error(Field(grid, src), ref)
            report.error_history.append(err)
            report.final_real_error = err
        return res, err

    prev, _ = record(0.0)
    t0 = time.perf_counter()
    for _ in range(stop.max_cycles):
        for w in weights:
            _sweep_into(stencil, src, beff, dst, w, backend)
            src, dst = dst, src
        report.iterations += weights.size
        report.cycles += 1
        res, err = record(time.perf_counter() - t0)
        report.wall_time = time.perf_counter() - t0
        if not math.isfinite(res) or (err is not None and not math.isfinite(err)):
            report.status = "diverged"
            raise DivergenceError(
                f"non-finite iterate after {report.iterations} iterations", report
            )
        if stop.mode == RESIDUAL and res <= stop.tol:
            break
        if stop.mode == RESIDUAL and stop.stagnation is not None and res > stop.stagnation * prev:
            report.status = "stagnated"
            return Field(grid, src), report
        prev = res
        if stop.mode == REAL_ERROR and err <= stop.tol:
            break
    else:
        if stop.mode != MAX_ITERS:
            report.status = "not_converged"
            raise NonConvergenceError(
                f"{stop.mode} tolerance {stop.tol:g} not met in {stop.max_cycles} cycles "
                f"(last residual {report.final_residual:.3e})",
                report,
            )
    report.status = "converged"
    return Field(grid, src), report
