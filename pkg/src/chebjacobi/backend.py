"""
Execution engines for interior sweeps and max-reductions.

A backend only decides how the interior rows are split and who runs each
block. The serial engine runs one block; the parallel engine cuts the rows
into contiguous blocks of ``chunk`` rows and hands them to a thread pool.
The jitted kernels release the GIL, and since each output node is computed
identically whatever block it falls in, both engines give bitwise-identical
results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Backend",
    "BackendError",
    "SERIAL",
    "PARALLEL",
    "make_backend",
    "par_map_interior",
    "par_max_reduce",
]

SERIAL = "serial"
PARALLEL = "parallel"


class BackendError(RuntimeError):
    """A kernel raised while running on a backend."""


@dataclass(frozen=True, eq=False)
class Backend:
    """Execution engine.

    Parameters
    ----------
    kind : {"serial", "parallel"}
    workers : int
        Thread count for the parallel engine.
    chunk : int, optional
        Rows per block; by default the rows are split evenly over workers.
    """

    kind: str = SERIAL
    workers: int = 1
    chunk: int | None = None
    _pool: ThreadPoolExecutor | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in (SERIAL, PARALLEL):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.chunk is not None and self.chunk < 1:
            raise ValueError("chunk must be >= 1")
        if self.kind == PARALLEL:
            object.__setattr__(
                self, "_pool",
                ThreadPoolExecutor(self.workers, thread_name_prefix="cj-worker"),
            )

    @classmethod
    def serial(cls) -> "Backend":
        return cls(SERIAL)

    @classmethod
    def parallel(cls, workers: int | None = None, chunk: int | None = None) -> "Backend":
        return cls(PARALLEL, workers if workers is not None else os.cpu_count() or 1, chunk)

    def blocks(self, nrows: int) -> list[tuple[int, int]]:
        """Contiguous ``[r0, r1)`` row blocks covering ``range(nrows)``."""
        if self.kind == SERIAL:
            return [(0, nrows)]
        chunk = self.chunk or -(-nrows // self.workers)
        return [(r, min(r + chunk, nrows)) for r in range(0, nrows, max(chunk, 1))]

    def run_rows(self, fn: Callable[[int, int], object], nrows: int) -> list:
        """Call ``fn(r0, r1)`` for every block; results in block order."""
        blocks = self.blocks(nrows)
        try:
            if self._pool is None or len(blocks) == 1:
                return [fn(r0, r1) for r0, r1 in blocks]
            futures = [self._pool.submit(fn, r0, r1) for r0, r1 in blocks]
            return [f.result() for f in futures]
        except BackendError:
            raise
        except Exception as exc:
            raise BackendError(f"kernel failed on {self.kind} backend: {exc}") from exc

    def max_rows(self, fn: Callable[[int, int], float], nrows: int) -> float:
        """Max of per-block partial maxima, merged in block order."""
        out = -np.inf
        for part in self.run_rows(fn, nrows):
            if part > out or part != part:
                out = part
        return float(out)

    def shutdown(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __repr__(self):
        if self.kind == SERIAL:
            return "Backend.serial()"
        return f"Backend.parallel(workers={self.workers}, chunk={self.chunk})"


def make_backend(kind: str = SERIAL, workers: int | None = None, chunk: int | None = None) -> Backend:
    if kind == SERIAL:
        return Backend.serial()
    if kind == PARALLEL:
        return Backend.parallel(workers, chunk)
    raise ValueError(f"unknown backend kind {kind!r}")


_DEFAULT = Backend.serial()


def _block_indices(grid, r0, r1):
    i = np.arange(r0 + 1, r1 + 1)
    j = np.arange(1, grid.ny)
    return np.meshgrid(i, j, indexing="ij")


def par_map_interior(grid, kernel: Callable, out, backend: Backend | None = None):
    """Fill the interior of ``out`` with ``kernel(i, j)``.

    ``kernel`` receives node index arrays for one row block and returns an
    array (or scalar) broadcastable to their shape. It must only read shared
    inputs. ``out`` is modified in place and returned.
    """
    backend = backend or _DEFAULT
    g = grid.ghost

    def block(r0, r1):
        I, J = _block_indices(grid, r0, r1)
        vals = np.broadcast_to(np.asarray(kernel(I, J), dtype=float), I.shape)
        out.values[g + r0:g + r1, g:g + grid.ny - 1] = vals

    backend.run_rows(block, grid.nx - 1)
    return out


def par_max_reduce(grid, node_fn: Callable, backend: Backend | None = None) -> float:
    """Max of ``node_fn(i, j)`` over the interior nodes."""
    backend = backend or _DEFAULT

    def block(r0, r1):
        I, J = _block_indices(grid, r0, r1)
        vals = np.asarray(node_fn(I, J), dtype=float)
        if vals.size == 0:
            return -np.inf
        vals = np.broadcast_to(vals, I.shape)
        return np.nan if np.isnan(vals).any() else float(vals.max())

    return backend.max_rows(block, grid.nx - 1)
