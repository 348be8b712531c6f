"""
Discrete Laplacians as coefficient masks.

A mask is a list of ``(offset, coeff_fn)`` pairs over a 3x3 or 5x5
footprint; ``coeff_fn(x1, x2, dx1, dx2)`` returns the coefficient of the
neighbour at ``offset`` for a node at ``(x1, x2)`` with local spacings
``(dx1, dx2)``. Offsets are ``(di, dj)`` with ``di`` along the first axis
(east is ``+di``, north is ``+dj``).

``compile`` turns a mask into flat storage offsets plus either one shared
coefficient row (coordinate-independent masks on uniform grids) or a
per-node coefficient table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .backend import Backend
from .grid import BIPOLAR, CARTESIAN, POLAR, Field, Grid

__all__ = [
    "MaskEntry",
    "StencilMask",
    "CompiledStencil",
    "cartesian_5pt",
    "cartesian_9pt",
    "cartesian_17pt",
    "polar_5pt",
    "bipolar_5pt",
    "stencil_by_name",
    "compile",
    "apply",
    "jacobi_local",
    "source_term",
    "assemble_operator",
]

CENTER = (0, 0)


@dataclass(frozen=True)
class MaskEntry:
    offset: tuple[int, int]
    coeff_fn: Callable


@dataclass(frozen=True)
class StencilMask:
    """Laplacian mask.

    Parameters
    ----------
    entries : tuple of MaskEntry
        Distinct offsets, center included.
    footprint : {3, 5}
    coords : str
        Coordinate system the mask discretizes.
    coordinate_dependent : bool
        Whether coefficients vary with node position on a uniform grid.
    rhs_weights : tuple, optional
        ``((di, dj), w)`` pairs; the right-hand side seen by the solver is
        ``sum(w * b[node + offset])`` instead of ``b[node]``.
    """

    entries: tuple
    footprint: int
    name: str
    coords: str = CARTESIAN
    coordinate_dependent: bool = False
    alpha: float | None = None
    order_hint: int = 2
    rhs_weights: tuple | None = None

    def __post_init__(self):
        offsets = [e.offset for e in self.entries]
        if len(set(offsets)) != len(offsets):
            raise ValueError("mask offsets must be distinct")
        if CENTER not in offsets:
            raise ValueError("mask has no center entry")
        if self.footprint not in (3, 5):
            raise ValueError("footprint must be 3 or 5")
        if self.reach > self.footprint // 2:
            raise ValueError("entry offset outside the footprint")

    @property
    def reach(self) -> int:
        return max(max(abs(di), abs(dj)) for di, dj in (e.offset for e in self.entries))

    def entry(self, offset) -> MaskEntry:
        for e in self.entries:
            if e.offset == tuple(offset):
                return e
        raise KeyError(offset)

    def coefficients(self, x1=0.0, x2=0.0, dx1=1.0, dx2=1.0) -> dict:
        """Evaluate every entry at one node; ``{offset: value}``."""
        return {e.offset: e.coeff_fn(x1, x2, dx1, dx2) for e in self.entries}


def _scaled(weight, denom):
    def fn(x1, x2, dx1, dx2):
        return weight / (denom * dx1 * dx2) + 0.0 * x1 * x2
    return fn


def _symmetric(groups, denom):
    """Entries for a point-symmetric Cartesian stencil.

    ``groups`` maps a representative offset to an integer weight; all
    sign changes and the axis swap get the same weight.
    """
    entries = {}
    for (di, dj), w in groups.items():
        for a, b in ((di, dj), (dj, di)):
            for sa in (1, -1):
                for sb in (1, -1):
                    entries[(sa * a, sb * b)] = w
    return tuple(MaskEntry(off, _scaled(w, denom)) for off, w in entries.items())


def cartesian_5pt() -> StencilMask:
    """Classic 5-point Laplacian, ``1/dx^2`` and ``1/dy^2`` neighbours."""

    def ew(x1, x2, dx1, dx2):
        return 1.0 / dx1**2 + 0.0 * x1 * x2

    def ns(x1, x2, dx1, dx2):
        return 1.0 / dx2**2 + 0.0 * x1 * x2

    def c(x1, x2, dx1, dx2):
        return -2.0 / dx1**2 - 2.0 / dx2**2 + 0.0 * x1 * x2

    entries = (
        MaskEntry((1, 0), ew),
        MaskEntry((-1, 0), ew),
        MaskEntry((0, 1), ns),
        MaskEntry((0, -1), ns),
        MaskEntry(CENTER, c),
    )
    return StencilMask(entries, 3, "5pt", order_hint=2)


def cartesian_9pt(rhs_correction: bool = True) -> StencilMask:
    """Compact 9-point Laplacian ``[4 axis, 1 diagonal, -20 center] / (6 h^2)``.

    With ``rhs_correction`` the source is averaged as
    ``(8 b_C + b_N + b_S + b_E + b_W) / 12``, which lifts the scheme from
    second to fourth order on smooth problems.
    """
    entries = _symmetric({(1, 0): 4, (1, 1): 1, (0, 0): -20}, 6.0)
    rhs = None
    if rhs_correction:
        rhs = ((CENTER, 8.0 / 12.0),) + tuple(
            (off, 1.0 / 12.0) for off in ((1, 0), (-1, 0), (0, 1), (0, -1))
        )
    return StencilMask(entries, 3, "9pt", alpha=2.0 / 3.0, order_hint=4 if rhs_correction else 2,
                       rhs_weights=rhs)


def cartesian_17pt() -> StencilMask:
    """17-point Laplacian on the 5x5 footprint, scaled by ``1 / (72 h^2)``."""
    entries = _symmetric(
        {(1, 0): 64, (2, 0): -4, (1, 1): 16, (2, 2): -1, (0, 0): -300}, 72.0
    )
    return StencilMask(entries, 5, "17pt", alpha=2.0 / 3.0, order_hint=4)


def polar_5pt() -> StencilMask:
    """5-point Laplacian in ``(r, theta)``."""

    def w(r, th, dr, dth):
        return 1.0 / dr**2 - 1.0 / (2.0 * r * dr) + 0.0 * th

    def e(r, th, dr, dth):
        return 1.0 / dr**2 + 1.0 / (2.0 * r * dr) + 0.0 * th

    def ns(r, th, dr, dth):
        return 1.0 / (r**2 * dth**2) + 0.0 * th

    def c(r, th, dr, dth):
        return -2.0 / dr**2 - 2.0 / (r**2 * dth**2) + 0.0 * th

    entries = (
        MaskEntry((-1, 0), w),
        MaskEntry((1, 0), e),
        MaskEntry((0, 1), ns),
        MaskEntry((0, -1), ns),
        MaskEntry(CENTER, c),
    )
    return StencilMask(entries, 3, "polar5pt", coords=POLAR, coordinate_dependent=True)


def bipolar_5pt(a: float = 1.0) -> StencilMask:
    """5-point Laplacian in bipolar ``(mu, nu)`` with focal scale ``a``."""
    if not a > 0.0:
        raise ValueError("bipolar scale a must be positive")

    def factor(mu, nu):
        return (np.cosh(nu) - np.cos(mu)) ** 2 / a**2

    def ew(mu, nu, dmu, dnu):
        return factor(mu, nu) / dmu**2

    def ns(mu, nu, dmu, dnu):
        return factor(mu, nu) / dnu**2

    def c(mu, nu, dmu, dnu):
        return -2.0 * factor(mu, nu) / dmu**2 - 2.0 * factor(mu, nu) / dnu**2

    entries = (
        MaskEntry((1, 0), ew),
        MaskEntry((-1, 0), ew),
        MaskEntry((0, 1), ns),
        MaskEntry((0, -1), ns),
        MaskEntry(CENTER, c),
    )
    return StencilMask(entries, 3, "bipolar5pt", coords=BIPOLAR, coordinate_dependent=True)


_BY_NAME = {"5": cartesian_5pt, "9": cartesian_9pt, "17": cartesian_17pt}


def stencil_by_name(name) -> StencilMask:
    """Cartesian mask from ``5``, ``9``, ``17`` (or ``"5pt"`` etc.)."""
    key = str(name).removesuffix("pt")
    if key not in _BY_NAME:
        raise ValueError(f"unknown stencil {name!r}; expected one of 5, 9, 17")
    return _BY_NAME[key]()


@dataclass(frozen=True, eq=False)
class CompiledStencil:
    """A mask bound to a grid.

    ``coeffs`` has shape ``(1, K)`` in shared mode and ``(n_unknowns, K)``
    otherwise; ``center`` likewise has length 1 or ``n_unknowns``. The
    center is kept out of ``offsets``/``coeffs``.
    """

    grid: Grid
    mask: StencilMask
    offsets: np.ndarray
    di: np.ndarray
    dj: np.ndarray
    coeffs: np.ndarray
    center: np.ndarray
    rhs: "CompiledStencil | None" = None

    @property
    def shared(self) -> bool:
        return self.coeffs.shape[0] == 1

    @property
    def qs(self) -> int:
        return 0 if self.shared else 1

    @property
    def name(self) -> str:
        return self.mask.name

    @property
    def reach(self) -> int:
        if self.di.size == 0:
            return 0
        return int(max(np.abs(self.di).max(), np.abs(self.dj).max()))

    def node_coeffs(self, i: int, j: int) -> tuple[np.ndarray, float]:
        """Neighbour coefficients and center coefficient at node ``(i, j)``."""
        if not (1 <= i <= self.grid.nx - 1 and 1 <= j <= self.grid.ny - 1):
            raise IndexError(f"({i}, {j}) is not an interior node")
        q = 0 if self.shared else (i - 1) * (self.grid.ny - 1) + (j - 1)
        return self.coeffs[q], float(self.center[q])

    def kernel_args(self):
        g = self.grid
        return g.ghost, g.shape[1], g.ny - 1, self.qs


def compile(mask: StencilMask, grid: Grid) -> CompiledStencil:
    """Bind ``mask`` to ``grid``.

    Raises
    ------
    ValueError
        If the footprint exceeds the ghost width, the coordinate systems
        differ, or some node has a zero center coefficient.
    """
    if mask.reach > grid.ghost:
        raise ValueError(
            f"footprint exceeds ghost width: {mask.name} reaches {mask.reach}, "
            f"grid ghost is {grid.ghost}"
        )
    if mask.coords != grid.coords.kind:
        raise ValueError(
            f"coordinate system mismatch: {mask.name} needs {mask.coords}, "
            f"grid is {grid.coords.kind}"
        )
    if mask.coords == POLAR and grid.x1.min() <= 0.0:
        raise ValueError("polar mask needs all node radii > 0")

    shared = not mask.coordinate_dependent and grid.uniform
    X1, X2 = grid.mesh()
    S1, S2 = np.meshgrid(*grid.local_spacing(), indexing="ij")
    sl = grid.interior
    if shared:
        g = grid.ghost
        sl = (slice(g, g + 1), slice(g, g + 1))
    args = (X1[sl].ravel(), X2[sl].ravel(), S1[sl].ravel(), S2[sl].ravel())
    nq = args[0].size

    def evaluate(fn):
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), (nq,)).copy()

    center = evaluate(mask.entry(CENTER).coeff_fn)
    if np.any(center == 0.0) or not np.all(np.isfinite(center)):
        bad = np.flatnonzero((center == 0.0) | ~np.isfinite(center))[0]
        raise ValueError(
            f"degenerate mask {mask.name}: center coefficient {center[bad]} "
            f"at ({args[0][bad]}, {args[1][bad]})"
        )
    offs, cols = [], []
    for e in mask.entries:
        if e.offset == CENTER:
            continue
        col = evaluate(e.coeff_fn)
        if np.all(col == 0.0):
            continue
        offs.append(e.offset)
        cols.append(col)
    di = np.array([o[0] for o in offs], dtype=np.int64)
    dj = np.array([o[1] for o in offs], dtype=np.int64)
    coeffs = np.ascontiguousarray(np.stack(cols, axis=1) if cols else np.zeros((nq, 0)))
    stride = grid.shape[1]

    rhs = None
    if mask.rhs_weights:
        rhs_off = [o for o, _ in mask.rhs_weights if o != CENTER]
        rhs_w = [w for o, w in mask.rhs_weights if o != CENTER]
        rhs_c = sum(w for o, w in mask.rhs_weights if o == CENTER)
        rdi = np.array([o[0] for o in rhs_off], dtype=np.int64)
        rdj = np.array([o[1] for o in rhs_off], dtype=np.int64)
        rhs = CompiledStencil(
            grid, mask, rdi * stride + rdj, rdi, rdj,
            np.array([rhs_w], dtype=float), np.array([rhs_c], dtype=float),
        )
    return CompiledStencil(grid, mask, di * stride + dj, di, dj, coeffs, center, rhs)


def _apply_into(stencil: CompiledStencil, u: np.ndarray, out: np.ndarray, backend: Backend | None):
    g, stride, m, qs = stencil.kernel_args()
    uf, of = u.reshape(-1), out.reshape(-1)

    def block(r0, r1):
        _kernels.apply(uf, of, stencil.offsets, stencil.coeffs, stencil.center,
                       r0, r1, g, stride, m, qs)

    (backend or Backend.serial()).run_rows(block, stencil.grid.nx - 1)


def apply(stencil: CompiledStencil, u: Field, backend: Backend | None = None) -> Field:
    """Discrete Laplacian of ``u`` on the interior; the output ghost ring is 0."""
    out = Field(stencil.grid)
    _apply_into(stencil, u.values, out.values, backend)
    return out


def source_term(stencil: CompiledStencil, b: Field, backend: Backend | None = None) -> Field:
    """Right-hand side the discrete system actually uses.

    Identical to ``b`` unless the mask carries right-hand-side weights, in
    which case ``b`` must have its ghost ring filled.
    """
    if stencil.rhs is None:
        return b
    out = b.copy()
    _apply_into(stencil.rhs, b.values, out.values, backend)
    return out


def jacobi_local(stencil: CompiledStencil, u: Field, b: Field, i: int, j: int) -> float:
    """Exact solve of row ``(i, j)`` with the neighbours held fixed.

    ``b`` is used as given; pass ``source_term(stencil, b)`` for masks with
    right-hand-side weights.
    """
    coeffs, center = stencil.node_coeffs(i, j)
    if center == 0.0:
        raise ZeroDivisionError(f"zero center coefficient at ({i}, {j})")
    si, sj = stencil.grid.storage_index(i, j)
    s = b.values[si, sj]
    for k in range(stencil.offsets.size):
        s -= coeffs[k] * u.values[si + stencil.di[k], sj + stencil.dj[k]]
    return float(s / center)


def _closure_index(i, n, closure):
    """Map a node index to ``(unknown index, sign)`` or None for a zero."""
    if 1 <= i <= n - 1:
        return i, 1.0
    if closure == "dirichlet" or i in (0, n):
        return None
    mirrored = -i if i < 0 else 2 * n - i
    return (mirrored, -1.0) if 1 <= mirrored <= n - 1 else None


def assemble_operator(stencil: CompiledStencil, closure: str = "dirichlet") -> sp.csr_matrix:
    """Sparse matrix of the stencil acting on the unknowns.

    ``closure="dirichlet"`` drops every non-unknown neighbour (they hold
    known data), which is the operator the iteration actually applies.
    ``closure="odd"`` instead treats nodes beyond the boundary as the odd
    reflection of the interior; sine modes are then exact eigenvectors of
    the constant-coefficient Cartesian masks. The two agree for 3x3
    footprints.
    """
    if closure not in ("dirichlet", "odd"):
        raise ValueError(f"unknown closure {closure!r}")
    grid = stencil.grid
    nx, ny = grid.nx, grid.ny
    m = ny - 1
    rows, cols, vals = [], [], []
    for i in range(1, nx):
        for j in range(1, ny):
            row = (i - 1) * m + (j - 1)
            coeffs, center = stencil.node_coeffs(i, j)
            rows.append(row)
            cols.append(row)
            vals.append(center)
            for k in range(stencil.offsets.size):
                a = _closure_index(i + int(stencil.di[k]), nx, closure)
                b = _closure_index(j + int(stencil.dj[k]), ny, closure)
                if a is None or b is None:
                    continue
                rows.append(row)
                cols.append((a[0] - 1) * m + (b[0] - 1))
                vals.append(a[1] * b[1] * coeffs[k])
    n = (nx - 1) * m
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
