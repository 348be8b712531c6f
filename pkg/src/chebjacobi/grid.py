"""
Structured node lattices, coordinate systems and fields with ghost rings.

Index convention
----------------
Along each axis the node index ``i`` runs over ``0 .. nx``; ``i = 0`` and
``i = nx`` lie on the domain boundary and ``1 .. nx - 1`` are the unknowns.
A grid with ``ghost = 2`` carries one extra layer beyond the boundary
(``i = -1`` and ``i = nx + 1``) for 5x5 footprints. With ``h = L / nx`` the
lowest Dirichlet mode is ``sin(pi x / L)``, which is what the analytic
spectral bounds assume.

Storage is one C-contiguous array of shape ``(nx - 1 + 2 ghost,
ny - 1 + 2 ghost)``; node ``(i, j)`` lives at ``values[i + ghost - 1,
j + ghost - 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "CARTESIAN",
    "POLAR",
    "BIPOLAR",
    "CoordinateSystem",
    "Grid",
    "Field",
    "make_uniform_grid",
    "fill_dirichlet",
    "node_coords",
]

CARTESIAN = "cartesian"
POLAR = "polar"
BIPOLAR = "bipolar"
_KINDS = (CARTESIAN, POLAR, BIPOLAR)


@dataclass(frozen=True)
class CoordinateSystem:
    """Coordinate system of the computational domain.

    Parameters
    ----------
    kind : {"cartesian", "polar", "bipolar"}
    x1_range, x2_range : tuple of float
        Axis ranges. Cartesian: ``(x, y)``; polar: ``(r, theta)``; bipolar:
        ``(mu, nu)``.
    scale : float
        Bipolar focal scale ``a``. Ignored otherwise.
    """

    kind: str = CARTESIAN
    x1_range: tuple[float, float] = (0.0, 1.0)
    x2_range: tuple[float, float] = (0.0, 1.0)
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown coordinate system {self.kind!r}")
        for lo, hi in (self.x1_range, self.x2_range):
            if not hi > lo:
                raise ValueError("axis ranges must be increasing")
        if self.kind == POLAR and self.x1_range[0] <= 0.0:
            raise ValueError("polar radial range must exclude r = 0")
        if self.kind == BIPOLAR and not self.scale > 0.0:
            raise ValueError("bipolar scale a must be positive")

    @classmethod
    def cartesian(cls, x_range=(0.0, 1.0), y_range=(0.0, 1.0)):
        return cls(CARTESIAN, tuple(x_range), tuple(y_range))

    @classmethod
    def polar(cls, r_range=(1.0, 2.0), theta_range=(0.0, 0.5 * np.pi)):
        return cls(POLAR, tuple(r_range), tuple(theta_range))

    @classmethod
    def bipolar(cls, a=1.0, mu_range=(0.5, 1.5), nu_range=(0.5, 1.5)):
        return cls(BIPOLAR, tuple(mu_range), tuple(nu_range), float(a))


def _axis_nodes(origin, spacing, ghost):
    """Node coordinates for storage indices of one axis, boundary included."""
    pts = origin + np.concatenate(([0.0], np.cumsum(spacing)))
    lo = pts[0] - spacing[0] * np.arange(ghost - 1, 0, -1)
    hi = pts[-1] + spacing[-1] * np.arange(1, ghost)
    return np.concatenate((lo, pts, hi))


@dataclass(frozen=True, eq=False)
class Grid:
    """Rectangular node lattice.

    ``nx`` and ``ny`` are the numbers of intervals per axis (the ``N`` of the
    spectral bound formulas), so a uniform grid has ``h = L / N`` and
    ``(nx - 1) * (ny - 1)`` unknowns.

    Parameters
    ----------
    dx1, dx2 : ndarray
        Spacings between consecutive nodes, lengths ``nx`` and ``ny``.
    ghost : int
        Node layers from the first unknown outward, boundary included
        (1 for 3x3 footprints, 2 for 5x5).
    """

    dx1: np.ndarray
    dx2: np.ndarray
    ghost: int = 1
    coords: CoordinateSystem = field(default_factory=CoordinateSystem)
    x1: np.ndarray = field(init=False, repr=False)
    x2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dx1 = np.array(self.dx1, dtype=float)
        dx2 = np.array(self.dx2, dtype=float)
        if dx1.ndim != 1 or dx2.ndim != 1 or dx1.size < 2 or dx2.size < 2:
            raise ValueError("spacing arrays must be 1-D with at least 2 entries")
        if not (np.all(dx1 > 0) and np.all(dx2 > 0)):
            raise ValueError("all spacings must be strictly positive")
        if self.ghost not in (1, 2):
            raise ValueError(f"ghost width must be 1 or 2, got {self.ghost}")
        dx1.flags.writeable = False
        dx2.flags.writeable = False
        x1 = _axis_nodes(self.coords.x1_range[0], dx1, self.ghost)
        x2 = _axis_nodes(self.coords.x2_range[0], dx2, self.ghost)
        x1.flags.writeable = False
        x2.flags.writeable = False
        if self.coords.kind == POLAR and x1[0] <= 0.0:
            raise ValueError("polar grid has a node with r <= 0")
        object.__setattr__(self, "dx1", dx1)
        object.__setattr__(self, "dx2", dx2)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    @property
    def nx(self) -> int:
        return self.dx1.size

    @property
    def ny(self) -> int:
        return self.dx2.size

    @property
    def lx(self) -> float:
        return float(self.dx1.sum())

    @property
    def ly(self) -> float:
        return float(self.dx2.sum())

    @property
    def shape(self) -> tuple[int, int]:
        """Storage shape, ghosts included."""
        return (self.nx - 1 + 2 * self.ghost, self.ny - 1 + 2 * self.ghost)

    @property
    def interior_shape(self) -> tuple[int, int]:
        return (self.nx - 1, self.ny - 1)

    @property
    def interior(self) -> tuple[slice, slice]:
        """Index expression selecting the unknowns in a storage array."""
        g = self.ghost
        return (slice(g, g + self.nx - 1), slice(g, g + self.ny - 1))

    @property
    def uniform(self) -> bool:
        return bool(
            np.all(self.dx1 == self.dx1[0]) and np.all(self.dx2 == self.dx2[0])
        )

    @property
    def h(self) -> float:
        """Common spacing of a uniform square-cell grid."""
        if not (self.uniform and self.dx1[0] == self.dx2[0]):
            raise ValueError("grid has no single spacing h")
        return float(self.dx1[0])

    def local_spacing(self):
        """Per-storage-index spacings to the next node, ghosts included."""
        g = self.ghost
        i = np.arange(self.shape[0]) - g + 1
        j = np.arange(self.shape[1]) - g + 1
        return (
            self.dx1[np.clip(i, 0, self.nx - 1)],
            self.dx2[np.clip(j, 0, self.ny - 1)],
        )

    def mesh(self):
        """Coordinate arrays ``(X1, X2)`` over the full storage shape."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def ghost_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[self.interior] = False
        return mask

    def interior_indices(self):
        """Iterate ``(i, j)`` over the unknowns in storage order."""
        for i in range(1, self.nx):
            for j in range(1, self.ny):
                yield i, j

    def storage_index(self, i: int, j: int) -> tuple[int, int]:
        lo = -(self.ghost - 1)
        if not (lo <= i <= self.nx + self.ghost - 1 and lo <= j <= self.ny + self.ghost - 1):
            raise IndexError(f"node ({i}, {j}) outside the storage range")
        return i + self.ghost - 1, j + self.ghost - 1

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def sample(self, fn: Callable) -> "Field":
        """Field holding ``fn(x1, x2)`` at every stored node."""
        X1, X2 = self.mesh()
        vals = np.broadcast_to(np.asarray(fn(X1, X2), dtype=float), self.shape)
        return Field(self, np.ascontiguousarray(vals))


def make_uniform_grid(n: int, coords: CoordinateSystem | None = None, ghost: int = 1) -> Grid:
    """Uniform ``n x n`` grid over the coordinate system's axis ranges.

    For the default Cartesian system this is the unit square with
    ``h = 1 / n``.
    """
    coords = CoordinateSystem() if coords is None else coords
    if int(n) != n or n < 4:
        raise ValueError(f"n must be an integer >= 4, got {n}")
    if ghost not in (1, 2):
        raise ValueError(f"ghost width must be 1 or 2, got {ghost}")
    n = int(n)
    l1 = coords.x1_range[1] - coords.x1_range[0]
    l2 = coords.x2_range[1] - coords.x2_range[0]
    return Grid(np.full(n, l1 / n), np.full(n, l2 / n), ghost, coords)


class Field:
    """Node-indexed scalar array with a ghost ring.

    Parameters
    ----------
    grid : Grid
    values : ndarray, optional
        Storage array of shape ``grid.shape``; zeros when omitted. It is
        converted to a C-contiguous float64 array (copying if needed).
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values=None):
        if values is None:
            values = np.zeros(grid.shape)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values

    @property
    def interior(self) -> np.ndarray:
        """Writable view of the unknowns."""
        return self.values[self.grid.interior]

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __repr__(self):
        return f"Field(shape={self.values.shape}, ghost={self.grid.ghost})"


def fill_dirichlet(field: Field, boundary_fn: Callable) -> Field:
    """Set every ghost node to ``boundary_fn`` at its coordinates.

    ``boundary_fn`` is called once with coordinate arrays and must be
    vectorized. The field is modified in place and returned.
    """
    grid = field.grid
    mask = grid.ghost_mask()
    X1, X2 = grid.mesh()
    vals = np.broadcast_to(np.asarray(boundary_fn(X1[mask], X2[mask]), dtype=float), X1[mask].shape)
    field.values[mask] = vals
    return field


def node_coords(grid: Grid, i: int, j: int) -> tuple[float, float]:
    """Physical coordinates of node ``(i, j)``."""
    si, sj = grid.storage_index(i, j)
    return float(grid.x1[si]), float(grid.x2[sj])
