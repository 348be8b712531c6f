"""Chebyshev-accelerated Jacobi solvers for 2-D elliptic problems on structured grids."""

from .backend import Backend, BackendError, make_backend, par_map_interior, par_max_reduce
from .grid import (
    CoordinateSystem,
    Field,
    Grid,
    fill_dirichlet,
    make_uniform_grid,
    node_coords,
)
from .solver import (
    DivergenceError,
    Method,
    NonConvergenceError,
    SolveReport,
    SolverError,
    StopRule,
    real_error,
    residual_norm,
    solve,
    sweep,
    tolerance_for,
)
from .spectral import (
    SpectralBounds,
    WeightSchedule,
    bounds_17pt,
    bounds_5pt,
    bounds_9pt,
    bounds_for,
    bounds_numeric,
    schedule,
)
from .stencil import (
    CompiledStencil,
    MaskEntry,
    StencilMask,
    apply,
    assemble_operator,
    bipolar_5pt,
    cartesian_17pt,
    cartesian_5pt,
    cartesian_9pt,
    compile,
    jacobi_local,
    polar_5pt,
    source_term,
    stencil_by_name,
)

__version__ = "0.1.0"
