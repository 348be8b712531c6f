"""
Spectral bounds of the diagonally scaled operator and Chebyshev weights.

Eigenvalues ``kappa`` are those of ``D^{-1} A`` with ``A`` the negated
discrete Laplacian on the unknowns, so one weighted Jacobi step multiplies
the error component of eigenvalue ``kappa`` by ``1 - omega * kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "SpectralBounds",
    "WeightSchedule",
    "bounds_5pt",
    "bounds_9pt",
    "bounds_17pt",
    "bounds_for",
    "bounds_numeric",
    "schedule",
    "chebyshev_cycle_length",
    "leja_order",
    "PowerIterationError",
]


class PowerIterationError(RuntimeError):
    """Power iteration did not reach the requested accuracy."""


@dataclass(frozen=True)
class SpectralBounds:
    kappa_min: float
    kappa_max: float

    def __post_init__(self):
        if not (0.0 < self.kappa_min < self.kappa_max <= 2.0):
            raise ValueError(
                f"need 0 < kappa_min < kappa_max <= 2, got "
                f"({self.kappa_min}, {self.kappa_max})"
            )

    @property
    def mu(self) -> float:
        """Chebyshev condition parameter ``(kmax + kmin) / (kmax - kmin)``."""
        return (self.kappa_max + self.kappa_min) / (self.kappa_max - self.kappa_min)

    def arccosh_mu(self) -> float:
        # mu - 1 computed directly; mu itself loses digits when kmin << kmax
        d = 2.0 * self.kappa_min / (self.kappa_max - self.kappa_min)
        return math.log1p(d + math.sqrt(d * (d + 2.0)))


def _s2(x):
    return np.sin(x) ** 2


def _check_n(nx, ny):
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be >= 2")


def bounds_5pt(nx: int, ny: int) -> SpectralBounds:
    """Bounds for the 5-point operator; ``kappa_max = 2``."""
    _check_n(nx, ny)
    kmin = _s2(math.pi / (2 * nx)) + _s2(math.pi / (2 * ny))
    return SpectralBounds(float(kmin), 2.0)


def bounds_9pt(nx: int, ny: int) -> SpectralBounds:
    """Bounds for the compact 9-point operator; ``kappa_max = 8/5``."""
    _check_n(nx, ny)
    a, b = math.pi / (2 * nx), math.pi / (2 * ny)
    kmin = 0.8 * (_s2(a) + _s2(b)) + 0.2 * (_s2(a + b) + _s2(a - b))
    return SpectralBounds(float(kmin), 8.0 / 5.0)


def bounds_17pt(nx: int, ny: int) -> SpectralBounds:
    """Bounds for the 17-point operator; ``kappa_max = 128/75``."""
    _check_n(nx, ny)
    a, b = math.pi / nx, math.pi / ny
    kmin = (
        -4.0 / 75.0 * (_s2(a) + _s2(b))
        + 64.0 / 75.0 * (_s2(a / 2) + _s2(b / 2))
        - 1.0 / 75.0 * (_s2(a + b) + _s2(a - b))
        + 16.0 / 75.0 * (_s2(a / 2 + b / 2) + _s2(a / 2 - b / 2))
    )
    return SpectralBounds(float(kmin), 128.0 / 75.0)


_ANALYTIC = {"5pt": bounds_5pt, "9pt": bounds_9pt, "17pt": bounds_17pt}


def bounds_for(stencil, nx: int | None = None, ny: int | None = None) -> SpectralBounds:
    """Analytic bounds for a Cartesian stencil name or compiled stencil.

    Other masks fall back to :func:`bounds_numeric`.
    """
    if isinstance(stencil, str):
        name = stencil if stencil.endswith("pt") else f"{stencil}pt"
        if name not in _ANALYTIC:
            raise ValueError(f"no analytic bounds for stencil {stencil!r}")
        return _ANALYTIC[name](nx, ny)
    grid = stencil.grid
    if stencil.name in _ANALYTIC and grid.uniform:
        return _ANALYTIC[stencil.name](grid.nx, grid.ny)
    return bounds_numeric(stencil, grid)


def _power(apply_op, n, tol, max_iter, seed):
    """Dominant eigenvalue by power iteration.

    Stops once the eigen-residual ``|B x - lam x|`` of the unit iterate is
    below ``tol * |lam|``; for symmetric operators the Rayleigh quotient is
    then accurate to roughly ``tol**2`` over the spectral gap.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(max_iter):
        y = apply_op(x)
        lam = float(x @ y)
        if np.linalg.norm(y - lam * x) <= tol * abs(lam):
            return lam
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
    raise PowerIterationError(f"power iteration not converged in {max_iter} steps")


def bounds_numeric(stencil, grid=None, closure: str = "dirichlet",
                   tol: float = 1e-8, max_iter: int = 500_000, seed: int = 0) -> SpectralBounds:
    """Extreme eigenvalues of ``D^{-1} A`` by power iteration.

    The largest eigenvalue comes from plain power iteration; the smallest
    from power iteration on ``s I - D^{-1} A`` with ``s`` the largest.
    Coordinate-dependent masks are symmetrized with ``D^{-1/2}`` scaling
    when possible so the Rayleigh quotient converges quadratically.

    Raises
    ------
    PowerIterationError
        If either run exceeds ``max_iter`` steps.
    """
    from .stencil import assemble_operator

    if grid is not None and grid is not stencil.grid:
        raise ValueError("stencil was compiled for a different grid")
    A = -assemble_operator(stencil, closure)
    # the Jacobi diagonal is the center coefficient even where the odd
    # closure folds reflected neighbours onto the matrix diagonal
    d = -assemble_operator(stencil, "dirichlet").diagonal()
    if np.any(d <= 0.0):
        raise ValueError("operator diagonal must be positive")
    B = A.multiply(1.0 / d[:, None]).tocsr()
    sym = (B - B.T)
    if sym.nnz and abs(sym).max() > 1e-12 * abs(B).max():
        # similar symmetric form when D^{-1/2} A D^{-1/2} is symmetric
        Bs = A.multiply(1.0 / np.sqrt(d)[:, None]).multiply(1.0 / np.sqrt(d)[None, :]).tocsr()
        if abs(Bs - Bs.T).max() <= 1e-12 * abs(Bs).max():
            B = Bs
    n = B.shape[0]
    kmax = _power(B.dot, n, tol, max_iter, seed)
    shift = kmax
    top = _power(lambda x: shift * x - B.dot(x), n, tol, max_iter, seed + 1)
    kmin = shift - top
    return SpectralBounds(float(kmin), float(min(kmax, 2.0)))


def chebyshev_cycle_length(bounds: SpectralBounds, tol: float) -> int:
    """Fewest Chebyshev steps whose damping bound ``1/T_M(mu)`` is <= tol."""
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    return max(1, math.ceil(math.acosh(1.0 / tol) / bounds.arccosh_mu()))


def _chebyshev_weights(kmin, kmax, M):
    m = np.arange(1, M + 1)
    lam = 0.5 * ((kmax + kmin) - (kmax - kmin) * np.cos(np.pi * (2 * m - 1) / (2 * M)))
    return np.sort(1.0 / lam)


@lru_cache(maxsize=64)
def _leja_cached(nodes: bytes) -> np.ndarray:
    lam = np.frombuffer(nodes)
    n = lam.size
    order = np.empty(n, dtype=np.int64)
    logprod = np.zeros(n)
    free = np.ones(n, dtype=bool)
    k = int(np.argmax(np.abs(lam)))
    for step in range(n):
        if step:
            k = int(np.argmax(np.where(free, logprod, -np.inf)))
        order[step] = k
        free[k] = False
        with np.errstate(divide="ignore"):
            logprod += np.log(np.abs(lam - lam[k]))
    order.flags.writeable = False
    return order


def leja_order(nodes) -> np.ndarray:
    """Leja ordering of ``nodes``: start at the largest magnitude, then
    repeatedly take the node maximizing the product of distances to the
    ones already taken."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    return _leja_cached(nodes.tobytes())


@dataclass(frozen=True, eq=False)
class WeightSchedule:
    """One Chebyshev cycle of relaxation weights.

    ``weights`` is the canonical ascending list; ``order`` is the
    permutation in which the solver applies them. Ascending application
    overflows in floating point once the cycle has more than a few dozen
    steps, so the default order is the Leja ordering of the corresponding
    eigenvalue nodes ``1 / omega``.
    """

    m_count: int
    weights: np.ndarray
    bounds: SpectralBounds
    tol: float
    order: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        if w.size != self.m_count:
            raise ValueError("weights length differs from m_count")
        order = np.array(self.order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(self.m_count)):
            raise ValueError("order must be a permutation of the weights")
        order.flags.writeable = False
        object.__setattr__(self, "order", order)

    def applied(self) -> np.ndarray:
        """Weights in application order."""
        return self.weights[self.order]

    def with_order(self, order) -> "WeightSchedule":
        return WeightSchedule(self.m_count, self.weights, self.bounds, self.tol, order)

    def damping(self, kappa) -> np.ndarray:
        """``|prod_m (1 - omega_m kappa)|`` evaluated at ``kappa``."""
        kappa = np.asarray(kappa, dtype=float)
        p = np.ones_like(kappa)
        for w in self.applied():
            p = p * (1.0 - w * kappa)
        return np.abs(p)

    def cycle_bound(self) -> float:
        """Guaranteed per-cycle damping ``1 / T_M(mu)``."""
        t = math.cosh(self.m_count * self.bounds.arccosh_mu())
        return 1.0 / t if math.isfinite(t) else 0.0


def schedule(bounds: SpectralBounds, tol: float, m_count: int | None = None,
             ordering: str = "leja") -> WeightSchedule:
    """Chebyshev weights damping every mode in ``bounds`` by ``tol`` per cycle.

    Parameters
    ----------
    bounds : SpectralBounds
    tol : float
        Per-cycle damping target in ``(0, 1)``.
    m_count : int, optional
        Override the cycle length (the damping guarantee then no longer
        follows from ``tol``).
    ordering : {"leja", "ascending"}
        Application order.
    """
    M = chebyshev_cycle_length(bounds, tol)
    if m_count is not None:
        if m_count < 1:
            raise ValueError("m_count must be >= 1")
        M = int(m_count)
    w = _chebyshev_weights(bounds.kappa_min, bounds.kappa_max, M)
    if ordering == "leja":
        order = leja_order(1.0 / w)
    elif ordering == "ascending":
        order = np.arange(M)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    return WeightSchedule(M, w, bounds, tol, order)
