"""Uniform 1D mesh, P1 finite-element operators and discrete norms.

Fields live on the interior nodes of the mesh; the homogeneous Dirichlet
boundary values are eliminated, so a field on a grid with ``n_cells`` cells
is a complex vector of length ``n_cells - 1``.

Linear terms use the consistent P1 mass and stiffness matrices. Quartic and
noise integrals use nodal (trapezoidal) quadrature, which keeps the
nonlinear part diagonal in the node index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_IMAG_RTOL = 1e-13


class InvalidDomainError(ValueError):
    pass


class NonFiniteValueError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform partition of ``(a, b)`` into ``n_cells`` cells."""

    a: float
    b: float
    n_cells: int
    h: float = field(init=False)
    interior_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.b <= self.a:
            raise InvalidDomainError(f"need a < b, got a={self.a}, b={self.b}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise InvalidDomainError(f"need n_cells >= 2, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        h = (self.b - self.a) / self.n_cells
        x = self.a + h * np.arange(1, self.n_cells)
        x.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "interior_nodes", x)

    @property
    def n_interior(self) -> int:
        return self.n_cells - 1


def build_grid(a: float, b: float, n_cells: int) -> Grid1D:
    return Grid1D(float(a), float(b), n_cells)


@dataclass(frozen=True)
class TriDiagMatrix:
    """Symmetric tridiagonal matrix; only one off-diagonal is stored."""

    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float)
        off = np.array(self.off, dtype=float)
        if off.shape != (max(diag.size - 1, 0),):
            raise DimensionMismatchError(
                f"off-diagonal length {off.size} does not fit diagonal length {diag.size}"
            )
        diag.flags.writeable = False
        off.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "off", off)

    @property
    def size(self) -> int:
        return self.diag.size

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """Return ``T @ u`` for real or complex ``u``."""
        _check_len(u, self.size)
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def quad_form(self, u: np.ndarray, v: np.ndarray | None = None) -> complex:
        """Sesquilinear form ``conj(v) . T u`` (``v`` defaults to ``u``)."""
        v = u if v is None else v
        _check_len(v, self.size)
        return np.vdot(v, self.matvec(u))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)


def assemble_mass(grid: Grid1D, lumped: bool = False) -> TriDiagMatrix:
    """P1 consistent mass matrix (``2h/3`` on the diagonal, ``h/6`` off it).

    ``lumped=True`` returns the row-sum lumped variant ``h I`` instead.
    """
    n, h = grid.n_interior, grid.h
    if lumped:
        return TriDiagMatrix(np.full(n, h), np.zeros(n - 1))
    return TriDiagMatrix(np.full(n, 2.0 * h / 3.0), np.full(n - 1, h / 6.0))


def assemble_stiffness(grid: Grid1D) -> TriDiagMatrix:
    n, h = grid.n_interior, grid.h
    return TriDiagMatrix(np.full(n, 2.0 / h), np.full(n - 1, -1.0 / h))


def interpolate(f: Callable[[np.ndarray], np.ndarray], grid: Grid1D) -> np.ndarray:
    """Nodal interpolant of ``f`` on the interior nodes, as a complex field.

    ``f`` is called once with the array of interior nodes. Boundary values
    are not stored; ``f`` should vanish at both endpoints.
    """
    x = grid.interior_nodes
    values = np.asarray(f(x), dtype=complex)
    values = np.broadcast_to(values, x.shape).copy()
    if not np.all(np.isfinite(values)):
        bad = x[~np.isfinite(values)]
        raise NonFiniteValueError(f"non-finite values at nodes {bad[:5]}")
    return values


def zero_field(grid: Grid1D) -> np.ndarray:
    return np.zeros(grid.n_interior, dtype=complex)


def _check_len(u: np.ndarray, n: int) -> None:
    if np.shape(u) != (n,):
        raise DimensionMismatchError(f"field of shape {np.shape(u)} does not match size {n}")


def _real_form(u: np.ndarray, mat: TriDiagMatrix) -> float:
    value = mat.quad_form(u)
    scale = max(abs(value.real), np.vdot(np.abs(u), np.abs(mat.diag) * np.abs(u)).real)
    assert abs(value.imag) <= _IMAG_RTOL * scale + 1e-300, (
        f"sesquilinear form has imaginary residue {value.imag:.3e}"
    )
    return float(value.real)


def l2_norm_sq(u: np.ndarray, M: TriDiagMatrix) -> float:
    return _real_form(u, M)


def h1_seminorm_sq(u: np.ndarray, A: TriDiagMatrix) -> float:
    return _real_form(u, A)


def l4_norm4(u: np.ndarray, grid: Grid1D) -> float:
    _check_len(u, grid.n_interior)
    a2 = u.real**2 + u.imag**2
    return float(grid.h * np.dot(a2, a2))
