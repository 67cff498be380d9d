"""Implicit theta-scheme for the stochastic cubic Schroedinger equation.

One step maps ``phi`` (values at interior nodes) to the root ``u`` of

    R(u) = i M (u - phi) - tau [theta A u + (1 - theta) A phi]
           + lam (tau / 2) h (|u|^2 + |phi|^2) (u + phi) / 2
           - h dW (u + phi) / 2

where ``M``, ``A`` are the P1 mass and stiffness matrices and the last two
terms use nodal quadrature. ``R`` is not complex-differentiable, so Newton
works on the real unknowns ``(Re u_0, Im u_0, Re u_1, ...)``. In that
interleaved ordering the Jacobian is block tridiagonal with 2x2 blocks,
i.e. banded with three sub- and three super-diagonals, and each Newton
update costs one banded LU solve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import diagnostics
from .grid_fem import DimensionMismatchError, Grid1D, TriDiagMatrix
from .noise import NoiseModel, WienerPath

BANDS = (3, 3)
DIVERGENCE_FACTOR = 1e6
MAX_HALVINGS = 8
AMPLITUDE_GUARD = 1e3


class NumericalFailure(RuntimeError):
    """A realization had to be abandoned; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class NonConvergence(NumericalFailure):
    pass


class AmplitudeBlowup(NumericalFailure):
    pass


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.value}")


@dataclass(frozen=True)
class HalfPlusCSqrtTau:
    """``theta = min(1, 1/2 + c sqrt(tau))``."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")


ThetaPolicy = Fixed | HalfPlusCSqrtTau


def resolve_theta(policy: ThetaPolicy, tau: float) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    if isinstance(policy, Fixed):
        return policy.value
    return min(1.0, 0.5 + policy.c * math.sqrt(tau))


def theta_label(policy: ThetaPolicy) -> str:
    if isinstance(policy, Fixed):
        return f"{policy.value:g}"
    return "1/2+sqrt(tau)" if policy.c == 1 else f"1/2+{policy.c:g}*sqrt(tau)"


@dataclass(frozen=True)
class SchemeParams:
    lam: int = -1
    theta_policy: ThetaPolicy = Fixed(0.5)
    tau: float = 2.0**-8
    newton_tol: float = 1e-12
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.lam not in (-1, 1):
            raise ValueError(f"lambda must be -1 or +1, got {self.lam}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")

    @property
    def theta(self) -> float:
        return resolve_theta(self.theta_policy, self.tau)


@dataclass(frozen=True)
class StepReport:
    newton_iters: int
    final_residual: float
    theta_used: float


class ThetaStepper:
    """Step operator with everything that depends only on (grid, M, A, params) precomputed."""

    def __init__(self, params: SchemeParams, M: TriDiagMatrix, A: TriDiagMatrix,
                 grid: Grid1D, theta: float | None = None):
        n = grid.n_interior
        if M.size != n or A.size != n:
            raise DimensionMismatchError(f"operators of size {M.size}, {A.size} on {n} nodes")
        self.params, self.M, self.A, self.grid = params, M, A, grid
        self.n = n
        self.h = grid.h
        self.tau = params.tau
        self.theta = params.theta if theta is None else float(theta)
        self.c_nl = params.lam * params.tau * grid.h / 2.0
        self.tol_abs = params.newton_tol * math.sqrt(n)

        tt = self.tau * self.theta
        # B = i M - tau theta A, the part of R linear in u
        self.b_diag = -tt * A.diag + 1j * M.diag
        self.b_off = -tt * A.off + 1j * M.off
        # C = -i M - tau (1 - theta) A, applied to phi
        t1 = self.tau * (1.0 - self.theta)
        self.c_diag = -t1 * A.diag - 1j * M.diag
        self.c_off = -t1 * A.off - 1j * M.off

        br_d, bi_d = -tt * A.diag, M.diag
        br_o, bi_o = -tt * A.off, M.off
        ab = np.zeros((7, 2 * n))
        ab[0, 3::2] = -bi_o
        ab[1, 2::2] = br_o
        ab[1, 3::2] = br_o
        ab[2, 2::2] = bi_o
        ab[4, 1:-2:2] = -bi_o
        ab[5, 0:-2:2] = br_o
        ab[5, 1:-2:2] = br_o
        ab[6, 0:-2:2] = bi_o
        self._ab_const = ab
        self._br_d, self._bi_d = br_d, bi_d

    @staticmethod
    def _tri(d: np.ndarray, o: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = d * u
        out[:-1] += o * u[1:]
        out[1:] += o * u[:-1]
        return out

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != (self.n,):
                raise DimensionMismatchError(f"field of shape {np.shape(f)} on {self.n} nodes")

    def constant_part(self, phi: np.ndarray) -> np.ndarray:
        return self._tri(self.c_diag, self.c_off, phi)

    def residual(self, u: np.ndarray, phi: np.ndarray, dw: np.ndarray,
                 const: np.ndarray | None = None) -> np.ndarray:
        if const is None:
            const = self.constant_part(phi)
        m = 0.5 * (u + phi)
        s = u.real**2 + u.imag**2 + phi.real**2 + phi.imag**2
        g = self.c_nl * s - self.h * dw
        return self._tri(self.b_diag, self.b_off, u) + const + g * m

    def jacobian_banded(self, u: np.ndarray, phi: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """Real Jacobian in LAPACK band layout (``ab[3 + i - j, j] = J[i, j]``)."""
        p, q = u.real, u.imag
        m = 0.5 * (u + phi)
        s = p**2 + q**2 + phi.real**2 + phi.imag**2
        g = self.c_nl * s - self.h * dw
        c2 = 2.0 * self.c_nl
        ab = self._ab_const.copy()
        ab[2, 1::2] = -self._bi_d + c2 * q * m.real
        ab[3, 0::2] = self._br_d + c2 * p * m.real + 0.5 * g
        ab[3, 1::2] = self._br_d + c2 * q * m.imag + 0.5 * g
        ab[4, 0::2] = self._bi_d + c2 * p * m.imag
        return ab

    def solve(self, phi: np.ndarray, dw: np.ndarray) -> tuple[np.ndarray, StepReport]:
        const = self.constant_part(phi)
        u = phi.copy()
        r = self.residual(u, phi, dw, const)
        rn = float(np.linalg.norm(r))
        r0 = max(rn, self.tol_abs)
        it = 0
        while rn > self.tol_abs:
            if it >= self.params.newton_max_iter:
                raise NonConvergence(
                    f"Newton did not converge in {it} iterations (residual {rn:.3e})")
            ab = self.jacobian_banded(u, phi, dw)
            try:
                d = solve_banded(BANDS, ab, r.view(np.float64), overwrite_ab=True,
                                 check_finite=False).view(np.complex128)
            except np.linalg.LinAlgError as exc:
                raise NonConvergence(f"singular Newton system: {exc}") from None
            step = 1.0
            for _ in range(MAX_HALVINGS + 1):
                u_try = u - step * d
                r_try = self.residual(u_try, phi, dw, const)
                rn_try = float(np.linalg.norm(r_try))
                if rn_try <= rn or rn_try <= self.tol_abs:
                    break
                step *= 0.5
            u, r, rn = u_try, r_try, rn_try
            it += 1
            if not math.isfinite(rn) or rn > DIVERGENCE_FACTOR * r0:
                raise NonConvergence(f"Newton diverged (residual {rn:.3e})")
        return u, StepReport(newton_iters=it, final_residual=rn, theta_used=self.theta)


def residual(u, phi_n, dW, theta, params: SchemeParams, M, A, grid) -> np.ndarray:
    st = ThetaStepper(params, M, A, grid, theta)
    st.check(u, phi_n, dW)
    return st.residual(np.asarray(u, complex), np.asarray(phi_n, complex), np.asarray(dW, float))


def jacobian(u, phi_n, dW, theta, params: SchemeParams, M, A, grid) -> np.ndarray:
    """Banded real Jacobian of :func:`residual` w.r.t. interleaved (Re u, Im u)."""
    st = ThetaStepper(params, M, A, grid, theta)
    st.check(u, phi_n, dW)
    return st.jacobian_banded(np.asarray(u, complex), np.asarray(phi_n, complex),
                              np.asarray(dW, float))


def banded_to_dense(ab: np.ndarray, bands: tuple[int, int] = BANDS) -> np.ndarray:
    lower, upper = bands
    n = ab.shape[1]
    out = np.zeros((n, n))
    for k in range(-lower, upper + 1):
        row = ab[upper - k]
        if k >= 0:
            out[np.arange(n - k), np.arange(k, n)] = row[k:]
        else:
            out[np.arange(-k, n), np.arange(n + k)] = row[: n + k]
    return out


def solve_step(phi_n, dW, params: SchemeParams, M, A, grid) -> tuple[np.ndarray, StepReport]:
    st = ThetaStepper(params, M, A, grid)
    st.check(phi_n, dW)
    return st.solve(np.asarray(phi_n, complex), np.asarray(dW, float))


@dataclass
class Trajectory:
    final: np.ndarray
    diagnostics: diagnostics.TrajectoryDiagnostics
    theta: float
    snapshots: dict[float, np.ndarray]


def run_trajectory(
    psi0: np.ndarray,
    path: WienerPath,
    model: NoiseModel,
    params: SchemeParams,
    grid: Grid1D,
    M: TriDiagMatrix,
    A: TriDiagMatrix,
    T: float | None = None,
    snapshot_times: Sequence[float] = (),
    record: bool = True,
) -> Trajectory:
    """Advance ``psi0`` through every increment of ``path``.

    Diagnostics are recorded at all ``n_steps + 1`` time levels unless
    ``record`` is false, in which case only the final field is kept.
    Raises :class:`NumericalFailure` (with ``.step``) if a step fails.
    """
    if not math.isclose(path.tau, params.tau, rel_tol=1e-12):
        raise ValueError(f"path step {path.tau} differs from scheme step {params.tau}")
    if T is not None and abs(path.n_steps * path.tau - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"path covers {path.n_steps * path.tau}, expected T={T}")
    if path.L != model.L:
        raise ValueError(f"path has {path.L} modes, model has {model.L}")
    st = ThetaStepper(params, M, A, grid)
    st.check(psi0)
    guard = params.lam == 1
    if guard:
        warnings.warn("lambda=+1 (focusing) lies outside the stability theory; "
                      "aborting realizations whose H1 norm exceeds 1e3", stacklevel=2)

    n_steps = path.n_steps
    modes = model.nodal_modes
    phi = np.array(psi0, dtype=complex)
    diag = diagnostics.TrajectoryDiagnostics.empty(n_steps + 1) if record else None
    if record:
        diag.set_row(0, 0.0, phi, M, A, grid, params.lam, 0)
    snaps = {}
    snap_steps = {int(round(t / params.tau)): t for t in snapshot_times}
    if 0 in snap_steps:
        snaps[snap_steps[0]] = phi.copy()
    for n in range(n_steps):
        dw = path.increments[n] @ modes
        try:
            phi, report = st.solve(phi, dw)
        except NonConvergence as exc:
            raise NonConvergence(str(exc), step=n) from None
        if not np.all(np.isfinite(phi)):
            raise NonConvergence("non-finite iterate", step=n)
        if record:
            diag.set_row(n + 1, (n + 1) * params.tau, phi, M, A, grid, params.lam,
                         report.newton_iters)
        if guard:
            h1 = math.sqrt(max(0.0, st.A.quad_form(phi).real + st.M.quad_form(phi).real))
            if h1 > AMPLITUDE_GUARD:
                raise AmplitudeBlowup(f"H1 norm {h1:.3e} exceeds guard", step=n)
        if n + 1 in snap_steps:
            snaps[snap_steps[n + 1]] = phi.copy()
    return Trajectory(final=phi, diagnostics=diag, theta=st.theta, snapshots=snaps)
