"""Mass, Hamiltonian and discrete H^2 monitors, plus ensemble statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid_fem import Grid1D, TriDiagMatrix, h1_seminorm_sq, l2_norm_sq, l4_norm4

QUANTILES = (0.25, 0.5, 0.75)
DIAG_COLUMNS = ("step", "time", "mass", "hamiltonian", "h1_semi_sq", "h2_proxy_sq", "newton_iters")


def mass(u: np.ndarray, M: TriDiagMatrix) -> float:
    return l2_norm_sq(u, M)


def hamiltonian(u: np.ndarray, A: TriDiagMatrix, grid: Grid1D, lam: int) -> float:
    """``0.5 |grad u|^2 - (lam / 4) int |u|^4``; nonnegative when ``lam = -1``."""
    return 0.5 * h1_seminorm_sq(u, A) - 0.25 * lam * l4_norm4(u, grid)


def discrete_laplacian(u: np.ndarray, A: TriDiagMatrix, grid: Grid1D) -> np.ndarray:
    """``-D^{-1} A u`` with ``D = h I`` the lumped mass matrix."""
    return -A.matvec(u) / grid.h


def h2_proxy_sq(u: np.ndarray, M: TriDiagMatrix, A: TriDiagMatrix, grid: Grid1D) -> float:
    """``|u|_L2^2 + |grad u|^2 + h sum |Delta_h u|^2``, a cheap stand-in for the H^2 norm."""
    lap = discrete_laplacian(u, A, grid)
    return l2_norm_sq(u, M) + h1_seminorm_sq(u, A) + grid.h * float(np.vdot(lap, lap).real)


@dataclass(frozen=True)
class StepDiagnostics:
    time: float
    mass: float
    hamiltonian: float
    h1_semi_sq: float
    h2_proxy_sq: float
    newton_iters: int


@dataclass
class TrajectoryDiagnostics:
    """Per-time-level diagnostics, one array entry per level ``0..n_steps``."""

    time: np.ndarray
    mass: np.ndarray
    hamiltonian: np.ndarray
    h1_semi_sq: np.ndarray
    h2_proxy_sq: np.ndarray
    newton_iters: np.ndarray

    @classmethod
    def empty(cls, n_levels: int) -> "TrajectoryDiagnostics":
        z = lambda: np.zeros(n_levels)
        return cls(z(), z(), z(), z(), z(), np.zeros(n_levels, dtype=int))

    def __len__(self) -> int:
        return self.time.size

    def set_row(self, k: int, t: float, u: np.ndarray, M: TriDiagMatrix, A: TriDiagMatrix,
                grid: Grid1D, lam: int, newton_iters: int) -> None:
        Au = A.matvec(u)
        h1 = float(np.vdot(u, Au).real)
        l2 = float(np.vdot(u, M.matvec(u)).real)
        self.time[k] = t
        self.mass[k] = l2
        self.h1_semi_sq[k] = h1
        self.hamiltonian[k] = 0.5 * h1 - 0.25 * lam * l4_norm4(u, grid)
        self.h2_proxy_sq[k] = l2 + h1 + float(np.vdot(Au, Au).real) / grid.h
        self.newton_iters[k] = newton_iters

    def row(self, k: int) -> StepDiagnostics:
        return StepDiagnostics(float(self.time[k]), float(self.mass[k]),
                               float(self.hamiltonian[k]), float(self.h1_semi_sq[k]),
                               float(self.h2_proxy_sq[k]), int(self.newton_iters[k]))


@dataclass
class EnsembleStats:
    time: np.ndarray
    mean_mass: np.ndarray
    mean_hamiltonian: np.ndarray
    max_mean_hamiltonian: float
    mass_drift: np.ndarray  # E|phi^n|^2 - E|phi^0|^2
    max_abs_drift: float
    h1_max_quantiles: np.ndarray  # quantiles of max_n |grad phi^n| at QUANTILES
    realizations: int
    failures: int

    @property
    def failure_rate(self) -> float:
        total = self.realizations + self.failures
        return self.failures / total if total else 0.0


class EmptyEnsembleError(ValueError):
    pass


def ensemble_reduce(trajectories: Sequence[TrajectoryDiagnostics], failures: int = 0) -> EnsembleStats:
    """Reduce successful trajectories (in the given index order) to ensemble statistics.

    Sums run sequentially over realizations in list order, so results are
    bit-reproducible for a fixed ordering.
    """
    if not trajectories:
        raise EmptyEnsembleError("no successful realizations to reduce")
    n_levels = len(trajectories[0])
    if any(len(t) != n_levels for t in trajectories):
        raise ValueError("trajectories have differing numbers of time levels")
    mass_sum = np.zeros(n_levels)
    ham_sum = np.zeros(n_levels)
    h1_max = np.empty(len(trajectories))
    for r, t in enumerate(trajectories):
        mass_sum += t.mass
        ham_sum += t.hamiltonian
        h1_max[r] = np.sqrt(max(0.0, t.h1_semi_sq.max()))
    count = len(trajectories)
    mean_mass = mass_sum / count
    mean_ham = ham_sum / count
    drift = mean_mass - mean_mass[0]
    return EnsembleStats(
        time=trajectories[0].time.copy(),
        mean_mass=mean_mass,
        mean_hamiltonian=mean_ham,
        max_mean_hamiltonian=float(mean_ham.max()),
        mass_drift=drift,
        max_abs_drift=float(np.abs(drift).max()),
        h1_max_quantiles=np.quantile(h1_max, QUANTILES),
        realizations=count,
        failures=failures,
    )


def trajectory_csv(diag: TrajectoryDiagnostics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAG_COLUMNS)
    for k in range(len(diag)):
        w.writerow([k, repr(float(diag.time[k])), repr(float(diag.mass[k])),
                    repr(float(diag.hamiltonian[k])), repr(float(diag.h1_semi_sq[k])),
                    repr(float(diag.h2_proxy_sq[k])), int(diag.newton_iters[k])])
    return buf.getvalue()


def ensemble_csv(stats: EnsembleStats, label: str = "") -> str:
    """Per-step ensemble means followed by a ``#``-prefixed summary block."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", "mean_mass", "mean_hamiltonian", "mass_drift"])
    for k in range(stats.time.size):
        w.writerow([k, repr(float(stats.time[k])), repr(float(stats.mean_mass[k])),
                    repr(float(stats.mean_hamiltonian[k])), repr(float(stats.mass_drift[k]))])
    q = stats.h1_max_quantiles
    prefix = f"# [{label}] " if label else "# "
    buf.write(f"{prefix}realizations={stats.realizations} failures={stats.failures}\n")
    buf.write(f"{prefix}max_mean_hamiltonian={stats.max_mean_hamiltonian!r} "
              f"max_abs_mass_drift={stats.max_abs_drift!r}\n")
    buf.write(f"{prefix}h1_max_quartiles={q[0]!r},{q[1]!r},{q[2]!r}\n")
    return buf.getvalue()
