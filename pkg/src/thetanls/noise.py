"""Finite-mode real Q-Wiener process: sampling, coarsening and covariance field.

The process is ``W(t, x) = nu * sum_l q_l e_l(x) beta_l(t)`` with sine modes
``e_l(x) = sin(l pi (x - a) * 2 / (b - a))`` that vanish at both endpoints.
On (-1, 1) this is ``(-1)^l sin(l pi x)``; the sign flip is harmless since
each ``beta_l`` is symmetric in law.

Paths are stored as per-mode Brownian increments, so summing fine steps
into coarse ones is exact and nodal fields are built on demand.

Random streams: mode ``l`` of realization ``r`` under seed ``s`` draws from
``numpy.random.Generator(Philox(SeedSequence(s, spawn_key=(r, l))))``. Each
stream depends only on ``(s, r, l)``, so ensembles are identical whatever the
scheduling, and a path with fewer modes is a sub-path of one with more.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid_fem import Grid1D


class InvalidCoefficientError(ValueError):
    pass


class DivisibilityError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    q: np.ndarray
    nu: float
    mode_values: np.ndarray  # (L, n_interior), E[l, i] = e_l(x_i)
    grid: Grid1D

    @property
    def L(self) -> int:
        return self.q.size

    @property
    def nodal_modes(self) -> np.ndarray:
        """``nu * q_l * e_l(x_i)`` as an ``(L, N)`` table."""
        return (self.nu * self.q)[:, None] * self.mode_values


@dataclass(frozen=True)
class WienerPath:
    tau: float
    increments: np.ndarray  # (n_steps, L)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def L(self) -> int:
        return self.increments.shape[1]


def make_noise_model(
    L: int, nu: float, grid: Grid1D, coeff_rule: str | Sequence[float] = "one_over_ell"
) -> NoiseModel:
    """Build the L-mode sine noise on ``grid``.

    ``coeff_rule`` is either ``"one_over_ell"`` (``q_l = 1/l``) or an explicit
    sequence of ``L`` positive coefficients.
    """
    if L < 0:
        raise InvalidCoefficientError(f"L must be >= 0, got {L}")
    if isinstance(coeff_rule, str):
        if coeff_rule != "one_over_ell":
            raise InvalidCoefficientError(f"unknown coefficient rule {coeff_rule!r}")
        q = 1.0 / np.arange(1, L + 1, dtype=float)
    else:
        q = np.asarray(coeff_rule, dtype=float)
        if q.shape != (L,):
            raise InvalidCoefficientError(f"expected {L} coefficients, got {q.size}")
    if np.any(~np.isfinite(q)) or np.any(q <= 0):
        raise InvalidCoefficientError("noise coefficients must be finite and positive")
    ell = np.arange(1, L + 1, dtype=float)
    s = (grid.interior_nodes - grid.a) * (2.0 / (grid.b - grid.a))
    E = np.sin(np.pi * ell[:, None] * s[None, :]).reshape(L, grid.n_interior)
    q.flags.writeable = False
    E.flags.writeable = False
    return NoiseModel(q=q, nu=float(nu), mode_values=E, grid=grid)


def mode_stream(seed: int, realization: int, mode: int) -> np.random.Generator:
    """Independent generator for one (seed, realization, mode) triple."""
    ss = np.random.SeedSequence(seed, spawn_key=(realization, mode))
    return np.random.Generator(np.random.Philox(ss))


def sample_path(
    model: NoiseModel, seed: int, tau: float, n_steps: int, realization: int = 0
) -> WienerPath:
    if tau <= 0 or n_steps < 1:
        raise ValueError(f"need tau > 0 and n_steps >= 1, got tau={tau}, n_steps={n_steps}")
    incs = np.empty((n_steps, model.L))
    sd = np.sqrt(tau)
    for ell in range(model.L):
        incs[:, ell] = mode_stream(seed, realization, ell + 1).normal(0.0, sd, n_steps)
    return WienerPath(tau=float(tau), increments=incs)


def expand_increment(model: NoiseModel, path: WienerPath, n: int) -> np.ndarray:
    """Nodal values of ``Delta_n W`` on the interior nodes."""
    if not 0 <= n < path.n_steps:
        raise IndexError(f"step {n} out of range [0, {path.n_steps})")
    return path.increments[n] @ model.nodal_modes


def expand_all(model: NoiseModel, path: WienerPath) -> np.ndarray:
    """All nodal increments as an ``(n_steps, N)`` array."""
    _check_modes(model, path)
    return path.increments @ model.nodal_modes


def coarsen(path: WienerPath, k: int) -> WienerPath:
    """Sum runs of ``k`` consecutive increments (step size becomes ``k tau``).

    The sum is taken one prime factor of ``k`` at a time, smallest first, so
    for powers of two ``coarsen(coarsen(p, 2), 2)`` and ``coarsen(p, 4)``
    perform the same floating-point additions and agree bit for bit.
    """
    if k < 1 or path.n_steps % k:
        raise DivisibilityError(f"factor {k} does not divide {path.n_steps} steps")
    incs = path.increments
    for p in _prime_factors(k):
        blocks = incs.reshape(incs.shape[0] // p, p, incs.shape[1])
        summed = blocks[:, 0, :].copy()
        for j in range(1, p):
            summed += blocks[:, j, :]
        incs = summed
    return WienerPath(tau=path.tau * k, increments=incs)


def _prime_factors(k: int) -> list[int]:
    out, p = [], 2
    while p * p <= k:
        while k % p == 0:
            out.append(p)
            k //= p
        p += 1
    if k > 1:
        out.append(k)
    return out


def f_q(model: NoiseModel) -> np.ndarray:
    """Covariance field ``sum_l (nu q_l e_l(x_i))^2`` (the Ito correction density)."""
    return np.sum(model.nodal_modes**2, axis=0)


def _check_modes(model: NoiseModel, path: WienerPath) -> None:
    if path.L != model.L:
        raise ValueError(f"path has {path.L} modes, model has {model.L}")


def save_path(path: WienerPath, filename: str | Path) -> None:
    """Write increments as CSV, one row per step, one column per mode."""
    with open(filename, "w", newline="") as fh:
        fh.write(f"# tau={path.tau!r}\n")
        writer = csv.writer(fh)
        writer.writerow([f"mode{l + 1}" for l in range(path.L)])
        for row in path.increments:
            writer.writerow([repr(float(v)) for v in row])


def load_path(filename: str | Path) -> WienerPath:
    with open(filename) as fh:
        first = fh.readline().strip()
        if not first.startswith("# tau="):
            raise ValueError(f"{filename}: missing '# tau=' header")
        tau = float(first[len("# tau="):])
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    incs = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return WienerPath(tau=tau, increments=incs)
