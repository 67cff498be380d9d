"""Monte Carlo experiments: coupled strong-error tables, invariant ensembles, order fits.

Every realization is an independent work item keyed by its index ``r``; its
noise comes from the streams ``(base_seed, r, mode)`` (see
:mod:`thetanls.noise`). Work items run on a process pool whose size is read
from ``THETANLS_WORKERS`` (default: logical core count), results come back
in index order, and all reductions sum in that order, so outputs do not
depend on the worker count.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .config import ExperimentConfig, initial_function, steps_for
from .diagnostics import EnsembleStats, TrajectoryDiagnostics, ensemble_reduce
from .grid_fem import (Grid1D, TriDiagMatrix, assemble_mass, assemble_stiffness,
                       build_grid, interpolate, l2_norm_sq)
from .noise import NoiseModel, coarsen, make_noise_model, sample_path
from .scheme import NumericalFailure, SchemeParams, ThetaPolicy, run_trajectory, theta_label

MAX_FAILURE_RATE = 0.01
WORKERS_ENV = "THETANLS_WORKERS"


class ExperimentFailure(RuntimeError):
    """Too many realizations failed for the statistics to be trusted."""


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly on a process pool; order is preserved."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass(frozen=True)
class Setup:
    grid: Grid1D
    M: TriDiagMatrix
    A: TriDiagMatrix
    model: NoiseModel
    psi0: np.ndarray


@lru_cache(maxsize=8)
def make_setup(cfg: ExperimentConfig) -> Setup:
    grid = build_grid(cfg.domain.a, cfg.domain.b, cfg.grid.n_cells)
    M = assemble_mass(grid, lumped=cfg.scheme.mass == "lumped")
    A = assemble_stiffness(grid)
    model = make_noise_model(cfg.noise.L, cfg.noise.nu, grid, cfg.noise.coeff_rule)
    psi0 = interpolate(initial_function(cfg), grid)
    return Setup(grid, M, A, model, psi0)


def scheme_params(cfg: ExperimentConfig, policy: ThetaPolicy, tau: float) -> SchemeParams:
    s = cfg.scheme
    return SchemeParams(lam=s.lam, theta_policy=policy, tau=tau,
                        newton_tol=s.newton_tol, newton_max_iter=s.newton_max_iter)


def estimate_order(taus: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(tau) and the RMS log-space residual."""
    taus = np.asarray(taus, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if taus.shape != errors.shape or taus.size < 2:
        raise ValueError("need at least two (tau, error) pairs of equal length")
    if np.any(~np.isfinite(taus)) or np.any(~np.isfinite(errors)) \
            or np.any(taus <= 0) or np.any(errors <= 0):
        raise ValueError("taus and errors must be finite and positive")
    x, y = np.log(taus), np.log(errors)
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0:
        raise ValueError("all taus are equal")
    slope = float(xc @ (y - y.mean())) / denom
    fit = y.mean() + slope * xc
    return slope, float(np.sqrt(np.mean((y - fit) ** 2)))


@dataclass(frozen=True)
class ErrorRow:
    tau: float
    rms_error: float
    realizations: int
    failures: int


@dataclass
class ErrorTable:
    theta: str
    rows: list[ErrorRow]
    fitted_order: float
    fit_residual: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("tau,rms_error,realizations,failures\n")
        for r in self.rows:
            buf.write(f"{r.tau!r},{r.rms_error!r},{r.realizations},{r.failures}\n")
        buf.write(f"# fitted_order={self.fitted_order!r} residual={self.fit_residual!r}\n")
        return buf.getvalue()


def _strong_error_item(args) -> tuple[bool, list[float | None]]:
    cfg, policy, r = args
    st = make_setup(cfg)
    t = cfg.time
    fine = sample_path(st.model, cfg.mc.base_seed, t.tau_ref, steps_for(t.T, t.tau_ref), r)
    try:
        ref = run_trajectory(st.psi0, fine, st.model, scheme_params(cfg, policy, t.tau_ref),
                             st.grid, st.M, st.A, T=t.T, record=False).final
    except NumericalFailure:
        return False, [None] * len(t.tau_list)
    sq = []
    for tau in t.tau_list:
        k = int(round(tau / t.tau_ref))
        if k == 1:
            sq.append(0.0)
            continue
        path = coarsen(fine, k)
        try:
            phi = run_trajectory(st.psi0, path, st.model, scheme_params(cfg, policy, tau),
                                 st.grid, st.M, st.A, T=t.T, record=False).final
        except NumericalFailure:
            sq.append(None)
            continue
        sq.append(l2_norm_sq(phi - ref, st.M))
    return True, sq


def strong_error_experiment(cfg: ExperimentConfig, policy: ThetaPolicy | None = None,
                            workers: int | None = None) -> ErrorTable:
    """RMS L2 error at time T of each coarse step against a coupled fine-step reference.

    Realization ``r`` samples one path at ``tau_ref``; every coarse path is
    obtained from it by exact summation of increments.
    """
    policy = cfg.scheme.thetas[0] if policy is None else policy
    R = cfg.mc.realizations
    results = parallel_map(_strong_error_item, [(cfg, policy, r) for r in range(R)], workers)
    order = sorted(range(len(cfg.time.tau_list)), key=lambda j: -cfg.time.tau_list[j])
    rows = []
    for j in order:
        total, ok, failed = 0.0, 0, 0
        for _, sq in results:
            if sq[j] is None:
                failed += 1
            else:
                total += sq[j]
                ok += 1
        if failed > MAX_FAILURE_RATE * R:
            raise ExperimentFailure(
                f"theta={theta_label(policy)} tau={cfg.time.tau_list[j]}: "
                f"{failed}/{R} realizations failed")
        rms = math.sqrt(total / ok) if ok else math.nan
        rows.append(ErrorRow(cfg.time.tau_list[j], rms, ok, failed))
    fit = [(r.tau, r.rms_error) for r in rows if r.rms_error > 0 and math.isfinite(r.rms_error)]
    if len(fit) >= 2:
        slope, resid = estimate_order(*zip(*fit))
    else:
        slope, resid = math.nan, math.nan
    return ErrorTable(theta_label(policy), rows, slope, resid)


def _trajectory_item(args) -> TrajectoryDiagnostics | None:
    cfg, policy, tau, r = args
    st = make_setup(cfg)
    n = steps_for(cfg.time.T, tau)
    path = sample_path(st.model, cfg.mc.base_seed, tau, n, r)
    try:
        return run_trajectory(st.psi0, path, st.model, scheme_params(cfg, policy, tau),
                              st.grid, st.M, st.A, T=cfg.time.T).diagnostics
    except NumericalFailure:
        return None


def run_ensemble(cfg: ExperimentConfig, policy: ThetaPolicy, tau: float | None = None,
                 workers: int | None = None) -> list[TrajectoryDiagnostics | None]:
    """Diagnostics of realizations ``0..R-1`` in index order (``None`` marks a failure)."""
    tau = cfg.time.tau if tau is None else tau
    items = [(cfg, policy, tau, r) for r in range(cfg.mc.realizations)]
    return parallel_map(_trajectory_item, items, workers)


def reduce_ensemble(results: Sequence[TrajectoryDiagnostics | None], label: str = "") -> EnsembleStats:
    ok = [d for d in results if d is not None]
    failures = len(results) - len(ok)
    if failures > MAX_FAILURE_RATE * len(results):
        raise ExperimentFailure(f"{label}: {failures}/{len(results)} realizations failed")
    return ensemble_reduce(ok, failures)


@dataclass
class InvariantReport:
    stats: dict[str, EnsembleStats] = field(default_factory=dict)
    csv: str = ""


def invariant_experiment(cfg: ExperimentConfig, tau: float | None = None,
                         workers: int | None = None) -> InvariantReport:
    """Ensemble mass/Hamiltonian curves at one step size, one block per theta policy.

    All policies see the same noise paths.
    """
    from .diagnostics import ensemble_csv

    report = InvariantReport()
    parts = []
    for policy in cfg.scheme.thetas:
        label = f"theta={theta_label(policy)}"
        stats = reduce_ensemble(run_ensemble(cfg, policy, tau, workers), label)
        report.stats[theta_label(policy)] = stats
        parts.append(ensemble_csv(stats, label))
    report.csv = "".join(parts)
    return report
