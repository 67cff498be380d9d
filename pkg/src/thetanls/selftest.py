"""Quick oracle checks behind ``thetanls selftest`` (a few seconds in total).

Each check compares the production path with something computed
independently: dense matrices built from the element formulas, central
finite differences, a preconditioned fixed-point iteration, Monte Carlo
moments, and closed-form integrals.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .grid_fem import (assemble_mass, assemble_stiffness, build_grid, h1_seminorm_sq,
                       interpolate, l2_norm_sq, l4_norm4)
from .noise import coarsen, expand_all, f_q, make_noise_model, sample_path
from .scheme import SchemeParams, ThetaStepper, banded_to_dense


def dense_residual(u, phi, dw, theta, lam, tau, h):
    """Residual of one step, written out with dense P1 matrices."""
    n = u.size
    M = (np.diag(np.full(n, 4.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) * h / 6
    A = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h
    mid = (u + phi) / 2
    return (1j * M @ (u - phi) - tau * (theta * A @ u + (1 - theta) * A @ phi)
            + lam * tau / 2 * h * (np.abs(u) ** 2 + np.abs(phi) ** 2) * mid - h * dw * mid)


def fixed_point_step(phi, dw, theta, lam, tau, h, iters=10_000):
    """Solve the step by Richardson iteration preconditioned with the linear part."""
    n = phi.size
    M = (np.diag(np.full(n, 4.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) * h / 6
    A = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h
    P = 1j * M - tau * theta * A
    u = phi.copy()
    for _ in range(iters):
        du = np.linalg.solve(P, dense_residual(u, phi, dw, theta, lam, tau, h))
        u = u - 0.9 * du
        if np.max(np.abs(du)) < 1e-16:
            break
    return u


def _random_instance(rng, n_cells):
    n = n_cells - 1
    u = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    phi = rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)
    dw = rng.normal(0, 0.1, n)
    return u, phi, dw


def check_jacobian(n_instances=100, eps=1e-6):
    rng = np.random.default_rng(11)
    grid = build_grid(0.0, 1.0, 6)
    M, A = assemble_mass(grid), assemble_stiffness(grid)
    worst = 0.0
    for _ in range(n_instances):
        u, phi, dw = _random_instance(rng, 6)
        theta = rng.uniform(0.5, 1.0)
        st = ThetaStepper(SchemeParams(lam=int(rng.choice([-1, 1])), tau=0.1), M, A, grid, theta)
        J = banded_to_dense(st.jacobian_banded(u, phi, dw))
        x = u.view(np.float64).copy()
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = eps
            rp = st.residual((x + e).view(np.complex128), phi, dw).view(np.float64)
            rm = st.residual((x - e).view(np.complex128), phi, dw).view(np.float64)
            worst = max(worst, np.max(np.abs((rp - rm) / (2 * eps) - J[:, k])))
    return worst <= 1e-6, f"max |FD - J| = {worst:.2e} (tol 1e-6)"


def check_newton_vs_fixed_point(n_instances=20):
    rng = np.random.default_rng(12)
    grid = build_grid(0.0, 1.0, 4)
    M, A = assemble_mass(grid), assemble_stiffness(grid)
    worst = 0.0
    for _ in range(n_instances):
        _, phi, dw = _random_instance(rng, 4)
        theta, lam, tau = rng.uniform(0.5, 1.0), int(rng.choice([-1, 1])), 1e-3
        st = ThetaStepper(SchemeParams(lam=lam, tau=tau), M, A, grid, theta)
        u, _ = st.solve(phi, dw)
        ref = fixed_point_step(phi, dw, theta, lam, tau, grid.h)
        worst = max(worst, np.max(np.abs(u - ref)))
    return worst <= 1e-10, f"max |newton - fixed point| = {worst:.2e} (tol 1e-10)"


def check_noise_variance(n_samples=100_000):
    grid = build_grid(-1.0, 1.0, 16)
    model = make_noise_model(8, math.sqrt(2.0), grid)
    tau = 2.0**-8
    path = sample_path(model, 5, tau, n_samples)
    var = expand_all(model, path).var(axis=0)
    rel = np.max(np.abs(var / (tau * f_q(model)) - 1))
    return rel <= 0.05, f"max relative deviation of Var(dW)/(tau F_Q) = {rel:.3f} (tol 0.05)"


def check_coarsening():
    grid = build_grid(-1.0, 1.0, 8)
    model = make_noise_model(8, 1.0, grid)
    path = sample_path(model, 3, 2.0**-12, 1024)
    ok = np.array_equal(coarsen(coarsen(path, 2), 2).increments, coarsen(path, 4).increments)
    return ok, "coarsen(coarsen(p,2),2) == coarsen(p,4) bit for bit" if ok else "mismatch"


def check_fem_norms():
    grid = build_grid(-1.0, 1.0, 512)
    u = interpolate(lambda x: np.sin(np.pi * x) ** 2, grid)
    m = l2_norm_sq(u, assemble_mass(grid))
    a = h1_seminorm_sq(u, assemble_stiffness(grid))
    q = l4_norm4(u, grid)
    errs = (abs(m - 0.75), abs(a - math.pi**2) / math.pi**2, abs(q - 35 / 64))
    ok = errs[0] <= 5e-5 and errs[1] <= 1e-3 and errs[2] <= 5e-4
    return ok, (f"|L2^2 - 3/4| = {errs[0]:.1e}, |H1^2 - pi^2|/pi^2 = {errs[1]:.1e}, "
                f"|L4^4 - 35/64| = {errs[2]:.1e}")


CHECKS = [
    ("jacobian_vs_finite_differences", check_jacobian),
    ("newton_vs_fixed_point", check_newton_vs_fixed_point),
    ("noise_variance_vs_F_Q", check_noise_variance),
    ("coarsening_associativity", check_coarsening),
    ("fem_norms_vs_exact_integrals", check_fem_norms),
]


def run_selftest(out=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        ok, detail = fn()
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail} [{time.perf_counter() - t0:.2f}s]")
    return all_ok
