"""Implicit theta-scheme solver for the 1D stochastic cubic Schroedinger equation
with multiplicative Stratonovich noise, with P1 finite elements in space."""

from .grid_fem import (Grid1D, TriDiagMatrix, assemble_mass, assemble_stiffness, build_grid,
                       h1_seminorm_sq, interpolate, l2_norm_sq, l4_norm4)
from .noise import (NoiseModel, WienerPath, coarsen, expand_increment, f_q, make_noise_model,
                    sample_path)
from .scheme import (Fixed, HalfPlusCSqrtTau, NonConvergence, SchemeParams, StepReport,
                     resolve_theta, run_trajectory, solve_step)
from .diagnostics import EnsembleStats, ensemble_reduce, h2_proxy_sq, hamiltonian, mass

__version__ = "0.1.0"
