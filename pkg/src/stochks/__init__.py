"""Spectral-Galerkin simulation of the stochastic Kuramoto-Sivashinsky equation with multiplicative noise.

The equation ``∂_t u + Δ²u + Δu + ∂_x f(u) = σ(u, ∂_x u, ∂_x² u) Ẇ`` is
posed on ``(0, L)`` with ``u = Δu = 0`` at both ends. ``W`` is a trace-class
Q-Wiener process. Fields are stored as sine coefficients; the solver works
with the mild formulation; :mod:`stochks.analysis` turns the smoothing,
noise, energy and contraction estimates into numerical checks.
"""

from .dynamics import (
    FluxModel,
    SigmaModel,
    TruncationSpec,
    certify_growth_bounds,
    div_flux_galerkin,
    flux_eval,
    mollifier_eval,
    power_flux,
    quadratic_flux,
    sigma_additive,
    sigma_gradient,
    sigma_linear,
    sigma_on_grid,
    sigma_sine,
    sigma_zero,
    truncate,
    zero_flux,
)
from .exceptions import (
    AliasingError,
    DivergedPathError,
    GridMismatchError,
    IllConditionedFitError,
    InvalidParameterError,
    NonContractionError,
    TraceClassError,
    TruncationCapExceeded,
)
from .noise import NoiseIncrement, NoiseModel, build_noise, kernel_eval, noise_from_amplitudes, r_norm_sq, sample_increment
from .rng import stream
from .solver import (
    EnsembleRun,
    Models,
    PathPair,
    SolverConfig,
    Trajectory,
    extend_global,
    gamma_apply,
    picard_solve,
    simulate_ensemble,
    simulate_pair,
    simulate_path,
    step_exponential_euler,
)
from .spectral import (
    GridFunction,
    SemigroupSpec,
    SpectralField,
    build_basis,
    evaluate_on_grid,
    project_from_grid,
    semigroup_apply,
    sobolev_norm,
)

__version__ = "0.1.0"
