"""Trace-class Q-Wiener noise expanded in the sine eigenbasis.

``W_t(x) = Σ_k c_k w^k_t φ_k(x)`` with independent standard Brownian motions
``w^k`` and spectral amplitudes ``c_k = κ k^{-γ}``. The covariance kernel is
``r(x, y) = Σ c_k² φ_k(x) φ_k(y)`` and its trace is ``Σ c_k²``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import GridMismatchError, InvalidParameterError, TraceClassError
from .spectral import basis_values, grid_points, sine_synthesis

__all__ = [
    "NoiseModel",
    "NoiseIncrement",
    "build_noise",
    "noise_from_amplitudes",
    "kernel_eval",
    "kernel_diagonal",
    "r_norm_sq",
    "r_inner_spectral",
    "sample_increment",
    "sample_increments",
    "increment_on_grid",
    "ito_isometry_check",
    "IsometryReport",
]


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Spectral amplitudes ``c_k`` on the sine basis of ``spec``'s interval."""

    ck: np.ndarray
    spec: object
    trace: float
    kernel_sup: float
    kappa: float = float("nan")
    gamma: float = float("nan")

    @property
    def K_noise(self):
        return self.ck.size

    @property
    def is_zero(self):
        return not np.any(self.ck)

    def __repr__(self):
        return f"NoiseModel(K_noise={self.K_noise}, trace={self.trace:.6g}, kernel_sup={self.kernel_sup:.6g})"


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    """One Brownian increment per noise mode: ``dW_k = c_k ξ_k sqrt(dt)``."""

    dW: np.ndarray
    dt: float


def _kernel_sup(ck, L):
    # grid scan resolving 2*K_noise modes, then a bounded polish around the best sample
    k = np.arange(1, ck.size + 1)

    def diag(x):
        return (2.0 / L) * np.sin(np.multiply.outer(x, k) * np.pi / L) ** 2 @ ck**2

    n = max(64, 16 * ck.size)
    x = grid_points(L, n)
    vals = diag(x)
    j = int(np.argmax(vals))
    h = L / (n + 1)
    res = minimize_scalar(lambda s: -diag(np.array([s]))[0], bounds=(x[j] - h, x[j] + h), method="bounded",
                          options={"xatol": 1e-12 * L})
    return float(max(vals[j], -res.fun))


def noise_from_amplitudes(spec, ck):
    """Noise model from explicit amplitudes (e.g. single-mode test noise)."""
    ck = np.array(ck, dtype=float)
    if ck.ndim != 1 or ck.size == 0:
        raise InvalidParameterError("amplitudes must be a nonempty 1-D sequence")
    if np.any(ck < 0) or not np.all(np.isfinite(ck)):
        raise InvalidParameterError("amplitudes must be finite and nonnegative")
    ck.setflags(write=False)
    trace = float(np.sum(ck**2))
    return NoiseModel(ck, spec, trace, _kernel_sup(ck, spec.L))


def build_noise(spec, kappa=1.0, gamma=1.0, K_noise=None):
    """Power-law spectrum ``c_k = κ k^{-γ}`` on the first ``K_noise`` sine modes.

    ``γ ≤ 1/2`` is refused: the infinite series ``Σ c_k²`` would diverge.
    """
    if kappa < 0:
        raise InvalidParameterError(f"noise scale kappa must be nonnegative, got {kappa}")
    if not gamma > 0.5:
        raise TraceClassError(
            f"decay exponent gamma={gamma} <= 1/2: sum of c_k^2 diverges, covariance is not trace class"
        )
    K_noise = spec.K if K_noise is None else int(K_noise)
    if K_noise < 1:
        raise InvalidParameterError(f"K_noise must be positive, got {K_noise}")
    ck = kappa * np.arange(1, K_noise + 1, dtype=float) ** (-gamma)
    nm = noise_from_amplitudes(spec, ck)
    return NoiseModel(nm.ck, spec, nm.trace, nm.kernel_sup, float(kappa), float(gamma))


def _check_points(nm, *pts):
    for p in pts:
        p = np.asarray(p)
        if np.any(p < 0) or np.any(p > nm.spec.L):
            raise InvalidParameterError(f"point(s) outside [0, {nm.spec.L}]")


def kernel_eval(nm, x, y):
    """``r(x, y) = Σ c_k² φ_k(x) φ_k(y)``; broadcasts over ``x`` and ``y``."""
    _check_points(nm, x, y)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    px = basis_values(nm.spec, x.ravel(), nm.K_noise)
    py = basis_values(nm.spec, y.ravel(), nm.K_noise)
    out = np.sum(px * py * nm.ck**2, axis=-1).reshape(x.shape)
    return out if out.ndim else float(out)


def kernel_diagonal(nm, M):
    """``r(x_j, x_j)`` on the ``M``-point interior grid."""
    x = grid_points(nm.spec.L, M)
    return basis_values(nm.spec, x, nm.K_noise) ** 2 @ nm.ck**2


def r_norm_sq(nm, g, diag=None):
    """``‖g‖_R² = ∫ r(x,x) g(x)² dx`` by the trapezoidal rule on ``g``'s grid.

    ``diag`` may carry a precomputed kernel diagonal; it must match ``g.M``.
    """
    if not np.isclose(g.L, nm.spec.L):
        raise GridMismatchError(f"grid interval {g.L} differs from noise interval {nm.spec.L}")
    if diag is None:
        diag = kernel_diagonal(nm, g.M)
    elif np.shape(diag)[-1] != g.M:
        raise GridMismatchError(f"kernel diagonal has {np.shape(diag)[-1]} points, grid has {g.M}")
    h = g.L / (g.M + 1)
    return h * np.sum(diag * g.values**2, axis=-1)


def r_inner_spectral(nm, coeffs):
    """``(Ru, u) = Σ c_k² (u, e_k)²`` from sine coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = min(coeffs.shape[-1], nm.K_noise)
    return np.sum(nm.ck[:n] ** 2 * coeffs[..., :n] ** 2, axis=-1)


def sample_increment(nm, dt, rng):
    """One increment ``c_k ξ_k sqrt(dt)`` with ``ξ`` drawn from ``rng``."""
    if not dt > 0:
        raise InvalidParameterError(f"time step must be positive, got dt={dt}")
    xi = rng.standard_normal(nm.K_noise)
    return NoiseIncrement(nm.ck * xi * np.sqrt(dt), float(dt))


def sample_increments(nm, dt, streams, n_steps):
    """Increments for many paths: array ``(n_paths, n_steps, K_noise)``.

    Path ``i`` consumes only ``streams[i]``; the result does not depend on how
    many paths are drawn together.
    """
    if not dt > 0:
        raise InvalidParameterError(f"time step must be positive, got dt={dt}")
    out = np.empty((len(streams), n_steps, nm.K_noise))
    for i, g in enumerate(streams):
        out[i] = g.standard_normal((n_steps, nm.K_noise))
    out *= nm.ck * np.sqrt(dt)
    return out


def increment_on_grid(nm, dW, M):
    """Grid values of ``Σ_k dW_k φ_k(x_j)`` (shape ``(..., M)``)."""
    return sine_synthesis(dW, M, nm.spec.L)


@dataclass
class IsometryReport:
    lhs: float
    rhs: float
    ratio: float
    half_width: float
    n_samples: int

    @property
    def passed(self):
        return abs(self.ratio - 1.0) <= 0.05 + self.half_width


def ito_isometry_check(nm, u_path, dt, n_samples, rng):
    """Monte Carlo check of ``E(∫₀ᵗ (u_s, dW_s))² = ∫₀ᵗ (R u_s, u_s) ds``.

    ``u_path`` holds deterministic sine coefficients of shape ``(n_steps, K)``
    evaluated at the left end of each step. Returns the sample LHS, the
    quadrature RHS, their ratio and a 95% CLT half-width on the ratio.
    """
    if n_samples < 100:
        raise InvalidParameterError(f"n_samples={n_samples} < 100 gives meaningless statistics")
    u_path = np.atleast_2d(np.asarray(u_path, dtype=float))
    n_steps, K = u_path.shape
    n = min(K, nm.K_noise)
    # (u_s, e_k) c_k per step; the stochastic integral is Σ_s Σ_k c_k (u_s, e_k) ξ_{s,k} sqrt(dt)
    weights = u_path[:, :n] * nm.ck[:n]
    rhs = float(dt * np.sum(weights**2))
    lhs_samples = np.empty(n_samples)
    chunk = max(1, min(n_samples, 2_000_000 // max(1, n_steps * n)))
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        xi = rng.standard_normal((m, n_steps, n))
        lhs_samples[start : start + m] = np.sqrt(dt) * np.einsum("msk,sk->m", xi, weights)
    sq = lhs_samples**2
    lhs = float(sq.mean())
    if rhs == 0.0:
        return IsometryReport(lhs, rhs, 1.0 if lhs == 0.0 else np.inf, 0.0, n_samples)
    half = float(1.96 * sq.std(ddof=1) / np.sqrt(n_samples) / rhs)
    return IsometryReport(lhs, rhs, lhs / rhs, half, n_samples)
