"""Dirichlet sine eigenbasis on an interval and the shifted biharmonic semigroup.

The linear operator is ``A = Δ² + Δ + c`` on ``(0, L)`` with ``u = Δu = 0`` at
both ends. Its eigenfunctions are the orthonormal sines

    φ_k(x) = sqrt(2/L) sin(kπx/L),    -Δφ_k = λ_k φ_k,  λ_k = (kπ/L)²,

and ``A φ_k = μ_k φ_k`` with ``μ_k = λ_k(λ_k - 1) + c``. Every field is stored as
its first ``K`` sine coefficients; coefficient arrays may carry leading batch
axes (one row per ensemble path), the mode axis is always last.

Grid functions live on the uniform interior grid ``x_j = jL/(M+1)``,
``j = 1..M``; the boundary values are zero and never stored. Transforms are
type-I discrete sine/cosine transforms, which are exact on band-limited data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft

from .exceptions import AliasingError, InvalidParameterError

__all__ = [
    "SemigroupSpec",
    "SpectralField",
    "GridFunction",
    "build_basis",
    "grid_points",
    "basis_values",
    "semigroup_factors",
    "semigroup_apply",
    "sobolev_norm",
    "derivative_norm",
    "evaluate_on_grid",
    "project_from_grid",
    "spatial_derivative_on_grid",
    "sine_synthesis",
    "sine_analysis",
    "cosine_synthesis_derivative",
    "cosine_analysis",
    "dealiased_grid_size",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SemigroupSpec:
    """Eigen-data of ``Δ² + Δ + c`` on ``(0, L)`` truncated to ``K`` modes."""

    L: float
    K: int
    lam: np.ndarray
    mu: np.ndarray
    c: float
    c0: float

    @property
    def wavenumbers(self):
        """``kπ/L`` for ``k = 1..K``."""
        return np.sqrt(self.lam)

    @property
    def smoothing_constant(self):
        """``max_k λ_k²/μ_k``, the constant with ``λ_k² ≤ C μ_k`` for all k."""
        return float(np.max(self.lam**2 / self.mu))

    def truncated(self, K):
        """The same operator restricted to its first ``K`` modes."""
        if not 1 <= K <= self.K:
            raise InvalidParameterError(f"K={K} outside 1..{self.K}")
        return SemigroupSpec(self.L, int(K), self.lam[:K], self.mu[:K], self.c, float(np.min(self.mu[:K])))

    def __repr__(self):
        return f"SemigroupSpec(L={self.L:g}, K={self.K}, c={self.c:g}, c0={self.c0:g})"


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Sine coefficients ``a_k`` of ``u = Σ a_k φ_k``; shape ``(..., K)``."""

    coeffs: np.ndarray
    spec: SemigroupSpec

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[-1] != self.spec.K:
            raise InvalidParameterError(
                f"coefficient array of shape {coeffs.shape} does not carry K={self.spec.K} modes"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def K(self):
        return self.spec.K

    def norm(self):
        """L² norm (Parseval)."""
        return np.sqrt(np.sum(self.coeffs**2, axis=-1))

    def with_coeffs(self, coeffs):
        return SpectralField(coeffs, self.spec)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on the interior grid ``x_j = jL/(M+1)``; shape ``(..., M)``."""

    values: np.ndarray
    L: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def M(self):
        return self.values.shape[-1]

    @property
    def x(self):
        return grid_points(self.L, self.M)

    def l2_norm(self):
        """Trapezoidal L² norm (boundary samples are zero)."""
        h = self.L / (self.M + 1)
        return np.sqrt(h * np.sum(self.values**2, axis=-1))


def build_basis(L, K, mu_min=1.0):
    """Eigen-data with the smallest shift ``c ≥ 0`` giving ``min_k μ_k ≥ mu_min``.

    >>> spec = build_basis(np.pi, 4)
    >>> spec.lam.tolist(), spec.c, spec.mu.tolist()
    ([1.0, 4.0, 9.0, 16.0], 1.0, [1.0, 13.0, 73.0, 241.0])
    """
    if not L > 0:
        raise InvalidParameterError(f"domain length must be positive, got L={L}")
    if int(K) != K or K < 1:
        raise InvalidParameterError(f"mode count must be a positive integer, got K={K}")
    if not mu_min > 0:
        raise InvalidParameterError(f"mu_min must be positive, got {mu_min}")
    K = int(K)
    k = np.arange(1, K + 1, dtype=float)
    lam = (k * np.pi / L) ** 2
    base = lam * (lam - 1.0)
    c = max(0.0, float(mu_min - base.min()))
    mu = base + c
    return SemigroupSpec(float(L), K, _frozen(lam), _frozen(mu), c, float(mu.min()))


def grid_points(L, M):
    """Interior grid ``x_j = jL/(M+1)``, ``j = 1..M``."""
    return np.arange(1, M + 1) * (L / (M + 1))


def basis_values(spec, x, K=None):
    """Matrix ``φ_k(x_i)`` of shape ``(len(x), K)``."""
    K = spec.K if K is None else K
    x = np.asarray(x, dtype=float)
    k = np.arange(1, K + 1)
    return np.sqrt(2.0 / spec.L) * np.sin(np.multiply.outer(x, k) * (np.pi / spec.L))


def dealiased_grid_size(K, extra=0):
    """Smallest FFT-friendly interior grid size ``M ≥ ⌈3K/2⌉`` (and ``≥ K + extra``)."""
    need = max(int(np.ceil(1.5 * K)), K + int(extra))
    return fft.next_fast_len(need + 1) - 1


def semigroup_factors(spec, t):
    """``e^{-μ_k t}`` for every mode."""
    if np.any(np.asarray(t) < 0):
        raise InvalidParameterError(f"semigroup time must be nonnegative, got t={t}")
    return np.exp(-spec.mu * t)


def semigroup_apply(u, t):
    """``S(t)u``: multiply mode ``k`` by ``e^{-μ_k t}``."""
    return u.with_coeffs(u.coeffs * semigroup_factors(u.spec, t))


def derivative_norm(u, order):
    """``‖∂_x^order u‖_{L²} = (Σ λ_k^order a_k²)^{1/2}`` (exact in one dimension)."""
    if int(order) != order or order < 0:
        raise InvalidParameterError(f"derivative order must be a nonnegative integer, got {order}")
    return np.sqrt(np.sum(u.spec.lam**order * u.coeffs**2, axis=-1))


def sobolev_norm(u, s):
    """Spectral ``H^s`` norm for ``s ∈ {0, 1, 2}``.

    ``s=1`` weights mode ``k`` by ``1 + λ_k``, ``s=2`` by ``1 + λ_k²``.
    """
    if s == 0:
        weights = 1.0
    elif s == 1:
        weights = 1.0 + u.spec.lam
    elif s == 2:
        weights = 1.0 + u.spec.lam**2
    else:
        raise InvalidParameterError(f"unsupported Sobolev order s={s}; expected 0, 1 or 2")
    return np.sqrt(np.sum(weights * u.coeffs**2, axis=-1))


# -- raw-array transforms used by the solver hot loop -----------------------


def _pad(a, M):
    K = a.shape[-1]
    if K > M:
        raise AliasingError(f"{K} modes cannot be represented on an {M}-point grid")
    if K == M:
        return a
    out = np.zeros(a.shape[:-1] + (M,))
    out[..., :K] = a
    return out


def sine_synthesis(a, M, L):
    """Grid values ``Σ_k a_k φ_k(x_j)`` for coefficients ``a`` of shape ``(..., K)``."""
    return fft.dst(_pad(np.asarray(a, dtype=float), M), type=1, axis=-1) * (0.5 * np.sqrt(2.0 / L))


def sine_analysis(values, K, L):
    """First ``K`` sine coefficients of interior grid values (exact for band-limited data)."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    if K > M:
        raise AliasingError(f"cannot extract {K} modes from an {M}-point grid")
    y = fft.dst(values, type=1, axis=-1)
    return y[..., :K] * (0.5 * np.sqrt(2.0 / L) * L / (M + 1))


def cosine_analysis(values, L):
    """Cosine coefficients ``b_m``, ``m = 0..M+1``, of a function vanishing at both ends.

    ``g(x) = Σ_m b_m cos(mπx/L)`` is recovered exactly at the grid points when
    ``g`` is a cosine polynomial of degree ≤ M. Endpoint samples are taken as 0.
    """
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    padded = np.zeros(values.shape[:-1] + (M + 2,))
    padded[..., 1 : M + 1] = values
    b = fft.dct(padded, type=1, axis=-1) / (M + 1)
    b[..., 0] *= 0.5
    b[..., -1] *= 0.5
    return b


def cosine_synthesis_derivative(a, M, L):
    """Grid values of ``∂_x Σ a_k φ_k``: ``Σ a_k (kπ/L) sqrt(2/L) cos(kπx_j/L)``."""
    a = np.asarray(a, dtype=float)
    K = a.shape[-1]
    if K > M:
        raise AliasingError(f"{K} modes cannot be represented on an {M}-point grid")
    k = np.arange(1, K + 1)
    padded = np.zeros(a.shape[:-1] + (M + 2,))
    padded[..., 1 : K + 1] = a * (k * np.pi / L) * np.sqrt(2.0 / L)
    return 0.5 * fft.dct(padded, type=1, axis=-1)[..., 1 : M + 1]


# -- field-level operations -------------------------------------------------


def evaluate_on_grid(u, M):
    """Sample ``u`` on the ``M``-point interior grid (``M ≥ K``)."""
    if M < u.K:
        raise AliasingError(f"grid size M={M} smaller than mode count K={u.K}")
    return GridFunction(sine_synthesis(u.coeffs, M, u.spec.L), u.spec.L)


def project_from_grid(g, K, spec=None):
    """Sine coefficients of grid samples, truncated to ``K`` modes (``K ≤ M``).

    ``spec`` defaults to a unit-shift basis on ``g``'s interval.
    """
    if K > g.M:
        raise AliasingError(f"mode count K={K} exceeds grid size M={g.M}")
    if spec is None:
        spec = build_basis(g.L, K)
    elif spec.K != K or not np.isclose(spec.L, g.L):
        raise InvalidParameterError("spec does not match requested K / grid interval")
    return SpectralField(sine_analysis(g.values, K, g.L), spec)


def spatial_derivative_on_grid(u, order, M=None):
    """``∂_x u`` (order 1) or ``∂_x² u`` (order 2) sampled on the interior grid."""
    M = u.K if M is None else M
    if M < u.K:
        raise AliasingError(f"grid size M={M} smaller than mode count K={u.K}")
    if order == 1:
        return GridFunction(cosine_synthesis_derivative(u.coeffs, M, u.spec.L), u.spec.L)
    if order == 2:
        return GridFunction(sine_synthesis(-u.spec.lam * u.coeffs, M, u.spec.L), u.spec.L)
    raise InvalidParameterError(f"unsupported derivative order {order}; expected 1 or 2")
