"""Nonlinear flux, norm truncation and noise-intensity models.

The flux enters the equation as ``∂_x f(u)``; it is truncated through
``S_N u = η_N(‖u‖_{L²}) u`` so that ``f_N(u) = f(S_N u)`` is globally bounded.
Noise intensities ``σ(t, x, u, u_x, u_xx)`` come in two flavours: state-only
(``σ`` ignores the derivative slots) and full (first and second derivatives
enter, with Lipschitz constants ``C`` and ``eps``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import AliasingError, InvalidParameterError
from .noise import kernel_diagonal
from .spectral import (
    GridFunction,
    cosine_analysis,
    cosine_synthesis_derivative,
    dealiased_grid_size,
    grid_points,
    sine_synthesis,
)

__all__ = [
    "FluxModel",
    "TruncationSpec",
    "SigmaModel",
    "quadratic_flux",
    "power_flux",
    "zero_flux",
    "custom_flux",
    "sigma_zero",
    "sigma_additive",
    "sigma_linear",
    "sigma_sine",
    "sigma_gradient",
    "flux_eval",
    "mollifier_eval",
    "truncation_factor",
    "truncate",
    "div_flux_coeffs",
    "div_flux_galerkin",
    "sigma_grid_values",
    "sigma_on_grid",
    "certify_flux_lipschitz",
    "certify_sigma_lipschitz",
    "certify_kernel_bound",
    "certify_growth_bounds",
    "GrowthReport",
]


# -- flux -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FluxModel:
    """Scalar flux ``f`` with ``f(0) = 0`` and growth exponent ``p``.

    ``lipC`` is the constant in ``|f(u)-f(v)| ≤ C (1+|u|+|v|)^{p-1} |u-v|``
    when it is known in closed form (``None`` for custom tables until certified).
    """

    kind: str
    p: float
    func: Callable[[np.ndarray], np.ndarray]
    lipC: float | None = None

    def __call__(self, u):
        return self.func(u)

    @property
    def is_zero(self):
        return self.kind == "zero"


def quadratic_flux():
    """Classic ``f(u) = u²/2`` (``p = 2``)."""
    return FluxModel("quadratic", 2.0, lambda u: 0.5 * u * u, 0.5)


def power_flux(p):
    """``f(u) = |u|^{p-1} u / p``; ``|f'(u)| = |u|^{p-1}`` gives ``C = 1``."""
    if p < 1:
        raise InvalidParameterError(f"growth exponent must be >= 1, got p={p}")
    return FluxModel("power", float(p), lambda u: np.abs(u) ** (p - 1.0) * u / p, 1.0)


def zero_flux():
    return FluxModel("zero", 1.0, np.zeros_like, 0.0)


def custom_flux(func, p, lipC=None):
    """User-supplied flux; ``func(0)`` must vanish."""
    if p < 1:
        raise InvalidParameterError(f"growth exponent must be >= 1, got p={p}")
    if abs(float(func(np.zeros(1))[0])) > 0:
        raise InvalidParameterError("flux must satisfy f(0) = 0")
    return FluxModel("custom", float(p), func, lipC)


def flux_eval(fm, g):
    """Pointwise ``f(u(x_j))``."""
    return GridFunction(fm(g.values), g.L)


# -- truncation -------------------------------------------------------------


def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


@dataclass(frozen=True)
class TruncationSpec:
    """Radius ``N`` of the smooth cutoff ``η_N`` (``η = 1`` on ``[0,N]``, ``0`` on ``[2N,∞)``)."""

    N: float

    def __post_init__(self):
        if not self.N > 0:
            raise InvalidParameterError(f"truncation radius must be positive, got N={self.N}")

    def eta(self, r):
        return mollifier_eval(self, r)


def truncation_factor(N, r):
    """``η_N(r) = ψ(2 - r/N) / (ψ(2 - r/N) + ψ(r/N - 1))`` with ``ψ(s) = e^{-1/s}`` for ``s > 0``.

    Exactly 1 for ``r ≤ N`` (returned as the literal 1.0, so untruncated
    arithmetic is bit-identical across radii) and exactly 0 for ``r ≥ 2N``.
    """
    r = np.asarray(r, dtype=float)
    if np.isinf(N):
        return np.ones_like(r)
    s = r / N
    out = np.ones_like(r)
    mid = s > 1.0
    if np.any(mid):
        a = _psi(2.0 - s[mid])
        b = _psi(s[mid] - 1.0)
        out[mid] = a / (a + b)
    return out


def mollifier_eval(ts, r):
    """``η_N(r)`` for ``r ≥ 0``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidParameterError(f"mollifier argument must be nonnegative, got {r}")
    out = truncation_factor(ts.N, r_arr)
    return float(out) if out.ndim == 0 else out


def truncate(ts, u):
    """``S_N u = η_N(‖u‖_{L²}) u`` (row-wise for batched fields)."""
    eta = truncation_factor(ts.N, u.norm())
    return u.with_coeffs(u.coeffs * np.asarray(eta)[..., None])


def div_flux_coeffs(fm, N, a, L, M):
    """Sine coefficients of ``∂_x f(S_N u)`` restricted to ``K = a.shape[-1]`` modes.

    ``f(S_N u)`` is sampled on the ``M``-point grid, expanded in cosines (it
    vanishes at both ends because ``f(0) = 0``) and differentiated term by
    term: ``∂_x cos(kπx/L) = -(kπ/L) sin(kπx/L)``. With ``M + 1 > 3K/2`` the
    retained cosine modes of a quadratic flux are alias-free, which makes the
    result exactly L²-orthogonal to ``u``.
    """
    a = np.asarray(a, dtype=float)
    K = a.shape[-1]
    if M < int(np.ceil(1.5 * K)):
        raise AliasingError(f"dealiasing needs M >= ceil(3K/2) = {int(np.ceil(1.5 * K))}, got M={M}")
    if fm.is_zero:
        return np.zeros_like(a)
    eta = truncation_factor(N, np.sqrt(np.sum(a * a, axis=-1)))
    u = sine_synthesis(a * np.asarray(eta)[..., None], M, L)
    b = cosine_analysis(fm(u), L)[..., 1 : K + 1]
    k = np.arange(1, K + 1)
    return -(k * np.pi / L) * np.sqrt(L / 2.0) * b


def div_flux_galerkin(fm, ts, u, M=None):
    """Galerkin projection of ``∂_x f_N(u)`` onto the first ``K`` sine modes."""
    M = dealiased_grid_size(u.K) if M is None else M
    return u.with_coeffs(div_flux_coeffs(fm, ts.N, u.coeffs, u.spec.L, M))


# -- noise intensity --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SigmaModel:
    """``σ(t, x, u, ξ, ζ)`` evaluated pointwise on grids.

    ``mode`` is ``"state"`` (σ depends on ``u`` only) or ``"full"`` (``ξ = u_x``
    and ``ζ = u_xx`` enter). ``C`` and ``eps`` are the Lipschitz constants of
    Assumption (B)-type bounds in ``(u, ξ)`` and ``ζ`` respectively.
    """

    name: str
    mode: str
    func: Callable
    C: float
    eps: float = 0.0
    additive_value: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("state", "full"):
            raise InvalidParameterError(f"sigma mode must be 'state' or 'full', got {self.mode!r}")
        if self.mode == "state" and self.eps != 0:
            raise InvalidParameterError("state-only sigma cannot have a second-derivative constant")

    def eval(self, t, x, u, ux=None, uxx=None):
        if self.mode == "state":
            return self.func(t, x, u)
        return self.func(t, x, u, ux, uxx)

    @property
    def is_zero(self):
        return self.name == "zero"


def sigma_zero():
    return SigmaModel("zero", "state", lambda t, x, u: np.zeros_like(u), 0.0, additive_value=0.0)


def sigma_additive(value=1.0):
    """Constant intensity (additive noise); Lipschitz constant 0."""
    value = float(value)
    return SigmaModel(
        "additive", "state", lambda t, x, u: np.full_like(u, value), 0.0,
        additive_value=value, params={"value": value},
    )


def sigma_linear(C):
    """``σ = C u``."""
    C = float(C)
    return SigmaModel("linear", "state", lambda t, x, u: C * u, abs(C), params={"C": C})


def sigma_sine(C):
    """``σ = C sin(u)``: bounded, Lipschitz with constant ``|C|``."""
    C = float(C)
    return SigmaModel("sine", "state", lambda t, x, u: C * np.sin(u), abs(C), params={"C": C})


def sigma_gradient(C, eps, slope=0.0):
    """Full-mode ``σ = C u + slope·C u_x + eps u_xx``."""
    C, eps, slope = float(C), float(eps), float(slope)

    def func(t, x, u, ux, uxx):
        out = C * u + eps * uxx
        if slope:
            out = out + slope * C * ux
        return out

    return SigmaModel(
        "gradient", "full", func, abs(C) * max(1.0, abs(slope)), abs(eps),
        params={"C": C, "eps": eps, "slope": slope},
    )


def sigma_grid_values(sm, t, a, L, M, u_grid=None):
    """``σ`` sampled on the ``M``-point grid for coefficients ``a`` (shape ``(..., K)``)."""
    a = np.asarray(a, dtype=float)
    x = grid_points(L, M)
    if sm.additive_value is not None:
        return np.full(a.shape[:-1] + (M,), sm.additive_value)
    u = sine_synthesis(a, M, L) if u_grid is None else u_grid
    if sm.mode == "state":
        return sm.func(t, x, u)
    k = np.arange(1, a.shape[-1] + 1)
    ux = cosine_synthesis_derivative(a, M, L)
    uxx = sine_synthesis(-((k * np.pi / L) ** 2) * a, M, L)
    return sm.func(t, x, u, ux, uxx)


def sigma_on_grid(sm, t, u, M=None):
    """``σ(t, x_j, u, u_x, u_xx)`` as a grid function."""
    M = u.K if M is None else M
    return GridFunction(sigma_grid_values(sm, t, u.coeffs, u.spec.L, M), u.spec.L)


# -- certification of the growth assumptions --------------------------------


def certify_flux_lipschitz(fm, n_pairs=10**6, bound=10.0, rng=None):
    """Max of ``|f(u)-f(v)| / ((1+|u|+|v|)^{p-1} |u-v|)`` over random pairs in ``[-bound, bound]``."""
    rng = np.random.default_rng(0) if rng is None else rng
    u = rng.uniform(-bound, bound, n_pairs)
    v = rng.uniform(-bound, bound, n_pairs)
    keep = u != v
    u, v = u[keep], v[keep]
    ratio = np.abs(fm(u) - fm(v)) / ((1 + np.abs(u) + np.abs(v)) ** (fm.p - 1) * np.abs(u - v))
    return float(ratio.max()) if ratio.size else 0.0


def certify_sigma_lipschitz(sm, n_samples=10**5, bound=10.0, rng=None):
    """Max over random pairs of ``|σ₁-σ₂| - C(|Δu|+|Δξ|) - eps|Δζ|`` (≤ 0 certifies).

    Returns ``(max_excess, max_ratio)`` where ``max_ratio`` compares the change
    in σ against the assumed bound.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    t = rng.uniform(0, 1, n_samples)
    x = rng.uniform(0, 1, n_samples)
    u1, u2, x1, x2, z1, z2 = rng.uniform(-bound, bound, (6, n_samples))
    if sm.mode == "state":
        s1, s2 = sm.func(t, x, u1), sm.func(t, x, u2)
        bnd = sm.C * np.abs(u1 - u2)
    else:
        s1, s2 = sm.func(t, x, u1, x1, z1), sm.func(t, x, u2, x2, z2)
        bnd = sm.C * (np.abs(u1 - u2) + np.abs(x1 - x2)) + sm.eps * np.abs(z1 - z2)
    diff = np.abs(s1 - s2)
    excess = float(np.max(diff - bnd))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bnd > 0, diff / bnd, np.where(diff > 0, np.inf, 0.0))
    return excess, float(np.max(r))


def certify_kernel_bound(nm):
    """``(kernel_sup, (2/L)·trace)``; the first never exceeds the second for sine noise."""
    return nm.kernel_sup, 2.0 / nm.spec.L * nm.trace


@dataclass
class GrowthReport:
    """Largest sampled ratio for each growth/Lipschitz estimate."""

    flux_growth: float
    flux_lipschitz: float
    truncated_flux_sup: float
    sigma_growth: float
    sigma_lipschitz: float
    eps_R: float = 0.0
    n_samples: int = 0
    radius: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


def _random_fields(rng, n, K, radius):
    # mixed spectra: smooth, rough, and single-mode fields, norms uniform in [0, radius]
    k = np.arange(1, K + 1)
    slopes = rng.uniform(0.0, 2.5, n)
    a = rng.standard_normal((n, K)) * k[None, :] ** (-slopes[:, None])
    single = rng.random(n) < 0.2
    if np.any(single):
        idx = rng.integers(0, min(K, 8), single.sum())
        a[single] = 0.0
        a[np.flatnonzero(single), idx] = 1.0
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    return a * rng.uniform(0.0, radius, n)[:, None]


def certify_growth_bounds(fm, ts, sm, nm, n_samples=1000, rng=None, radius=10.0, M=None):
    """Sampled constants for the integrated growth and Lipschitz estimates.

    * ``flux_growth``     max ``‖f(u)‖_{L^{2/p}} / (1 + ‖u‖^p)``
    * ``flux_lipschitz``  max ``‖f(u)-f(v)‖_{L^{2/p}} / ((1+‖u‖+‖v‖)^{p-1} ‖u-v‖)``
    * ``truncated_flux_sup`` max ``‖f(S_N u)‖_{L^{2/p}}`` over fields of norm up to ``100 N``
    * ``sigma_growth``    max ``‖σ(u)‖_R² / (1 + ‖u‖²)``, after removing ``eps_R ‖u‖²_{H²}`` in full mode
    * ``sigma_lipschitz`` max ``‖σ(u)-σ(v)‖_R² / ‖u-v‖²`` (same removal in full mode)

    In full mode ``eps_R = 2·kernel_sup·eps²`` bounds the second-derivative
    share of the R-norm, from ``(a+b)² ≤ 2a² + 2b²``.
    """
    if n_samples < 1000:
        raise InvalidParameterError(f"sample budget must be >= 1000, got {n_samples}")
    rng = np.random.default_rng(2) if rng is None else rng
    spec = nm.spec
    K, L = spec.K, spec.L
    M = M or max(dealiased_grid_size(K), 2 * (K + nm.K_noise))
    h = L / (M + 1)
    q = 2.0 / fm.p
    diag = kernel_diagonal(nm, M)

    def lq(g):
        return (h * np.sum(np.abs(g) ** q, axis=-1)) ** (1.0 / q)

    def h2sq(a):
        return np.sum((1 + spec.lam**2) * a * a, axis=-1)

    a = _random_fields(rng, n_samples, K, radius)
    b = a + _random_fields(rng, n_samples, K, radius) * rng.uniform(1e-3, 1.0, (n_samples, 1))
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    ua, ub = sine_synthesis(a, M, L), sine_synthesis(b, M, L)
    fa, fb = fm(ua), fm(ub)
    flux_growth = float(np.max(lq(fa) / (1 + na**fm.p)))
    dn = np.linalg.norm(a - b, axis=1)
    flux_lip = float(np.max(lq(fa - fb) / ((1 + na + nb) ** (fm.p - 1) * dn)))

    big = _random_fields(rng, n_samples, K, 100.0 * (ts.N if np.isfinite(ts.N) else radius))
    eta = truncation_factor(ts.N, np.linalg.norm(big, axis=1))
    trunc_sup = float(np.max(lq(fm(sine_synthesis(big * eta[:, None], M, L)))))

    sa = sigma_grid_values(sm, 0.0, a, L, M, None if sm.mode == "full" else ua)
    sb = sigma_grid_values(sm, 0.0, b, L, M, None if sm.mode == "full" else ub)
    ra = h * np.sum(diag * sa**2, axis=-1)
    rd = h * np.sum(diag * (sa - sb) ** 2, axis=-1)
    eps_R = 2.0 * nm.kernel_sup * sm.eps**2 if sm.mode == "full" else 0.0
    if eps_R:
        ra = np.maximum(ra - eps_R * h2sq(a), 0.0)
        rd = np.maximum(rd - eps_R * h2sq(a - b), 0.0)
    sigma_growth = float(np.max(ra / (1 + na**2)))
    sigma_lip = float(np.max(rd / dn**2))
    return GrowthReport(flux_growth, flux_lip, trunc_sup, sigma_growth, sigma_lip, eps_R, n_samples, radius)
