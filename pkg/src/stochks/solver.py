"""Mild-solution time stepping, the Duhamel map Γ, Picard iteration and stopping times.

Coefficients evolve under

    a(t+dt) = e^{-μ dt} a(t) + w_drift · (c a(t) - [∂_x f_N(u(t))]) + w_noise · P_K[σ(u(t)) dW]

where ``w_drift`` is ``(1 - e^{-μ dt})/μ`` (exponential weighting) or
``dt e^{-μ dt}`` and ``w_noise`` rescales each mode so that the increment has
the exact Ornstein-Uhlenbeck variance ``(1 - e^{-2μ dt})/(2μ)`` per unit noise
(or is simply ``e^{-μ dt}``). σ is always evaluated at the left end of the step.

The re-added ``c a`` drift makes the scheme solve the Kuramoto-Sivashinsky
equation itself; with ``shift_drift=False`` it solves the shifted problem whose
linear part is exactly the semigroup ``S(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dynamics import FluxModel, SigmaModel, div_flux_coeffs, sigma_grid_values
from .exceptions import (
    DivergedPathError,
    GridMismatchError,
    InvalidParameterError,
    NonContractionError,
    TruncationCapExceeded,
)
from .noise import NoiseIncrement, NoiseModel
from .rng import stream
from .spectral import SemigroupSpec, SpectralField, dealiased_grid_size, sine_analysis, sine_synthesis

__all__ = [
    "SolverConfig",
    "Models",
    "Trajectory",
    "PathPair",
    "EnsembleRun",
    "ExponentialEuler",
    "gamma_apply",
    "gamma_coeffs",
    "picard_solve",
    "step_exponential_euler",
    "simulate_path",
    "simulate_pair",
    "simulate_driven",
    "simulate_ensemble",
    "extend_global",
    "stopping_index",
]

SCHEMES = ("exponential-euler", "picard-window")
DRIFT_WEIGHTINGS = ("exponential", "euler")
NOISE_WEIGHTINGS = ("exact", "euler")


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    T: float = 1.0
    K: int | None = None
    M: int | None = None
    N_trunc: float = 10.0
    N_schedule: tuple = ()
    scheme: str = "exponential-euler"
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    drift_weighting: str = "exponential"
    noise_weighting: str = "exact"
    shift_drift: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt * (1 - 1e-12):
            raise InvalidParameterError(f"horizon T={self.T} shorter than one step dt={self.dt}")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise InvalidParameterError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if not self.picard_tol > 0:
            raise InvalidParameterError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max_iter < 1:
            raise InvalidParameterError("picard_max_iter must be >= 1")
        if not self.N_trunc > 0:
            raise InvalidParameterError(f"truncation radius must be positive, got {self.N_trunc}")
        if any(not n_ > 0 for n_ in self.N_schedule):
            raise InvalidParameterError("truncation schedule levels must be positive")
        if list(self.N_schedule) != sorted(self.N_schedule):
            raise InvalidParameterError("truncation schedule must be increasing")
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.drift_weighting not in DRIFT_WEIGHTINGS:
            raise InvalidParameterError(f"unknown drift weighting {self.drift_weighting!r}")
        if self.noise_weighting not in NOISE_WEIGHTINGS:
            raise InvalidParameterError(f"unknown noise weighting {self.noise_weighting!r}")
        object.__setattr__(self, "N_schedule", tuple(float(v) for v in self.N_schedule))

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def schedule(self, levels=4):
        """Truncation levels: the explicit schedule or ``N, 2N, 4N, ...``."""
        if self.N_schedule:
            return self.N_schedule
        return tuple(self.N_trunc * 2.0**j for j in range(levels))


@dataclass(frozen=True, eq=False)
class Models:
    """Everything that defines the equation apart from numerics."""

    spec: SemigroupSpec
    flux: FluxModel
    sigma: SigmaModel
    noise: NoiseModel

    def __post_init__(self):
        if not np.isclose(self.noise.spec.L, self.spec.L):
            raise GridMismatchError("noise model and basis live on different intervals")


@dataclass(eq=False)
class Trajectory:
    """One sample path on the time grid, with its stopping-time record."""

    times: np.ndarray
    states: SpectralField
    tau_N: float = math.inf
    N: float = math.inf
    N_used: np.ndarray | None = None
    seed: int | None = None
    stream_index: int | None = None
    info: dict = field(default_factory=dict)

    @property
    def coeffs(self):
        return self.states.coeffs

    def norms(self):
        return self.states.norm()

    def h2_norms_sq(self):
        spec = self.states.spec
        return np.sum((1 + spec.lam**2) * self.coeffs**2, axis=-1)

    def at(self, n):
        return SpectralField(self.coeffs[n], self.states.spec)


@dataclass(eq=False)
class PathPair:
    """Two trajectories driven by the same noise realization."""

    first: Trajectory
    second: Trajectory
    seed: int
    stream_index: int

    def difference_xt(self):
        """``sup_t ‖u - v‖_{L²}`` over the grid."""
        return float(np.max(np.linalg.norm(self.first.coeffs - self.second.coeffs, axis=-1)))


def _phi1(x):
    # (1 - e^{-x})/x, stable at 0
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = -np.expm1(-x[nz]) / x[nz]
    return out


def _psi_linear(x):
    # (x - 1 + e^{-x})/x², stable at 0 (→ 1/2)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-3
    xs = x[small]
    out[small] = 0.5 - xs / 6.0 + xs**2 / 24.0
    xl = x[~small]
    out[~small] = (xl + np.expm1(-xl)) / xl**2
    return out


class ExponentialEuler:
    """Precomputed per-mode weights and the drift/noise evaluators for one (cfg, models)."""

    def __init__(self, cfg, models):
        spec, nm = models.spec, models.noise
        if cfg.K is not None and cfg.K != spec.K:
            raise GridMismatchError(f"config K={cfg.K} differs from basis K={spec.K}")
        self.cfg, self.models = cfg, models
        self.K, self.L = spec.K, spec.L
        self.M = cfg.M or dealiased_grid_size(spec.K, nm.K_noise)
        if self.M < math.ceil(1.5 * spec.K):
            raise GridMismatchError(f"grid M={self.M} below the dealiasing size ceil(3K/2)")
        if self.M < nm.K_noise:
            raise GridMismatchError(f"grid M={self.M} cannot carry {nm.K_noise} noise modes")
        dt = cfg.dt
        mu = spec.mu
        self.E = np.exp(-mu * dt)
        if cfg.drift_weighting == "exponential":
            self.w_drift = dt * _phi1(mu * dt)
        else:
            self.w_drift = dt * self.E
        self.w_linear = dt * _psi_linear(mu * dt)
        if cfg.noise_weighting == "exact":
            self.w_noise = np.sqrt(0.5 * _phi1(2 * mu * dt) * 2.0)
        else:
            self.w_noise = self.E.copy()
        self.c_drift = spec.c if cfg.shift_drift else 0.0
        self.N = cfg.N_trunc
        self.silent = models.sigma.is_zero or nm.is_zero

    def with_truncation(self, N):
        other = object.__new__(ExponentialEuler)
        other.__dict__.update(self.__dict__)
        other.N = N
        return other

    def drift(self, a):
        out = -div_flux_coeffs(self.models.flux, self.N, a, self.L, self.M)
        if self.c_drift:
            out += self.c_drift * a
        return out

    def noise(self, a, t, dW):
        """``P_K[σ(u) dW]`` for coefficient arrays ``a (..., K)`` and ``dW (..., K_noise)``."""
        a = np.asarray(a, dtype=float)
        if self.silent:
            return np.zeros(np.broadcast_shapes(a.shape, np.shape(dW)[:-1] + (self.K,)))
        sm = self.models.sigma
        if sm.additive_value is not None:
            dW = np.asarray(dW, dtype=float)
            out = np.zeros(dW.shape[:-1] + (self.K,))
            n = min(self.K, dW.shape[-1])
            out[..., :n] = sm.additive_value * dW[..., :n]
            return np.broadcast_to(out, np.broadcast_shapes(a.shape, out.shape)).copy()
        sg = sigma_grid_values(sm, t, a, self.L, self.M)
        wg = sine_synthesis(dW, self.M, self.L)
        return sine_analysis(sg * wg, self.K, self.L)

    def step(self, a, t, dW):
        out = self.E * a + self.w_drift * self.drift(a)
        if not self.silent:
            out += self.w_noise * self.noise(a, t, dW)
        return out


def stopping_index(norms, N):
    """First index with ``norm > N`` along the last axis; ``-1`` where never exceeded."""
    over = np.asarray(norms) > N
    idx = np.argmax(over, axis=-1)
    return np.where(over.any(axis=-1), idx, -1)


def _as_coeffs(u0, spec):
    if isinstance(u0, SpectralField):
        if u0.spec.K != spec.K:
            raise GridMismatchError(f"initial field has K={u0.spec.K}, basis has K={spec.K}")
        return u0.coeffs
    a = np.asarray(u0, dtype=float)
    if a.shape[-1] != spec.K:
        raise GridMismatchError(f"initial coefficients carry {a.shape[-1]} modes, basis has K={spec.K}")
    return a


def _noise_array(noise_path, n_steps, K_noise):
    if isinstance(noise_path, (list, tuple)) and noise_path and isinstance(noise_path[0], NoiseIncrement):
        arr = np.stack([inc.dW for inc in noise_path])
    else:
        arr = np.asarray(noise_path, dtype=float)
    if arr.shape[-2:] != (n_steps, K_noise):
        raise GridMismatchError(
            f"noise path of shape {arr.shape} does not match {n_steps} steps x {K_noise} modes"
        )
    return arr


def step_exponential_euler(state, t, inc, cfg, models):
    """Advance one field by one step of size ``cfg.dt``."""
    engine = ExponentialEuler(cfg, models)
    dW = inc.dW if isinstance(inc, NoiseIncrement) else np.asarray(inc, dtype=float)
    return state.with_coeffs(engine.step(state.coeffs, t, dW))


def gamma_coeffs(u, u0, dW, engine, quadrature="left"):
    """Discrete Duhamel map on raw arrays.

    ``u``: ``(..., n_steps+1, K)`` path, ``u0``: ``(..., K)``, ``dW``: ``(..., n_steps, K_noise)``.
    ``quadrature="left"`` freezes every integrand at the left end of its step
    (the stepper's fixed point); ``"linear"`` interpolates the drift linearly
    across the step, giving an implicit second-order deterministic rule.
    """
    n_steps = u.shape[-2] - 1
    times = np.arange(n_steps + 1) * engine.cfg.dt
    F = engine.drift(u)
    B = None
    if not engine.silent:
        B = engine.noise(u[..., :-1, :], times[:-1, None], dW)
    shape = np.broadcast_shapes(u.shape, np.shape(u0)[:-1] + (1, u.shape[-1]))
    if B is not None:
        shape = np.broadcast_shapes(shape, B.shape[:-2] + (1, u.shape[-1]))
    out = np.empty(shape)
    g = np.broadcast_to(np.asarray(u0, dtype=float), out[..., 0, :].shape).copy()
    out[..., 0, :] = g
    if quadrature == "left":
        w0, w1 = engine.w_drift, None
    elif quadrature == "linear":
        if engine.cfg.drift_weighting != "exponential":
            raise InvalidParameterError("linear quadrature requires exponential drift weighting")
        w0, w1 = engine.w_drift - engine.w_linear, engine.w_linear
    else:
        raise InvalidParameterError(f"unknown quadrature {quadrature!r}")
    for i in range(n_steps):
        g = engine.E * g + w0 * F[..., i, :]
        if w1 is not None:
            g += w1 * F[..., i + 1, :]
        if B is not None:
            g += engine.w_noise * B[..., i, :]
        out[..., i + 1, :] = g
    return out


def gamma_apply(u_path, u0, noise_path, cfg, models, quadrature="left"):
    """``Γu = S(t)u₀ + c∫S(t-s)u ds - ∫S(t-s)∂_x f_N(u) ds + ∫S(t-s)σ(u) dW`` on the grid."""
    spec = models.spec
    a = u_path.coeffs if isinstance(u_path, Trajectory) else np.asarray(u_path, dtype=float)
    if a.shape[-2] != cfg.n_steps + 1 or a.shape[-1] != spec.K:
        raise GridMismatchError(
            f"path of shape {a.shape} does not match {cfg.n_steps + 1} times x {spec.K} modes"
        )
    dW = _noise_array(noise_path, cfg.n_steps, models.noise.K_noise)
    engine = ExponentialEuler(cfg, models)
    out = gamma_coeffs(a, _as_coeffs(u0, spec), dW, engine, quadrature)
    return Trajectory(cfg.times, SpectralField(out, spec), N=cfg.N_trunc)


def picard_solve(u0, noise_path, cfg, models, quadrature="left", initial=None):
    """Iterate ``u ← Γu`` from ``u⁰(t) = S(t)u₀`` until ``sup_t ‖u^{m+1} - u^m‖ < picard_tol``.

    Returns ``(trajectory, iterations)``; the residual history is kept in
    ``trajectory.info["residuals"]``. Raises :class:`NonContractionError`
    when the iteration cap is reached.
    """
    if cfg.scheme != "picard-window":
        raise InvalidParameterError("picard_solve requires scheme='picard-window'")
    spec = models.spec
    a0 = _as_coeffs(u0, spec)
    dW = _noise_array(noise_path, cfg.n_steps, models.noise.K_noise)
    engine = ExponentialEuler(cfg, models)
    if initial is None:
        u = a0[..., None, :] * np.exp(-np.multiply.outer(cfg.times, spec.mu))
    else:
        u = initial.coeffs if isinstance(initial, Trajectory) else np.asarray(initial, dtype=float)
    residuals = []
    for it in range(1, cfg.picard_max_iter + 1):
        new = gamma_coeffs(u, a0, dW, engine, quadrature)
        res = float(np.max(np.linalg.norm(new - u, axis=-1)))
        residuals.append(res)
        u = new
        if not np.isfinite(res):
            break
        if res < cfg.picard_tol:
            traj = Trajectory(cfg.times, SpectralField(u, spec), N=cfg.N_trunc)
            traj.info["residuals"] = residuals
            return traj, it
    ratio = residuals[-1] / residuals[-2] if len(residuals) > 1 and residuals[-2] > 0 else float("nan")
    raise NonContractionError(
        f"Picard iteration did not reach tol={cfg.picard_tol} in {len(residuals)} iterations "
        f"(last residual {residuals[-1]:.3e}, last ratio {ratio:.3f}); window T={cfg.T} too long or eps too large",
        last_ratio=ratio,
        iterations=len(residuals),
    )


def _resolve_stream(rng_stream):
    if isinstance(rng_stream, np.random.Generator):
        return rng_stream, None, None
    if isinstance(rng_stream, tuple):
        seed, index = rng_stream
        return stream(seed, "noise", index), int(seed), int(index)
    return stream(int(rng_stream), "noise", 0), int(rng_stream), 0


def simulate_path(u0, cfg, models, rng_stream=0, engine=None):
    """Step one path to ``T``; ``tau_N`` is the first grid time with ``‖u‖ > N``.

    ``rng_stream`` is a ``Generator``, a master seed, or ``(seed, path_index)``.
    The truncated dynamics continue past ``tau_N``.
    """
    spec, nm = models.spec, models.noise
    gen, seed, index = _resolve_stream(rng_stream)
    engine = engine or ExponentialEuler(cfg, models)
    n = cfg.n_steps
    times = cfg.times
    dW = gen.standard_normal((n, nm.K_noise)) * (nm.ck * np.sqrt(cfg.dt))
    out = np.empty((n + 1, spec.K))
    a = np.array(_as_coeffs(u0, spec), dtype=float)
    out[0] = a
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            a = engine.step(a, times[i], dW[i])
            if not np.all(np.isfinite(a)):
                raise DivergedPathError(f"path diverged at t={times[i + 1]:.6g}", time=float(times[i + 1]))
            out[i + 1] = a
    states = SpectralField(out, spec)
    idx = int(stopping_index(states.norm(), engine.N))
    tau = math.inf if idx < 0 else float(times[idx])
    return Trajectory(times, states, tau, engine.N, None, seed, index)


def simulate_driven(u0, cfg, models, dW, engine=None, observer=None):
    """Step a batch of paths under given increments ``dW (n_paths, n_steps, K_noise)``.

    Used for dt-refinement studies, where coarse increments are sums of fine ones.
    Returns the coefficient history ``(n_paths, n_steps+1, K)``.
    """
    spec = models.spec
    engine = engine or ExponentialEuler(cfg, models)
    dW = _noise_array(dW, cfg.n_steps, models.noise.K_noise)
    if dW.ndim == 2:
        dW = dW[None]
    n_paths = dW.shape[0]
    a = np.array(np.broadcast_to(_as_coeffs(u0, spec), (n_paths, spec.K)), dtype=float)
    out = np.empty((n_paths, cfg.n_steps + 1, spec.K))
    out[:, 0] = a
    times = cfg.times
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(cfg.n_steps):
            a = engine.step(a, times[i], dW[:, i])
            if not np.all(np.isfinite(a)):
                raise DivergedPathError(f"path diverged at t={times[i + 1]:.6g}", time=float(times[i + 1]))
            out[:, i + 1] = a
            if observer is not None:
                observer(i + 1, times[i + 1], a)
    return out


def simulate_pair(u0, v0, cfg, models, seed, index=0):
    """Two paths from different initial data under identical noise."""
    first = simulate_path(u0, cfg, models, (seed, index))
    second = simulate_path(v0, cfg, models, (seed, index))
    return PathPair(first, second, int(seed), int(index))


@dataclass(eq=False)
class EnsembleRun:
    """Per-path norm histories (and optionally states) of a vectorized ensemble."""

    times: np.ndarray
    l2: np.ndarray
    h2sq: np.ndarray | None
    final: np.ndarray
    seed: int
    stream_ids: np.ndarray
    N: float
    states: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.l2.shape[0]

    def tau_index(self, N=None):
        return stopping_index(self.l2, self.N if N is None else N)

    def tau_times(self, N=None):
        idx = self.tau_index(N)
        return np.where(idx >= 0, self.times[np.maximum(idx, 0)], np.inf)

    def stopped_sq_norms(self, N=None):
        """``‖u_{t∧τ_N}‖²`` per path and grid time."""
        idx = self.tau_index(N)
        n_t = self.times.size
        stop = np.where(idx >= 0, idx, n_t - 1)
        cols = np.minimum(np.arange(n_t)[None, :], stop[:, None])
        return np.take_along_axis(self.l2, cols, axis=1) ** 2


def simulate_ensemble(
    u0,
    cfg,
    models,
    seed,
    n_paths,
    stream_ids=None,
    keep_states=False,
    record_h2=False,
    observer: Callable | None = None,
    engine=None,
):
    """Vectorized ensemble: path ``i`` uses the Philox stream ``(seed, stream_ids[i])``.

    ``u0`` may be a single field (shared) or a batch of ``n_paths`` fields.
    ``observer(n, t, a)`` is called after every step with the ``(n_paths, K)`` state.
    """
    spec, nm = models.spec, models.noise
    engine = engine or ExponentialEuler(cfg, models)
    stream_ids = np.arange(n_paths) if stream_ids is None else np.asarray(stream_ids, dtype=int)
    if stream_ids.shape != (n_paths,):
        raise InvalidParameterError("stream_ids must provide one index per path")
    n = cfg.n_steps
    times = cfg.times
    a = np.array(np.broadcast_to(_as_coeffs(u0, spec), (n_paths, spec.K)), dtype=float)
    l2 = np.empty((n_paths, n + 1))
    h2sq = np.empty((n_paths, n + 1)) if record_h2 else None
    states = np.empty((n_paths, n + 1, spec.K)) if keep_states else None
    weights_h2 = 1 + spec.lam**2

    def record(i, a):
        l2[:, i] = np.sqrt(np.einsum("pk,pk->p", a, a))
        if record_h2:
            h2sq[:, i] = a * a @ weights_h2
        if keep_states:
            states[:, i] = a
        if observer is not None:
            observer(i, times[i], a)

    record(0, a)
    gens = {}
    for sid in np.unique(stream_ids):
        gens[int(sid)] = stream(seed, "noise", int(sid))
    block = max(1, min(n, 2_000_000 // max(1, n_paths * nm.K_noise)))
    scale = nm.ck * np.sqrt(cfg.dt)
    # paths sharing a stream id share their draws (common random numbers)
    uniq, inverse = np.unique(stream_ids, return_inverse=True)
    with np.errstate(over="ignore", invalid="ignore"):
        for b0 in range(0, n, block):
            nb = min(block, n - b0)
            xi = np.empty((uniq.size, nb, nm.K_noise))
            for j, sid in enumerate(uniq):
                xi[j] = gens[int(sid)].standard_normal((nb, nm.K_noise))
            dW_block = xi[inverse] * scale
            for j in range(nb):
                i = b0 + j
                a = engine.step(a, times[i], dW_block[:, j])
                bad = ~np.isfinite(a).all(axis=1)
                if bad.any():
                    p = int(np.flatnonzero(bad)[0])
                    raise DivergedPathError(
                        f"path {p} diverged at t={times[i + 1]:.6g}", time=float(times[i + 1]), path_index=p
                    )
                record(i + 1, a)
    return EnsembleRun(times, l2, h2sq, a, int(seed), stream_ids, engine.N, states)


def extend_global(u0, cfg, models, seed, index=0, schedule=None, on_cap="raise"):
    """Globalize by escalating the truncation level ``N, 2N, 4N, ...`` under fixed noise.

    The path at the first level that is never exceeded is returned; earlier
    levels certify the initial segments. ``N_used[n]`` is the smallest level
    whose stopping time lies beyond grid index ``n``. ``info["consistent"]``
    records whether successive levels agree bit-for-bit before the lower
    level's stopping time. When every level is exceeded, raises
    :class:`TruncationCapExceeded` (``on_cap="raise"``) or returns the top-level
    path with ``info["cap_hit"] = True``.
    """
    levels = tuple(schedule) if schedule is not None else cfg.schedule()
    if not levels:
        raise InvalidParameterError("empty truncation schedule")
    paths, taus = [], []
    consistent = True
    for N in levels:
        traj = simulate_path(u0, replace(cfg, N_trunc=N), models, (seed, index))
        if paths:
            prev = paths[-1]
            idx = int(stopping_index(prev.norms(), prev.N))
            upto = prev.coeffs.shape[0] if idx < 0 else idx + 1
            consistent &= bool(np.array_equal(prev.coeffs[:upto], traj.coeffs[:upto]))
        paths.append(traj)
        taus.append(int(stopping_index(traj.norms(), N)))
        if taus[-1] < 0:
            break
    final = paths[-1]
    n_t = final.times.size
    N_used = np.full(n_t, levels[len(paths) - 1], dtype=float)
    assigned = np.zeros(n_t, dtype=bool)
    for N, tau in zip(levels, taus):
        limit = n_t if tau < 0 else tau
        mask = ~assigned & (np.arange(n_t) < limit)
        N_used[mask] = N
        assigned |= mask
    final.N_used = N_used
    final.info.update(
        consistent=consistent,
        levels=levels[: len(paths)],
        tau_by_level=[math.inf if t < 0 else float(final.times[t]) for t in taus],
        cap_hit=taus[-1] >= 0,
    )
    if taus[-1] >= 0:
        final.info["effective_tau"] = float(final.times[taus[-1]])
        if on_cap == "raise":
            err = TruncationCapExceeded(
                f"norm exceeded the top truncation level {levels[len(paths) - 1]:g} at "
                f"t={final.times[taus[-1]]:.6g}",
                level=levels[len(paths) - 1],
                time=float(final.times[taus[-1]]),
            )
            err.trajectory = final
            raise err
    else:
        final.info["effective_tau"] = math.inf
    return final
