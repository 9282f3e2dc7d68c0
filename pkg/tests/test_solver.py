import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochks.analysis import mild_strong_gap, strong_self_convergence
from stochks.dynamics import custom_flux, quadratic_flux, sigma_additive, sigma_linear, sigma_zero, zero_flux
from stochks.exceptions import (
    DivergedPathError,
    GridMismatchError,
    InvalidParameterError,
    NonContractionError,
    TruncationCapExceeded,
)
from stochks.noise import build_noise, sample_increment
from stochks.rng import path_streams, stream
from stochks.solver import (
    Models,
    SolverConfig,
    extend_global,
    gamma_apply,
    picard_solve,
    simulate_driven,
    simulate_ensemble,
    simulate_pair,
    simulate_path,
    step_exponential_euler,
)
from stochks.spectral import SpectralField, build_basis


def _u0(spec, vals=(1.0, -0.8, 0.5)):
    a = np.zeros(spec.K)
    a[: len(vals)] = vals
    return SpectralField(a, spec)


def _noise_path(nm, cfg, seed=0):
    g = stream(seed)
    return [sample_increment(nm, cfg.dt, g) for _ in range(cfg.n_steps)]


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"dt": 0.0},
            {"dt": 1e-3, "T": 1e-4},
            {"dt": 1e-3, "T": 0.0105},
            {"picard_tol": 0.0},
            {"scheme": "rk4"},
            {"N_schedule": (4.0, 2.0)},
            {"N_trunc": -1.0},
            {"noise_weighting": "milstein"},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(InvalidParameterError):
            SolverConfig(**kw)

    def test_grid_and_schedule(self):
        cfg = SolverConfig(dt=0.01, T=0.5, N_trunc=3.0)
        assert cfg.n_steps == 50 and cfg.times[-1] == pytest.approx(0.5)
        assert cfg.schedule(3) == (3.0, 6.0, 12.0)

    def test_models_interval_mismatch(self, spec32):
        with pytest.raises(GridMismatchError):
            Models(spec32, zero_flux(), sigma_zero(), build_noise(build_basis(2.0, 8), 1.0, 1.0, 4))


class TestStep:
    def test_first_mode_pure_semigroup(self, spec32, linear_models):
        cfg = SolverConfig(dt=1e-2, T=1e-2, shift_drift=False)
        u = SpectralField(np.eye(32)[0], spec32)
        inc = sample_increment(linear_models.noise, cfg.dt, stream(0))
        out = step_exponential_euler(u, 0.0, inc, cfg, linear_models)
        assert out.coeffs[0] == np.exp(-spec32.mu[0] * 1e-2)
        assert not np.any(out.coeffs[1:])

    def test_deterministic_self_convergence(self, spec32, det_models, u0_smooth):
        cfg = SolverConfig(dt=4e-3, T=0.4)
        errs, orders = strong_self_convergence(u0_smooth, cfg, det_models, n_paths=1, levels=3)
        assert np.all(orders >= 1.0)

    def test_stochastic_self_convergence(self, ks_models, u0_smooth):
        cfg = SolverConfig(dt=4e-3, T=0.4)
        errs, orders = strong_self_convergence(u0_smooth, cfg, ks_models, n_paths=32, levels=3, seed=2)
        # pathwise strong order of an exponential Euler scheme; 1/2 is the generic floor
        assert np.all(orders > 0.4)
        assert np.all(np.diff(errs) < 0)

    def test_mild_strong_agreement(self, det_models, u0_smooth):
        gaps = [mild_strong_gap(u0_smooth, SolverConfig(dt=dt, T=0.2), det_models) for dt in (4e-3, 2e-3, 1e-3)]
        ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
        assert np.all((ratios > 1.7) & (ratios < 2.3))
        assert gaps[-1] < 1e-3


class TestGamma:
    def test_pure_semigroup(self, spec32, linear_models):
        cfg = SolverConfig(dt=1e-2, T=0.2, shift_drift=False)
        u0 = _u0(spec32)
        junk = np.random.default_rng(0).standard_normal((cfg.n_steps + 1, 32))
        out = gamma_apply(junk, u0, _noise_path(linear_models.noise, cfg), cfg, linear_models)
        expect = u0.coeffs * np.exp(-np.multiply.outer(cfg.times, spec32.mu))
        np.testing.assert_allclose(out.coeffs, expect, rtol=1e-12, atol=1e-300)

    def test_stochastic_convolution_variance(self):
        spec = build_basis(np.pi, 8)
        nm = build_noise(spec, 1.0, 1.0, 8)
        models = Models(spec, zero_flux(), sigma_additive(1.0), nm)
        cfg = SolverConfig(dt=0.01, T=0.5, shift_drift=False)
        n_paths = 10_000
        dW = np.stack([g.standard_normal((cfg.n_steps, 8)) for g in path_streams(3, n_paths)]) * nm.ck * np.sqrt(cfg.dt)
        out = gamma_apply(np.zeros((cfg.n_steps + 1, 8)), np.zeros(8), dW, cfg, models)
        var = np.mean(out.coeffs[:, -1] ** 2, axis=0)
        oracle = nm.ck**2 * -np.expm1(-2 * spec.mu * cfg.T) / (2 * spec.mu)
        np.testing.assert_allclose(var, oracle, rtol=0.05)

    def test_grid_mismatch(self, spec32, ks_models):
        cfg = SolverConfig(dt=1e-2, T=0.1)
        with pytest.raises(GridMismatchError):
            gamma_apply(np.zeros((5, 32)), np.zeros(32), _noise_path(ks_models.noise, cfg), cfg, ks_models)
        with pytest.raises(GridMismatchError):
            gamma_apply(np.zeros((11, 32)), np.zeros(32), np.zeros((9, 8)), cfg, ks_models)


class TestPicard:
    def test_linear_case_one_iteration(self, spec32, linear_models):
        cfg = SolverConfig(dt=1e-2, T=0.2, scheme="picard-window", shift_drift=False)
        _, it = picard_solve(_u0(spec32), _noise_path(linear_models.noise, cfg), cfg, linear_models)
        assert it == 1

    def test_geometric_residuals_and_fixed_point(self, spec32, ks_models):
        cfg = SolverConfig(dt=1e-3, T=0.05, N_trunc=10.0, scheme="picard-window")
        noise = _noise_path(ks_models.noise, cfg, seed=7)
        traj, it = picard_solve(_u0(spec32), noise, cfg, ks_models)
        res = np.array(traj.info["residuals"])
        assert res[-1] < cfg.picard_tol and it == res.size
        ratios = res[2:] / res[1:-1]
        assert np.all(ratios < 1)
        # a contraction of fixed rate: successive ratios stay within a narrow band
        assert ratios.max() / ratios.min() < 3.0
        again = gamma_apply(traj, _u0(spec32), noise, cfg, ks_models)
        assert np.max(np.linalg.norm(again.coeffs - traj.coeffs, axis=-1)) <= cfg.picard_tol

    def test_left_quadrature_reproduces_stepper(self, spec32, ks_models):
        cfg = SolverConfig(dt=1e-3, T=0.05, scheme="picard-window")
        g = stream(5)
        dW = g.standard_normal((cfg.n_steps, 8)) * ks_models.noise.ck * np.sqrt(cfg.dt)
        traj, _ = picard_solve(_u0(spec32), dW, cfg, ks_models)
        step = simulate_driven(_u0(spec32), cfg, ks_models, dW[None])[0]
        assert np.max(np.abs(traj.coeffs - step)) < 1e-10

    def test_stepper_gap_shrinks_by_half(self, spec32, ks_models):
        # second-order drift quadrature against the first-order stepper, common Brownian path
        T, dt_fine = 0.05, 2.5e-4
        n_fine = round(T / dt_fine)
        dW_fine = stream(8).standard_normal((n_fine, 8)) * ks_models.noise.ck * np.sqrt(dt_fine)
        gaps = []
        for f in (4, 2, 1):
            cfg = SolverConfig(dt=dt_fine * f, T=T, scheme="picard-window")
            dW = dW_fine.reshape(-1, f, 8).sum(axis=1)
            traj, _ = picard_solve(_u0(spec32), dW, cfg, ks_models, quadrature="linear")
            step = simulate_driven(_u0(spec32), cfg, ks_models, dW[None])[0]
            gaps.append(np.max(np.linalg.norm(traj.coeffs - step, axis=-1)))
        ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
        assert np.all((ratios > 1.7) & (ratios < 2.3)), gaps

    def test_non_contraction(self, spec32, ks_models):
        cfg = SolverConfig(dt=1e-3, T=0.05, scheme="picard-window", picard_max_iter=2, picard_tol=1e-14)
        with pytest.raises(NonContractionError) as err:
            picard_solve(_u0(spec32), _noise_path(ks_models.noise, cfg), cfg, ks_models)
        assert err.value.iterations == 2 and 0 < err.value.last_ratio < 1

    def test_requires_window_scheme(self, spec32, ks_models):
        cfg = SolverConfig(dt=1e-3, T=0.01)
        with pytest.raises(InvalidParameterError):
            picard_solve(_u0(spec32), _noise_path(ks_models.noise, cfg), cfg, ks_models)


class TestSimulatePath:
    def test_zero_state_silent_noise(self, spec32, det_models):
        cfg = SolverConfig(dt=1e-2, T=0.5)
        traj = simulate_path(np.zeros(32), cfg, det_models, 0)
        assert not np.any(traj.coeffs) and traj.tau_N == math.inf

    def test_stopped_immediately(self, spec32, ks_models):
        cfg = SolverConfig(dt=1e-2, T=0.1, N_trunc=1.0)
        u0 = SpectralField(np.eye(32)[0] * 3.0, spec32)
        traj = simulate_path(u0, cfg, ks_models, 0)
        assert traj.tau_N == 0.0
        np.testing.assert_array_equal(traj.coeffs[0], u0.coeffs)

    def test_tau_nondecreasing_in_level(self, spec32):
        nm = build_noise(spec32, 1.0, 1.0, 16)
        models = Models(spec32, quadratic_flux(), sigma_linear(0.8), nm)
        u0 = _u0(spec32)
        hit = 0
        for seed in range(20):
            taus = [simulate_path(u0, SolverConfig(dt=4e-3, T=1.0, N_trunc=N), models, (seed, 0)).tau_N
                    for N in (1.4, 2.8, 5.6)]
            assert taus[0] <= taus[1] <= taus[2]
            hit += np.isfinite(taus[0])
        assert hit > 0

    @given(seed=st.integers(0, 10_000), N=st.floats(1.0, 3.0))
    @settings(max_examples=25, deadline=None)
    def test_localization(self, seed, N):
        spec = build_basis(np.pi, 16)
        models = Models(spec, quadratic_flux(), sigma_linear(0.8), build_noise(spec, 1.0, 1.0, 8))
        traj = simulate_path(_u0(spec), SolverConfig(dt=1e-2, T=0.5, N_trunc=N), models, seed)
        norms = traj.norms()
        before = traj.times < traj.tau_N
        assert np.all(norms[before] <= N)
        if np.isfinite(traj.tau_N):
            assert norms[traj.times == traj.tau_N][0] > N

    def test_seed_forms_agree(self, spec32, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.2)
        a = simulate_path(u0_smooth, cfg, ks_models, 4)
        b = simulate_path(u0_smooth, cfg, ks_models, (4, 0))
        c = simulate_path(u0_smooth, cfg, ks_models, stream(4, "noise", 0))
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        np.testing.assert_array_equal(a.coeffs, c.coeffs)

    def test_divergence_reported(self, spec32):
        models = Models(spec32, zero_flux(), sigma_linear(1e200), build_noise(spec32, 1.0, 1.0, 8))
        with pytest.raises(DivergedPathError) as err:
            simulate_path(_u0(spec32), SolverConfig(dt=1e-2, T=1.0, N_trunc=np.inf), models, 0)
        assert 0 < err.value.time <= 1.0

    def test_initial_mismatch(self, ks_models):
        with pytest.raises(GridMismatchError):
            simulate_path(np.zeros(16), SolverConfig(dt=1e-2, T=0.1), ks_models, 0)


class TestEnsemble:
    def test_matches_single_paths(self, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.3)
        run = simulate_ensemble(u0_smooth, cfg, ks_models, seed=6, n_paths=4, keep_states=True)
        for i in range(4):
            single = simulate_path(u0_smooth, cfg, ks_models, (6, i))
            np.testing.assert_allclose(run.states[i], single.coeffs, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(run.l2[i], single.norms(), rtol=1e-12)

    def test_common_noise(self, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.3)
        run = simulate_ensemble(u0_smooth, cfg, ks_models, seed=6, n_paths=3, stream_ids=[2, 2, 5])
        np.testing.assert_array_equal(run.l2[0], run.l2[1])
        assert not np.array_equal(run.l2[0], run.l2[2])

    def test_observer_sees_every_time(self, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.1)
        seen = []
        simulate_ensemble(u0_smooth, cfg, ks_models, 0, 2, observer=lambda i, t, a: seen.append(i))
        assert seen == list(range(cfg.n_steps + 1))

    def test_stopped_norms(self, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.3, N_trunc=1.2)
        run = simulate_ensemble(u0_smooth, cfg, ks_models, seed=1, n_paths=8)
        sq = run.stopped_sq_norms()
        # ‖u0‖ = 1.375 > 1.2, so every path is frozen at its initial value
        np.testing.assert_allclose(sq, np.sum(u0_smooth.coeffs**2), rtol=1e-14)
        assert np.all(run.tau_times() == 0.0)

    def test_pair_shares_noise(self, spec32, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.2)
        pair = simulate_pair(u0_smooth, u0_smooth, cfg, ks_models, 3, 1)
        assert pair.difference_xt() == 0.0
        assert pair.first.seed == pair.second.seed and pair.first.stream_index == pair.second.stream_index


class TestGlobalize:
    @pytest.fixture
    def rough(self, spec32):
        return Models(spec32, quadratic_flux(), sigma_linear(0.8), build_noise(spec32, 1.0, 1.0, 16))

    def test_never_exceeded_matches_single_level(self, ks_models, u0_smooth):
        cfg = SolverConfig(dt=1e-2, T=0.5, N_trunc=10.0)
        g = extend_global(u0_smooth, cfg, ks_models, seed=3)
        single = simulate_path(u0_smooth, cfg, ks_models, (3, 0))
        np.testing.assert_array_equal(g.coeffs, single.coeffs)
        assert g.info["levels"] == (10.0,) and not g.info["cap_hit"]
        assert np.all(g.N_used == 10.0)

    def test_levels_consistent_before_tau(self, spec32, rough):
        u0 = _u0(spec32)
        found = False
        for seed in range(30):
            lo = simulate_path(u0, SolverConfig(dt=4e-3, T=1.0, N_trunc=1.5), rough, (seed, 0))
            if not np.isfinite(lo.tau_N):
                continue
            hi = simulate_path(u0, SolverConfig(dt=4e-3, T=1.0, N_trunc=3.0), rough, (seed, 0))
            n = int(np.flatnonzero(lo.times == lo.tau_N)[0])
            np.testing.assert_array_equal(lo.coeffs[: n + 1], hi.coeffs[: n + 1])
            g = extend_global(u0, SolverConfig(dt=4e-3, T=1.0, N_schedule=(1.5, 3.0, 6.0, 12.0)), rough, seed)
            assert g.info["consistent"]
            assert np.all(np.diff(g.N_used) >= 0)
            found = True
            break
        assert found

    def test_cap(self, spec32, rough):
        cfg = SolverConfig(dt=1e-2, T=0.2, N_schedule=(0.2, 0.4))
        with pytest.raises(TruncationCapExceeded) as err:
            extend_global(_u0(spec32), cfg, rough, seed=0)
        assert err.value.level == 0.4 and err.value.trajectory.info["cap_hit"]
        g = extend_global(_u0(spec32), cfg, rough, seed=0, on_cap="return")
        assert g.info["cap_hit"] and g.info["effective_tau"] == 0.0

    def test_empty_schedule(self, ks_models, u0_smooth):
        with pytest.raises(InvalidParameterError):
            extend_global(u0_smooth, SolverConfig(dt=1e-2, T=0.1), ks_models, 0, schedule=())


def test_custom_flux_runs(spec32, u0_smooth):
    fm = custom_flux(lambda u: 0.5 * u * np.abs(u), 2.0)
    models = Models(spec32, fm, sigma_zero(), build_noise(spec32, 1.0, 1.0, 8))
    traj = simulate_path(u0_smooth, SolverConfig(dt=1e-2, T=0.2), models, 0)
    assert np.all(np.isfinite(traj.coeffs))
    # unshifted dissipation (c cancels on mode 1) with a conservative-form flux: the norm cannot grow
    assert traj.norms()[-1] <= traj.norms()[0] * 1.01
