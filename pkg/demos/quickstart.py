"""Quickstart: one path, a small ensemble, and the assumption certificates.

Run with ``python3 demos/quickstart.py``. Prints to stdout only.
"""

import numpy as np

from stochks import analysis as an
from stochks.dynamics import quadratic_flux, sigma_linear
from stochks.noise import build_noise
from stochks.solver import Models, SolverConfig, extend_global, simulate_ensemble, simulate_path
from stochks.spectral import SpectralField, build_basis

# Dirichlet sine basis on (0, π) with 32 modes; noise on the first 8 modes, c_k = 1/k
spec = build_basis(np.pi, 32)
noise = build_noise(spec, kappa=1.0, gamma=1.0, K_noise=8)
models = Models(spec, quadratic_flux(), sigma_linear(0.1), noise)

a0 = np.zeros(spec.K)
a0[:3] = [1.0, -0.8, 0.5]
u0 = SpectralField(a0, spec)
cfg = SolverConfig(dt=1e-3, T=1.0, N_trunc=10.0)

traj = simulate_path(u0, cfg, models, rng_stream=(0, 0))
print(f"single path: |u(0)| = {traj.norms()[0]:.4f}, |u(T)| = {traj.norms()[-1]:.4f}, tau_N = {traj.tau_N}")

# the same path is reproduced from (seed, index) alone
again = simulate_path(u0, cfg, models, rng_stream=(0, 0))
print("reproducible:", np.array_equal(traj.coeffs, again.coeffs))

run = simulate_ensemble(u0, cfg, models, seed=0, n_paths=500, record_h2=True)
stats = an.estimate_xt_norm(run)
print(f"E sup_t |u|^2 = {stats.xt_norm_sq:.4f} +/- {stats.xt_half_width:.4f}")
print(f"E int |u|_H2^2 dt = {stats.yt_extra:.4f} +/- {stats.yt_half_width:.4f}")

# globalization: escalate N until the path never reaches it
g = extend_global(u0, SolverConfig(dt=1e-3, T=1.0, N_schedule=(1.0, 2.0, 4.0)), models, seed=0)
print("levels used:", g.info["levels"], "stopping times:", g.info["tau_by_level"], "consistent:", g.info["consistent"])

for check in an.certify_models(models, n_pairs=10**5):
    print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.estimate:.4g}")
