"""How the Picard contraction factor depends on the window length and on ε.

Two sweeps: a state-only intensity σ = 0.1u in the X_T norm, where the factor
vanishes as the window shrinks, and a gradient intensity σ = 0.1u + ε u_xx in
the X_T + H² norm, where a floor proportional to ε survives. Takes a few seconds.
"""

import numpy as np

from stochks.analysis import measure_contraction
from stochks.dynamics import quadratic_flux, sigma_gradient, sigma_linear
from stochks.noise import build_noise
from stochks.solver import Models, SolverConfig
from stochks.spectral import SpectralField, build_basis


def field(spec):
    a = np.zeros(spec.K)
    a[:3] = [1.0, -0.8, 0.5]
    return SpectralField(a, spec)


spec = build_basis(np.pi, 32)
models = Models(spec, quadratic_flux(), sigma_linear(0.1), build_noise(spec, 1.0, 1.0, 8))
windows = [0.0125, 0.025, 0.05, 0.1]
rep = measure_contraction(field(spec), SolverConfig(dt=1e-4, T=0.1), models, windows)
print("state-only intensity, X_T norm")
for T, f, r in zip(rep.windows, rep.factors, rep.bound_ratios):
    print(f"  T={T:<7g} factor={f:.4f}  factor^2/(T^1.25+T)={r:.4f}")
print(f"  fitted a + b T^1.25 + c T: {np.round(rep.coeffs, 5).tolist()}")

spec = build_basis(np.pi, 64)
nm = build_noise(spec, 1.0, 1.0, 8)
print("gradient intensity, X_T + H^2 norm")
for eps in (0.0, 0.05, 0.1, 0.2):
    m = Models(spec, quadratic_flux(), sigma_gradient(0.1, eps), nm)
    r = measure_contraction(field(spec), SolverConfig(dt=1e-4, T=0.04), m, [0.0025, 0.005, 0.01, 0.02, 0.04],
                            n_pairs=6, n_noise=6, norm="Y", pair_kind="high")
    print(f"  eps={eps:<5g} factors={np.round(r.factors, 4).tolist()} floor={r.floor:.4f}")
