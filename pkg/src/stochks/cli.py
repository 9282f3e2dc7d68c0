"""Command-line driver: one subcommand per verification campaign.

Exit status: 0 when every check passes, 1 when a check fails (or the numerics
break down), 2 when the run could not start (bad config, bad arguments, I/O).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import analysis as an
from .config import ConfigError, build_models, build_solver_config, dump_config, initial_field, load_config
from .dynamics import TruncationSpec, certify_growth_bounds, sigma_zero
from .exceptions import DivergedPathError, InvalidParameterError, NonContractionError, TruncationCapExceeded
from .io import write_coeff_dump, write_jsonl, write_table_csv, write_trajectory_csv
from .noise import build_noise, noise_from_amplitudes
from .rng import stream
from .solver import Models, extend_global, simulate_ensemble, simulate_path, stopping_index
from .spectral import SpectralField, build_basis

__all__ = ["main", "run", "COMMANDS"]

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2


class Context:
    def __init__(self, cfg, seed, out, n_paths, quiet):
        self.cfg, self.seed, self.out, self.quiet = cfg, seed, out, quiet
        self.n_paths = n_paths
        self.models = build_models(cfg)
        self.scfg = build_solver_config(cfg)
        self.u0 = initial_field(cfg, self.models.spec)

    @property
    def comment(self):
        return {"seed": self.seed, "config": self.cfg.to_dict()}

    def wants(self, fmt):
        return fmt in self.cfg.output.formats


def _ck(name, target, estimate, half_width, passed, **details):
    return an.Check(name, float(target), float(estimate), float(half_width), bool(passed), details)


def cmd_simulate(ctx):
    traj = simulate_path(ctx.u0, ctx.scfg, ctx.models, (ctx.seed, 0))
    if ctx.wants("csv"):
        write_trajectory_csv(ctx.out / "trajectory.csv", traj, comment=ctx.comment)
    if ctx.wants("binary"):
        write_coeff_dump(ctx.out / "trajectory.kssp", traj.coeffs, ctx.scfg.dt, ctx.scfg.T, ctx.seed)
    norms = traj.norms()
    idx = int(stopping_index(norms, traj.N))
    before = norms if idx < 0 else norms[:idx]
    ok = bool(np.all(before <= traj.N)) and np.array_equal(traj.coeffs[0], ctx.u0.coeffs)
    return [_ck("simulate-localization", traj.N, float(before.max()) if before.size else 0.0, 0.0, ok,
                tau_N=traj.tau_N, final_norm=float(norms[-1]))]


def cmd_ensemble(ctx):
    n = ctx.n_paths
    run = simulate_ensemble(ctx.u0, ctx.scfg, ctx.models, ctx.seed, n, record_h2=True)
    levels = ctx.scfg.schedule(3)
    st = an.estimate_xt_norm(run, levels=levels, min_paths=min(100, n))
    if ctx.wants("csv"):
        write_table_csv(ctx.out / "moments.csv", ["time", "mean_sq_norm", "half_width"],
                        zip(run.times, st.moment_curve, st.moment_half_width), comment=ctx.comment)
    dom = st.xt_norm_sq + st.xt_half_width >= float(np.max(st.moment_curve - st.moment_half_width))
    return [
        _ck("xt-norm-sq", float(np.max(st.moment_curve)), st.xt_norm_sq, st.xt_half_width, dom, n_paths=n,
            tail_counts={str(k): v for k, v in st.tail_counts.items()}),
        _ck("yt-extra", 0.0, st.yt_extra, st.yt_half_width, st.yt_extra >= 0, yt_norm_sq=st.yt_norm_sq),
    ]


def cmd_verify_lemmas(ctx):
    d = ctx.cfg.domain
    spec_r = build_basis(d.L, 4096)
    out = []
    for alpha, q, fam in ((2, 2, "rough"), (0, 1, "near-dirac")):
        fit = an.fit_smoothing_rate(spec_r, alpha, q, fam)
        out.append(_ck(f"smoothing-rate-alpha{alpha}-q{q}", fit.target, fit.exponent, fit.stderr, fit.passed(0.05),
                       window=list(fit.window), r2=fit.r2, tol=0.05))
    out.append(an.verify_maximal_regularity(d.L, seed=ctx.seed))
    out.append(an.verify_ito_isometry(d.L, seed=ctx.seed))
    n_s = max(1000, min(ctx.n_paths, 10_000))
    T, dt = ctx.scfg.T, ctx.scfg.dt
    reps = []
    for K, h in ((d.K, dt), (d.K, dt / 2), (2 * d.K, dt / 2)):
        spec = build_basis(d.L, K, d.mu_min)
        nm = build_noise(spec, ctx.cfg.noise.kappa, ctx.cfg.noise.gamma, K)
        times = np.arange(int(round(T / h)) + 1) * h
        reps.append(an.verify_stochastic_convolution_bounds(nm, an.smooth_integrand(spec, times), h, n_s, ctx.seed))
    base = reps[0]
    for label, r, tol in (("dt-halving", reps[1], 0.10), ("dt-halving-K-doubling", reps[2], 0.25)):
        for which in ("sup", "h2"):
            a, b = getattr(base, f"{which}_ratio"), getattr(r, f"{which}_ratio")
            change = abs(b - a) / a
            out.append(_ck(f"convolution-{which}-ratio-{label}", 0.0, change, 0.0, base.finite and change < tol,
                           base=a, refined=b, tol=tol))
    spec = build_basis(d.L, 16, d.mu_min)
    nm = noise_from_amplitudes(spec, [1.0])
    times = np.arange(int(round(T / dt)) + 1) * dt
    u = np.zeros((times.size, 16))
    u[:, 0] = 1.0
    rep = an.verify_stochastic_convolution_bounds(nm, u, dt, max(n_s, 4000), ctx.seed)
    oracle = an.single_mode_convolution_oracle(spec, 1.0, T)
    hw = rep.h2_half_width * rep.denominator
    out.append(_ck("convolution-single-mode-oracle", oracle, rep.h2_moment, hw,
                   abs(rep.h2_moment - oracle) <= 0.05 * oracle + hw))
    return out


def cmd_contraction(ctx):
    c = ctx.cfg.contraction
    full = ctx.models.sigma.mode == "full"
    cfg = replace(ctx.scfg, dt=c.dt, T=max(c.windows))
    rep = an.measure_contraction(ctx.u0, cfg, ctx.models, c.windows, n_pairs=c.n_pairs, n_noise=c.n_noise,
                                 seed=ctx.seed, norm="Y" if full else "X", pair_kind="high" if full else "random")
    if ctx.wants("csv"):
        write_table_csv(ctx.out / "contraction.csv", ["window", "factor", "factor_sq_fit"],
                        zip(rep.windows, rep.factors, rep.fitted(rep.windows)), comment=ctx.comment)
    out = []
    for T, f in zip(rep.windows, rep.factors):
        # windows beyond 0.05 are informational: a factor >= 1 bounds the admissible window
        out.append(_ck(f"contraction-factor-T{T:g}", 1.0, f, 0.0, f < 1 or T > 0.05, admissible=bool(f < 1)))
    if full:
        out.append(_ck("contraction-floor", 0.0, rep.floor, 0.0, rep.floor < 1, coeffs=list(rep.coeffs),
                       eps=ctx.models.sigma.eps))
    else:
        out.append(_ck("contraction-bound-form", 0.0, float(rep.bound_ratios.max()), 0.0, rep.consistent_with_bound(),
                       bound_ratios=rep.bound_ratios, coeffs=list(rep.coeffs), exponent=rep.exponent))
    return out


def cmd_energy(ctx):
    m = ctx.models
    det = Models(m.spec, m.flux, sigma_zero(), m.noise)
    reports, orders = an.energy_identity_refinement(ctx.u0, ctx.scfg, det, 3)
    orth = max(r.flux_orthogonality for r in reports)
    out = [
        _ck("flux-orthogonality", 0.0, orth, 0.0, orth <= 1e-10),
        _ck("energy-identity-order", 2.0, float(np.min(orders)) if np.all(np.isfinite(orders)) else 2.0, 0.0,
            bool(np.all(np.isfinite(orders)) and np.min(orders) >= 1.8) or reports[-1].max_residual <= 1e-14,
            residuals=[r.max_residual for r in reports]),
    ]
    n = max(1000, ctx.n_paths)
    run = simulate_ensemble(ctx.u0, ctx.scfg, m, ctx.seed, n)
    g = certify_growth_bounds(m.flux, TruncationSpec(ctx.scfg.N_trunc), m.sigma, m.noise, 2000,
                              stream(ctx.seed, "test", 12))
    chk = an.verify_mean_energy_bound(run, m, g.sigma_growth)
    if ctx.wants("csv"):
        write_table_csv(ctx.out / "energy.csv", ["time", "stopped_mean_sq", "half_width", "envelope"],
                        zip(run.times, chk.details["curve"], chk.details["half_width"], chk.details["envelope"]),
                        comment=ctx.comment)
    chk.details = {"margin": chk.details["margin"], "C_sigma": chk.details["C_sigma"], "n_paths": n}
    out.append(chk)
    if not m.sigma.is_zero:
        d1, _ = an.ito_balance_defect(ctx.u0, ctx.scfg, m, 200, ctx.seed)
        d2, _ = an.ito_balance_defect(ctx.u0, replace(ctx.scfg, dt=ctx.scfg.dt / 2), m, 200, ctx.seed)
        out.append(_ck("ito-balance-defect", 0.0, d2, 0.0, d2 < 0.75 * d1, coarse=d1))
    return out


def cmd_globalize(ctx):
    traj = extend_global(ctx.u0, ctx.scfg, ctx.models, ctx.seed, 0, on_cap="return")
    out = [_ck("globalize-consistency", 1.0, float(traj.info["consistent"]), 0.0, traj.info["consistent"],
               levels=list(traj.info["levels"]), effective_tau=traj.info["effective_tau"],
               cap_hit=traj.info["cap_hit"])]
    pilot = simulate_ensemble(ctx.u0, replace(ctx.scfg, N_trunc=1e12), ctx.models, ctx.seed, 500,
                              stream_ids=np.arange(10**6, 10**6 + 500))
    med = float(np.median(pilot.l2.max(axis=1)))
    levels = [2 * med, 4 * med, 8 * med]
    n = ctx.n_paths
    run = simulate_ensemble(ctx.u0, replace(ctx.scfg, N_trunc=levels[-1]), ctx.models, ctx.seed, n)
    tail = an.tail_probability_fit(run, levels, min_paths=min(n, 10_000))
    if ctx.wants("csv"):
        write_table_csv(ctx.out / "tail.csv", ["level", "hits", "probability", "half_width"],
                        zip(tail.levels, tail.counts, tail.probs, tail.half_widths), comment=ctx.comment)
    taus = [run.tau_times(N) for N in levels]
    mono = all(np.all(taus[i] <= taus[i + 1]) for i in range(len(levels) - 1))
    out.append(_ck("tail-slope", tail.slope_bound, tail.slope, tail.stderr, tail.passed, vacuous=tail.vacuous,
                   counts=tail.counts, n_paths=n, chebyshev=tail.chebyshev_ok, below_recommended=n < 10_000,
                   note="finite schedules report tail decay only, not almost-sure globalization"))
    out.append(_ck("tau-monotone-in-N", 1.0, float(mono), 0.0, mono))
    return out


def cmd_convergence(ctx):
    m = ctx.models
    errs, orders = an.strong_self_convergence(ctx.u0, ctx.scfg, m, n_paths=min(ctx.n_paths, 32), seed=ctx.seed)
    det = Models(m.spec, m.flux, sigma_zero(), m.noise)
    ref = an.galerkin_ode_reference(ctx.u0, ctx.scfg, det)
    gaps = [an.mild_strong_gap(ctx.u0, replace(ctx.scfg, dt=ctx.scfg.dt / 2**j), det, ref, 2**j) for j in range(3)]
    g_orders = an.refinement_orders(gaps)
    d = ctx.cfg.domain
    spec2 = build_basis(d.L, 2 * d.K, d.mu_min)
    det2 = Models(spec2, m.flux, sigma_zero(), build_noise(spec2, ctx.cfg.noise.kappa, ctx.cfg.noise.gamma,
                                                          ctx.cfg.noise.K_noise))
    a2 = np.zeros(2 * d.K)
    a2[: d.K] = ctx.u0.coeffs
    p1 = simulate_path(ctx.u0, replace(ctx.scfg, K=None, M=None), det, 0).coeffs
    p2 = simulate_path(SpectralField(a2, spec2), replace(ctx.scfg, K=None, M=None), det2, 0).coeffs
    kgap = float(np.max(np.linalg.norm(p2[:, : d.K] - p1, axis=1)))
    ktail = float(np.max(np.linalg.norm(p2[:, d.K :], axis=1)))
    if ctx.wants("csv"):
        write_table_csv(ctx.out / "convergence.csv", ["level", "strong_error", "mild_strong_gap"],
                        [(j, errs[j] if j < len(errs) else float("nan"), gaps[j]) for j in range(3)],
                        comment=ctx.comment)
    return [
        _ck("strong-order", 0.5, float(np.mean(orders)), 0.0, float(np.mean(orders)) >= 0.4, errors=errs),
        _ck("mild-strong-order", 1.0, float(np.min(g_orders)), 0.0, float(np.min(g_orders)) >= 0.9, gaps=gaps),
        _ck("K-doubling-gap", 0.0, kgap, 0.0, kgap <= 1e-6 * max(1.0, float(np.linalg.norm(ctx.u0.coeffs))),
            tail_norm=ktail),
    ]


def cmd_certify(ctx):
    return an.certify_models(ctx.models, seed=ctx.seed, N=ctx.scfg.N_trunc)


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "verify-lemmas": cmd_verify_lemmas,
    "contraction": cmd_contraction,
    "energy": cmd_energy,
    "globalize": cmd_globalize,
    "convergence": cmd_convergence,
    "certify": cmd_certify,
}


def build_parser():
    p = argparse.ArgumentParser(prog="stochks", description="Stochastic Kuramoto-Sivashinsky simulation and checks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="YAML experiment file (defaults when omitted)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. solver.dt=1e-4 (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (overrides ensemble.master_seed)")
    p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    p.add_argument("--paths", type=int, help="ensemble size (overrides ensemble.n_paths)")
    p.add_argument("--quiet", action="store_true", help="suppress the per-check summary")
    return p


def run(command, config=None, overrides=(), seed=None, out=None, paths=None, quiet=False):
    """Run one subcommand; returns ``(exit_status, checks)``."""
    if command not in COMMANDS:
        raise InvalidParameterError(f"unknown subcommand {command!r}; expected one of {sorted(COMMANDS)}")
    extra = list(overrides)
    if seed is not None:
        extra.append(f"ensemble.master_seed={int(seed)}")
    if paths is not None:
        extra.append(f"ensemble.n_paths={int(paths)}")
    if out is not None:
        extra.append(f"output.directory={yaml.safe_dump(str(out)).splitlines()[0]}")
    cfg = load_config(config, extra)
    out_dir = Path(cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(dump_config(cfg))
    ctx = Context(cfg, cfg.ensemble.master_seed, out_dir, cfg.ensemble.n_paths, quiet)
    checks = COMMANDS[command](ctx)
    records = []
    for c in checks:
        rec = c.as_record()
        rec.update(command=command, seed=ctx.seed, config=cfg.to_dict())
        records.append(rec)
    if ctx.wants("jsonl"):
        write_jsonl(out_dir / "report.jsonl", records)
    status = EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED
    return status, checks


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) and math.isfinite(v) else str(v)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        status, checks = run(args.command, args.config, args.overrides, args.seed, args.out, args.paths, args.quiet)
    except (ConfigError, InvalidParameterError, OSError, yaml.YAMLError) as exc:
        print(f"stochks: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (NonContractionError, DivergedPathError, TruncationCapExceeded) as exc:
        print(f"stochks: numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILED
    if not args.quiet:
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: estimate={_fmt(c.estimate)} target={_fmt(c.target)}"
                  f" half_width={_fmt(c.half_width)}")
    return status


if __name__ == "__main__":
    sys.exit(main())
