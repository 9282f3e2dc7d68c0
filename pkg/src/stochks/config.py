"""Experiment configuration: YAML files, dotted overrides and model construction.

Every field is checked when the file is parsed. Errors name the offending
field by its dotted path, e.g. ``solver.dt: must be positive``.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .dynamics import (
    power_flux,
    quadratic_flux,
    sigma_additive,
    sigma_gradient,
    sigma_linear,
    sigma_sine,
    sigma_zero,
    zero_flux,
)
from .exceptions import InvalidParameterError
from .noise import build_noise
from .solver import Models, SolverConfig
from .spectral import SpectralField, build_basis

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "apply_overrides",
    "dump_config",
    "build_models",
    "build_solver_config",
    "initial_field",
    "SIGMA_FORMULAS",
    "FLUX_KINDS",
]

SIGMA_FORMULAS = {"zero": "state", "additive": "state", "linear": "state", "sine": "state", "gradient": "full"}
FLUX_KINDS = ("quadratic", "power", "zero")


class ConfigError(InvalidParameterError):
    """Configuration rejected at parse time; ``path`` is the dotted field name."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Domain:
    L: float = float(np.pi)
    K: int = 32
    M: int | None = None
    mu_min: float = 1.0


@dataclass
class Noise:
    kappa: float = 1.0
    gamma: float = 1.0
    K_noise: int = 8


@dataclass
class Flux:
    kind: str = "quadratic"
    p: float = 2.0


@dataclass
class Sigma:
    formula: str = "linear"
    mode: str = "state"
    C: float = 0.1
    eps: float = 0.0
    value: float = 1.0


@dataclass
class Solver:
    dt: float = 1e-3
    T: float = 1.0
    N_trunc: float = 10.0
    N_schedule: list = field(default_factory=list)
    scheme: str = "exponential-euler"
    picard_tol: float = 1e-10
    picard_max_iter: int = 200
    drift_weighting: str = "exponential"
    noise_weighting: str = "exact"
    shift_drift: bool = True


@dataclass
class Initial:
    coeffs: list = field(default_factory=lambda: [1.0, -0.8, 0.5])


@dataclass
class Ensemble:
    n_paths: int = 1000
    master_seed: int = 0


@dataclass
class Contraction:
    windows: list = field(default_factory=lambda: [0.0125, 0.025, 0.05, 0.1])
    dt: float = 1e-4
    n_pairs: int = 12
    n_noise: int = 8


@dataclass
class Output:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "jsonl"])


SECTIONS = {
    "domain": Domain,
    "noise": Noise,
    "flux": Flux,
    "sigma": Sigma,
    "solver": Solver,
    "initial": Initial,
    "ensemble": Ensemble,
    "contraction": Contraction,
    "output": Output,
}


@dataclass
class ExperimentConfig:
    domain: Domain = field(default_factory=Domain)
    noise: Noise = field(default_factory=Noise)
    flux: Flux = field(default_factory=Flux)
    sigma: Sigma = field(default_factory=Sigma)
    solver: Solver = field(default_factory=Solver)
    initial: Initial = field(default_factory=Initial)
    ensemble: Ensemble = field(default_factory=Ensemble)
    contraction: Contraction = field(default_factory=Contraction)
    output: Output = field(default_factory=Output)

    def to_dict(self):
        return asdict(self)


def _as_number(value):
    # YAML 1.1 reads exponent floats without a dot (``1e-4``) as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(path, value, default):
    kind = type(default)
    if default is None or kind in (int, float):
        value = _as_number(value)
    if default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(path, f"expected an integer or null, got {value!r}")
        return int(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return list(value)
    return value


def parse_config(data):
    """Build and validate an :class:`ExperimentConfig` from a nested mapping."""
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], f"unknown section; expected one of {sorted(SECTIONS)}")
    kwargs = {}
    for name, cls in SECTIONS.items():
        raw = data.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigError(name, "section must be a mapping")
        default = cls()
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"{name}.{sorted(extra)[0]}", f"unknown field; expected one of {sorted(known)}")
        vals = {k: _coerce(f"{name}.{k}", raw[k], getattr(default, k)) for k in raw}
        kwargs[name] = cls(**vals)
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def _positive(path, v):
    if not v > 0:
        raise ConfigError(path, f"must be positive, got {v}")


def validate(cfg):
    d, n, f, s, so = cfg.domain, cfg.noise, cfg.flux, cfg.sigma, cfg.solver
    _positive("domain.L", d.L)
    _positive("domain.K", d.K)
    _positive("domain.mu_min", d.mu_min)
    if d.M is not None and d.M < int(np.ceil(1.5 * d.K)):
        raise ConfigError("domain.M", f"grid size {d.M} below ceil(3K/2) = {int(np.ceil(1.5 * d.K))}")
    if n.kappa < 0:
        raise ConfigError("noise.kappa", f"must be nonnegative, got {n.kappa}")
    if not n.gamma > 0.5:
        raise ConfigError("noise.gamma", f"must exceed 1/2 for a trace-class covariance, got {n.gamma}")
    _positive("noise.K_noise", n.K_noise)
    if d.M is not None and d.M < n.K_noise:
        raise ConfigError("domain.M", f"grid size {d.M} cannot carry {n.K_noise} noise modes")
    if f.kind not in FLUX_KINDS:
        raise ConfigError("flux.kind", f"unknown flux {f.kind!r}; expected one of {FLUX_KINDS}")
    if f.p < 1:
        raise ConfigError("flux.p", f"must be >= 1, got {f.p}")
    if s.formula not in SIGMA_FORMULAS:
        raise ConfigError("sigma.formula", f"unknown formula {s.formula!r}; expected one of {sorted(SIGMA_FORMULAS)}")
    if SIGMA_FORMULAS[s.formula] != s.mode:
        raise ConfigError("sigma.mode", f"formula {s.formula!r} runs in {SIGMA_FORMULAS[s.formula]!r} mode, not {s.mode!r}")
    if s.C < 0:
        raise ConfigError("sigma.C", f"must be nonnegative, got {s.C}")
    if s.eps < 0:
        raise ConfigError("sigma.eps", f"must be nonnegative, got {s.eps}")
    if s.eps and s.mode != "full":
        raise ConfigError("sigma.eps", "a second-derivative coefficient needs mode 'full'")
    _positive("solver.dt", so.dt)
    _positive("solver.picard_tol", so.picard_tol)
    _positive("solver.N_trunc", so.N_trunc)
    if len(cfg.initial.coeffs) > d.K:
        raise ConfigError("initial.coeffs", f"{len(cfg.initial.coeffs)} coefficients exceed K={d.K}")
    cfg.initial.coeffs = [_as_number(v) for v in cfg.initial.coeffs]
    cfg.solver.N_schedule = [_as_number(v) for v in cfg.solver.N_schedule]
    cfg.contraction.windows = [_as_number(v) for v in cfg.contraction.windows]
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in cfg.initial.coeffs):
        raise ConfigError("initial.coeffs", "coefficients must be numbers")
    _positive("ensemble.n_paths", cfg.ensemble.n_paths)
    if cfg.ensemble.master_seed < 0:
        raise ConfigError("ensemble.master_seed", "must be a nonnegative integer")
    _positive("contraction.dt", cfg.contraction.dt)
    if not cfg.contraction.windows or any(not w > 0 for w in cfg.contraction.windows):
        raise ConfigError("contraction.windows", "need positive window lengths")
    try:
        build_solver_config(cfg)
    except InvalidParameterError as exc:
        raise ConfigError("solver", str(exc)) from None
    for w in cfg.contraction.windows:
        try:
            SolverConfig(dt=cfg.contraction.dt, T=w)
        except InvalidParameterError as exc:
            raise ConfigError("contraction.windows", str(exc)) from None
    bad = set(cfg.output.formats) - {"csv", "jsonl", "binary"}
    if bad:
        raise ConfigError("output.formats", f"unknown format {sorted(bad)[0]!r}")


def apply_overrides(data, overrides):
    """Apply ``section.field=value`` strings; values are parsed as YAML scalars."""
    data = copy.deepcopy(data) if data else {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like section.field=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or not all(parts):
            raise ConfigError(key, "override key must be section.field")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"unparsable value {raw!r}: {exc}") from None
        section = data.setdefault(parts[0], {})
        if section is None:
            section = data[parts[0]] = {}
        if not isinstance(section, dict):
            raise ConfigError(parts[0], "section must be a mapping")
        section[parts[1]] = value
    return data


def load_config(path=None, overrides=()):
    """Read a YAML file (or start from defaults), apply overrides, validate."""
    data = {}
    if path is not None:
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(str(path), f"unparsable YAML: {exc}") from None
    return parse_config(apply_overrides(data, overrides))


def dump_config(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def build_solver_config(cfg):
    so, d = cfg.solver, cfg.domain
    return SolverConfig(
        dt=so.dt, T=so.T, K=d.K, M=d.M, N_trunc=so.N_trunc, N_schedule=tuple(so.N_schedule), scheme=so.scheme,
        picard_tol=so.picard_tol, picard_max_iter=so.picard_max_iter, drift_weighting=so.drift_weighting,
        noise_weighting=so.noise_weighting, shift_drift=so.shift_drift,
    )


def build_models(cfg):
    d, n, f, s = cfg.domain, cfg.noise, cfg.flux, cfg.sigma
    spec = build_basis(d.L, d.K, d.mu_min)
    nm = build_noise(spec, n.kappa, n.gamma, n.K_noise)
    flux = {"quadratic": quadratic_flux, "zero": zero_flux}.get(f.kind, lambda: power_flux(f.p))()
    sigma = {
        "zero": sigma_zero,
        "additive": lambda: sigma_additive(s.value),
        "linear": lambda: sigma_linear(s.C),
        "sine": lambda: sigma_sine(s.C),
        "gradient": lambda: sigma_gradient(s.C, s.eps),
    }[s.formula]()
    return Models(spec, flux, sigma, nm)


def initial_field(cfg, spec):
    a = np.zeros(spec.K)
    c = np.asarray(cfg.initial.coeffs, dtype=float)
    a[: c.size] = c
    return SpectralField(a, spec)
