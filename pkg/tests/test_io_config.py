import json
import struct

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from stochks.config import (
    ConfigError,
    apply_overrides,
    build_models,
    build_solver_config,
    dump_config,
    initial_field,
    load_config,
    parse_config,
)
from stochks.exceptions import InvalidParameterError
from stochks.io import (
    read_coeff_dump,
    read_jsonl,
    read_trajectory_csv,
    write_coeff_dump,
    write_jsonl,
    write_table_csv,
    write_trajectory_csv,
)
from stochks.solver import SolverConfig, simulate_path


class TestTrajectoryCsv:
    def test_round_trip(self, tmp_path, ks_models, u0_smooth):
        traj = simulate_path(u0_smooth, SolverConfig(dt=1e-2, T=0.1), ks_models, 0)
        p = tmp_path / "t.csv"
        write_trajectory_csv(p, traj, comment={"seed": 0, "note": "x"})
        header, rows = read_trajectory_csv(p)
        assert header == ["time", "norm_l2", "norm_h2"] + [f"a{k}" for k in range(1, 9)]
        np.testing.assert_array_equal(rows[:, 0], traj.times)
        np.testing.assert_array_equal(rows[:, 1], traj.norms())
        np.testing.assert_array_equal(rows[:, 3:], traj.coeffs[:, :8])
        first = p.read_text().splitlines()[0]
        assert first.startswith("# ") and json.loads(first[2:]) == {"note": "x", "seed": 0}

    def test_table(self, tmp_path):
        p = tmp_path / "tab.csv"
        write_table_csv(p, ["a", "b"], [[1, 0.5], ["x", np.float64(0.25)]])
        assert p.read_text() == "a,b\n1,0.5\nx,0.25\n"


class TestCoeffDump:
    def test_round_trip_and_layout(self, tmp_path):
        a = np.random.default_rng(0).standard_normal((7, 5))
        p = tmp_path / "d.kssp"
        write_coeff_dump(p, a, 1e-3, 7e-3, 2**63 + 5)
        raw = p.read_bytes()
        assert raw[:4] == b"KSSP" and raw[4] == 1
        assert struct.unpack_from("<I", raw, 5)[0] == 5
        assert struct.unpack_from("<d", raw, 9)[0] == 1e-3
        assert len(raw) == 33 + a.size * 8
        head, back = read_coeff_dump(p)
        assert head == {"version": 1, "K": 5, "dt": 1e-3, "T": 7e-3, "seed": 2**63 + 5}
        np.testing.assert_array_equal(back, a)

    def test_refuses_bad_files(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(InvalidParameterError, match="magic"):
            read_coeff_dump(p)
        p.write_bytes(b"KSSP")
        with pytest.raises(InvalidParameterError, match="truncated"):
            read_coeff_dump(p)
        write_coeff_dump(p, np.ones((2, 3)), 0.1, 0.2, 0)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(InvalidParameterError, match="payload"):
            read_coeff_dump(p)
        with pytest.raises(InvalidParameterError):
            write_coeff_dump(p, np.ones(3), 0.1, 0.2, 0)


def test_jsonl_round_trip(tmp_path):
    recs = [{"name": "a", "pass": True, "v": 1.5}, {"name": "b", "pass": False, "v": [1, 2]}]
    p = tmp_path / "r.jsonl"
    write_jsonl(p, recs)
    write_jsonl(p, recs[:1], mode="a")
    assert read_jsonl(p) == recs + recs[:1]


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({})
        assert cfg.domain.K == 32 and cfg.sigma.formula == "linear"
        scfg = build_solver_config(cfg)
        assert scfg.dt == 1e-3 and scfg.K == 32
        models = build_models(cfg)
        assert models.noise.K_noise == 8 and models.sigma.C == pytest.approx(0.1)
        np.testing.assert_array_equal(initial_field(cfg, models.spec).coeffs[:4], [1.0, -0.8, 0.5, 0.0])

    def test_lossless_round_trip(self, tmp_path):
        cfg = load_config(None, ["solver.dt=2e-3", "sigma.formula=gradient", "sigma.mode=full", "sigma.eps=0.05",
                                 "solver.N_schedule=[1.0, 2.0]", "domain.M=64"])
        p = tmp_path / "c.yaml"
        p.write_text(dump_config(cfg))
        again = load_config(p)
        assert again.to_dict() == cfg.to_dict()
        assert dump_config(again) == dump_config(cfg)

    @pytest.mark.parametrize(
        "override, path",
        [
            ("solver.dt=0", "solver.dt"),
            ("solver.dt=-1e-3", "solver.dt"),
            ("noise.gamma=0.5", "noise.gamma"),
            ("noise.kappa=-1", "noise.kappa"),
            ("domain.K=abc", "domain.K"),
            ("domain.K=2.5", "domain.K"),
            ("domain.M=10", "domain.M"),
            ("flux.kind=cubic", "flux.kind"),
            ("sigma.formula=gradient", "sigma.mode"),
            ("sigma.eps=0.1", "sigma.eps"),
            ("sigma.C=-0.1", "sigma.C"),
            ("solver.T=0.0105", "solver"),
            ("solver.shift_drift=1", "solver.shift_drift"),
            ("initial.coeffs=[1, x]", "initial.coeffs"),
            ("ensemble.n_paths=0", "ensemble.n_paths"),
            ("contraction.windows=[0.01, 0.00015]", "contraction.windows"),
            ("output.formats=[pdf]", "output.formats"),
            ("solver.bogus=1", "solver.bogus"),
            ("nosuch.field=1", "nosuch"),
        ],
    )
    def test_field_path_messages(self, override, path):
        with pytest.raises(ConfigError) as err:
            load_config(None, [override])
        assert err.value.path == path
        assert str(err.value).startswith(path + ":")

    def test_too_many_coefficients(self):
        with pytest.raises(ConfigError, match="initial.coeffs"):
            parse_config({"domain": {"K": 2}, "initial": {"coeffs": [1, 2, 3]}})

    def test_override_syntax(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["solver.dt"])
        with pytest.raises(ConfigError):
            apply_overrides({}, ["dt=1"])
        assert apply_overrides({"solver": None}, ["solver.dt=2.5e-4"]) == {"solver": {"dt": 2.5e-4}}
        # exponent floats without a dot load as strings in YAML 1.1; parsing still reads them as numbers
        assert load_config(None, ["solver.dt=1e-4", "solver.T=1e-1"]).solver.dt == 1e-4

    def test_bad_yaml_file(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("solver: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(p)
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(p)

    @pytest.mark.parametrize("formula,mode", [("zero", "state"), ("additive", "state"), ("sine", "state"),
                                              ("gradient", "full")])
    def test_model_factories(self, formula, mode):
        cfg = load_config(None, [f"sigma.formula={formula}", f"sigma.mode={mode}", "flux.kind=power", "flux.p=1.5"])
        models = build_models(cfg)
        assert models.sigma.name == formula and models.flux.p == 1.5

    @given(dt_exp=st.integers(2, 5), n=st.integers(1, 50), K=st.integers(1, 128), C=st.floats(0, 5))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_property(self, dt_exp, n, K, C):
        dt = 10.0**-dt_exp
        cfg = parse_config({"solver": {"dt": dt, "T": n * dt}, "domain": {"K": K},
                            "initial": {"coeffs": [1.0]}, "sigma": {"C": C}})
        assert parse_config(yaml.safe_load(dump_config(cfg))).to_dict() == cfg.to_dict()
