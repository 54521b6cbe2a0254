import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastice.params import (DAY, PRESETS, ConfigError, Params, ScenarioSpec, SolverConfig,
                            dump_config, from_dict, load_config, preset)


class TestDefaults:
    def test_table_values(self):
        p = Params()
        assert (p.e, p.k_t, p.k2, p.alpha_b, p.v0) == (2.0, 0.15, 5.0, 20.0, 5e-8)
        assert (p.rho, p.rho_a, p.rho_o) == (900.0, 1.3, 1026.0)
        assert (p.C_a, p.C_o, p.C_cor) == (1.2e-3, 5.5e-3, 1.46e-4)
        assert (p.P_star, p.c_star, p.delta_min) == (27.5e3, 20.0, 2e-9)
        assert p.h_crit == 2.0
        assert p.d_h == p.d_A == 0.0

    def test_solver_defaults(self):
        s = SolverConfig()
        assert s.max_iter == 100 and s.rtol == 1e-8 and s.linear_rtol == 1e-10
        assert s.min_damping == 2.0**-10 and s.quadrature == 1


class TestValidation:
    def test_negative_k_t(self):
        with pytest.raises(ConfigError, match=r"k_t out of \[0,1\]"):
            Params(k_t=-0.1)

    @pytest.mark.parametrize("name", ["e", "rho", "rho_a", "rho_o", "c_star", "alpha_b", "v0",
                                      "delta_min"])
    def test_strictly_positive(self, name):
        with pytest.raises(ConfigError, match=name):
            Params(**{name: 0.0})

    @pytest.mark.parametrize("name", ["P_star", "k2", "d_h", "d_A"])
    def test_non_negative(self, name):
        Params(**{name: 0.0})
        with pytest.raises(ConfigError, match=name):
            Params(**{name: -1.0})

    def test_e_below_one(self):
        with pytest.raises(ConfigError):
            Params(e=0.5)

    def test_duration_shorter_than_step(self):
        with pytest.raises(ConfigError, match="duration shorter than one step"):
            ScenarioSpec(duration=100.0, dt=1800.0)

    @pytest.mark.parametrize("kw", [dict(dt=0.0), dict(cells_per_side=1), dict(domain_length=-1.0),
                                    dict(initial_condition="foo"), dict(wind=(1.0,))])
    def test_bad_scenario(self, kw):
        with pytest.raises(ConfigError):
            ScenarioSpec(**kw)

    def test_bad_solver(self):
        with pytest.raises(ConfigError):
            SolverConfig(rtol=2.0)
        with pytest.raises(ConfigError):
            SolverConfig(max_iter=0)
        with pytest.raises(ConfigError):
            SolverConfig(quadrature=3)


class TestPresets:
    def test_names(self):
        assert set(PRESETS) == {"ex1_vp", "ex1_lfi", "ex2_unforced", "ex3_constant_wind"}

    def test_ex1_lfi(self):
        p, s = preset("ex1_lfi")
        assert (p.k_t, p.h_crit, p.k2, p.alpha_b) == (0.15, 2.5, 5.0, 20.0)
        assert s.wind == (20.0, 0.0) and not s.coriolis and not s.surface_tilt
        assert s.duration == 2 * DAY and s.n_steps == 96
        assert (s.h_mean, s.h_amplitude, s.initial_condition) == (2.5, 1.0, "rest")
        assert s.cells_per_side == 64 and s.domain_length / s.cells_per_side == 8000.0
        assert s.dt == 1800.0

    def test_ex1_vp(self):
        p, s = preset("ex1_vp")
        p_lfi, s_lfi = preset("ex1_lfi")
        assert p.k_t == 0.0 and p.k2 == 0.0
        assert s.wind == s_lfi.wind and s.duration == s_lfi.duration

    def test_ex2(self):
        _, s = preset("ex2_unforced")
        assert s.wind == (0.0, 0.0) and not s.ocean_drag and not s.coriolis
        assert not s.surface_tilt
        assert s.initial_condition == "sine_velocity" and s.velocity_amplitude == 0.05
        assert s.n_steps == 1056

    def test_ex3(self):
        p, s = preset("ex3_constant_wind")
        assert s.h_amplitude == 0.5 and s.wind == (20.0, 0.0) and s.n_steps == 1296
        assert p == preset("ex1_lfi")[0]

    def test_pure(self):
        for name in PRESETS:
            assert preset(name) == preset(name)

    def test_unknown(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            preset("ex9")


class TestConfigFiles:
    def test_empty_file_gives_defaults(self, tmp_path):
        f = tmp_path / "c.yaml"
        f.write_text("")
        p, s = load_config(f)
        assert p == Params() and p.e == 2.0 and p.P_star == 27500.0
        assert s == ScenarioSpec()

    def test_override(self, tmp_path):
        f = tmp_path / "c.yaml"
        f.write_text("params:\n  h_crit: 2.5\nsolver:\n  rtol: 1e-6\n")
        p, s = load_config(f)
        assert p.h_crit == 2.5 and s.solver.rtol == 1e-6

    def test_invalid_value_names_invariant(self, tmp_path):
        f = tmp_path / "c.yaml"
        f.write_text("params:\n  k_t: -0.1\n")
        with pytest.raises(ConfigError, match=r"k_t out of \[0,1\]"):
            load_config(f)

    def test_malformed(self, tmp_path):
        f = tmp_path / "c.yaml"
        f.write_text("params: [unclosed\n")
        with pytest.raises(ConfigError, match="malformed"):
            load_config(f)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            from_dict({"params": {"nope": 1}})
        with pytest.raises(ConfigError, match="top-level"):
            from_dict({"extra": {}})

    def test_preset_base(self):
        p, s = from_dict({"preset": "ex1_lfi", "scenario": {"duration": DAY}})
        assert p.h_crit == 2.5 and s.n_steps == 48 and s.wind == (20.0, 0.0)

    @pytest.mark.parametrize("name", PRESETS)
    def test_round_trip_presets(self, tmp_path, name):
        p, s = preset(name)
        dump_config(p, s, tmp_path / "c.yaml")
        assert load_config(tmp_path / "c.yaml") == (p, s)

    @settings(max_examples=30, deadline=None)
    @given(k_t=st.floats(0, 1), e=st.floats(1, 10), dt=st.floats(1, 1e4),
           wind=st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
           rtol=st.floats(1e-14, 0.5), quad=st.sampled_from([1, 2]))
    def test_round_trip_property(self, tmp_path_factory, k_t, e, dt, wind, rtol, quad):
        p = Params(k_t=k_t, e=e)
        s = ScenarioSpec(dt=dt, duration=10 * dt, wind=wind,
                         solver=SolverConfig(rtol=rtol, quadrature=quad))
        path = tmp_path_factory.mktemp("cfg") / "c.yaml"
        dump_config(p, s, path)
        p2, s2 = load_config(path)
        assert p2 == p and s2 == s
        for f in dataclasses.fields(s):
            assert getattr(s2, f.name) == getattr(s, f.name)
