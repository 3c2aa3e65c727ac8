import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elastocontrol import config as cfgmod
from elastocontrol.config import ConfigError, RunConfig


def test_defaults_build_reference_problem():
    cfg = RunConfig().validate()
    pb = cfg.problem()
    assert pb.grid.steps == 750 and pb.mesh.n_free == 100 and pb.kappa == 2e-4
    assert pb.model.params == {"lam": 0.05, "mu": 0.05}
    assert cfg.objective_config().alpha == 2e-3
    assert cfg.tau_eval == 7.5 and cfg.separator == ","


def test_round_trip_is_idempotent():
    cfg = cfgmod.apply_overrides(RunConfig(), [
        "law=fung", "fung_beta=0.3", "u0=poly", "u0_coeffs=0.1 -0.05", "tau=3.25",
        "check_injectivity=true", "delimiter=;", "tau_lo=1.5", "objective=pressure_difference_quotient"])
    text = cfgmod.serialize(cfg)
    again = cfgmod.parse(text)
    assert again == cfg
    assert cfgmod.serialize(again) == text


@given(st.floats(1e-4, 1e3, allow_nan=False), st.integers(1, 10_000))
def test_numeric_round_trip(x, n):
    cfg = RunConfig(lam=x, max_iters=n)
    assert cfgmod.parse(cfgmod.serialize(cfg)) == cfg


def test_overrides_accept_section_prefix():
    cfg = cfgmod.apply_overrides(RunConfig(), ["physics.kappa=0.001", "dt = 0.05"])
    assert cfg.kappa == 0.001 and cfg.dt == 0.05


def test_all_field_errors_are_reported():
    with pytest.raises(ConfigError) as info:
        cfgmod.apply_overrides(RunConfig(), ["kappa=abc", "nope=1", "check_injectivity=maybe", "oops"])
    keys = [k for k, _ in info.value.errors]
    assert keys == ["kappa", "nope", "check_injectivity", "oops"]


@pytest.mark.parametrize("pairs, key", [
    (["kappa=0"], "kappa"),
    (["alpha=-1"], "alpha"),
    (["law=neo"], "law"),
    (["delimiter=|"], "delimiter"),
    (["dt=0.07"], "dt"),
    (["mesh_h=0.3"], "mesh_h"),
    (["tau=15"], "tau"),
    (["armijo_factor=2"], "max_iters"),
    (["mu=0"], "law"),
])
def test_validation_names_the_field(pairs, key):
    with pytest.raises(ConfigError) as info:
        cfgmod.apply_overrides(RunConfig(), pairs).validate()
    assert key in [k for k, _ in info.value.errors]


def test_parse_rejects_unknown_sections_and_misplaced_keys():
    with pytest.raises(ConfigError) as info:
        cfgmod.parse("[physics]\nkappa = 1e-3\ndt = 0.1\n[extras]\nx = 1\n")
    assert sorted(k for k, _ in info.value.errors) == ["extras", "physics.dt"]
    with pytest.raises(ConfigError):
        cfgmod.parse("kappa = 1\n")


def test_load_from_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[discretization]\nT = 2.0\ndt = 0.05\nmesh_h = 0.05\n[output]\ndelimiter = tab\n")
    cfg = cfgmod.load(p).validate()
    assert cfg.problem().grid.steps == 40 and cfg.separator == "\t"


def test_optimizer_bounds_from_config():
    cfg = cfgmod.apply_overrides(RunConfig(), ["tau_lo=2"])
    assert cfg.optimizer_config().tau_bounds == (2.0, 15.0 - 0.15)
    assert RunConfig().optimizer_config().tau_bounds is None


def test_profiles():
    cfg = cfgmod.apply_overrides(RunConfig(), ["mesh_h=0.05", "u0=sine", "u0_amplitude=0.01"])
    x = cfg.mesh().free_coordinates()
    assert np.abs(cfg.problem().u0).max() > 0 and cfg.problem().u0.shape == x.shape
