import pytest

from energyspace.config import (
    ConfigError,
    apply_overrides,
    build_scenario,
    config_hash,
    get_path,
    load_config,
    parse_text,
    parse_value,
    resolve_scenario_path,
    shipped_scenarios,
    validate,
)
from energyspace.controllers import EnergyController
from energyspace.loads import TabulatedLoad

SHIPPED = shipped_scenarios()


def test_eight_shipped_scenarios():
    assert len(SHIPPED) == 8
    assert {"rlc_const_fblc", "gen_sigmoid_droop", "stress_smc_delay"} <= set(SHIPPED)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_build(name):
    cfg = load_config(name)
    scn = build_scenario(cfg, resolve_scenario_path(name).parent)
    assert scn.name == name
    assert scn.T > 0 and scn.h > 0


def test_tabulated_profile_resolves_next_to_file():
    scn = build_scenario(load_config("rlc_tv_brayton_moser"))
    assert isinstance(scn.load, TabulatedLoad)


def test_override_precedence():
    cfg = load_config("rlc_const_fblc")
    out = apply_overrides(cfg, ["sim.h=2e-4", "sim.T=1.5", "gains.fblc.K2=6"], step=5e-5,
                          controller="smc")
    assert out["sim"]["h"] == 5e-5       # the flag beats --set
    assert out["sim"]["T"] == 1.5
    assert out["gains"]["fblc"]["K2"] == 6
    assert out["controller"]["kind"] == "smc"
    assert cfg["sim"]["h"] == 1e-4       # the input is not mutated


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("2.5e-4") == 2.5e-4
    assert parse_value("true") is True
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("smc") == "smc"


def test_overrides_reject_malformed_items():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["sim.h"])
    with pytest.raises(ConfigError, match="'sim.h.x'"):
        apply_overrides({"sim": {"h": 1.0}}, ["sim.h.x=2"])


@pytest.mark.parametrize("mutate, key", [
    (lambda c: c.pop("controller"), "controller"),
    (lambda c: c["controller"].pop("kind"), "controller.kind"),
    (lambda c: c["controller"].update(kind="pid"), "controller.kind"),
    (lambda c: c["plant"].update(kind="battery"), "plant.kind"),
    (lambda c: c["sim"].update(dt=1e-4), "sim.dt"),
    (lambda c: c["sim"].update(h="fast"), "sim.h"),
    (lambda c: c.update(metrics={"band_basis": "peak"}), "metrics.band_basis"),
])
def test_config_errors_name_the_key(mutate, key):
    cfg = load_config("rlc_const_fblc")
    mutate(cfg)
    with pytest.raises(ConfigError) as exc:
        validate(cfg)
    assert exc.value.key == key
    assert f"'{key}'" in str(exc.value)


@pytest.mark.parametrize("sets, key", [
    (["sim.h=-1e-4"], "sim.h"),
    (["sim.h=0.3", "sim.T=1.0"], "sim.T"),
    (["plant.x0=[1.0]"], "plant.x0"),
    (["gains.fblc.K1=-1"], "gains.fblc"),
    (["controller.kind='droop'"], "controller.kind"),
    (["load.kind='ramp'"], "load"),
])
def test_build_errors_name_the_key(sets, key):
    cfg = apply_overrides(load_config("rlc_const_fblc"), sets)
    with pytest.raises(ConfigError) as exc:
        build_scenario(cfg)
    assert exc.value.key == key


def test_unknown_scenario_and_bad_toml():
    with pytest.raises(ConfigError):
        resolve_scenario_path("no_such_scenario")
    with pytest.raises(ConfigError):
        parse_text("[plant\nkind = 1")


def test_plant_defaults_fill_gaps():
    cfg = parse_text('[plant]\nkind = "generator"\n[controller]\nkind = "smc"\n'
                     '[load]\nkind = "constant"\nP = 1000.0\n[sim]\nT = 1.0\n')
    scn = build_scenario(cfg)
    assert scn.h == 1e-3
    assert scn.x0 == (373.23, 1000.0)
    assert isinstance(scn.controller, EnergyController)
    assert (scn.controller.gains.M0, scn.controller.gains.M1) == (10.0, 1.0)


def test_config_hash_is_order_independent():
    a = {"sim": {"T": 1.0, "h": 1e-4}, "plant": {"kind": "rlc"}}
    b = {"plant": {"kind": "rlc"}, "sim": {"h": 1e-4, "T": 1.0}}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "name": "x"})
    assert get_path(a, "sim.h") == 1e-4 and get_path(a, "sim.nope", 7) == 7
