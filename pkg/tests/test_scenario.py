import math

import pytest

from dstirap.domain import mhz
from dstirap.scenario import (Scenario, ScenarioError, build_system, build_zeeman,
                              load_scenario, parse_value, preset_names, preset_text,
                              resolve_preset, stage_schedule, time_window, trap_motion)

CATALOG = ["fig3_amax", "fig4_eta_opt", "fig5_delay", "fig6_two_photon", "fig7_eigentrack",
           "fig8_linewidth", "fig9_pulsewidth", "fig10_tau_opt", "fig11_residual",
           "fig12_micromotion", "fig14_polarization", "fig15_full"]

MINIMAL = """
[scenario]
name = "minimal"
[system]
topology = "stage1"
[stage1]
eta = 0.85
one_photon_detuning_mhz = 600.0
[stage1.fields.A]
peak_rabi_mhz = 100.0
[stage1.fields.B]
peak_rabi_mhz = 100.0
"""


def test_catalogue_is_exactly_the_twelve_presets():
    assert preset_names() == CATALOG


@pytest.mark.parametrize("name", CATALOG)
def test_presets_validate_and_round_trip(name):
    scn = Scenario.from_toml(preset_text(name), name)
    again = Scenario.from_toml(scn.to_toml(), name)
    assert again.data == scn.data
    assert Scenario.from_toml(again.to_toml(), name).to_toml() == scn.to_toml()
    assert scn.get("scenario.description")


def test_fig12_declares_the_rf_drive_frequency():
    assert load_scenario("fig12_micromotion").get("motion.rf_frequency_mhz") == 16.8


def test_minimal_scenario_defaults():
    scn = Scenario.from_toml(MINIMAL)
    assert scn.kind == "bloch"
    assert scn.initial_level() == 1 and scn.observables() == ["P3"]
    sched = stage_schedule(scn, "stage1")
    assert sched.width == pytest.approx(2e-6)
    assert sched.delay == pytest.approx(0.85 * 2e-6 / math.sqrt(2))
    assert sched.pump_peak == pytest.approx(mhz(100))
    lo, hi = time_window(scn)
    assert hi - lo == pytest.approx(sched.delay + 8e-6)
    cfg = build_system(scn)
    assert cfg.topology == "stage1" and len(cfg.fields) == 2


@pytest.mark.parametrize("text, key", [
    (MINIMAL + "[stage1.fields.A.extra]\n", "extra"),
    (MINIMAL.replace("eta = 0.85", "etta = 0.85"), "etta"),
    (MINIMAL + "[bogus]\n", "bogus"),
])
def test_unknown_keys_are_rejected_by_name(text, key):
    with pytest.raises(ScenarioError, match=key):
        Scenario.from_toml(text)


@pytest.mark.parametrize("override, fragment", [
    ("stage1.fields.A.peak_rabi_mhz=-1", "peak_rabi_mhz"),
    ("stage1.fields.B.residual_fraction=2", "residual_fraction"),
    ("stage1.tau_us=0", "tau_us"),
    ("system.topology='ring'", "topology"),
    ("ion.species='Xx99'", "ion.species"),
    ("scenario.kind='magic'", "kind"),
    ("system.initial_level=5", "initial_level"),
    ("stage1.tau_us='long'", "tau_us"),
])
def test_invalid_values_name_the_key(override, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        Scenario.from_toml(MINIMAL).with_overrides([override])


def test_missing_stage_section_is_reported():
    with pytest.raises(ScenarioError, match="stage2"):
        Scenario.from_toml(MINIMAL.replace('topology = "stage1"', 'topology = "full"'))


def test_eta_and_delay_are_mutually_exclusive_in_files():
    with pytest.raises(ScenarioError, match="eta or delay_us"):
        Scenario.from_toml(MINIMAL.replace("eta = 0.85", "eta = 0.85\ndelay_us = 1.0"))


def test_override_replaces_the_exclusive_partner():
    scn = Scenario.from_toml(MINIMAL).with_overrides(["stage1.delay_us=1.3"])
    assert scn.get("stage1.eta") is None
    assert stage_schedule(scn, "stage1").delay == pytest.approx(1.3e-6)
    scn = scn.with_overrides(["motion.temperature_mk=0.5", "motion.velocity_m_s=1"])
    assert scn.get("motion.temperature_mk") is None


def test_any_leaf_is_overridable_and_sections_are_not():
    scn = load_scenario("fig5_delay").with_overrides(
        ["stage2.fields.C.peak_rabi_mhz=10", "sweep.values=[0.5, 1.0]"])
    assert scn.get("stage2.fields.C.peak_rabi_mhz") == 10.0
    assert scn.sweep_values() == [0.5, 1.0] and scn.get("sweep.start") is None
    with pytest.raises(ScenarioError, match="section"):
        scn.set("stage2.fields", 1)
    with pytest.raises(ScenarioError, match="key=value"):
        scn.with_overrides(["stage2.tau_us"])


def test_sweep_grid_validation():
    scn = load_scenario("fig12_micromotion")
    assert scn.sweep_values()[:3] == [0.0, 0.1, 0.2] and len(scn.sweep_values()) == 31
    with pytest.raises(ScenarioError, match="numeric"):
        scn.set("sweep.parameter", "scenario.name")
    with pytest.raises(ScenarioError, match="cannot be swept"):
        scn.set("sweep.parameter", "sweep.jobs")


def test_parse_value():
    assert parse_value("3") == 3 and parse_value("2.5") == 2.5
    assert parse_value("[1, 2]") == [1, 2] and parse_value("true") is True
    assert parse_value("stage1") == "stage1"


def test_preset_resolution_and_alias():
    assert resolve_preset("figures/fig5_delay_scan") == "fig5_delay"
    assert resolve_preset("fig15_full.toml") == "fig15_full"
    assert resolve_preset("full-double-stirap") == "fig15_full"
    assert resolve_preset("fig1") is None  # ambiguous prefix


def test_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.toml")


def test_scenario_file_on_disk(tmp_path):
    path = tmp_path / "mine.toml"
    path.write_text(MINIMAL.replace('name = "minimal"\n', ""))
    scn = load_scenario(path)
    assert scn.name == "mine"


def test_temperature_sets_velocity_and_phase_reference():
    scn = Scenario.from_toml(MINIMAL).with_overrides(["motion.temperature_mk=0.5"])
    motion = trap_motion(scn)
    assert motion.peak_velocity > 0
    assert motion.rf_frequency == pytest.approx(mhz(16.8))


def test_zeeman_field_and_explicit_shifts_merge():
    scn = load_scenario("fig14_polarization").with_overrides(
        ["zeeman.field_gauss=1.0", "zeeman.shifts_mhz={'D+3/2' = 0.0}"])
    cfg = build_zeeman(scn, 0.04, 0.02)
    assert cfg.basis.shift("S+1/2") == pytest.approx(mhz(1.39962), rel=1e-5)
    assert cfg.basis.shift("D+3/2") == 0.0
    assert cfg.pump.ratios == pytest.approx((0.04, 0.02))
    with pytest.raises(ScenarioError, match="sublevel"):
        scn.with_overrides(["zeeman.shifts_mhz={'Q' = 1.0}"])
    with pytest.raises(ScenarioError, match="non-negative"):
        build_zeeman(scn, -0.1, 0.0)
