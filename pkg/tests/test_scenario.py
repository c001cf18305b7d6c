from fractions import Fraction

import pytest

from fiberlink.scenario import PRESET_NAMES, ScenarioError, load_scenario, scenario_from_dict

MINIMAL = """
[run]
mode = "envelope"
rate_hz = 1.0
duration_s = 100.0

[link.1]
noise = "urban"

[[link.1.span]]
length_km = 50.0

[station.1]
"""


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_minimal_scenario(tmp_path):
    sc = load_scenario(write(tmp_path, MINIMAL)).scenario
    assert sc.run.mode == "envelope" and sc.run.seed == 0
    assert sc.segments[0].length_km == 50.0
    assert sc.segments[0].noise.drift_span == 3e-9


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_load(name):
    loaded = load_scenario(name)
    assert len(loaded.scenario.segments) == len(loaded.scenario.stations)
    assert loaded.source == f"preset:{name}"


def test_renater_topology():
    sc = load_scenario("renater-300").scenario
    assert [s.length_km for s in sc.segments[0].spans] == [11.0, 36.0, 103.0]
    assert sc.run.mode == "envelope"


@pytest.mark.parametrize(
    "edit, message",
    [
        (lambda t: t.replace('[run]\nmode = "envelope"\nrate_hz = 1.0\nduration_s = 100.0\n', ""), "[run]"),
        (lambda t: t.replace("rate_hz = 1.0", "rate_hz = 1.0\nsed = 3"), "[run] sed: unknown key"),
        (lambda t: t.replace("length_km = 50.0", "length_km = 50.0\ncolour = 1"), "colour"),
        (lambda t: t.replace('noise = "urban"', 'noise = "mystery"'), "mystery"),
        (lambda t: t.replace("[station.1]", "[station.2]"), "station"),
        (lambda t: t + "\n[bogus]\n", "[bogus]: unknown section"),
        (lambda t: t.replace('mode = "envelope"', 'mode = "fast"'), "[run] mode"),
        (lambda t: t.replace("duration_s = 100.0", 'duration_s = "long"'), "duration_s"),
        (lambda t: t + '\n[[events]]\ntime_s = 1.0\nkind = "glitch"\nvalue = 1.0\n', "events.1"),
        (lambda t: t + "\n[station.1.plan]\npll1_offset = \"x/y\"\n", "pll1_offset"),
    ],
)
def test_schema_errors_name_location(tmp_path, edit, message):
    with pytest.raises(ScenarioError) as exc:
        load_scenario(write(tmp_path, edit(MINIMAL)))
    assert message in str(exc.value)


def test_events_are_one_based_in_files(tmp_path):
    text = MINIMAL + '\n[[events]]\ntime_s = 5.0\nkind = "phase_jump"\nvalue = 300.0\nsegment = 1\n'
    ev = load_scenario(write(tmp_path, text)).scenario.events[0]
    assert ev.segment == 0 and ev.value == 300.0


def test_plan_entries_parse_exactly(tmp_path):
    text = MINIMAL + '\n[station.1.plan]\naom2_shift = "7/15"\noutgoing_shift = {coefficient = "76/75"}\n'
    plan = load_scenario(write(tmp_path, text)).scenario.stations[0].plan
    assert plan.aom2_shift.coefficient == Fraction(7, 15)
    assert plan.outgoing_shift.coefficient == Fraction(76, 75)


def test_seed_override():
    assert load_scenario("testbed-2x150", seed=42).scenario.run.seed == 42


def test_bad_toml_reported(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(write(tmp_path, "[run\nmode="))


def test_custom_noise_preset(tmp_path):
    text = MINIMAL.replace('noise = "urban"', 'noise = "mine"') + (
        "\n[noise.presets.mine]\npower_law = [[-2, 1.5], [0, 1e-6]]\npeaks = [[1.0, 2.0, 0.1]]\ndrift_span_s = 1e-9\n"
    )
    m = load_scenario(write(tmp_path, text)).scenario.segments[0].noise
    assert m.power_law_terms == ((-2, 1.5), (0, 1e-6)) and m.drift_span == 1e-9


def test_scenario_from_dict_roundtrip():
    doc = {
        "run": {"mode": "envelope", "rate_hz": 1.0, "duration_s": 10.0},
        "link": {"1": {"span": [{"length_km": 1.0}]}},
        "station": {"1": {}},
    }
    assert scenario_from_dict(doc).scenario.segments[0].length_km == 1.0
