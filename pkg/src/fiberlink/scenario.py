"""Scenario files (TOML) and the packaged presets.

Parsing is fail-closed: unknown sections or keys, wrong types and missing
required entries raise :class:`ScenarioError` naming the offending path,
e.g. ``[link.2.span.1] length_km``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analysis import CounterModel
from .cascade import Event, InputLaser, RunConfig, Scenario
from .channel import Edfa, FiberSpan, LinkSegment, LossTable
from .noise import PRESETS, NoiseModel, SpectralPeak
from .station import FrequencyPlan, PlanEntry, StationConfig

PRESET_NAMES = ("testbed-2x150", "renater-300")


class ScenarioError(ValueError):
    """Schema violation in a scenario document."""


@dataclass(frozen=True)
class LoadedScenario:
    scenario: Scenario
    counter: CounterModel
    document: dict
    source: str


def _where(path: str, key: str | None = None) -> str:
    return f"[{path}]" + (f" {key}" if key else "")


def _check_keys(table: dict, path: str, allowed: set[str], required: set[str] = frozenset()) -> None:
    if not isinstance(table, dict):
        raise ScenarioError(f"{_where(path)} must be a table")
    for k in table:
        if k not in allowed:
            raise ScenarioError(f"{_where(path, k)}: unknown key")
    for k in sorted(required):
        if k not in table:
            raise ScenarioError(f"{_where(path, k)}: missing required key")


def _num(table: dict, key: str, path: str, default=None, integer: bool = False):
    if key not in table:
        if default is None:
            raise ScenarioError(f"{_where(path, key)}: missing required key")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{_where(path, key)}: expected a number, got {type(v).__name__}")
    if integer:
        if int(v) != v:
            raise ScenarioError(f"{_where(path, key)}: expected an integer")
        return int(v)
    return float(v)


def _str(table: dict, key: str, path: str, default=None) -> str:
    if key not in table:
        if default is None:
            raise ScenarioError(f"{_where(path, key)}: missing required key")
        return default
    v = table[key]
    if not isinstance(v, str):
        raise ScenarioError(f"{_where(path, key)}: expected a string")
    return v


def _bool(table: dict, key: str, path: str, default: bool) -> bool:
    v = table.get(key, default)
    if not isinstance(v, bool):
        raise ScenarioError(f"{_where(path, key)}: expected true or false")
    return v


def _pairs(table: dict, key: str, path: str, width: int) -> list[tuple[float, ...]]:
    rows = table.get(key, [])
    if not isinstance(rows, list):
        raise ScenarioError(f"{_where(path, key)}: expected a list of {width}-element lists")
    out = []
    for i, row in enumerate(rows):
        if not (isinstance(row, list) and len(row) == width and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row)):
            raise ScenarioError(f"{_where(path, key)}[{i}]: expected {width} numbers")
        out.append(tuple(float(x) for x in row))
    return out


def _numbered(doc: dict, name: str) -> list[tuple[str, dict]]:
    """``[name.1] .. [name.N]`` as an ordered list; numbering must be 1..N."""
    block = doc.get(name)
    if block is None:
        raise ScenarioError(f"{_where(name + '.1')}: missing section")
    if not isinstance(block, dict):
        raise ScenarioError(f"{_where(name)} must contain numbered sub-tables [{name}.1], [{name}.2], ...")
    keys = list(block)
    for k in keys:
        if not k.isdigit() or int(k) < 1:
            raise ScenarioError(f"{_where(name + '.' + k)}: sections must be numbered from 1")
    idx = sorted(int(k) for k in keys)
    if idx != list(range(1, len(idx) + 1)):
        raise ScenarioError(f"{_where(name)}: numbering must be contiguous 1..N, got {idx}")
    return [(f"{name}.{i}", block[str(i)]) for i in idx]


# --- sections -----------------------------------------------------------------

_NOISE_KEYS = {"power_law", "peaks", "drift_span_s"}


def _noise_model(table: dict, path: str) -> NoiseModel:
    _check_keys(table, path, _NOISE_KEYS)
    terms = []
    for a, b in _pairs(table, "power_law", path, 2):
        if int(a) != a:
            raise ScenarioError(f"{_where(path, 'power_law')}: exponents must be integers")
        terms.append((int(a), b))
    peaks = tuple(SpectralPeak(*p) for p in _pairs(table, "peaks", path, 3))
    try:
        return NoiseModel(tuple(terms), peaks, _num(table, "drift_span_s", path, 0.0))
    except ValueError as exc:
        raise ScenarioError(f"{_where(path)}: {exc}") from None


def _noise_presets(doc: dict) -> dict[str, NoiseModel]:
    noise = doc.get("noise", {})
    _check_keys(noise, "noise", {"presets"})
    custom = noise.get("presets", {})
    _check_keys(custom, "noise.presets", set(custom))
    models = dict(PRESETS)
    for name, table in custom.items():
        models[name] = _noise_model(table, f"noise.presets.{name}")
    return models


_SPAN_KEYS = {"length_km", "loss_db_per_km", "group_index", "connectors", "oadm", "edfa", "data_traffic", "label"}
_LINK_KEYS = {"noise", "noise_scale", "noise_taps", "tap_fractions", "backward_offset_hz", "carrier_hz", "span"}


def _span(table: dict, path: str) -> FiberSpan:
    _check_keys(table, path, _SPAN_KEYS, {"length_km"})
    try:
        return FiberSpan(
            length_km=_num(table, "length_km", path),
            loss_per_km=_num(table, "loss_db_per_km", path, 0.25),
            group_index=_num(table, "group_index", path, 1.468),
            connectors=_num(table, "connectors", path, 0, integer=True),
            oadm_count=_num(table, "oadm", path, 0, integer=True),
            edfa=tuple(Edfa(*e) for e in _pairs(table, "edfa", path, 2)),
            carries_data_traffic=_bool(table, "data_traffic", path, False),
            label=_str(table, "label", path, ""),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{_where(path)}: {exc}") from None


def _link(table: dict, path: str, models: dict[str, NoiseModel]) -> LinkSegment:
    _check_keys(table, path, _LINK_KEYS, {"span"})
    spans = table["span"]
    if not isinstance(spans, list) or not spans:
        raise ScenarioError(f"{_where(path, 'span')}: expected one or more [[{path}.span]] tables")
    name = _str(table, "noise", path, "quiet-spool")
    if name not in models:
        raise ScenarioError(f"{_where(path, 'noise')}: unknown noise preset {name!r}")
    model = models[name]
    scale = _num(table, "noise_scale", path, 1.0)
    if scale != 1.0:
        model = model.scaled(scale)
    fractions = table.get("tap_fractions")
    if fractions is not None:
        if not isinstance(fractions, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in fractions):
            raise ScenarioError(f"{_where(path, 'tap_fractions')}: expected a list of numbers")
    try:
        return LinkSegment(
            spans=tuple(_span(s, f"{path}.span.{i + 1}") for i, s in enumerate(spans)),
            noise=model,
            noise_taps=_num(table, "noise_taps", path, 16, integer=True),
            tap_fractions=None if fractions is None else tuple(float(x) for x in fractions),
            backward_offset_hz=_num(table, "backward_offset_hz", path, 70e6),
            carrier_hz=_num(table, "carrier_hz", path, 194.4e12),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{_where(path)}: {exc}") from None


# TOML key -> StationConfig field
_STATION_FIELDS = {
    "lo_fractional_offset": "lo_fractional_offset",
    "pll1_bandwidth_hz": "pll1_bandwidth",
    "pzt_bandwidth_hz": "pzt_bandwidth",
    "tracker_bandwidth_hz": "tracker_bandwidth",
    "pll2_bandwidth_hz": "pll2_bandwidth",
    "lock_threshold_db": "lock_threshold_db",
    "capture_range_hz": "capture_range_hz",
    "scan_rate_hz_per_s": "scan_rate_hz_s",
    "scan_span_hz": "scan_span_hz",
    "los_time_s": "los_time",
    "lock_window_rad": "lock_window_rad",
    "lock_dwell_s": "lock_dwell",
    "aom3_range_hz": "aom3_range_hz",
    "aom1_range_hz": "aom1_range_hz",
    "pzt_range_hz": "pzt_range_hz",
    "initial_detuning_hz": "initial_detuning_hz",
    "laser_linewidth_hz": "laser_linewidth_hz",
}
_PLAN_ENTRIES = ("pll1_offset", "outgoing_shift", "return_lock", "aom2_shift")
_PLAN_KEYS = set(_PLAN_ENTRIES) | {"lo_hz", "tracker_divider", "lo_divider"}


def parse_fraction(value, where: str) -> Fraction:
    if isinstance(value, bool):
        raise ScenarioError(f"{where}: expected a rational number")
    try:
        if isinstance(value, float):
            return Fraction(value).limit_denominator(10**9)
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ScenarioError(f"{where}: {value!r} is not a rational number") from None


def _plan_entry(value, where: str) -> PlanEntry:
    """``"7/15"`` (own LO) or ``{coefficient = "-1", lo = "LO2"}``."""
    if isinstance(value, dict):
        extra = set(value) - {"coefficient", "lo"}
        if extra or "coefficient" not in value:
            raise ScenarioError(f"{where}: expected {{coefficient = ..., lo = \"LO<k>\"}}")
        lo = value.get("lo", "self")
        if not isinstance(lo, str):
            raise ScenarioError(f"{where}.lo: expected a string")
        return PlanEntry(parse_fraction(value["coefficient"], where), lo)
    return PlanEntry(parse_fraction(value, where))


def _plan(table: dict, path: str) -> FrequencyPlan:
    _check_keys(table, path, _PLAN_KEYS)
    kw = {}
    for k in _PLAN_ENTRIES:
        if k in table:
            kw[k] = _plan_entry(table[k], _where(path, k))
    if "lo_hz" in table:
        kw["lo_hz"] = parse_fraction(table["lo_hz"], _where(path, "lo_hz"))
    for k in ("tracker_divider", "lo_divider"):
        if k in table:
            kw[k] = _num(table, k, path, integer=True)
    try:
        return FrequencyPlan(**kw)
    except ValueError as exc:
        raise ScenarioError(f"{_where(path)}: {exc}") from None


def _station(table: dict, path: str) -> StationConfig:
    _check_keys(table, path, set(_STATION_FIELDS) | {"plan"})
    kw = {field: _num(table, key, path) for key, field in _STATION_FIELDS.items() if key in table}
    if "plan" in table:
        kw["plan"] = _plan(table["plan"], f"{path}.plan")
    return StationConfig(**kw)


_RUN_KEYS = {"mode", "rate_hz", "duration_s", "seed", "slip_threshold_ps", "input_linewidth_hz"}


def _run(doc: dict) -> tuple[RunConfig, InputLaser]:
    if "run" not in doc:
        raise ScenarioError("[run]: missing section")
    t = doc["run"]
    _check_keys(t, "run", _RUN_KEYS, {"mode", "rate_hz", "duration_s"})
    mode = _str(t, "mode", "run")
    if mode not in ("full", "envelope"):
        raise ScenarioError(f"[run] mode: expected 'full' or 'envelope', got {mode!r}")
    try:
        run = RunConfig(
            mode=mode,
            rate=_num(t, "rate_hz", "run"),
            duration=_num(t, "duration_s", "run"),
            seed=_num(t, "seed", "run", 0, integer=True),
            slip_threshold_ps=_num(t, "slip_threshold_ps", "run", 100.0),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"[run]: {exc}") from None
    return run, InputLaser(_num(t, "input_linewidth_hz", "run", 0.0))


_EVENT_KEYS = {"time_s", "kind", "value", "segment", "tap", "station", "beat"}


def _events(doc: dict) -> tuple[Event, ...]:
    rows = doc.get("events", [])
    if not isinstance(rows, list):
        raise ScenarioError("[events] must be an array of tables: [[events]]")
    out = []
    for i, t in enumerate(rows):
        path = f"events.{i + 1}"
        _check_keys(t, path, _EVENT_KEYS, {"time_s", "kind", "value"})
        kind = _str(t, "kind", path)
        if kind not in ("phase_jump", "power_step"):
            raise ScenarioError(f"{_where(path, 'kind')}: expected 'phase_jump' or 'power_step'")
        # Segment, tap and station numbers are 1-based in files.
        tap = t.get("tap")
        out.append(
            Event(
                time=_num(t, "time_s", path),
                kind=kind,
                value=_num(t, "value", path),
                segment=_num(t, "segment", path, 1, integer=True) - 1,
                tap=None if tap is None else _num(t, "tap", path, integer=True) - 1,
                station=_num(t, "station", path, 1, integer=True) - 1,
                beat=_num(t, "beat", path, 1, integer=True),
            )
        )
    return tuple(out)


_COUNTER_KEYS = {"gate_s", "bandwidth_hz"}


def _counter(doc: dict) -> CounterModel:
    t = doc.get("counter", {})
    _check_keys(t, "counter", _COUNTER_KEYS)
    bw = t.get("bandwidth_hz", 10.0)
    if bw is not None and (isinstance(bw, bool) or not isinstance(bw, (int, float))):
        raise ScenarioError("[counter] bandwidth_hz: expected a number")
    try:
        return CounterModel(gate=_num(t, "gate_s", "counter", 1.0), measurement_bandwidth=float(bw))
    except ValueError as exc:
        raise ScenarioError(f"[counter]: {exc}") from None


_LOSS_KEYS = {"connector_db", "oadm_db", "max_round_trip_db"}
_TOP_KEYS = {"link", "station", "noise", "run", "events", "counter", "losses"}


def parse_losses(doc: dict) -> LossTable:
    t = doc.get("losses", {})
    _check_keys(t, "losses", _LOSS_KEYS)
    d = LossTable()
    return LossTable(
        _num(t, "connector_db", "losses", d.connector_db),
        _num(t, "oadm_db", "losses", d.oadm_db),
        _num(t, "max_round_trip_db", "losses", d.max_round_trip_db),
    )


def parse_links(doc: dict) -> list[LinkSegment]:
    models = _noise_presets(doc)
    return [_link(t, p, models) for p, t in _numbered(doc, "link")]


def parse_stations(doc: dict) -> list[StationConfig]:
    return [_station(t, p) for p, t in _numbered(doc, "station")]


def check_top_level(doc: dict) -> None:
    for k in doc:
        if k not in _TOP_KEYS:
            raise ScenarioError(f"[{k}]: unknown section")


def scenario_from_dict(doc: dict, seed: int | None = None, source: str = "<dict>") -> LoadedScenario:
    check_top_level(doc)
    run, laser = _run(doc)
    if seed is not None:
        run = RunConfig(run.mode, run.rate, run.duration, seed, run.slip_threshold_ps)
    links = parse_links(doc)
    stations = parse_stations(doc)
    if len(links) != len(stations):
        raise ScenarioError(f"[station]: {len(stations)} stations for {len(links)} links; need one station per link")
    counter = _counter(doc)
    try:
        sc = Scenario(tuple(links), tuple(stations), run, laser, _events(doc), parse_losses(doc))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    return LoadedScenario(sc, counter, doc, source)


def read_document(source: str | Path) -> tuple[dict, str]:
    """TOML document from a path or a packaged preset name."""
    p = Path(source)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
        name = str(p)
    elif str(source) in PRESET_NAMES:
        text = resources.files("fiberlink.presets").joinpath(f"{source}.toml").read_text(encoding="utf-8")
        name = f"preset:{source}"
    else:
        raise FileNotFoundError(f"no scenario file or preset named {str(source)!r}")
    try:
        return tomllib.loads(text), name
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{name}: {exc}") from None


def load_scenario(source: str | Path, seed: int | None = None) -> LoadedScenario:
    doc, name = read_document(source)
    return scenario_from_dict(doc, seed, name)
