"""Repeater station: regeneration loop, next-segment compensation loop,
lock-acquisition sequencing and the frequency plan.

All phases handled here are deviations from the nominal plan, in radians of
the optical carrier.  Every RF frequency of a station is a rational multiple
of its single local oscillator (LO).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .control import (
    Actuator,
    Divider,
    PiFilter,
    TrackingOscillator,
    design_pi,
    pfd,
    pi_step,
    tracking_oscillator_step,
)

SELF = "self"


@dataclass(frozen=True)
class PlanEntry:
    """``coefficient * LO`` where ``lo`` is ``"self"`` or an explicit ``"LO<k>"`` (1-based)."""

    coefficient: Fraction
    lo: str = SELF

    def __post_init__(self):
        object.__setattr__(self, "coefficient", Fraction(self.coefficient))


def _entry(value) -> PlanEntry:
    return value if isinstance(value, PlanEntry) else PlanEntry(Fraction(value))


@dataclass(frozen=True)
class FrequencyPlan:
    """Station RF plan in units of the LO frequency.

    Defaults: laser locked 75 MHz below the input, transferred signal shifted
    back up by 75 MHz, return beat locked at 150 MHz, AOM2 at 35 MHz and the
    /960, /480 divider pair.  ``outgoing_shift`` is the net shift carried to
    the next station (AOM1 plus the remote AOM2).
    """

    lo_hz: Fraction = Fraction(75_000_000)
    pll1_offset: PlanEntry = PlanEntry(Fraction(-1))
    outgoing_shift: PlanEntry = PlanEntry(Fraction(1))
    return_lock: PlanEntry = PlanEntry(Fraction(2))
    aom2_shift: PlanEntry = PlanEntry(Fraction(7, 15))
    tracker_divider: int = 960
    lo_divider: int = 480

    def __post_init__(self):
        object.__setattr__(self, "lo_hz", Fraction(self.lo_hz))
        for name in ("pll1_offset", "outgoing_shift", "return_lock", "aom2_shift"):
            object.__setattr__(self, name, _entry(getattr(self, name)))
        Divider(self.tracker_divider), Divider(self.lo_divider)

    def hz(self, name: str) -> Fraction:
        return getattr(self, name).coefficient * self.lo_hz

    @property
    def divided_frequencies(self) -> tuple[Fraction, Fraction]:
        """(return beat / tracker divider, LO / LO divider) in Hz."""
        return self.hz("return_lock") / self.tracker_divider, self.lo_hz / self.lo_divider

    @property
    def dividers_consistent(self) -> bool:
        a, b = self.divided_frequencies
        return a == b

    @property
    def aom1_nominal(self) -> Fraction:
        return self.hz("outgoing_shift") - self.hz("aom2_shift")


def freq_plan_delivered_offset(plan, n_stations: int) -> dict[str, Fraction]:
    """Exact sensitivity of the delivered frequency to nu and to each LO.

    ``plan`` is one :class:`FrequencyPlan` (replicated) or a list with one
    plan per station.  The result maps ``"nu"`` and ``"LO1".."LON"`` to the
    coefficient of that source in the frequency leaving the last station.
    """
    plans = list(plan) if isinstance(plan, (list, tuple)) else [plan] * n_stations
    if len(plans) != n_stations or n_stations < 1:
        raise ValueError("need one plan per station")
    names = [f"LO{k + 1}" for k in range(n_stations)]
    coeffs: dict[str, Fraction] = {"nu": Fraction(1), **{n: Fraction(0) for n in names}}

    for i, p in enumerate(plans):
        for name in ("pll1_offset", "outgoing_shift"):
            e: PlanEntry = getattr(p, name)
            lo = names[i] if e.lo == SELF else e.lo
            if lo not in coeffs or lo == "nu":
                raise ValueError(f"station {i + 1}: {name} references unknown LO {e.lo!r}")
            # An entry is coefficient * LO; the LO frequency itself is the variable.
            coeffs[lo] += e.coefficient
    return coeffs


def asymmetry_floor(offset_f: float, carrier_f: float, free_running_instability: float) -> float:
    """Fractional error from the forward/backward carrier offset."""
    if not carrier_f > 0:
        raise ValueError("carrier frequency must be > 0")
    return offset_f / carrier_f * free_running_instability


class Mode(str, Enum):
    SCANNING = "SCANNING"
    PLL1_CLOSING = "PLL1_CLOSING"
    PLL1_LOCKED = "PLL1_LOCKED"
    TRACKING_CLOSED = "TRACKING_CLOSED"
    PLL2_CLOSED = "PLL2_CLOSED"


@dataclass(frozen=True)
class StationConfig:
    """Station parameters.

    Loop bandwidths default to desk-scale values (a ~1 kHz simulation rate);
    the hardware figures are 100 kHz for the fast regeneration path and the
    tracking filter and a few tens of Hz for the PZT.
    """

    plan: FrequencyPlan = field(default_factory=FrequencyPlan)
    lo_fractional_offset: float = 0.0
    pll1_bandwidth: float = 50.0
    pzt_bandwidth: float = 2.0
    tracker_bandwidth: float = 40.0
    pll2_bandwidth: float = 5.0
    lock_threshold_db: float = -30.0
    capture_range_hz: float = 5e6
    scan_rate_hz_s: float = 100e6
    scan_span_hz: float = 1e9
    los_time: float = 10e-3
    lock_window_rad: float = 1.0
    lock_dwell: float = 5e-3
    aom3_range_hz: float = 10e6
    aom1_range_hz: float = 5e6
    pzt_range_hz: float = 1e9
    initial_detuning_hz: float = 0.0
    laser_linewidth_hz: float = 0.0


class RepeaterStation:
    """Mutable station state advanced by :func:`station_step`.

    ``laser_phase`` and ``aom1_phase`` are the integrated deviations of the
    local laser and of the AOM1 drive; the cascade reads them to build the
    optical signals.
    """

    def __init__(self, config: StationConfig | None = None, loop_delay: float = 0.0, name: str = ""):
        self.config = cfg = config or StationConfig()
        self.name = name
        plan = cfg.plan
        self.lo_hz = float(plan.lo_hz)
        self.tracker_div = Divider(plan.tracker_divider)
        self.lo_div = Divider(plan.lo_divider)
        self._pll1_target = -float(plan.pll1_offset.coefficient)
        self._aom2_coef = float(plan.aom2_shift.coefficient)
        ratio = plan.tracker_divider / plan.lo_divider
        self._pll2_lo_gain = ratio
        self._pll2_mismatch_hz = float((Fraction(plan.tracker_divider, plan.lo_divider) - plan.return_lock.coefficient) * plan.lo_hz)

        kp1, ki1 = design_pi(cfg.pll1_bandwidth)
        self.pll1 = PiFilter(kp1, ki1, limit=cfg.aom3_range_hz)
        self.aom3 = Actuator("AOM", 0.0, cfg.aom3_range_hz, 20 * cfg.pll1_bandwidth)
        self.pzt = Actuator("PZT", float(plan.hz("pll1_offset")), cfg.pzt_range_hz, 1e9)
        self.pzt.value = cfg.initial_detuning_hz
        kp2, ki2 = design_pi(cfg.pll2_bandwidth, loop_delay, plant_gain=2.0)
        # PLL2 sees the divided error; scale gains so the loop gain is unchanged.
        self.pll2 = PiFilter(kp2 * plan.tracker_divider, ki2 * plan.tracker_divider, limit=cfg.aom1_range_hz)
        self.aom1 = Actuator("AOM", float(plan.aom1_nominal), cfg.aom1_range_hz, 1e9)
        self.tracker = TrackingOscillator(cfg.tracker_bandwidth)

        self.mode = Mode.SCANNING
        self.time = 0.0
        self.steps = 0
        self.laser_phase = 0.0
        self.aom1_phase = 0.0
        self.lo_phase = 0.0
        self.scan_dir = -1.0 if cfg.initial_detuning_hz > 0 else 1.0
        self.err1 = 0.0
        self.err2 = 0.0
        self.transitions: list[tuple[float, Mode]] = [(0.0, Mode.SCANNING)]
        self.window_excursions = 0
        self._ref1 = 0.0
        self._ref2 = 0.0
        self._prev_beat1: float | None = None
        self._prev_beat2: float | None = None
        self._dwell = 0.0
        self._los = 0.0
        self._in_window = True

    # --- helpers -------------------------------------------------------
    @property
    def aom2_phase(self) -> float:
        return self._aom2_coef * self.lo_phase

    @property
    def laser_offset(self) -> float:
        return self.pzt.value

    @property
    def laser_freq_dev(self) -> float:
        return self.pzt.value + self.aom3.value

    @property
    def locked(self) -> bool:
        return self.mode is Mode.PLL2_CLOSED

    def lock_time(self) -> float | None:
        for t, m in self.transitions:
            if m is Mode.PLL2_CLOSED:
                return t
        return None

    @property
    def saturation_events(self) -> int:
        return self.pll1.saturation_events + self.pll2.saturation_events + self.pzt.saturation_events

    def _enter(self, mode: Mode) -> None:
        self.mode = mode
        self._dwell = 0.0
        self.transitions.append((self.time, mode))

    def _open_loops(self) -> None:
        self.pll1.reset()
        self.pll2.reset()
        self.aom3.value = 0.0
        self.aom1.value = 0.0
        self.scan_dir = -1.0 if self.pzt.value > 0 else 1.0

    def _pll1_error(self, beat1: float) -> float:
        return pfd(beat1 - self._pll1_target * self.lo_phase, self._ref1)

    def _pll2_error(self, tracked: float) -> float:
        lo_term = self._pll2_lo_gain * self.lo_phase + 2 * math.pi * self._pll2_mismatch_hz * self.time
        return self.tracker_div(tracked - lo_term) - self._ref2


def station_step(st: RepeaterStation, beat1_phase: float, beat2_phase: float, beat_powers, dt: float):
    """Advance one station by ``dt``.

    ``beat1_phase`` is input minus local laser, ``beat2_phase`` the round-trip
    return minus local laser (both deviations from nominal).  Returns
    ``(st, outputs)`` with the absolute AOM and laser-offset frequencies.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    cfg = st.config
    p1, p2 = beat_powers
    thr = cfg.lock_threshold_db
    f1 = 0.0 if st._prev_beat1 is None else (beat1_phase - st._prev_beat1) / (2 * math.pi * dt)
    f2 = 0.0 if st._prev_beat2 is None else (beat2_phase - st._prev_beat2) / (2 * math.pi * dt)
    st._prev_beat1, st._prev_beat2 = beat1_phase, beat2_phase
    mode = st.mode

    if mode is not Mode.SCANNING:
        needs_beat2 = mode in (Mode.TRACKING_CLOSED, Mode.PLL2_CLOSED)
        if p1 < thr or (needs_beat2 and p2 < thr):
            st._los += dt
            if st._los > cfg.los_time:
                st._los = 0.0
                st._open_loops()
                st._enter(Mode.SCANNING)
                mode = st.mode
        else:
            st._los = 0.0

    if mode is Mode.SCANNING:
        if p1 >= thr:
            # Frequency-aided acquisition: stop the scan on the measured beat
            # offset, then zero the detector on the current phase.
            target_f = st._pll1_target * st.lo_hz * cfg.lo_fractional_offset
            st.pzt.step(st.pzt.value + st.aom3.value + f1 - target_f, dt)
            st.aom3.value = 0.0
            st.pll1.reset()
            st._ref1 = beat1_phase - st._pll1_target * st.lo_phase
            st._enter(Mode.PLL1_CLOSING)
            mode = st.mode
        else:
            off = st.pzt.value + st.scan_dir * cfg.scan_rate_hz_s * dt
            if abs(off) >= cfg.scan_span_hz:
                off = math.copysign(cfg.scan_span_hz, off)
                st.scan_dir = -st.scan_dir
            st.pzt.value = off

    if mode is not Mode.SCANNING:
        st.err1 = st._pll1_error(beat1_phase)
        cmd = pi_step(st.pll1, st.err1, dt)
        st.aom3.step(cmd, dt)
        # Slow path: PZT drains the fast actuator at the PZT bandwidth.
        st.pzt.step(st.pzt.value + 2 * math.pi * cfg.pzt_bandwidth * dt * st.aom3.value, dt)

        in_window = abs(st.err1) < cfg.lock_window_rad
        if mode is Mode.PLL1_CLOSING:
            st._dwell = st._dwell + dt if in_window else 0.0
            if st._dwell >= cfg.lock_dwell:
                st.tracker.preload(beat2_phase, 2 * math.pi * f2)
                st._enter(Mode.PLL1_LOCKED)
        elif mode in (Mode.PLL1_LOCKED, Mode.TRACKING_CLOSED, Mode.PLL2_CLOSED):
            tracked = tracking_oscillator_step(st.tracker, beat2_phase, dt)
            if mode is Mode.PLL1_LOCKED:
                ok = in_window and p2 >= thr and abs(beat2_phase - tracked) < cfg.lock_window_rad
                st._dwell = st._dwell + dt if ok else 0.0
                if st._dwell >= cfg.lock_dwell:
                    st.pll2.reset()
                    st._ref2 = 0.0
                    st._ref2 = st._pll2_error(tracked)
                    st._enter(Mode.TRACKING_CLOSED)
            else:
                st.err2 = st._pll2_error(tracked)
                cmd2 = -pi_step(st.pll2, st.err2, dt)
                st.aom1.value = max(-cfg.aom1_range_hz, min(cfg.aom1_range_hz, cmd2))
                err2_rad = st.err2 * st.tracker_div.ratio
                ok = in_window and abs(err2_rad) < cfg.lock_window_rad
                if mode is Mode.TRACKING_CLOSED:
                    st._dwell = st._dwell + dt if ok else 0.0
                    if st._dwell >= cfg.lock_dwell:
                        st._enter(Mode.PLL2_CLOSED)
                else:
                    if not ok and st._in_window:
                        st.window_excursions += 1
                    st._in_window = ok

    two_pi_dt = 2 * math.pi * dt
    st.laser_phase += two_pi_dt * st.laser_freq_dev
    st.aom1_phase += two_pi_dt * st.aom1.value
    st.lo_phase += two_pi_dt * st.lo_hz * cfg.lo_fractional_offset
    st.steps += 1
    st.time = st.steps * dt

    lo_scale = 1.0 + cfg.lo_fractional_offset
    plan = cfg.plan
    outputs = {
        "aom1_f": float(plan.aom1_nominal) + st.aom1.value,
        "aom2_f": float(plan.hz("aom2_shift")) * lo_scale,
        "aom3_f": st.aom3.frequency,
        "laser_f": float(plan.hz("pll1_offset")) + st.laser_freq_dev,
    }
    return st, outputs
