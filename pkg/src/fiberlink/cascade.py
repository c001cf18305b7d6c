"""End-to-end runs of a cascaded link.

Topology: an input station fed by the reference laser, then one segment per
station; the last segment ends at the user beat note.  Two tiers:

* ``run_full`` co-simulates fiber, stations and loops sample by sample.
* ``run_envelope`` treats every station as locked and every servo as an
  ideal in-band canceller, so days can be simulated at <= 10 Hz.  The
  residual of each segment is the first-order delay-limited term
  ``tau * sum_k z_k d(tap_k)/dt`` plus the carrier-asymmetry term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .channel import BACKWARD, FORWARD, LinkSegment, LossTable, delayed, link_budget, one_way_delay, synth_drift, synth_taps, tap_sum
from .noise import NoiseModel, derive_seed, synth_power_law
from .series import PhaseSeries
from .station import Mode, RepeaterStation, StationConfig, station_step

MAX_SAMPLES = 20_000_000
NO_SIGNAL_DB = -200.0
PHASE_JUMP = "phase_jump"
POWER_STEP = "power_step"


@dataclass(frozen=True)
class Event:
    """Injected disturbance.

    ``phase_jump``: ``value`` ps of delay step on ``tap`` of ``segment``
    (default: the middle tap).  ``power_step``: ``value`` dB added to the
    ``beat`` (1 or 2) power of ``station``.  Indices are 0-based here; event
    log locations and scenario files number from 1.
    """

    time: float
    kind: str
    value: float
    segment: int = 0
    tap: int | None = None
    station: int = 0
    beat: int = 1

    def __post_init__(self):
        if self.kind not in (PHASE_JUMP, POWER_STEP):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.beat not in (1, 2):
            raise ValueError("beat must be 1 or 2")


@dataclass(frozen=True)
class InputLaser:
    linewidth_hz: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    mode: str = "full"
    rate: float = 1000.0
    duration: float = 10.0
    seed: int = 0
    slip_threshold_ps: float = 100.0

    def __post_init__(self):
        if self.mode not in ("full", "envelope"):
            raise ValueError("run mode must be 'full' or 'envelope'")
        if not (self.rate > 0 and self.duration > 0):
            raise ValueError("rate and duration must be > 0")

    @property
    def n(self) -> int:
        return int(round(self.rate * self.duration))


@dataclass(frozen=True)
class Scenario:
    segments: tuple[LinkSegment, ...]
    stations: tuple[StationConfig, ...]
    run: RunConfig = field(default_factory=RunConfig)
    input_laser: InputLaser = field(default_factory=InputLaser)
    events: tuple[Event, ...] = ()
    loss_table: LossTable = field(default_factory=LossTable)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.time)))
        if not self.segments:
            raise ValueError("scenario needs at least one segment")
        if len(self.stations) != len(self.segments):
            raise ValueError("need exactly one station per segment (the first is the input station)")
        for i, seg in enumerate(self.segments):
            if not one_way_delay(seg) > 0:
                raise ValueError(f"segment {i} has zero delay")
        if self.run.n > MAX_SAMPLES:
            raise ValueError(f"rate*duration = {self.run.n} exceeds the {MAX_SAMPLES} sample budget")


@dataclass
class RunOutput:
    rate: float
    end_to_end: PhaseSeries
    free_running: list[PhaseSeries]
    corrections: list[PhaseSeries]
    modes: list[tuple[float, int, str]]
    events: list[tuple[float, str, str, float]]

    @property
    def aom1_hz(self) -> list[np.ndarray]:
        """AOM1 correction frequency per segment (Hz), first sample repeated."""
        out = []
        for c in self.corrections:
            d = np.diff(c.samples, prepend=c.samples[0]) * c.rate / (2 * math.pi)
            out.append(d)
        return out

    def lock_times(self) -> list[float | None]:
        n = 1 + max((s for _, s, _ in self.modes), default=-1)
        first: list[float | None] = [None] * n
        for t, s, m in self.modes:
            if m == Mode.PLL2_CLOSED.value and first[s] is None:
                first[s] = t
        return first


class RunContext:
    """Precomputed stimulus of a run; events are applied here before stepping."""

    def __init__(self, sc: Scenario):
        self.scenario = sc
        run = sc.run
        self.rate = run.rate
        self.n = run.n
        self.taps = [synth_taps(seg, run.rate, self.n, derive_seed(run.seed, 1, i)) for i, seg in enumerate(sc.segments)]
        self.drift = [synth_drift(seg, run.rate, self.n, derive_seed(run.seed, 2, i)).samples for i, seg in enumerate(sc.segments)]
        budgets = [link_budget(seg, sc.loss_table) for seg in sc.segments]
        seg_power = [min(0.0, b.margin_db) for b in budgets]
        # beat1 of station s comes over segment s-1; beat2 over segment s.
        self.power1 = [np.full(self.n, 0.0 if s == 0 else seg_power[s - 1]) for s in range(len(sc.stations))]
        self.power2 = [np.full(self.n, seg_power[s]) for s in range(len(sc.stations))]
        self.log: list[tuple[float, str, str, float]] = []

    def index(self, t: float) -> int:
        return int(math.ceil(t * self.rate - 1e-9))


def inject_event(ctx: RunContext, ev: Event) -> None:
    duration = ctx.n / ctx.rate
    if not 0 <= ev.time < duration:
        raise ValueError(f"event time {ev.time} outside run [0, {duration})")
    i0 = ctx.index(ev.time)
    sc = ctx.scenario
    if ev.kind == PHASE_JUMP:
        if not 0 <= ev.segment < len(sc.segments):
            raise ValueError(f"event segment {ev.segment} does not exist")
        seg = sc.segments[ev.segment]
        k = seg.noise_taps // 2 if ev.tap is None else ev.tap
        if not 0 <= k < seg.noise_taps:
            raise ValueError(f"tap {k + 1} does not exist")
        ctx.taps[ev.segment][k, i0:] += ev.value * 1e-12 * 2 * math.pi * seg.carrier_hz
        ctx.log.append((ev.time, "phase_jump_injected", f"segment{ev.segment + 1}.tap{k + 1}", ev.value))
    else:
        if sc.run.mode == "envelope":
            raise ValueError("power_step events need the full simulation mode")
        if not 0 <= ev.station < len(sc.stations):
            raise ValueError(f"event station {ev.station} does not exist")
        target = ctx.power1 if ev.beat == 1 else ctx.power2
        target[ev.station][i0:] += ev.value
        ctx.log.append((ev.time, "power_step_injected", f"station{ev.station + 1}.beat{ev.beat}", ev.value))


def _loop_rate_check(sc: Scenario) -> None:
    for i, cfg in enumerate(sc.stations):
        top = max(cfg.pll1_bandwidth, cfg.tracker_bandwidth, cfg.pll2_bandwidth, cfg.pzt_bandwidth)
        if sc.run.rate < 10 * top:
            raise ValueError(
                f"full mode needs rate >= 10x the highest loop bandwidth: station {i} has "
                f"{top:g} Hz, rate is {sc.run.rate:g} Hz"
            )


def _laser_noise(linewidth_hz: float, rate: float, n: int, seed: int) -> np.ndarray:
    if linewidth_hz <= 0:
        return np.zeros(n + 1)
    model = NoiseModel(power_law_terms=((-2, linewidth_hz / math.pi),))
    return synth_power_law(model, rate, n + 1, seed).samples


def locked_intervals(transitions, end: float) -> list[tuple[float, float]]:
    """[start, stop) spans spent in PLL2_CLOSED from a ``(t, mode)`` timeline."""
    spans, start = [], None
    for t, m in transitions:
        m = Mode(m)
        if m is Mode.PLL2_CLOSED and start is None:
            start = t
        elif m is not Mode.PLL2_CLOSED and start is not None:
            spans.append((start, t))
            start = None
    if start is not None:
        spans.append((start, end))
    return spans


def _intersect(a, b):
    out = []
    for s1, e1 in a:
        for s2, e2 in b:
            lo, hi = max(s1, s2), min(e1, e2)
            if hi > lo:
                out.append((lo, hi))
    return out


def _search(x: PhaseSeries, spans, threshold_ps, carrier, settle):
    for lo, hi in spans:
        i, j = int(math.ceil(lo * x.rate - 1e-9)), int(math.floor(hi * x.rate + 1e-9))
        if j - i < 4:
            continue
        part = PhaseSeries(x.samples[i:j], x.rate, x.t0 + i / x.rate)
        yield from analysis.detect_cycle_slips(part, threshold_ps, carrier, settle=settle)


def loop_time_constant(cfg: StationConfig) -> float:
    """Slowest closed-loop PLL2 time constant: the PI zero sits at a quarter of the crossover."""
    return 4.0 / (2 * math.pi * cfg.pll2_bandwidth)


def find_slips(corrections, e2e, sc: Scenario, timelines, end: float) -> list[tuple[float, str, str, float]]:
    """Slips on each correction record (delay threshold) and on the end-to-end
    residual (half an optical cycle), searched only while locked."""
    rows = []
    rate = sc.run.rate
    spans = [locked_intervals(tl, end) for tl in timelines]
    for i, (corr, cfg) in enumerate(zip(corrections, sc.stations)):
        settle = max(10 * loop_time_constant(cfg), 2.0 / rate)
        for ev in _search(corr, spans[i], sc.run.slip_threshold_ps, sc.segments[i].carrier_hz, settle):
            rows.append((ev.time, "slip", f"segment{i + 1}.correction", ev.magnitude_ps))
    # A large fiber step leaves a decaying tail that needs ~12 time constants
    # to fall below half a cycle; a 20 time-constant window keeps that tail
    # from reading as a slip.
    settle = max(20 * max(loop_time_constant(c) for c in sc.stations), 2.0 / rate)
    carrier = sc.segments[-1].carrier_hz
    common = spans[0]
    for s in spans[1:]:
        common = _intersect(common, s)
    for ev in _search(e2e, common, 0.5 / carrier * 1e12, carrier, settle):
        rows.append((ev.time, "cycle_slip", "end_to_end", ev.magnitude_ps))
    return rows


def run_full(sc: Scenario) -> RunOutput:
    """Sample-by-sample co-simulation of the whole cascade."""
    if sc.run.mode != "full":
        raise ValueError("run_full needs run.mode = 'full'")
    _loop_rate_check(sc)
    ctx = RunContext(sc)
    for ev in sc.events:
        inject_event(ctx, ev)

    rate, n, dt = ctx.rate, ctx.n, 1.0 / ctx.rate
    nseg = len(sc.segments)
    taus = [one_way_delay(s) for s in sc.segments]
    dly = [t * rate for t in taus]
    two_pi_nu = [2 * math.pi * s.carrier_hz for s in sc.segments]

    fwd, rtn = [], []
    for i, seg in enumerate(sc.segments):
        f_i = tap_sum(ctx.taps[i], seg, rate, FORWARD) - two_pi_nu[i] * ctx.drift[i]
        b_i = tap_sum(ctx.taps[i], seg, rate, BACKWARD) - seg.backward_scale * two_pi_nu[i] * ctx.drift[i]
        fwd.append(f_i)
        rtn.append(delayed(f_i, dly[i]) + b_i)

    ref = _laser_noise(sc.input_laser.linewidth_hz, rate, n, derive_seed(sc.run.seed, 3))
    lnoise = [
        _laser_noise(cfg.laser_linewidth_hz, rate, n, derive_seed(sc.run.seed, 4, i)) for i, cfg in enumerate(sc.stations)
    ]
    stations = [RepeaterStation(cfg, loop_delay=taus[i], name=f"station{i + 1}") for i, cfg in enumerate(sc.stations)]

    L = [[0.0] * (n + 1) for _ in range(nseg)]
    A = [[0.0] * (n + 1) for _ in range(nseg)]
    for s in range(nseg):
        L[s][0] = float(lnoise[s][0])
    fwd_l = [f.tolist() for f in fwd]
    rtn_l = [r.tolist() for r in rtn]
    ref_l = ref.tolist()
    ln_l = [x.tolist() for x in lnoise]
    p1_l = [p.tolist() for p in ctx.power1]
    p2_l = [p.tolist() for p in ctx.power2]
    capture = [c.capture_range_hz * 2 * math.pi * dt for c in sc.stations]
    prev_b1 = [None] * nseg
    e2e = [0.0] * n

    def at(h, x):
        if x <= 0:
            return h[0]
        i = int(x)
        fr = x - i
        return h[i] + fr * (h[i + 1] - h[i]) if fr else h[i]

    for k in range(n):
        for s in range(nseg):
            st = stations[s]
            Ls, As = L[s], A[s]
            if s == 0:
                inc = ref_l[k]
            else:
                x = k - dly[s - 1]
                inc = at(L[s - 1], x) + at(A[s - 1], x) + st.aom2_phase + fwd_l[s - 1][k]
            a2_remote = stations[s + 1].aom2_phase if s + 1 < nseg else 0.0
            x2 = k - 2 * dly[s]
            lk = Ls[k]
            ret = at(Ls, x2) + at(As, x2) + As[k] + 2 * a2_remote + rtn_l[s][k]
            b1 = inc - lk
            b2 = ret - lk
            p1 = p1_l[s][k]
            pb = prev_b1[s]
            # Log-amp power only counts once the beat falls inside the capture range.
            if pb is None or abs(b1 - pb) > capture[s]:
                p1 = NO_SIGNAL_DB
            prev_b1[s] = b1
            station_step(st, b1, b2, (p1, p2_l[s][k]), dt)
            Ls[k + 1] = st.laser_phase + ln_l[s][k + 1]
            As[k + 1] = st.aom1_phase
        x = k - dly[-1]
        e2e[k] = at(L[-1], x) + at(A[-1], x) + fwd_l[-1][k] - ref_l[k]

    modes = []
    for s, st in enumerate(stations):
        modes.extend((t, s, m.value) for t, m in st.transitions)
    modes.sort(key=lambda r: (r[0], r[1]))
    corrections = [PhaseSeries(np.array(A[s][:n]), rate) for s in range(nseg)]
    e2e_series = PhaseSeries(np.array(e2e), rate)
    events = list(ctx.log)
    for s, st in enumerate(stations):
        closes = [t for t, m in st.transitions if m is Mode.PLL2_CLOSED]
        events.extend((t, "relock", f"station{s + 1}", 0.0) for t in closes[1:])
        for t, m in st.transitions:
            if m is Mode.SCANNING and t > 0:
                events.append((t, "unlock", f"station{s + 1}", 0.0))
        if st.saturation_events:
            events.append((n / rate, "saturation", f"station{s + 1}", float(st.saturation_events)))
        if st.window_excursions:
            events.append((n / rate, "lock_window_excursion", f"station{s + 1}", float(st.window_excursions)))
    events.extend(find_slips(corrections, e2e_series, sc, [st.transitions for st in stations], n / rate))
    events.sort(key=lambda r: (r[0], r[1], r[2]))
    return RunOutput(
        rate=rate,
        end_to_end=e2e_series,
        free_running=[PhaseSeries(f, rate) for f in fwd],
        corrections=corrections,
        modes=modes,
        events=events,
    )


def _derivative(x: np.ndarray, rate: float) -> np.ndarray:
    """Backward difference; a step stays a one-sample spike instead of ringing."""
    d = np.diff(x, prepend=x[0]) * rate
    if d.size > 1:
        d[0] = d[1]
    return d


def run_envelope(sc: Scenario) -> RunOutput:
    """Long-horizon run with ideal locked servos."""
    if sc.run.mode != "envelope":
        raise ValueError("run_envelope needs run.mode = 'envelope'")
    if sc.run.rate > 10:
        raise ValueError("envelope mode is limited to rate <= 10 Hz")
    ctx = RunContext(sc)
    for ev in sc.events:
        inject_event(ctx, ev)
    rate, n = ctx.rate, ctx.n

    e2e = np.zeros(n)
    free, corr = [], []
    total_delay = 0.0
    for i, seg in enumerate(sc.segments):
        tau = one_way_delay(seg)
        total_delay += tau
        k = seg.noise_taps
        # Drift is spread uniformly (and coherently) over the taps.
        taps = ctx.taps[i] - (2 * math.pi * seg.carrier_hz * ctx.drift[i] / k)[None, :]
        z = seg.taps
        f_i = tap_sum(taps, seg, rate, FORWARD)
        b_i = tap_sum(taps, seg, rate, BACKWARD)
        weighted = (z[:, None] * taps).sum(axis=0)
        delay_term = tau * _derivative(weighted, rate)
        asym = -0.5 * (seg.backward_scale - 1.0) * taps.sum(axis=0)
        e2e += delay_term + asym
        free.append(PhaseSeries(f_i, rate))
        corr.append(PhaseSeries(-0.5 * (delayed(f_i, tau * rate) + b_i), rate))

    ref = _laser_noise(sc.input_laser.linewidth_hz, rate, n, derive_seed(sc.run.seed, 3))[:n]
    if ref.any():
        e2e += delayed(ref, total_delay * rate) - ref

    modes = [(0.0, s, Mode.PLL2_CLOSED.value) for s in range(len(sc.stations))]
    e2e_series = PhaseSeries(e2e, rate)
    events = list(ctx.log)
    timelines = [[(0.0, Mode.PLL2_CLOSED)] for _ in sc.stations]
    events.extend(find_slips(corr, e2e_series, sc, timelines, n / rate))
    events.sort(key=lambda r: (r[0], r[1], r[2]))
    return RunOutput(rate, e2e_series, free, corr, modes, events)


def run(sc: Scenario) -> RunOutput:
    return run_full(sc) if sc.run.mode == "full" else run_envelope(sc)
