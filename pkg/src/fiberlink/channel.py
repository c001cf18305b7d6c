"""Bidirectional fiber segment: delay line with distributed noise taps.

The fiber is phase-only.  Distributed noise is discretized as K lumped taps
at fractional positions ``z_k`` measured from the sending end.  A tap at
``z`` reaches the far end after ``(1 - z) * tau`` and the near end (on the
way back) after ``z * tau``.  Forward and backward passes see the same tap
samples; the only asymmetry is the optional backward carrier offset, which
scales backward tap phases by ``(nu + df) / nu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseModel, derive_seed, synth_delay_drift, synth_power_law
from .series import CARRIER_HZ, SPEED_OF_LIGHT, DelaySeries, PhaseSeries

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class Edfa:
    position_km: float
    gain_db: float


@dataclass(frozen=True)
class FiberSpan:
    length_km: float
    loss_per_km: float = 0.25
    group_index: float = 1.468
    connectors: int = 0
    oadm_count: int = 0
    edfa: tuple[Edfa, ...] = ()
    carries_data_traffic: bool = False
    label: str = ""

    def __post_init__(self):
        if not self.length_km >= 0:
            raise ValueError("span length must be >= 0")
        if not self.loss_per_km > 0:
            raise ValueError("loss_per_km must be > 0")
        if not 1.4 <= self.group_index <= 1.5:
            raise ValueError(f"group_index {self.group_index} outside [1.4, 1.5]")
        if self.connectors < 0 or self.oadm_count < 0:
            raise ValueError("component counts must be >= 0")
        amps = tuple(a if isinstance(a, Edfa) else Edfa(*a) for a in self.edfa)
        for a in amps:
            if not 0 <= a.position_km <= self.length_km:
                raise ValueError(f"EDFA at {a.position_km} km lies outside the span")
        object.__setattr__(self, "edfa", amps)

    @property
    def delay(self) -> float:
        return self.group_index * self.length_km * 1e3 / SPEED_OF_LIGHT


@dataclass(frozen=True)
class LinkSegment:
    spans: tuple[FiberSpan, ...]
    noise: NoiseModel = field(default_factory=NoiseModel)
    noise_taps: int = 16
    tap_fractions: tuple[float, ...] | None = None
    backward_offset_hz: float = 70e6
    carrier_hz: float = CARRIER_HZ

    def __post_init__(self):
        spans = tuple(self.spans)
        if not spans:
            raise ValueError("a segment needs at least one span")
        object.__setattr__(self, "spans", spans)
        if self.tap_fractions is not None:
            fr = tuple(float(z) for z in self.tap_fractions)
            if any(not 0 <= z <= 1 for z in fr):
                raise ValueError("tap fractions must lie in [0, 1]")
            object.__setattr__(self, "tap_fractions", fr)
            object.__setattr__(self, "noise_taps", len(fr))
        if self.noise_taps < 1:
            raise ValueError("need at least one noise tap")

    @property
    def length_km(self) -> float:
        return sum(s.length_km for s in self.spans)

    @property
    def taps(self) -> np.ndarray:
        """Tap positions as fractions of the segment delay from the sender."""
        if self.tap_fractions is not None:
            return np.asarray(self.tap_fractions)
        k = np.arange(self.noise_taps)
        return (k + 0.5) / self.noise_taps

    @property
    def backward_scale(self) -> float:
        return (self.carrier_hz + self.backward_offset_hz) / self.carrier_hz


def one_way_delay(seg: LinkSegment) -> float:
    """Group delay sum(n * L / c) in seconds."""
    return sum(s.delay for s in seg.spans)


@dataclass(frozen=True)
class LossTable:
    connector_db: float = 0.5
    oadm_db: float = 1.5
    #: Largest round-trip loss the beat-note detection tolerates.
    max_round_trip_db: float = 60.0


@dataclass(frozen=True)
class LinkBudget:
    """Itemized one-way budget.  Attenuations are positive, EDFA gains negative."""

    entries: tuple[tuple[str, float], ...]
    one_way_db: float
    round_trip_db: float
    margin_db: float
    gain_db: float = 0.0

    @property
    def passive_round_trip_db(self) -> float:
        return self.round_trip_db + 2.0 * self.gain_db

    @property
    def passive_margin_db(self) -> float:
        return self.margin_db - 2.0 * self.gain_db

    @property
    def amplification_required(self) -> bool:
        """The passive link alone would not close the round trip."""
        return self.passive_margin_db < 0

    @property
    def closes(self) -> bool:
        return self.margin_db >= 0


def link_budget(seg: LinkSegment, params: LossTable | None = None) -> LinkBudget:
    """Itemized one-way attenuation; EDFAs enter as negative entries."""
    params = params or LossTable()
    entries: list[tuple[str, float]] = []
    gain = 0.0
    for i, s in enumerate(seg.spans):
        name = s.label or f"span{i + 1}"
        entries.append((f"{name}: fiber {s.length_km:g} km x {s.loss_per_km:g} dB/km", s.length_km * s.loss_per_km))
        if s.connectors:
            entries.append((f"{name}: {s.connectors} connectors", s.connectors * params.connector_db))
        if s.oadm_count:
            entries.append((f"{name}: {s.oadm_count} OADM", s.oadm_count * params.oadm_db))
        for a in s.edfa:
            entries.append((f"{name}: EDFA at {a.position_km:g} km", -a.gain_db))
            gain += a.gain_db
    one_way = float(sum(db for _, db in entries))
    # Bidirectional amplifiers: the return pass sees the same elements.
    round_trip = 2.0 * one_way
    return LinkBudget(tuple(entries), one_way, round_trip, params.max_round_trip_db - round_trip, gain)


def delayed(x: np.ndarray, delay_samples) -> np.ndarray:
    """``x`` evaluated at ``n - delay`` by linear interpolation.

    Times before the first sample hold ``x[0]``.
    """
    n = np.arange(x.size, dtype=float)
    return np.interp(n - delay_samples, n, x, left=x[0])


def synth_taps(seg: LinkSegment, rate: float, n: int, seed: int) -> np.ndarray:
    """K independent tap phase series, each carrying 1/K of the segment PSD."""
    k = seg.noise_taps
    per_tap = seg.noise.scaled(1.0 / k)
    return np.stack([synth_power_law(per_tap, rate, n, derive_seed(seed, 7, i)).samples for i in range(k)])


def synth_drift(seg: LinkSegment, rate: float, n: int, seed: int) -> DelaySeries:
    return synth_delay_drift(seg.noise, rate, n, derive_seed(seed, 11))


def tap_sum(taps: np.ndarray, seg: LinkSegment, rate: float, direction: str, tau=None) -> np.ndarray:
    """Sum of tap phases as seen at the output end for ``direction``.

    ``tau`` (seconds, scalar or per-sample) defaults to the static delay.
    """
    taps = np.atleast_2d(np.asarray(taps, dtype=float))
    if taps.shape[0] != seg.noise_taps:
        raise ValueError(f"expected {seg.noise_taps} tap series, got {taps.shape[0]}")
    tau = one_way_delay(seg) if tau is None else tau
    z = seg.taps
    if direction == FORWARD:
        lags, scale = 1.0 - z, 1.0
    elif direction == BACKWARD:
        lags, scale = z, seg.backward_scale
    else:
        raise ValueError(f"direction must be {FORWARD!r} or {BACKWARD!r}")
    out = np.zeros(taps.shape[1])
    for lag, row in zip(lags, taps):
        out += delayed(row, lag * np.asarray(tau) * rate) if lag else row
    return scale * out


def propagate(
    inp: PhaseSeries,
    seg: LinkSegment,
    direction: str = FORWARD,
    delay_fluct: DelaySeries | None = None,
    tap_noise=None,
) -> PhaseSeries:
    """One pass through the segment.

    ``out(t) = in(t - tau(t)) + sum_k tap_k(t - lag_k * tau(t)) - 2 pi nu dtau(t)``
    with ``tau(t) = tau0 + dtau(t)``.  The drift phase is applied at the
    output because it is band-limited far below 1/tau.
    """
    rate = inp.rate
    n = len(inp)
    tau = one_way_delay(seg)
    dtau = np.zeros(n)
    if delay_fluct is not None:
        if delay_fluct.rate != rate or len(delay_fluct) != n:
            raise ValueError("delay_fluct must match the input rate and length")
        dtau = delay_fluct.samples
    out = delayed(inp.samples, (tau + dtau) * rate)
    if tap_noise is not None:
        rows = [t.samples if isinstance(t, PhaseSeries) else np.asarray(t, dtype=float) for t in tap_noise]
        for t in tap_noise:
            if isinstance(t, PhaseSeries) and t.rate != rate:
                raise ValueError("tap noise rate differs from input rate")
        taps = np.stack(rows) if rows else np.zeros((0, n))
        if taps.shape[1] != n:
            raise ValueError("tap noise length differs from input length")
        out = out + tap_sum(taps, seg, rate, direction, tau + dtau)
    scale = seg.backward_scale if direction == BACKWARD else 1.0
    out = out - scale * 2 * np.pi * seg.carrier_hz * dtau
    return PhaseSeries(out, rate, inp.t0)
