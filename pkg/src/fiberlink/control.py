"""Discrete-time servo primitives.

Phases are in radians and frequencies in Hz.  A PI loop filter turns a phase
error into a frequency command; the actuator integrates that frequency into
phase, which makes every loop here type 2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

#: -3 dB bandwidth of a type-2 loop in units of its natural frequency (zeta = 1/sqrt 2).
_TYPE2_BW_FACTOR = math.sqrt(2.0 + math.sqrt(5.0))


class DelayLimitedBandwidth(ValueError):
    """Requested bandwidth exceeds 1/(4 * loop delay)."""


def pfd(phase_ref: float, phase_in: float) -> float:
    """Extended-range phase-frequency detector: no wrapping, amplitude independent."""
    return phase_ref - phase_in


@dataclass(frozen=True)
class Divider:
    ratio: int

    def __post_init__(self):
        if int(self.ratio) != self.ratio or self.ratio < 1:
            raise ValueError("divider ratio must be a positive integer")

    def __call__(self, phase):
        return phase / self.ratio

    def then(self, other: Divider) -> Divider:
        return Divider(self.ratio * other.ratio)


@dataclass
class PiFilter:
    """PI loop filter with integrator-freeze anti-windup.

    ``kp`` is in Hz/rad and ``ki`` in Hz/(rad s).
    """

    kp: float
    ki: float
    limit: float = math.inf
    integrator: float = 0.0
    saturated: bool = False
    saturation_events: int = 0

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError("PI gains must be >= 0")
        if not self.limit > 0:
            raise ValueError("output limit must be > 0")

    def reset(self, integrator: float = 0.0) -> None:
        self.integrator = integrator
        self.saturated = False


def pi_step(filt: PiFilter, error: float, dt: float) -> float:
    """Advance ``filt`` by one sample and return the clamped output (Hz)."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    candidate = filt.integrator + filt.ki * error * dt
    out = filt.kp * error + candidate
    if abs(out) > filt.limit:
        if not filt.saturated:
            filt.saturation_events += 1
        filt.saturated = True
        return math.copysign(filt.limit, out)
    filt.saturated = False
    filt.integrator = candidate
    return out


@dataclass
class Actuator:
    """AOM or PZT: single-pole response at ``bandwidth``, clamped to ``center_f +- range``."""

    kind: str
    center_f: float
    range: float
    bandwidth: float
    value: float = 0.0
    saturation_events: int = 0
    _saturated: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("AOM", "PZT"):
            raise ValueError("actuator kind must be 'AOM' or 'PZT'")
        if not self.range > 0:
            raise ValueError("actuator range must be > 0")
        if not self.bandwidth > 0:
            raise ValueError("actuator bandwidth must be > 0")

    def step(self, command: float, dt: float) -> float:
        """Apply an offset command (Hz from center); returns the offset reached."""
        alpha = -math.expm1(-2 * math.pi * self.bandwidth * dt)
        value = self.value + alpha * (command - self.value)
        if abs(value) > self.range:
            if not self._saturated:
                self.saturation_events += 1
            self._saturated = True
            value = math.copysign(self.range, value)
        else:
            self._saturated = False
        self.value = value
        return value

    @property
    def frequency(self) -> float:
        return self.center_f + self.value


def phase_margin(kp: float, ki: float, loop_delay: float = 0.0, plant_gain: float = 1.0) -> tuple[float, float]:
    """(crossover Hz, phase margin deg) of ``plant_gain * 2 pi (kp + ki/s) e^{-sT} / s``."""
    k = 2 * math.pi * kp * plant_gain
    z = ki / kp if kp else math.inf
    # |L(jw)| = k sqrt(1 + (z/w)^2) / w is monotone in w: bisect on log scale.
    lo, hi = 1e-12, 1e15
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        mag = k * math.sqrt(1 + (z / mid) ** 2) / mid if z != math.inf else math.inf
        if mag > 1:
            lo = mid
        else:
            hi = mid
    wc = math.sqrt(lo * hi)
    pm = 90.0 - math.degrees(math.atan2(z, wc)) - math.degrees(wc * loop_delay)
    return wc / (2 * math.pi), pm


def design_pi(
    target_bandwidth: float,
    loop_delay: float = 0.0,
    plant_gain: float = 1.0,
    zero_ratio: float = 4.0,
    min_phase_margin: float = 45.0,
) -> tuple[float, float]:
    """PI gains for an integrating actuator behind a pure delay.

    The PI zero sits ``zero_ratio`` below the crossover.  When the delay
    would leave less than ``min_phase_margin`` at the requested crossover,
    the crossover is lowered to the fastest one that keeps the margin.
    """
    if not target_bandwidth > 0:
        raise ValueError("target bandwidth must be > 0")
    if loop_delay < 0:
        raise ValueError("loop delay must be >= 0")
    if loop_delay > 0 and target_bandwidth > 1.0 / (4.0 * loop_delay):
        raise DelayLimitedBandwidth(
            f"delay-limited bandwidth: {target_bandwidth:g} Hz exceeds 1/(4*{loop_delay:g} s) "
            f"= {1 / (4 * loop_delay):g} Hz"
        )
    wc = 2 * math.pi * target_bandwidth
    pi_lag = math.degrees(math.atan(1.0 / zero_ratio))
    if loop_delay > 0:
        wc_max = math.radians(90.0 - pi_lag - min_phase_margin) / loop_delay
        if wc > wc_max:
            log.warning(
                "crossover lowered from %.4g Hz to %.4g Hz to keep %.0f deg phase margin",
                target_bandwidth, wc_max / (2 * math.pi), min_phase_margin,
            )
            wc = wc_max
    kp = wc / (2 * math.pi * plant_gain * math.sqrt(1 + 1 / zero_ratio**2))
    ki = kp * wc / zero_ratio
    return kp, ki


@dataclass
class TrackingOscillator:
    """Second-order (type-2) PLL used as a narrow tracking filter on a beat phase."""

    bandwidth: float
    damping: float = 1 / math.sqrt(2)
    phase: float = 0.0
    freq: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("tracking bandwidth must be > 0")
        factor = _TYPE2_BW_FACTOR if abs(self.damping - 1 / math.sqrt(2)) < 1e-12 else math.sqrt(
            1 + 2 * self.damping**2 + math.sqrt((1 + 2 * self.damping**2) ** 2 + 1)
        )
        wn = 2 * math.pi * self.bandwidth / factor
        self._kp = 2 * self.damping * wn
        self._ki = wn * wn

    def preload(self, phase: float, freq: float) -> None:
        """Start tracking at ``phase`` moving at ``freq`` rad/s."""
        self.phase = phase
        self.freq = freq


def tracking_oscillator_step(state: TrackingOscillator, input_phase: float, dt: float) -> float:
    """Advance the tracker one sample; returns the filtered phase."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    err = input_phase - state.phase
    state.freq += state._ki * err * dt
    state.phase += (state._kp * err + state.freq) * dt
    return state.phase
