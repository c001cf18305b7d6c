"""Stability metrology: Pi-type counter, Allan deviation, PSDs, rejection
limits and cycle-slip detection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, ndimage, signal

from .series import CARRIER_HZ, FrequencySeries, PhaseSeries


@dataclass(frozen=True)
class CounterModel:
    """Zero dead-time Pi-type counter behind a single-pole input filter.

    ``measurement_bandwidth=None`` (or anything at or above Nyquist) means no
    pre-filter.
    """

    gate: float = 1.0
    measurement_bandwidth: float | None = 10.0
    dead_time: float = 0.0

    def __post_init__(self):
        if not self.gate > 0:
            raise ValueError("gate must be > 0")
        if self.dead_time != 0:
            raise ValueError("only zero dead-time counters are modeled")
        if self.measurement_bandwidth is not None and not self.measurement_bandwidth > 0:
            raise ValueError("measurement bandwidth must be > 0")


@dataclass(frozen=True)
class StabilityResult:
    taus: np.ndarray
    adev: np.ndarray
    n_samples: np.ndarray
    confidence: np.ndarray

    def slope(self, tau_min: float | None = None, tau_max: float | None = None) -> float:
        """Least-squares log-log slope over ``[tau_min, tau_max]``."""
        sel = np.ones(self.taus.size, bool)
        if tau_min is not None:
            sel &= self.taus >= tau_min * (1 - 1e-9)
        if tau_max is not None:
            sel &= self.taus <= tau_max * (1 + 1e-9)
        sel &= self.adev > 0
        return float(np.polyfit(np.log10(self.taus[sel]), np.log10(self.adev[sel]), 1)[0])

    def at(self, tau: float) -> float:
        i = int(np.argmin(np.abs(self.taus - tau)))
        if not math.isclose(self.taus[i], tau, rel_tol=1e-6):
            raise KeyError(f"tau={tau} not evaluated")
        return float(self.adev[i])


def single_pole(x: np.ndarray, rate: float, bandwidth: float | None) -> np.ndarray:
    if bandwidth is None or bandwidth >= rate / 2:
        return np.asarray(x, dtype=float)
    a = -math.expm1(-2 * math.pi * bandwidth / rate)
    y = signal.lfilter([a], [1.0, a - 1.0], x - x[0]) + x[0]
    return y


def counter_read(phase: PhaseSeries, c: CounterModel, carrier_hz: float = CARRIER_HZ) -> FrequencySeries:
    """Contiguous gate averages y_k = (phi((k+1)T) - phi(kT)) / (2 pi nu T)."""
    step = c.gate * phase.rate
    m = int(round(step))
    if m < 2 or not math.isclose(step, m, rel_tol=1e-9):
        raise ValueError("gate must span an integer number (>= 2) of samples")
    x = single_pole(phase.samples, phase.rate, c.measurement_bandwidth)
    edges = x[::m]
    y = np.diff(edges) / (2 * math.pi * carrier_hz * c.gate)
    return FrequencySeries(y, 1.0 / c.gate, phase.t0)


def _as_frequency(y) -> tuple[np.ndarray, float]:
    if isinstance(y, FrequencySeries):
        return y.samples, 1.0 / y.rate
    return np.asarray(y, dtype=float), 1.0


def adev(y, taus=None, overlapping: bool = False, min_blocks: int = 4) -> StabilityResult:
    """Allan deviation of fractional-frequency samples.

    ``taus`` are in seconds (integer multiples of the basic gate); the
    default is octave spacing.  Averaging times with fewer than
    ``min_blocks`` averages are omitted.
    """
    yv, tau0 = _as_frequency(y)
    n = yv.size
    if taus is None:
        ms = 2 ** np.arange(int(np.log2(max(n // min_blocks, 1))) + 1)
    else:
        ms = np.array(sorted({int(round(t / tau0)) for t in np.atleast_1d(taus)}))
    out_t, out_a, out_n, out_c = [], [], [], []
    phase = np.concatenate([[0.0], np.cumsum(yv)]) * tau0 if overlapping else None
    for m in ms:
        if m < 1 or n // m < min_blocks:
            continue
        if overlapping:
            d = phase[2 * m:] - 2 * phase[m:-m] + phase[: -2 * m]
            var = np.mean(d**2) / (2 * (m * tau0) ** 2)
            count = d.size
            dof = n / m
        else:
            blocks = yv[: (n // m) * m].reshape(-1, m).mean(axis=1)
            d = np.diff(blocks)
            var = np.sum(d**2) / (2 * d.size)
            count = blocks.size
            dof = d.size
        a = math.sqrt(var)
        out_t.append(m * tau0)
        out_a.append(a)
        out_n.append(count)
        out_c.append(a / math.sqrt(dof))
    return StabilityResult(np.array(out_t), np.array(out_a), np.array(out_n, int), np.array(out_c))


def adev_from_psd(f: np.ndarray, s_y: np.ndarray, tau: float) -> float:
    """Allan deviation implied by a one-sided fractional-frequency PSD."""
    x = np.pi * f * tau
    kernel = np.sin(x) ** 4 / np.where(x == 0, 1.0, x) ** 2
    return math.sqrt(2 * integrate.trapezoid(s_y * kernel, f))


def rejection_theory(f, tau: float):
    """Delay-limited residual/free-running PSD ratio, dB, for uniformly distributed noise."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr < 0) or np.any(f_arr >= 1.0 / (4 * tau)):
        raise ValueError("rejection_theory valid for 0 < f < 1/(4 tau)")
    with np.errstate(divide="ignore"):
        out = 10 * np.log10((2 * np.pi * f_arr * tau) ** 2 / 3.0)
    return out if out.ndim else float(out)


def psd_welch(phase, nseg: int = 8, window: str = "hann", rate: float | None = None):
    """One-sided Welch PSD (rad^2/Hz) over ``nseg`` non-overlapping Hann segments."""
    if isinstance(phase, PhaseSeries):
        x, fs = phase.samples, phase.rate
    else:
        x, fs = np.asarray(phase, dtype=float), float(rate or 1.0)
    if nseg < 1 or x.size < 2 * nseg:
        raise ValueError("series too short for the requested number of segments")
    nper = x.size // nseg
    f, p = signal.welch(x, fs=fs, window=window, nperseg=nper, noverlap=0, detrend="linear")
    return f, p


def measure_rejection(psd_free, psd_comp, free_multiplier: float = 1.0):
    """Pointwise ``10 log10(comp / (free_multiplier * free))`` on a shared grid.

    Each argument is an ``(f, psd)`` pair.  For a two-segment cascade pass
    ``free_multiplier=2`` with the single-segment free-running PSD.
    """
    f1, p1 = (np.asarray(a, dtype=float) for a in psd_free)
    f2, p2 = (np.asarray(a, dtype=float) for a in psd_comp)
    if f1.shape != f2.shape or not np.allclose(f1, f2, rtol=1e-12, atol=0):
        raise ValueError("PSD frequency grids differ")
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10 * np.log10(p2 / (free_multiplier * p1))
    return f1, db


@dataclass(frozen=True)
class SlipEvent:
    time: float
    magnitude_rad: float
    magnitude_ps: float


def _robust_slope(x: np.ndarray, blocks: int = 20) -> float:
    """Median slope (per sample) between consecutive block medians.

    A step or a short transient spoils at most a couple of the block-to-block
    increments, so the median ignores it.
    """
    if x.size < 2:
        return 0.0
    b = max(1, x.size // blocks)
    m = x.size // b
    if m < 2:
        return float(np.median(np.diff(x)))
    med = np.median(x[: m * b].reshape(m, b), axis=1)
    return float(np.median(np.diff(med)) / b)


def detect_cycle_slips(
    phase: PhaseSeries,
    threshold_ps: float,
    carrier_hz: float = CARRIER_HZ,
    settle: float = 0.1,
    window: float = 10.0,
) -> list[SlipEvent]:
    """Persistent phase steps larger than ``threshold_ps`` of delay.

    The median level over ``settle`` seconds before a candidate instant is
    compared with the median over the following ``settle`` seconds after a
    ``settle`` guard interval.  Medians make the test blind to transients
    shorter than half of ``settle``.  A linear trend estimated per
    ``window``-second block (median sample-to-sample increment) is removed
    first.
    """
    if not threshold_ps > 0:
        raise ValueError("threshold must be > 0")
    x = phase.samples
    rate = phase.rate
    n = x.size
    L = max(1, int(round(settle * rate)))
    if n < 3 * L + 1:
        return []
    thr = threshold_ps * 1e-12 * 2 * math.pi * carrier_hz

    w = max(2, int(round(window * rate)))
    trend = np.empty(n)
    base = 0.0
    for start in range(0, n, w):
        seg = x[start : start + w]
        trend[start : start + seg.size] = base + _robust_slope(seg) * np.arange(seg.size)
        base = trend[start + seg.size - 1] + _robust_slope(seg)
    r = x - trend

    # Short block means keep the running median cheap for long windows.
    q = max(1, L // 32)
    nb = n // q
    xb = r[: nb * q].reshape(nb, q).mean(axis=1)
    lb = max(1, L // q) | 1
    if nb < 3 * lb + 1:
        return []
    med = ndimage.median_filter(xb, size=lb, mode="nearest")
    half = lb // 2
    idx = np.arange(lb, nb - 2 * lb + 1)
    step = med[idx + lb + half] - med[idx - lb + half]
    hot = np.abs(step) > thr
    events: list[SlipEvent] = []
    if not hot.any():
        return events
    # Runs of one sign: adjacent steps of opposite sign are separate events.
    label = np.where(hot, np.sign(step), 0).astype(np.int8)
    edges = np.flatnonzero(np.diff(np.concatenate([[0], label, [0]])))
    for a, b in zip(edges[:-1], edges[1:]):
        if label[a] == 0:
            continue
        k = a + int(np.argmax(np.abs(step[a:b])))
        # The flagged run is centred half a window before the step instant.
        centre = 0.5 * (idx[a] + idx[b - 1]) + 0.5 * lb
        t = phase.t0 + (centre * q + 0.5 * (q - 1)) / rate
        mag = float(step[k])
        events.append(SlipEvent(float(t), mag, mag / (2 * math.pi * carrier_hz) * 1e12))
    return events
