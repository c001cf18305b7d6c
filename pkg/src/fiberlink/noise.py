"""Deterministic colored phase-noise and delay-drift synthesis.

Free-running fiber noise is described phenomenologically by a one-sided
phase PSD

    S_phi(f) = sum_a b_a * f**a  +  sum_peaks h / (1 + ((f - f_c) / (w / 2))**2)

with integer exponents ``a`` in [-4, 0].  Series are produced by spectral
shaping of white Gaussian noise drawn from a Philox (counter-based)
generator, so a given ``(model, rate, n, seed)`` always maps to the same
samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .series import DelaySeries, PhaseSeries

SECONDS_PER_DAY = 86_400.0
DRIFT_BANDLIMIT_HZ = 1e-3


@dataclass(frozen=True)
class SpectralPeak:
    center_f: float
    height: float
    width: float

    def __post_init__(self):
        if not self.center_f > 0:
            raise ValueError("peak center_f must be > 0")
        if not self.width > 0:
            raise ValueError("peak width must be > 0")
        if not (np.isfinite(self.height) and self.height >= 0):
            raise ValueError("peak height must be finite and >= 0")


@dataclass(frozen=True)
class NoiseModel:
    """Power-law phase noise plus spectral peaks and a slow delay drift.

    ``power_law_terms`` holds ``(exponent, level)`` pairs with the level in
    rad^2/Hz at 1 Hz.  ``drift_span`` is the peak-to-peak delay excursion
    (seconds) expected over one day.
    """

    power_law_terms: tuple[tuple[int, float], ...] = ()
    peaks: tuple[SpectralPeak, ...] = ()
    drift_span: float = 0.0
    seed: int = 0

    def __post_init__(self):
        terms = tuple((int(a), float(b)) for a, b in self.power_law_terms)
        for a, b in terms:
            if not -4 <= a <= 0:
                raise ValueError(f"power-law exponent {a} outside [-4, 0]")
            if not np.isfinite(b) or b < 0:
                raise ValueError(f"power-law level for f^{a} must be finite and >= 0")
        peaks = tuple(p if isinstance(p, SpectralPeak) else SpectralPeak(*p) for p in self.peaks)
        if not (np.isfinite(self.drift_span) and self.drift_span >= 0):
            raise ValueError("drift_span must be finite and >= 0")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        object.__setattr__(self, "power_law_terms", terms)
        object.__setattr__(self, "peaks", peaks)

    @property
    def is_silent(self) -> bool:
        return (
            all(b == 0 for _, b in self.power_law_terms)
            and all(p.height == 0 for p in self.peaks)
            and self.drift_span == 0
        )

    def scaled(self, factor: float) -> NoiseModel:
        """Same shape, with every PSD level multiplied by ``factor``."""
        return replace(
            self,
            power_law_terms=tuple((a, b * factor) for a, b in self.power_law_terms),
            peaks=tuple(replace(p, height=p.height * factor) for p in self.peaks),
        )


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an optional stream path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(*parts: int) -> int:
    """Stable 32-bit child seed for a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def psd_model_eval(model: NoiseModel, f):
    """Evaluate the configured one-sided phase PSD at ``f`` (Hz, > 0)."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(~(f_arr > 0)):
        raise ValueError("psd_model_eval requires f > 0")
    out = np.zeros_like(f_arr)
    for a, b in model.power_law_terms:
        if b:
            out = out + b * f_arr ** float(a)
    for p in model.peaks:
        out = out + p.height / (1.0 + ((f_arr - p.center_f) / (0.5 * p.width)) ** 2)
    return out if out.ndim else float(out)


def _check_len(rate: float, n: int) -> None:
    if int(n) != n or n < 2:
        raise ValueError(f"need at least 2 samples, got n={n}")
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")


def _shape(rng: np.random.Generator, n: int, rate: float, psd_fn) -> np.ndarray:
    # Synthesize over twice the length and keep the first half so the
    # output is not forced to be periodic.
    m = 2 * n
    white = rng.standard_normal(m)
    coeffs = np.fft.rfft(white)
    f = np.fft.rfftfreq(m, d=1.0 / rate)
    gain = np.zeros_like(f)
    gain[1:] = np.sqrt(psd_fn(f[1:]) * rate / 2.0)
    return np.fft.irfft(coeffs * gain, m)[:n]


def synth_power_law(model: NoiseModel, rate: float, n: int, seed: int | None = None) -> PhaseSeries:
    """Phase series whose one-sided PSD follows ``psd_model_eval(model, f)``.

    Power-law terms are realized in sampled-data form (see ``_discrete_psd``),
    which matters only near Nyquist.  The drift term is not included; see
    :func:`synth_delay_drift`.
    """
    _check_len(rate, n)
    seed = model.seed if seed is None else seed
    if all(b == 0 for _, b in model.power_law_terms) and all(p.height == 0 for p in model.peaks):
        return PhaseSeries(np.zeros(n), rate)
    x = _shape(make_rng(seed, 0), int(n), rate, lambda f: _discrete_psd(model, f, rate))
    return PhaseSeries(x, rate)


def _discrete_psd(model: NoiseModel, f: np.ndarray, rate: float) -> np.ndarray:
    # Power laws use the sampled-data frequency (rate/pi) sin(pi f/rate), so
    # an f^-2 term is an exact discrete random walk with white increments.
    # Below rate/10 the two differ by less than 2%.
    fd = rate / np.pi * np.sin(np.pi * f / rate)
    out = np.zeros_like(f)
    for a, b in model.power_law_terms:
        if b:
            out = out + b * fd ** float(a)
    for p in model.peaks:
        out = out + p.height / (1.0 + ((f - p.center_f) / (0.5 * p.width)) ** 2)
    return out


def synth_delay_drift(model: NoiseModel, rate: float, n: int, seed: int | None = None) -> DelaySeries:
    """Slow propagation-delay excursion (seconds).

    A 24 h sinusoid of amplitude ``drift_span / 2`` with seeded phase, plus a
    random walk band-limited below 1 mHz whose one-day spread is about a
    fifth of ``drift_span``.
    """
    _check_len(rate, n)
    seed = model.seed if seed is None else seed
    if model.drift_span == 0:
        return DelaySeries(np.zeros(n), rate)
    rng = make_rng(seed, 1)
    t = np.arange(n) / rate
    phase0 = rng.uniform(0.0, 2 * np.pi)
    diurnal = 0.5 * model.drift_span * np.sin(2 * np.pi * t / SECONDS_PER_DAY + phase0)

    diffusion = (0.2 * model.drift_span) ** 2 / SECONDS_PER_DAY
    level = diffusion / (2 * np.pi**2)

    def rw_psd(f):
        return np.where(f < DRIFT_BANDLIMIT_HZ, level / f**2, 0.0)

    walk = _shape(rng, int(n), rate, rw_psd)
    walk -= walk[0]
    return DelaySeries(diurnal + walk, rate)


# Calibration presets for a 150 km segment.  Not measured values: levels are
# chosen so the free-running 150 km Allan deviation at 1 s is of order 1e-14.
PRESETS: dict[str, NoiseModel] = {
    "quiet-spool": NoiseModel(power_law_terms=((-2, 0.08), (0, 1e-6)), drift_span=0.3e-9),
    "urban": NoiseModel(power_law_terms=((-2, 8.0), (0, 1e-5)), drift_span=3e-9),
    "intercity": NoiseModel(
        power_law_terms=((-2, 4.0), (0, 1e-5)),
        peaks=(SpectralPeak(1.2, 20.0, 0.3), SpectralPeak(3.5, 5.0, 0.5)),
        drift_span=2e-9,
    ),
}


def preset(name: str, seed: int = 0) -> NoiseModel:
    try:
        return replace(PRESETS[name], seed=seed)
    except KeyError:
        raise ValueError(f"unknown noise preset {name!r}; known: {sorted(PRESETS)}") from None
