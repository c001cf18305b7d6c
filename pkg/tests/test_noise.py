import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import loglog_slope, octave_means
from fiberlink.analysis import psd_welch
from fiberlink.noise import NoiseModel, SpectralPeak, preset, psd_model_eval, synth_delay_drift, synth_power_law


def test_zero_model_gives_zero_series():
    x = synth_power_law(NoiseModel(), 100.0, 1000, seed=3)
    assert np.all(x.samples == 0)
    assert len(x) == 1000 and x.rate == 100.0


def test_white_phase_level_flat_within_1db():
    x = synth_power_law(NoiseModel(((0, 1.0),)), 1000.0, 2**20, seed=1)
    f, p = psd_welch(x, nseg=256)
    for edge, mean in octave_means(f, p, 4 * f[1], 250.0):
        assert abs(10 * math.log10(mean)) < 1.0, edge


def test_random_walk_increments_are_white():
    x = synth_power_law(NoiseModel(((-2, 1.0),)), 100.0, 2**16, seed=2).samples
    d = np.diff(x)
    d = d - d.mean()
    var = np.dot(d, d)
    for lag in range(1, 11):
        assert abs(np.dot(d[:-lag], d[lag:]) / var) < 0.05


def test_random_walk_increment_variance():
    # S_phi = b/f^2 is a random walk with step variance 4 pi^2 b / rate (two-sided convention).
    rate, b = 100.0, 1.0
    x = synth_power_law(NoiseModel(((-2, b),)), rate, 2**18, seed=4).samples
    expected = 2 * math.pi**2 * b / rate
    assert np.var(np.diff(x)) == pytest.approx(expected, rel=0.05)


def test_determinism_and_seed_dependence():
    m = NoiseModel(((-2, 1.0), (0, 0.1)))
    a = synth_power_law(m, 10.0, 4096, seed=9).samples
    b = synth_power_law(m, 10.0, 4096, seed=9).samples
    c = synth_power_law(m, 10.0, 4096, seed=10).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_model_seed_used_when_none_given():
    m = NoiseModel(((0, 1.0),), seed=5)
    assert np.array_equal(synth_power_law(m, 10.0, 64).samples, synth_power_law(m, 10.0, 64, seed=5).samples)


@pytest.mark.parametrize("n", [0, 1])
def test_short_series_rejected(n):
    with pytest.raises(ValueError):
        synth_power_law(NoiseModel(((0, 1.0),)), 10.0, n)


@pytest.mark.parametrize("level", [math.nan, math.inf, -1.0])
def test_bad_levels_rejected(level):
    with pytest.raises(ValueError):
        NoiseModel(((0, level),))


def test_bad_exponent_and_peak_rejected():
    with pytest.raises(ValueError):
        NoiseModel(((1, 1.0),))
    with pytest.raises(ValueError):
        SpectralPeak(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        SpectralPeak(1.0, 1.0, 0.0)


@pytest.mark.parametrize(
    "terms, f, expected",
    [(((0, 2.0),), 10.0, 2.0), (((-2, 4.0),), 2.0, 1.0), (((0, 1.0), (-2, 1.0)), 1.0, 2.0)],
)
def test_psd_model_eval(terms, f, expected):
    assert psd_model_eval(NoiseModel(terms), f) == pytest.approx(expected)


def test_psd_model_eval_peak_height_at_center():
    m = NoiseModel(peaks=((2.0, 3.0, 0.5),))
    assert psd_model_eval(m, 2.0) == pytest.approx(3.0)
    assert psd_model_eval(m, 2.25) == pytest.approx(1.5)


@pytest.mark.parametrize("f", [0.0, -1.0])
def test_psd_model_eval_rejects_nonpositive_f(f):
    with pytest.raises(ValueError):
        psd_model_eval(NoiseModel(((0, 1.0),)), f)


def test_drift_zero_span_is_zero():
    d = synth_delay_drift(NoiseModel(), 0.1, 100, seed=1)
    assert np.all(d.samples == 0)


@pytest.mark.parametrize("seed", range(5))
def test_drift_excursion_within_factor_two(seed):
    d = synth_delay_drift(NoiseModel(drift_span=3e-9), 0.1, 8640, seed=seed)
    pp = np.ptp(d.samples)
    assert 1.5e-9 <= pp <= 6e-9


def test_drift_is_smooth_and_deterministic():
    m = NoiseModel(drift_span=3e-9)
    a = synth_delay_drift(m, 0.1, 8640, seed=2).samples
    assert np.array_equal(a, synth_delay_drift(m, 0.1, 8640, seed=2).samples)
    # Band-limited below 1 mHz: a 10 s step moves far less than the span.
    assert np.max(np.abs(np.diff(a))) < 1e-3 * 3e-9 * 10


def test_presets_exist():
    for name in ("quiet-spool", "urban", "intercity"):
        assert not preset(name).is_silent
    with pytest.raises(ValueError):
        preset("nope")


@given(alpha=st.integers(-4, 0), seed=st.integers(0, 2**32 - 1))
def test_spectral_fidelity_slope(alpha, seed):
    rate, n = 100.0, 2**16
    x = synth_power_law(NoiseModel(((alpha, 1.0),)), rate, n, seed=seed)
    f, p = psd_welch(x, nseg=16)
    lo = 16 * rate / n * 4
    assert loglog_slope(f, p, lo, lo * 100) == pytest.approx(alpha, abs=0.2)


@given(seed=st.integers(0, 2**31))
def test_linearity_of_independent_sums(seed):
    rate, n = 100.0, 2**15
    ma, mb = NoiseModel(((0, 1.0),)), NoiseModel(((-2, 0.1),))
    a = synth_power_law(ma, rate, n, seed=seed)
    b = synth_power_law(mb, rate, n, seed=seed + 1)
    f, pa = psd_welch(a, nseg=32)
    _, pb = psd_welch(b, nseg=32)
    _, ps = psd_welch(a.samples + b.samples, nseg=32, rate=rate)
    band = (f > 0.5) & (f < 25)
    ratio = ps[band].mean() / (pa[band] + pb[band]).mean()
    assert abs(10 * math.log10(ratio)) < 0.5
