import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiberlink.control import (
    Actuator,
    DelayLimitedBandwidth,
    Divider,
    PiFilter,
    TrackingOscillator,
    design_pi,
    pfd,
    phase_margin,
    pi_step,
    tracking_oscillator_step,
)

TAU150 = 7.345e-4


def test_pfd_examples():
    assert pfd(0.0, 0.0) == 0.0
    assert pfd(10 * math.pi, 0.0) == 10 * math.pi


def test_pfd_ramp_difference():
    t = np.linspace(0, 1, 101)
    err = np.array([pfd(5.0 * x, 2.0 * x) for x in t])
    assert np.allclose(np.diff(err) / np.diff(t), 3.0)


def open_loop_gain(kp, ki, f, dt):
    """|L| at ``f`` measured by driving the PI filter and integrating actuator open loop."""
    filt = PiFilter(kp, ki)
    n = int(round(20 / (f * dt)))
    t = np.arange(n) * dt
    e = np.sin(2 * np.pi * f * t)
    phase = np.cumsum([2 * np.pi * pi_step(filt, x, dt) * dt for x in e])
    # The integrator turns the sine into an offset plus ramp; fit them out.
    tt, p = t[n // 2:], phase[n // 2:]
    p = p - np.polyval(np.polyfit(tt, p, 1), tt)
    return np.sqrt(2 * np.mean(p**2))


def simulate_step(kp, ki, delay, dt, duration, plant_gain=1.0):
    """Closed loop: actuator phase follows a unit phase step through a delay."""
    filt = PiFilter(kp, ki)
    n = int(round(duration / dt))
    d = int(round(delay / dt))
    phase = np.zeros(n + 1)
    err = np.zeros(n)
    for k in range(n):
        seen = phase[k - d] if k >= d else 0.0
        err[k] = 1.0 - plant_gain * seen
        phase[k + 1] = phase[k] + 2 * np.pi * pi_step(filt, err[k], dt) * dt
    return err


def test_design_pi_100khz_crossover_measured():
    bw = 100e3
    kp, ki = design_pi(bw, 0.0)
    dt = 1 / (200 * bw)
    lo, hi = open_loop_gain(kp, ki, 0.8 * bw, dt), open_loop_gain(kp, ki, 1.2 * bw, dt)
    assert lo > 1 > hi
    err = simulate_step(kp, ki, 0.0, dt, 20 / bw)
    assert abs(err[-int(0.1 / (bw * dt)):]).max() < 0.01


def test_design_pi_just_under_delay_limit_accepted():
    kp, ki = design_pi(300.0, TAU150)
    fc, pm = phase_margin(kp, ki, TAU150)
    assert pm >= 45.0 - 1e-6
    assert fc == pytest.approx(117.1, rel=0.01)


def test_design_pi_rejects_above_delay_limit():
    with pytest.raises(DelayLimitedBandwidth, match="delay-limited bandwidth"):
        design_pi(1000.0, TAU150)


@given(bw=st.floats(1.0, 1e5), delay=st.floats(0.0, 1e-3))
def test_design_pi_margin_property(bw, delay):
    if delay > 0 and bw > 1 / (4 * delay):
        with pytest.raises(DelayLimitedBandwidth):
            design_pi(bw, delay)
        return
    kp, ki = design_pi(bw, delay)
    fc, pm = phase_margin(kp, ki, delay)
    assert pm >= 45.0 - 1e-6
    assert fc <= bw * 1.2
    if delay == 0:
        assert fc == pytest.approx(bw, rel=0.2)


@pytest.mark.parametrize("bw, delay", [(10.0, 0.0), (50.0, 2e-3), (300.0, TAU150)])
def test_closed_loop_step_settles(bw, delay):
    kp, ki = design_pi(bw, delay)
    dt = min(1 / (100 * bw), delay / 20 if delay else 1.0)
    err = simulate_step(kp, ki, delay, dt, 20 / bw)
    assert abs(err[-1]) < 0.01


def test_pi_step_examples():
    f = PiFilter(2.0, 0.0)
    assert pi_step(PiFilter(1.0, 1.0), 0.0, 1e-3) == 0.0
    assert [pi_step(f, 0.5, 1e-3) for _ in range(3)] == [1.0, 1.0, 1.0]
    g = PiFilter(0.0, 4.0)
    out = [pi_step(g, 0.5, 0.1) for _ in range(5)]
    assert np.allclose(np.diff(out), 4.0 * 0.5 * 0.1)


def test_pi_anti_windup_freezes_integrator():
    f = PiFilter(1.0, 100.0, limit=1.0)
    outs = [pi_step(f, 0.5, 0.01) for _ in range(100)]
    assert max(abs(o) for o in outs) <= 1.0
    assert f.saturation_events == 1
    # Frozen at the last unsaturated value rather than winding up to 50.
    assert f.integrator == pytest.approx(0.5)
    assert pi_step(f, 0.0, 0.01) == pytest.approx(0.5)


def test_pi_rejects_bad_args():
    with pytest.raises(ValueError):
        PiFilter(-1.0, 0.0)
    with pytest.raises(ValueError):
        pi_step(PiFilter(1.0, 1.0), 1.0, 0.0)


@given(cmds=st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=50))
def test_actuator_never_exceeds_range(cmds):
    a = Actuator("AOM", 40e6, 100.0, 1e3)
    for c in cmds:
        assert abs(a.step(c, 1e-3)) <= 100.0
    assert a.saturation_events >= 0


def test_actuator_single_pole_response():
    a = Actuator("PZT", 0.0, 1e9, 10.0)
    dt = 1e-4
    tc = 1 / (2 * math.pi * 10.0)
    n = int(round(tc / dt))
    for _ in range(n):
        a.step(1.0, dt)
    assert a.value == pytest.approx(1 - math.exp(-1), rel=1e-2)


def test_actuator_counts_saturation():
    a = Actuator("AOM", 0.0, 1.0, 1e6)
    a.step(5.0, 1.0)
    a.step(5.0, 1.0)
    a.step(0.0, 1.0)
    a.step(-5.0, 1.0)
    assert a.saturation_events == 2


def test_actuator_validation():
    with pytest.raises(ValueError):
        Actuator("EOM", 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        Actuator("AOM", 0.0, 0.0, 1.0)


@given(a=st.integers(1, 10_000), b=st.integers(1, 10_000), phi=st.floats(-1e6, 1e6))
def test_divider_composition(a, b, phi):
    assert Divider(b)(Divider(a)(Fraction(phi))) == Divider(a * b)(Fraction(phi))
    assert Divider(a).then(Divider(b)).ratio == a * b


def test_divider_validation():
    for r in (0, -2, 1.5):
        with pytest.raises(ValueError):
            Divider(r)


def test_divider_plan_consistency():
    assert Fraction(150_000_000, 960) == Fraction(75_000_000, 480) == Fraction(156_250)


def tracker_gain(bw, f, rate):
    osc = TrackingOscillator(bw)
    dt = 1 / rate
    n = int(round(max(40 / f, 40 / bw) * rate))
    t = np.arange(n) * dt
    x = np.sin(2 * np.pi * f * t)
    y = np.array([tracking_oscillator_step(osc, v, dt) for v in x])
    tail = slice(n // 2, n)
    return np.sqrt(np.mean(y[tail] ** 2) / np.mean(x[tail] ** 2))


def test_tracker_dc_offset_tracked():
    osc = TrackingOscillator(10.0)
    for _ in range(20000):
        out = tracking_oscillator_step(osc, 1.5, 1e-4)
    assert out == pytest.approx(1.5, abs=1e-9)


def test_tracker_frequency_response():
    bw, rate = 10.0, 10_000.0
    assert 20 * math.log10(tracker_gain(bw, 10 * bw, rate)) <= -20
    assert abs(20 * math.log10(tracker_gain(bw, bw / 10, rate))) < 1
    # -3 dB point within 20% of the configured bandwidth.
    assert tracker_gain(bw, 0.8 * bw, rate) > 1 / math.sqrt(2) > tracker_gain(bw, 1.2 * bw, rate)


def test_tracker_validation():
    with pytest.raises(ValueError):
        TrackingOscillator(0.0)
    with pytest.raises(ValueError):
        tracking_oscillator_step(TrackingOscillator(1.0), 0.0, 0.0)
