import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiberlink.channel import (
    BACKWARD,
    FORWARD,
    Edfa,
    FiberSpan,
    LinkSegment,
    LossTable,
    delayed,
    link_budget,
    one_way_delay,
    propagate,
    tap_sum,
)
from fiberlink.series import SPEED_OF_LIGHT, DelaySeries, PhaseSeries

TAU150 = 7.345e-4


def seg(*lengths, **kw):
    return LinkSegment(tuple(FiberSpan(L) for L in lengths), **kw)


def test_delay_150km():
    assert one_way_delay(seg(150.0)) == pytest.approx(TAU150, rel=1e-4)


def test_delay_short_span():
    assert one_way_delay(seg(0.001)) == pytest.approx(4.90e-9, rel=2e-3)


def test_delay_formula_oracle():
    s = LinkSegment((FiberSpan(37.5, group_index=1.45),))
    assert one_way_delay(s) == 1.45 * 37.5e3 / SPEED_OF_LIGHT


def test_delay_additive():
    assert one_way_delay(seg(100.0, 50.0)) == pytest.approx(one_way_delay(seg(150.0)), rel=1e-14)


@pytest.mark.parametrize("kw", [dict(loss_per_km=0.0), dict(group_index=1.6), dict(connectors=-1), dict(length_km=-1.0)])
def test_span_validation(kw):
    args = dict(length_km=10.0) | kw
    with pytest.raises(ValueError):
        FiberSpan(**args)


def test_edfa_outside_span_rejected():
    with pytest.raises(ValueError):
        FiberSpan(10.0, edfa=((11.0, 10.0),))


def test_segment_needs_taps_and_spans():
    with pytest.raises(ValueError):
        LinkSegment(())
    with pytest.raises(ValueError):
        seg(1.0, noise_taps=0)


def test_budget_150km_example():
    s = LinkSegment((FiberSpan(150.0, loss_per_km=0.25, connectors=8, oadm_count=4),))
    b = link_budget(s)
    assert b.one_way_db == pytest.approx(47.5)
    assert b.round_trip_db == pytest.approx(95.0)
    patched = LinkSegment((FiberSpan(150.0, loss_per_km=0.25, connectors=14, oadm_count=4),))
    assert link_budget(patched).round_trip_db > 100


def test_budget_zero_length():
    b = link_budget(seg(0.0))
    assert b.one_way_db == 0 and b.round_trip_db == 0
    assert b.margin_db > 0 and not b.amplification_required


@given(pos=st.floats(0, 150), gain=st.floats(0.1, 40))
def test_edfa_gain_is_additive(pos, gain):
    base = FiberSpan(150.0, connectors=6, oadm_count=4)
    amp = FiberSpan(150.0, connectors=6, oadm_count=4, edfa=(Edfa(pos, gain),))
    b0, b1 = link_budget(LinkSegment((base,))), link_budget(LinkSegment((amp,)))
    assert b0.one_way_db - b1.one_way_db == pytest.approx(gain, abs=1e-9)
    assert b1.round_trip_db == pytest.approx(2 * b1.one_way_db)
    assert b1.passive_round_trip_db == pytest.approx(b0.round_trip_db)


def test_budget_itemization_and_margin():
    s = LinkSegment((FiberSpan(100.0, loss_per_km=0.2, connectors=2, oadm_count=1, label="a"),))
    b = link_budget(s, LossTable(connector_db=1.0, oadm_db=2.0, max_round_trip_db=50.0))
    assert [db for _, db in b.entries] == [20.0, 2.0, 2.0]
    assert b.margin_db == pytest.approx(50.0 - 48.0)
    assert b.entries[0][0].startswith("a:")


def test_tap_positions_uniform():
    s = seg(150.0, noise_taps=4)
    assert np.allclose(s.taps, [0.125, 0.375, 0.625, 0.875])


def test_propagate_zero_noise_is_delayed_copy():
    rate = 1e5
    s = seg(150.0)
    t = np.arange(4000) / rate
    x = PhaseSeries(np.sin(2 * np.pi * 50 * t), rate)
    y = propagate(x, s, FORWARD)
    assert np.allclose(y.samples, delayed(x.samples, one_way_delay(s) * rate))


def test_tap_at_output_geometry():
    rate = 1e4
    s = seg(150.0, tap_fractions=(1.0,), backward_offset_hz=0.0)
    n = 200
    tap = np.zeros(n)
    tap[50:] = 1.0
    zero = PhaseSeries(np.zeros(n), rate)
    fwd = propagate(zero, s, FORWARD, tap_noise=[tap]).samples
    bwd = propagate(zero, s, BACKWARD, tap_noise=[tap]).samples
    assert np.array_equal(fwd, tap)
    assert np.allclose(bwd, delayed(tap, one_way_delay(s) * rate))


def test_round_trip_static_noise_is_twice_one_way():
    rate = 1e3
    s = seg(150.0, noise_taps=8, backward_offset_hz=0.0)
    n = 100
    taps = np.tile(np.linspace(0.1, 0.8, 8)[:, None], (1, n))
    zero = PhaseSeries(np.zeros(n), rate)
    one_way = propagate(zero, s, FORWARD, tap_noise=taps)
    back = propagate(one_way, s, BACKWARD, tap_noise=taps)
    assert np.allclose(back.samples[5:], 2 * taps[:, 0].sum())


@given(seed=st.integers(0, 1000))
def test_reciprocity(seed):
    # Forward then backward equals the sum of the two one-way accumulations.
    rng = np.random.default_rng(seed)
    rate, n = 1e4, 300
    s = seg(150.0, noise_taps=4)
    taps = np.cumsum(rng.standard_normal((4, n)), axis=1)
    zero = PhaseSeries(np.zeros(n), rate)
    fwd = propagate(zero, s, FORWARD, tap_noise=taps)
    rt = propagate(fwd, s, BACKWARD, tap_noise=taps)
    expect = delayed(tap_sum(taps, s, rate, FORWARD), one_way_delay(s) * rate) + tap_sum(taps, s, rate, BACKWARD)
    assert np.allclose(rt.samples, expect, atol=1e-9)


def test_backward_scale_applies_offset():
    s = seg(10.0, tap_fractions=(0.0,), backward_offset_hz=70e6)
    taps = np.ones((1, 10))
    out = tap_sum(taps, s, 1e3, BACKWARD)
    assert np.allclose(out, (s.carrier_hz + 70e6) / s.carrier_hz)


def test_drift_enters_as_carrier_phase():
    rate, n = 10.0, 50
    s = seg(1.0, backward_offset_hz=0.0)
    d = DelaySeries(np.full(n, 1e-15), rate)
    y = propagate(PhaseSeries(np.zeros(n), rate), s, FORWARD, delay_fluct=d)
    assert np.allclose(y.samples, -2 * math.pi * s.carrier_hz * 1e-15)


def test_rate_mismatch_rejected():
    s = seg(1.0)
    x = PhaseSeries(np.zeros(10), 10.0)
    with pytest.raises(ValueError):
        propagate(x, s, FORWARD, delay_fluct=DelaySeries(np.zeros(10), 20.0))
    with pytest.raises(ValueError):
        propagate(x, s, FORWARD, tap_noise=[PhaseSeries(np.zeros(10), 20.0)] * s.noise_taps)


@given(f=st.floats(1.0, 40.0), frac=st.floats(0.0, 1.0))
def test_interpolation_error_bound(f, frac):
    rate, n = 1000.0, 2000
    t = np.arange(n) / rate
    x = np.sin(2 * np.pi * f * t)
    d = 3 + frac
    exact = np.sin(2 * np.pi * f * (t - d / rate))
    err = delayed(x, d)[10:] - exact[10:]
    assert np.sqrt(np.mean(err**2)) < 0.01 * np.sqrt(np.mean(x**2))


@pytest.mark.parametrize("f", [10.0, 45.0, 100.0])
def test_half_sample_interpolation_error_oracle(f):
    # Averaging two samples half a period apart scales a tone by cos(pi f / rate).
    rate, n = 1000.0, 4000
    t = np.arange(n) / rate
    x = np.sin(2 * np.pi * f * t)
    exact = np.sin(2 * np.pi * f * (t - 3.5 / rate))
    err = delayed(x, 3.5)[10:] - exact[10:]
    rel = np.sqrt(np.mean(err**2)) / np.sqrt(np.mean(x**2))
    assert rel == pytest.approx(1 - math.cos(math.pi * f / rate), rel=0.02)
