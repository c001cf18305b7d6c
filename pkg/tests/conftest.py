import numpy as np
from hypothesis import settings

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def octave_means(f, p, lo, hi):
    """Mean PSD per octave band in [lo, hi)."""
    out = []
    edge = lo
    while edge * 2 <= hi:
        sel = (f >= edge) & (f < 2 * edge)
        if sel.any():
            out.append((edge, float(np.mean(p[sel]))))
        edge *= 2
    return out


def loglog_slope(f, p, lo, hi):
    sel = (f >= lo) & (f <= hi) & (p > 0)
    return float(np.polyfit(np.log10(f[sel]), np.log10(p[sel]), 1)[0])


def single_segment(noise, mode="full", rate=1000.0, duration=10.0, seed=0, events=(), length_km=150.0, **station):
    """One 150 km segment fed by the input station (locked to the reference)."""
    from fiberlink.cascade import RunConfig, Scenario
    from fiberlink.channel import FiberSpan, LinkSegment
    from fiberlink.station import StationConfig

    seg = LinkSegment((FiberSpan(length_km, loss_per_km=0.2),), noise=noise)
    return Scenario((seg,), (StationConfig(**station),), RunConfig(mode, rate, duration, seed), events=tuple(events))


def cascade(noise, n=2, mode="full", rate=1000.0, duration=10.0, seed=0, events=(), detunings=None):
    from fiberlink.cascade import RunConfig, Scenario
    from fiberlink.channel import FiberSpan, LinkSegment
    from fiberlink.station import StationConfig

    detunings = detunings or [0.0] + [2e8] * (n - 1)
    segs = tuple(LinkSegment((FiberSpan(150.0, loss_per_km=0.2),), noise=noise) for _ in range(n))
    stations = tuple(StationConfig(initial_detuning_hz=d) for d in detunings)
    return Scenario(segs, stations, RunConfig(mode, rate, duration, seed), events=tuple(events))


ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:2d}. {name}: {detail}")
