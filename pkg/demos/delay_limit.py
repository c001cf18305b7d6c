"""How close does round-trip compensation get to the delay limit?

A single 150 km segment with white fiber phase noise is compensated by a
full servo-rate simulation.  Below the loop crossover the residual/free-
running ratio should follow 10 log10((2 pi f tau)^2 / 3): -51.5 dB at 1 Hz
for tau = 0.73 ms, rising 20 dB per decade.  At higher frequencies the finite
loop gain takes over, which the table also shows.

Runtime is about 15 s.
"""

import numpy as np

from fiberlink import FiberSpan, LinkSegment, NoiseModel, RunConfig, Scenario, StationConfig, run
from fiberlink.analysis import psd_welch, rejection_theory
from fiberlink.channel import one_way_delay

seg = LinkSegment((FiberSpan(150.0, loss_per_km=0.2),), noise=NoiseModel(((0, 1e-6),)))
tau = one_way_delay(seg)
station = StationConfig(pll1_bandwidth=100.0, tracker_bandwidth=400.0, pll2_bandwidth=300.0)
sc = Scenario((seg,), (station,), RunConfig("full", rate=4000.0, duration=161.0, seed=3))

out = run(sc)
print(f"one-way delay {tau * 1e3:.4f} ms; PLL2 closed at {out.lock_times()[0]:.3f} s")

skip = int(out.rate)  # drop the acquisition second
f, comp = psd_welch(out.end_to_end.samples[skip:], nseg=4, rate=out.rate)
_, free = psd_welch(out.free_running[0].samples[skip:], nseg=4, rate=out.rate)

print(f"{'band (Hz)':>14s} {'measured dB':>12s} {'delay limit dB':>15s}")
edges = np.logspace(-1, 1.5, 6)
for lo, hi in zip(edges[:-1], edges[1:]):
    b = (f >= lo) & (f < hi)
    meas = 10 * np.log10(comp[b].sum() / free[b].sum())
    theory = 10 * np.log10((free[b] * 10 ** (rejection_theory(f[b], tau) / 10)).sum() / free[b].sum())
    print(f"{lo:6.2f} - {hi:5.2f} {meas:12.1f} {theory:15.1f}")
