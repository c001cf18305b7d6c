"""A cascaded link living through a phase jump and a fading event.

Two 150 km spools joined by a repeater station.  At 8 s a 300 ps delay step
hits the first spool; the station's correction absorbs it and the slip
detector reports it.  At 14 s the beat note on the repeater fades by 40 dB
for half a second: the station falls back to scanning and relocks on its own.
"""

from dataclasses import replace

from fiberlink import Event, load_scenario, run

sc = load_scenario("testbed-2x150").scenario
events = (
    Event(8.0, "phase_jump", 300.0, segment=0),
    Event(14.0, "power_step", -40.0, station=1),
    Event(14.5, "power_step", 40.0, station=1),
)
sc = replace(sc, run=replace(sc.run, duration=40.0), events=events)
out = run(sc)

print("mode timeline")
for t, s, mode in out.modes:
    print(f"  {t:8.3f} s  station {s + 1}  {mode}")

print("\nevent log")
for t, kind, where, value in out.events:
    print(f"  {t:8.3f} s  {kind:<24s} {where:<22s} {value:g}")
