"""Command-line front end: ``fiberlink simulate | analyze | budget | freqplan``.

Exit status: 0 success, 1 domain error (a run precondition, a failed
frequency-plan check, a malformed bundle), 2 usage error (bad arguments or a
scenario file that fails schema validation).

The default output directory is ``$FIBERLINK_OUT`` if set, else
``./fiberlink-out``.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .bundle import (
    BundleError,
    fmt,
    read_manifest,
    read_modes,
    read_phase,
    read_series,
    write_bundle,
    write_csv,
)
from .cascade import find_slips, loop_time_constant, run
from .channel import link_budget, one_way_delay
from .scenario import (
    ScenarioError,
    check_top_level,
    parse_links,
    parse_losses,
    parse_stations,
    read_document,
    scenario_from_dict,
)
from .series import CARRIER_HZ, PhaseSeries
from .station import Mode, freq_plan_delivered_offset

OUT_ENV = "FIBERLINK_OUT"
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "fiberlink-out"))


def _load_document(source: str) -> tuple[dict, str]:
    """Scenario TOML, packaged preset, or a bundle manifest to replay."""
    p = Path(source)
    if p.suffix == ".json" and p.is_file():
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{p}:{exc.lineno}: {exc.msg}") from None
        if "scenario" not in doc:
            raise ScenarioError(f"{p}: not a run manifest (no 'scenario' entry)")
        return doc["scenario"], doc.get("source", str(p))
    try:
        return read_document(source)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


# --- simulate -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    doc, source = _load_document(args.scenario)
    doc = copy.deepcopy(doc)
    if args.seed is not None:
        doc.setdefault("run", {})
        if isinstance(doc["run"], dict):
            doc["run"]["seed"] = args.seed
    loaded = scenario_from_dict(doc, source=source)
    out = run(loaded.scenario)
    paths = write_bundle(out, args.out, doc, source)
    for p in paths:
        print(p)
    locks = out.lock_times()
    for i, t in enumerate(locks):
        print(f"station {i + 1}: " + ("never locked" if t is None else f"PLL2 closed at {t:.3f} s"))
    return EXIT_OK


# --- analyze ------------------------------------------------------------------


def _counter(args, manifest) -> analysis.CounterModel:
    counter = (manifest or {}).get("scenario", {}).get("counter", {})
    gate = args.gate if args.gate is not None else counter.get("gate_s", 1.0)
    bw = counter.get("bandwidth_hz", 10.0)
    if args.bandwidth is not None:
        bw = None if args.bandwidth.lower() == "none" else float(args.bandwidth)
    return analysis.CounterModel(gate=gate, measurement_bandwidth=bw)


def _scenario(manifest):
    if manifest is None:
        return None
    return scenario_from_dict(manifest["scenario"], source=manifest.get("source", "")).scenario


def cmd_analyze(args) -> int:
    d = Path(args.bundle)
    if not d.is_dir():
        raise UsageError(f"{d}: not a bundle directory")
    if not (args.adev or args.psd or args.rejection or args.slips):
        raise UsageError("choose at least one of --adev --psd --rejection --slips")
    out_dir = Path(args.out) if args.out else d
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(d)
    e2e_full = read_phase(d / "end_to_end.csv", "phase_rad")
    start = _analysis_start(d, manifest, args.start)
    e2e = _trim(e2e_full, start)
    written = []

    if args.adev:
        c = _counter(args, manifest)
        y = analysis.counter_read(e2e, c, _carrier(manifest))
        r = analysis.adev(y, overlapping=args.overlapping)
        p = out_dir / "adev.csv"
        write_csv(p, ["tau_s", "adev", "n_samples", "confidence"], zip(r.taus, r.adev, r.n_samples, r.confidence))
        written.append(p)

    if args.psd or args.rejection:
        rate, t0, free = read_series(d / "free_running.csv")
        segs = [k for k in free if k != "time_s"]
        f, pe = analysis.psd_welch(e2e, nseg=args.nseg)
        pf = [analysis.psd_welch(_trim(PhaseSeries(free[k], rate, t0), start), nseg=args.nseg)[1] for k in segs]
        if args.psd:
            p = out_dir / "psd.csv"
            header = ["f_hz", "end_to_end_rad2_hz"] + [k.replace("_phase_rad", "_free_rad2_hz") for k in segs]
            write_csv(p, header, zip(f, pe, *pf))
            written.append(p)
        if args.rejection:
            # Cascade reference: N times the first segment's free-running PSD.
            fr, db = analysis.measure_rejection((f, pf[0]), (f, pe), free_multiplier=len(segs))
            sc = _scenario(manifest)
            tau = one_way_delay(sc.segments[0]) if sc is not None else None
            rows = []
            for fi, di in zip(fr, db):
                if fi <= 0:
                    continue
                th = ""
                if tau is not None and fi < 1 / (4 * tau):
                    th = analysis.rejection_theory(fi, tau)
                rows.append((fi, di if np.isfinite(di) else "nan", th))
            p = out_dir / "rejection.csv"
            write_csv(p, ["f_hz", "rejection_db", "theory_db"], rows)
            written.append(p)

    if args.slips:
        p = out_dir / "slips.csv"
        write_csv(p, ["time_s", "kind", "location", "magnitude_ps"], _slips(d, e2e_full, manifest, args))
        written.append(p)

    for p in written:
        print(p)
    return EXIT_OK


def _analysis_start(d: Path, manifest, start: float | None) -> float:
    """Explicit ``--start``, else 10 loop time constants after every station locked."""
    if start is not None:
        return start
    modes_path = d / "modes.csv"
    if not modes_path.is_file():
        return 0.0
    modes = read_modes(modes_path)
    stations = sorted({s for _, s, _ in modes})
    first = {}
    for t, s, m in modes:
        if m == Mode.PLL2_CLOSED.value and s not in first:
            first[s] = t
    if len(first) < len(stations):
        raise BundleError(f"{modes_path}: a station never reached PLL2_CLOSED; pass --start")
    sc = _scenario(manifest)
    settle = 10 * max(loop_time_constant(c) for c in sc.stations) if sc is not None else 1.0
    return max(first.values(), default=0.0) + settle


def _trim(x: PhaseSeries, start: float) -> PhaseSeries:
    i = max(0, int(math.ceil((start - x.t0) * x.rate - 1e-9)))
    if x.samples.size - i < 4:
        raise BundleError(f"fewer than 4 samples after t = {start:g} s")
    return PhaseSeries(x.samples[i:], x.rate, x.t0 + i / x.rate)


def _carrier(manifest) -> float:
    sc = _scenario(manifest)
    return sc.segments[-1].carrier_hz if sc is not None else CARRIER_HZ


def _slips(d: Path, e2e, manifest, args):
    rate, t0, cols = read_series(d / "corrections.csv")
    segs = sorted({k.split("_")[0] for k in cols if k.startswith("seg")}, key=lambda s: int(s[3:]))
    corrections = [PhaseSeries(cols[f"{s}_phase_rad"], rate, t0) for s in segs]
    sc = _scenario(manifest)
    if sc is not None and args.threshold_ps is None and args.settle is None:
        modes = read_modes(d / "modes.csv")
        timelines = [[(t, Mode(m)) for t, s, m in modes if s == k + 1] for k in range(len(sc.stations))]
        rows = find_slips(corrections, e2e, sc, timelines, len(e2e) / e2e.rate)
        return sorted(rows)
    # Bundle without a manifest, or explicit overrides: whole records.
    thr = 100.0 if args.threshold_ps is None else args.threshold_ps
    settle = 1.0 if args.settle is None else args.settle
    rows = []
    for name, c in zip(segs, corrections):
        for ev in analysis.detect_cycle_slips(c, thr, settle=settle):
            rows.append((ev.time, "slip", f"segment{int(name[3:])}.correction", ev.magnitude_ps))
    return sorted(rows)


# --- budget / freqplan ----------------------------------------------------------


def _doc_for_tables(source: str) -> dict:
    doc, _ = _load_document(source)
    check_top_level(doc)
    return doc


def cmd_budget(args) -> int:
    doc = _doc_for_tables(args.scenario)
    links = parse_links(doc)
    losses = parse_losses(doc)
    rows = []
    for i, seg in enumerate(links):
        b = link_budget(seg, losses)
        print(f"link {i + 1}  ({seg.length_km:g} km)")
        for name, db in b.entries:
            print(f"  {name:<48s} {db:8.2f} dB")
            rows.append((i + 1, name, db))
        print(f"  {'one-way total':<48s} {b.one_way_db:8.2f} dB")
        print(f"  {'passive round trip':<48s} {b.passive_round_trip_db:8.2f} dB")
        print(f"  {'round trip with amplifiers':<48s} {b.round_trip_db:8.2f} dB")
        print(f"  {'margin (max ' + fmt(losses.max_round_trip_db) + ' dB round trip)':<48s} {b.margin_db:8.2f} dB")
        if b.amplification_required:
            print("  amplification required" + ("" if b.closes else " (margin still negative)"))
        rows += [
            (i + 1, "one_way_total", b.one_way_db),
            (i + 1, "passive_round_trip", b.passive_round_trip_db),
            (i + 1, "round_trip", b.round_trip_db),
            (i + 1, "margin", b.margin_db),
        ]
    if args.csv:
        write_csv(Path(args.csv), ["link", "item", "db"], rows)
    return EXIT_OK


def cmd_freqplan(args) -> int:
    doc = _doc_for_tables(args.scenario)
    stations = parse_stations(doc)
    plans = [s.plan for s in stations]
    try:
        coeffs = freq_plan_delivered_offset(plans, len(plans))
    except ValueError as exc:
        print(f"FAIL  {exc}")
        return EXIT_DOMAIN
    ok = True
    print(f"{'source':<16s} {'coefficient':>12s}  status")
    for name, c in coeffs.items():
        if name == "nu":
            status = "PASS" if c == 1 else "FAIL"
        else:
            status = "PASS" if c == 0 else "FAIL"
        ok &= status == "PASS"
        label = name if name == "nu" else f"{name} (station {name[2:]})"
        print(f"{label:<16s} {str(c):>12s}  {status}")
    for i, p in enumerate(plans):
        a, b = p.divided_frequencies
        status = "PASS" if a == b else "FAIL"
        ok &= status == "PASS"
        print(f"station {i + 1} dividers: {a} Hz vs {b} Hz  {status}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_DOMAIN


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fiberlink", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write a CSV bundle")
    p.add_argument("scenario", help="scenario TOML, preset name (testbed-2x150, renater-300) or run_manifest.json")
    p.add_argument("--out", type=Path, default=None, help=f"bundle directory (default ${OUT_ENV} or ./fiberlink-out)")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="derive ADEV / PSD / rejection / slip reports from a bundle")
    p.add_argument("bundle", help="bundle directory written by simulate")
    p.add_argument("--adev", action="store_true")
    p.add_argument("--psd", action="store_true")
    p.add_argument("--rejection", action="store_true")
    p.add_argument("--slips", action="store_true")
    p.add_argument("--gate", type=float, default=None, help="counter gate, s")
    p.add_argument("--bandwidth", default=None, help="counter pre-filter bandwidth, Hz, or 'none'")
    p.add_argument("--overlapping", action="store_true", help="overlapping Allan deviation")
    p.add_argument("--nseg", type=int, default=8, help="Welch segments")
    p.add_argument("--threshold-ps", type=float, default=None, help="slip threshold (no manifest: default 100)")
    p.add_argument("--settle", type=float, default=None, help="slip settle window, s (no manifest: default 1)")
    p.add_argument("--start", type=float, default=None, help="analysis start, s (default: once every station is locked)")
    p.add_argument("--out", default=None, help="report directory (default: the bundle)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("budget", help="itemized attenuation budget per link")
    p.add_argument("scenario")
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("freqplan", help="exact LO sensitivity of the delivered frequency")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_freqplan)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "out", None) is None and args.command == "simulate":
        args.out = default_out()
    try:
        return args.func(args)
    except (ScenarioError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BundleError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
