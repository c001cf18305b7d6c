"""CSV bundles: the on-disk form of a run and of its analysis reports.

Every file is UTF-8, comma separated, with one header row.  Floats are
written with ``repr`` (shortest round-trip form), so the same run always
produces the same bytes.  Column units are part of the names.

=================  ==========================================================
file               columns
=================  ==========================================================
end_to_end.csv     time_s, phase_rad
free_running.csv   time_s, seg<k>_phase_rad ...
corrections.csv    time_s, seg<k>_phase_rad, seg<k>_aom1_offset_hz ...
modes.csv          time_s, station, mode
events.csv         time_s, kind, location, value, unit
adev.csv           tau_s, adev, n_samples, confidence
psd.csv            f_hz, end_to_end_rad2_hz, seg<k>_free_rad2_hz ...
rejection.csv      f_hz, rejection_db, theory_db
slips.csv          time_s, kind, location, magnitude_ps
=================  ==========================================================

Stations and segments are numbered from 1 in files.
"""

from __future__ import annotations

import csv
import json
from importlib import metadata
from pathlib import Path

import numpy as np

from .cascade import RunOutput
from .series import PhaseSeries

FORMAT = "fiberlink-bundle/1"
MANIFEST = "run_manifest.json"

EVENT_UNITS = {
    "phase_jump_injected": "ps",
    "power_step_injected": "dB",
    "slip": "ps",
    "cycle_slip": "ps",
    "unlock": "",
    "relock": "",
    "saturation": "count",
    "lock_window_excursion": "count",
}


class BundleError(ValueError):
    """Malformed bundle file."""


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _columns(path: Path, header: list[str], cols: list[np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*[c.tolist() for c in cols]):
            fh.write(",".join(map(repr, row)) + "\n")


def package_version() -> str:
    try:
        return metadata.version("fiberlink")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def write_bundle(out: RunOutput, directory: Path, document: dict, source: str) -> list[Path]:
    """Write the run files and the manifest; returns the paths written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = len(out.end_to_end)
    t = np.arange(n) / out.rate
    nseg = len(out.corrections)
    files = []

    p = d / "end_to_end.csv"
    _columns(p, ["time_s", "phase_rad"], [t, out.end_to_end.samples])
    files.append(p)

    p = d / "free_running.csv"
    _columns(p, ["time_s"] + [f"seg{k + 1}_phase_rad" for k in range(nseg)], [t] + [f.samples for f in out.free_running])
    files.append(p)

    p = d / "corrections.csv"
    header, cols = ["time_s"], [t]
    for k, (c, hz) in enumerate(zip(out.corrections, out.aom1_hz)):
        header += [f"seg{k + 1}_phase_rad", f"seg{k + 1}_aom1_offset_hz"]
        cols += [c.samples, hz]
    _columns(p, header, cols)
    files.append(p)

    p = d / "modes.csv"
    write_csv(p, ["time_s", "station", "mode"], ((tm, s + 1, m) for tm, s, m in out.modes))
    files.append(p)

    p = d / "events.csv"
    write_csv(p, ["time_s", "kind", "location", "value", "unit"], ((tm, k, loc, v, EVENT_UNITS.get(k, "")) for tm, k, loc, v in out.events))
    files.append(p)

    manifest = {
        "format": FORMAT,
        "package": "fiberlink",
        "version": package_version(),
        "source": source,
        "seed": document.get("run", {}).get("seed", 0),
        "samples": n,
        "rate_hz": out.rate,
        "files": [f.name for f in files],
        "scenario": document,
    }
    p = d / MANIFEST
    p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append(p)
    return files


# --- reading ------------------------------------------------------------------


def read_table(path: Path, expected: list[str] | None = None, prefix: str | None = None) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV file; structural errors name the line."""
    path = Path(path)
    if not path.is_file():
        raise BundleError(f"{path}: missing")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise BundleError(f"{path}:1: empty file, expected a header row")
    header = rows[0]
    if expected is not None and header != expected:
        raise BundleError(f"{path}:1: header {header} does not match {expected}")
    if prefix is not None and (not header or header[0] != prefix):
        raise BundleError(f"{path}:1: first column must be {prefix!r}")
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise BundleError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
    return header, body


def _floats(path: Path, header: list[str], body: list[list[str]]) -> np.ndarray:
    out = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        try:
            out[i] = [float(x) for x in r]
        except ValueError:
            raise BundleError(f"{path}:{i + 2}: non-numeric field in {r}") from None
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out).all(axis=1))[0])
        raise BundleError(f"{path}:{bad + 2}: non-finite value")
    return out


def _rate(path: Path, t: np.ndarray) -> float:
    if t.size < 2:
        raise BundleError(f"{path}: need at least two samples")
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.flatnonzero(dt <= 0)[0])
        raise BundleError(f"{path}:{bad + 3}: time_s must increase")
    step = float(np.median(dt))
    if np.max(np.abs(dt - step)) > 1e-6 * step:
        bad = int(np.argmax(np.abs(dt - step)))
        raise BundleError(f"{path}:{bad + 3}: samples are not uniformly spaced")
    return 1.0 / step


def read_series(path: Path, prefix: str = "time_s") -> tuple[float, float, dict[str, np.ndarray]]:
    """(rate, t0, {column: values}) for a uniformly sampled time-series CSV."""
    header, body = read_table(path, prefix=prefix)
    data = _floats(Path(path), header, body)
    t = data[:, 0]
    rate = _rate(Path(path), t)
    return rate, float(t[0]), {h: data[:, j] for j, h in enumerate(header)}


def read_phase(path: Path, column: str) -> PhaseSeries:
    rate, t0, cols = read_series(path)
    if column not in cols:
        raise BundleError(f"{path}:1: missing column {column!r}")
    return PhaseSeries(cols[column], rate, t0)


def read_modes(path: Path) -> list[tuple[float, int, str]]:
    header, body = read_table(path, expected=["time_s", "station", "mode"])
    out = []
    for i, (t, s, m) in enumerate(body, start=2):
        try:
            out.append((float(t), int(s), m))
        except ValueError:
            raise BundleError(f"{path}:{i}: malformed row {[t, s, m]}") from None
    return out


def read_manifest(directory: Path) -> dict | None:
    p = Path(directory) / MANIFEST
    if not p.is_file():
        return None
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"{p}:{exc.lineno}: {exc.msg}") from None
    if doc.get("format") != FORMAT:
        raise BundleError(f"{p}: unsupported bundle format {doc.get('format')!r}")
    return doc
