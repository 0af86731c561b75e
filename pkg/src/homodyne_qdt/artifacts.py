"""On-disk formats for datasets, results, validation reports and sweeps.

All floats are written with ``repr`` so every file parses back to the
exact values that were written. JSON is emitted with sorted keys.

Run directory layout::

    config.json               resolved run configuration
    manifest.json             config hash and the list of artifacts
    probes.csv                one row per probe (true/calibrated amplitude, phase, ...)
    histograms/probe_NNN.csv  x, density
    calibration.json          SPDC calibration per probe
    samples.csv               optional raw outcomes
    result.json               reconstruction result
    validation.json           validation reports
    validation/<name>.csv     x, predicted, measured, band_low, band_high
    sweep.csv                 delta_alpha, n_probes, delta_over_n, gamma_bar
    report/                   summary.txt, g.csv, gamma.csv, spread.csv
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import __version__
from .reconstruction import ReconstructionResult, SweepPoint
from .simulator import ProbeRecord, ProbeSpec
from .states import GridError, QuadratureGrid, QuadraturePdf


class SchemaError(ValueError):
    """A file parsed but does not match its expected layout."""


PROBE_COLUMNS = ("index", "amplitude_true", "phase_rad", "n_samples",
                 "amplitude_calibrated", "calibration_sigma", "out_of_range")
SAMPLE_COLUMNS = ("probe_index", "phase_rad", "amplitude_calibrated", "x")
CURVE_COLUMNS = ("x", "predicted", "measured", "band_low", "band_high")
SWEEP_COLUMNS = ("delta_alpha", "n_probes", "delta_over_n", "gamma_bar")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc


def write_csv(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path, columns) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != tuple(columns):
            raise SchemaError(f"{path}: header {r.fieldnames} != expected {list(columns)}")
        return list(r)


def _num(path, row, key, cast=float):
    try:
        return cast(row[key])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: field {key!r}: {row[key]!r} is not a number") from exc


# -- dataset ------------------------------------------------------------------

def histogram_path(run: Path, index: int) -> Path:
    return run / "histograms" / f"probe_{index:03d}.csv"


def write_dataset(run: Path, records, samples=None) -> list[Path]:
    """Probe table, one histogram file per probe, calibration JSON, optional samples."""
    written = [write_csv(run / "probes.csv", PROBE_COLUMNS, [
        (i, r.spec.amplitude_true, r.spec.phase, r.spec.n_samples,
         r.amplitude_calibrated, r.calibration_sigma, r.out_of_range)
        for i, r in enumerate(records)])]
    for i, r in enumerate(records):
        h = r.histogram
        written.append(write_csv(histogram_path(run, i), ("x", "density"),
                                 zip(h.grid.points, h.values)))
    written.append(write_calibration(
        run, [r.spec for r in records],
        [(r.amplitude_calibrated, r.calibration_sigma) for r in records]))
    if samples is not None:
        written.append(write_csv(run / "samples.csv", SAMPLE_COLUMNS, (
            (i, records[i].spec.phase, records[i].amplitude_calibrated, x)
            for i, xs in enumerate(samples) for x in xs)))
    return written


def write_calibration(run: Path, specs, calibrations) -> Path:
    """``calibrations`` holds one ``(amplitude, sigma)`` pair per probe spec."""
    return write_json(run / "calibration.json", {"probes": [
        {"index": i, "amplitude_true": s.amplitude_true, "phase_rad": s.phase,
         "amplitude_calibrated": a, "calibration_sigma": sig}
        for i, (s, (a, sig)) in enumerate(zip(specs, calibrations))]})


def read_histogram(path: Path, grid: QuadratureGrid) -> QuadraturePdf:
    rows = read_csv(path, ("x", "density"))
    x = np.array([_num(path, r, "x") for r in rows])
    dens = np.array([_num(path, r, "density") for r in rows])
    if x.size != grid.n_points or not np.allclose(x, grid.points, rtol=0, atol=1e-9):
        raise GridError(f"{path}: x column does not match the configured outcome grid")
    try:
        return QuadraturePdf(grid, dens)
    except ValueError as exc:
        raise SchemaError(f"{path}: field 'density': {exc}") from exc


def read_dataset(run: Path, grid: QuadratureGrid) -> list[ProbeRecord]:
    path = run / "probes.csv"
    records = []
    for row in read_csv(path, PROBE_COLUMNS):
        i = _num(path, row, "index", int)
        try:
            spec = ProbeSpec(_num(path, row, "amplitude_true"), _num(path, row, "phase_rad"),
                             _num(path, row, "n_samples", int))
        except ValueError as exc:
            raise SchemaError(f"{path}: probe {i}: {exc}") from exc
        records.append(ProbeRecord(
            spec,
            _num(path, row, "amplitude_calibrated"),
            _num(path, row, "calibration_sigma"),
            read_histogram(histogram_path(run, i), grid),
            _num(path, row, "out_of_range"),
        ))
    if not records:
        raise SchemaError(f"{path}: no probes")
    return records


def read_samples(path: Path) -> dict[int, np.ndarray]:
    """Raw outcomes grouped by probe index."""
    out: dict[int, list[float]] = {}
    for row in read_csv(path, SAMPLE_COLUMNS):
        out.setdefault(_num(path, row, "probe_index", int), []).append(_num(path, row, "x"))
    return {k: np.array(v) for k, v in out.items()}


# -- result, validation, sweep ---------------------------------------------------

def write_result(path: Path, result: ReconstructionResult) -> Path:
    return write_json(path, result.to_dict())


def read_result(path: Path) -> ReconstructionResult:
    d = read_json(path)
    try:
        return ReconstructionResult.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {type(exc).__name__}: {exc}") from exc


def curve_name(i: int, state_dict: dict) -> str:
    return f"{i:02d}_{state_dict['kind'].lower()}"


def write_validation(run: Path, reports) -> list[Path]:
    written = []
    docs = []
    for i, rep in enumerate(reports):
        d = rep.to_dict()
        d["curve_file"] = f"validation/{curve_name(i, d['state'])}.csv"
        docs.append(d)
        written.append(write_csv(run / d["curve_file"], CURVE_COLUMNS, zip(
            rep.predicted.grid.points, rep.predicted.values, rep.measured.values,
            rep.band_low, rep.band_high)))
    written.insert(0, write_json(run / "validation.json", {"reports": docs}))
    return written


def read_validation(path: Path) -> list[dict]:
    d = read_json(path)
    if not isinstance(d, dict) or not isinstance(d.get("reports"), list):
        raise SchemaError(f"{path}: field 'reports' missing or not a list")
    for i, r in enumerate(d["reports"]):
        for key in ("state", "tvd", "bhattacharyya"):
            if key not in r:
                raise SchemaError(f"{path}: reports[{i}]: field {key!r} missing")
    return d["reports"]


def write_sweep(path: Path, sweep) -> Path:
    return write_csv(path, SWEEP_COLUMNS, (
        (p.delta_alpha, p.n_probes, p.delta_over_n, p.gamma_bar) for p in sweep))


def read_sweep(path: Path) -> list[SweepPoint]:
    return [SweepPoint(_num(path, r, "delta_alpha"), _num(path, r, "n_probes", int),
                       _num(path, r, "delta_over_n"), _num(path, r, "gamma_bar"))
            for r in read_csv(path, SWEEP_COLUMNS)]


# -- manifest ------------------------------------------------------------------

def update_manifest(run: Path, config_hash: str, paths) -> Path:
    """Merge ``paths`` into the run manifest; entries are sorted, no timestamps."""
    path = run / "manifest.json"
    artifacts = set()
    if path.exists():
        old = read_json(path)
        if old.get("config_hash") == config_hash:
            artifacts.update(old.get("artifacts", []))
    artifacts.update(Path(p).relative_to(run).as_posix() for p in paths)
    return write_json(path, {
        "config_hash": config_hash,
        "package_version": __version__,
        "artifacts": sorted(artifacts),
    })
