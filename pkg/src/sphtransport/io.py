"""Snapshot and run-report writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SNAPSHOT_FORMATS = ("csv", "vtk-legacy")


def _values(state):
    return np.asarray(getattr(state, "u_curr", state), dtype=float)


def write_snapshot_csv(ps, values, path):
    """``lambda,theta,u`` per node at 17 significant digits."""
    path = Path(path)
    u = _values(values)
    if len(u) != len(ps):
        raise ValueError(f"{len(u)} values for {len(ps)} nodes")
    try:
        with open(path, "w", newline="") as fh:
            fh.write("lambda,theta,u\n")
            for row in zip(ps.lam, ps.theta, u):
                fh.write("%.17g,%.17g,%.17g\n" % row)
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc.strerror}") from exc
    return path


def read_snapshot_csv(path):
    """Inverse of :func:`write_snapshot_csv`; returns ``(lam, theta, u)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["lambda", "theta", "u"]:
            raise ValueError(f"{path}: unexpected header {header}")
        data = np.array([[float(v) for v in row] for row in reader]).reshape(-1, 3)
    return data[:, 0], data[:, 1], data[:, 2]


def write_snapshot_vtk(ps, values, path, title="sphtransport snapshot"):
    """Legacy ASCII VTK POLYDATA: points, one vertex cell each, scalar ``u``."""
    path = Path(path)
    u = _values(values)
    n = len(ps)
    if len(u) != n:
        raise ValueError(f"{len(u)} values for {n} nodes")
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    lines += ["%.17g %.17g %.17g" % tuple(p) for p in ps.xyz]
    lines.append(f"VERTICES {n} {2 * n}")
    lines += [f"1 {i}" for i in range(n)]
    lines += [f"POINT_DATA {n}", "SCALARS u double 1", "LOOKUP_TABLE default"]
    lines += ["%.17g" % v for v in u]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc.strerror}") from exc
    return path


def emit_snapshot(ps, values, fmt, path):
    if fmt == "csv":
        return write_snapshot_csv(ps, values, path)
    if fmt == "vtk-legacy":
        return write_snapshot_vtk(ps, values, path)
    raise ValueError(f"unknown snapshot format {fmt!r}; choose from {SNAPSHOT_FORMATS}")


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def report_dict(report):
    return {k: _jsonable(v) for k, v in report.as_dict().items()}


def write_report(report, directory, stem="report"):
    """Write ``<stem>.txt`` (key: value lines) and ``<stem>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}.txt").write_text(report.as_text())
    (directory / f"{stem}.json").write_text(json.dumps(report_dict(report), indent=1) + "\n")
    return directory / f"{stem}.json"
