"""Flat-file formats: point clouds, couplings, solve reports and result tables."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import PointCloud

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "format_value",
    "write_table",
    "read_table",
    "write_point_cloud",
    "read_point_cloud",
    "write_coupling",
    "read_coupling",
    "write_report",
    "read_report",
]


def format_value(v):
    """Render a cell; floats use 17 significant digits so they round-trip."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}"
    return "" if v is None else str(v)


def write_table(path, columns, rows, schema=SCHEMA_VERSION):
    """Write dict rows under a ``#schema=N`` comment line and a header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"#schema={schema}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])
    return path


def read_table(path):
    """Read a table written by :func:`write_table` as ``(columns, rows)`` of strings."""
    with Path(path).open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, [dict(zip(columns, r)) for r in reader]


def write_point_cloud(path, cloud):
    """CSV with header ``idx,x0,...,x{p-1}``."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.atleast_2d(cloud)
    p = pts.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["idx"] + [f"x{k}" for k in range(p)])
        for i, row in enumerate(pts):
            w.writerow([i] + [f"{v:.17g}" for v in row])


def read_point_cloud(path, manifold=None):
    """Read points back; returns a :class:`PointCloud` when ``manifold`` is given."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    pts = data[np.argsort(data[:, 0], kind="stable"), 1:]
    if manifold is None:
        return pts
    return PointCloud(pts, manifold)


def write_coupling(path, coupling):
    """COO triplets ``i,j,value`` of the nonzero plan entries, row-major."""
    i, j, v = coupling.triplets()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for a, b, c in zip(i, j, v):
            w.writerow([int(a), int(b), f"{c:.17g}"])


def read_coupling(path, n):
    from .qot_solver import Coupling

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return Coupling(sp.csr_matrix((n, n)))
    M = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))
    return Coupling(M.tocsr())


def write_report(path, report):
    Path(path).write_text(report.as_text())


def read_report(path):
    """Parse ``key = value`` lines into a dict of strings."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
