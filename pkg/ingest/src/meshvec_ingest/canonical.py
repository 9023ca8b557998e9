"""Canonical observation CSV: the file format the downscaling CLI consumes.

Layout: header ``lat_deg,lon_deg,u,v``, longitude normalized to
[-180, 180), rows deduplicated and stable-sorted by (lat, lon), floats
written with shortest round-trip ``repr``. With normalization enabled the
vectors are scaled so the mean norm is exactly 1 and the factor lands in the
JSON sidecar so the primary pipeline can undo it. Identical inputs produce
byte-identical files.
"""

import json
import os
from pathlib import Path

import numpy as np

from .datasets import EmptyInput, GriddedWind, PointObservations

HEADER = "lat_deg,lon_deg,u,v"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _as_points(data) -> PointObservations:
    if isinstance(data, GriddedWind):
        return data.to_points()
    if isinstance(data, PointObservations):
        return data
    raise TypeError(f"cannot write {type(data).__name__} as canonical CSV")


def write_canonical(data, normalize: bool, out_path) -> Path:
    """Write the canonical CSV plus its metadata sidecar.

    Returns the CSV path; the sidecar lands next to it with a ``.json``
    suffix appended.

    Raises
    ------
    EmptyInput
        If there are no rows to write.
    """
    points = _as_points(data)
    if len(points) == 0:
        raise EmptyInput("no observations to write")
    lats = points.lats
    lons = ((points.lons + 180.0) % 360.0) - 180.0
    if (np.abs(lats) > 90.0).any():
        raise ValueError("latitude outside [-90, 90]")
    u, v = points.u.copy(), points.v.copy()

    # deduplicate exact (lat, lon) repeats, then stable-sort by lat, lon
    keys = np.stack([lats, lons], axis=1)
    _, first = np.unique(keys, axis=0, return_index=True)
    keep = np.sort(first)
    lats, lons, u, v = lats[keep], lons[keep], u[keep], v[keep]
    order = np.lexsort((lons, lats))
    lats, lons, u, v = lats[order], lons[order], u[order], v[order]

    factor = 1.0
    if normalize:
        factor = float(np.mean(np.hypot(u, v)))
        if factor == 0.0:
            raise ValueError("cannot normalize an all-zero field")
        u /= factor
        v /= factor

    lines = [HEADER]
    lines += [f"{float(a)!r},{float(b)!r},{float(c)!r},{float(d)!r}"
              for a, b, c, d in zip(lats, lons, u, v)]
    out_path = Path(out_path)
    _atomic_write(out_path, "\n".join(lines) + "\n")

    sidecar = dict(points.meta)
    sidecar.update({
        "rows": int(len(lats)),
        "normalized": bool(normalize),
        "normalization_factor": factor,
    })
    _atomic_write(out_path.with_name(out_path.name + ".json"),
                  json.dumps(sidecar, indent=2, sort_keys=True, default=str)
                  + "\n")
    return out_path


def read_canonical(path):
    """Load a canonical CSV (and sidecar when present).

    Returns ``(PointObservations, sidecar_dict)``.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != HEADER:
        raise ValueError(f"{path}: expected header {HEADER!r}")
    rows = np.array([[float(x) for x in line.split(",")]
                     for line in lines[1:]])
    if rows.size == 0:
        rows = rows.reshape(0, 4)
    sidecar_path = path.with_name(path.name + ".json")
    sidecar = (json.loads(sidecar_path.read_text())
               if sidecar_path.exists() else {})
    points = PointObservations(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3],
                               sidecar)
    return points, sidecar


def validate_canonical(path):
    """Schema check: header, ranges, duplicates. Raises ValueError."""
    points, _ = read_canonical(path)
    if (np.abs(points.lats) > 90.0).any():
        raise ValueError("latitude outside [-90, 90]")
    if (points.lons < -180.0).any() or (points.lons >= 180.0).any():
        raise ValueError("longitude outside [-180, 180)")
    keys = np.stack([points.lats, points.lons], axis=1)
    if len(np.unique(keys, axis=0)) != len(keys):
        raise ValueError("duplicate (lat, lon) rows")
    return points
