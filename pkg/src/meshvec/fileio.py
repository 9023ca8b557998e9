"""File formats: OFF/OBJ meshes, CSV exports, legacy VTK, Matrix Market.

All writers go through :func:`atomic_write`, which writes to a temp file in
the target directory and renames it into place, so reruns overwrite outputs
atomically.
"""

import csv
import io
import json
import os
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .mesh import LatLonMap, SimplicialComplex, build_complex


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# -- meshes ----------------------------------------------------------------

def write_off(path, complex: SimplicialComplex):
    buf = io.StringIO()
    buf.write("OFF\n")
    buf.write(f"{complex.num_vertices} {complex.num_faces} {complex.num_edges}\n")
    for x, y, z in complex.positions:
        buf.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
    for a, b, c in complex.faces:
        buf.write(f"3 {a} {b} {c}\n")
    atomic_write(path, buf.getvalue())


def read_off(path) -> SimplicialComplex:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        if k != 3:
            raise ValueError(f"{path}: only triangular faces supported")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += 1 + k
    return build_complex(verts, np.array(faces, dtype=np.int64))


def write_obj(path, complex: SimplicialComplex):
    buf = io.StringIO()
    for x, y, z in complex.positions:
        buf.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
    for a, b, c in complex.faces:
        buf.write(f"f {a + 1} {b + 1} {c + 1}\n")
    atomic_write(path, buf.getvalue())


def read_obj(path) -> SimplicialComplex:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            if len(idx) != 3:
                raise ValueError(f"{path}: only triangular faces supported")
            faces.append(idx)
    return build_complex(np.array(verts), np.array(faces, dtype=np.int64))


def read_mesh(path) -> SimplicialComplex:
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        return read_off(path)
    if suffix == ".obj":
        return read_obj(path)
    raise ValueError(f"unsupported mesh format: {path}")


def write_latlon_map(path, latlon_map: LatLonMap):
    buf = io.StringIO()
    buf.write("vertex_id,lat_deg,lon_deg\n")
    for vid, (lat, lon) in enumerate(latlon_map.vertex_latlon):
        buf.write(f"{vid},{float(lat)!r},{float(lon)!r}\n")
    atomic_write(path, buf.getvalue())


def read_latlon_map(path) -> LatLonMap:
    rows = _read_csv(path, ["vertex_id", "lat_deg", "lon_deg"])
    latlon = np.zeros((len(rows), 2))
    for row in rows:
        latlon[int(row["vertex_id"])] = (float(row["lat_deg"]),
                                         float(row["lon_deg"]))
    return LatLonMap(latlon)


# -- spectra ----------------------------------------------------------------

def write_spectrum_csv(path, eigenvalues):
    buf = io.StringIO()
    buf.write("index,eigenvalue\n")
    for i, lam in enumerate(eigenvalues):
        buf.write(f"{i},{float(lam)!r}\n")
    atomic_write(path, buf.getvalue())


def write_matrix_csv(path, matrix, header=None):
    """CSV matrix dump, one column per mode."""
    buf = io.StringIO()
    if header:
        buf.write(",".join(header) + "\n")
    for row in np.atleast_2d(matrix):
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    atomic_write(path, buf.getvalue())


# -- vector fields ------------------------------------------------------------

def write_field_csv(path, complex: SimplicialComplex, vectors):
    buf = io.StringIO()
    buf.write("vertex_id,x,y,z,vx,vy,vz\n")
    for vid, (p, v) in enumerate(zip(complex.positions, vectors)):
        buf.write(f"{vid},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},"
                  f"{float(v[0])!r},{float(v[1])!r},{float(v[2])!r}\n")
    atomic_write(path, buf.getvalue())


def read_field_csv(path):
    """Returns (vertex_ids, vectors) from a field or posterior-mean CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        if {"vertex_id", "vx", "vy", "vz"} <= set(names):
            cols = ("vx", "vy", "vz")
        elif {"vertex_id", "mean_x", "mean_y", "mean_z"} <= set(names):
            cols = ("mean_x", "mean_y", "mean_z")
        else:
            raise ValueError(f"{path}: unrecognized field CSV header {names}")
        ids, vecs = [], []
        for row in reader:
            ids.append(int(row["vertex_id"]))
            vecs.append([float(row[c]) for c in cols])
    return np.array(ids, dtype=np.int64), np.array(vecs, dtype=np.float64)


def write_vtk(path, complex: SimplicialComplex, vectors, name="field"):
    """Legacy ASCII VTK POLYDATA with per-point vectors."""
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write("meshvec field export\nASCII\nDATASET POLYDATA\n")
    buf.write(f"POINTS {complex.num_vertices} double\n")
    for x, y, z in complex.positions:
        buf.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
    nf = complex.num_faces
    buf.write(f"POLYGONS {nf} {4 * nf}\n")
    for a, b, c in complex.faces:
        buf.write(f"3 {a} {b} {c}\n")
    buf.write(f"POINT_DATA {complex.num_vertices}\n")
    buf.write(f"VECTORS {name} double\n")
    for vx, vy, vz in vectors:
        buf.write(f"{float(vx)!r} {float(vy)!r} {float(vz)!r}\n")
    atomic_write(path, buf.getvalue())


# -- observations and posteriors ----------------------------------------------

def _read_csv(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        missing = set(required) - set(names)
        if missing:
            raise ValueError(f"{path}: missing CSV columns {sorted(missing)}")
        return list(reader)


def read_observation_csv(path):
    """Read an observation file in either supported layout.

    Returns ``("ambient", vertex_ids, values)`` for a
    ``vertex_id,vx,vy,vz`` header or ``("latlon", latlon, uv)`` for a
    ``lat_deg,lon_deg,u,v`` header.
    """
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if {"vertex_id", "vx", "vy", "vz"} <= set(header):
        rows = _read_csv(path, ["vertex_id", "vx", "vy", "vz"])
        ids = np.array([int(r["vertex_id"]) for r in rows], dtype=np.int64)
        vals = np.array([[float(r["vx"]), float(r["vy"]), float(r["vz"])]
                         for r in rows])
        return "ambient", ids, vals
    if {"lat_deg", "lon_deg", "u", "v"} <= set(header):
        rows = _read_csv(path, ["lat_deg", "lon_deg", "u", "v"])
        latlon = np.array([[float(r["lat_deg"]), float(r["lon_deg"])]
                           for r in rows])
        uv = np.array([[float(r["u"]), float(r["v"])] for r in rows])
        return "latlon", latlon, uv
    raise ValueError(f"{path}: unrecognized observation header {header}")


def write_posterior_csv(path, mean, variance):
    buf = io.StringIO()
    buf.write("vertex_id,mean_x,mean_y,mean_z,var\n")
    for vid, (m, var) in enumerate(zip(mean, variance)):
        buf.write(f"{vid},{float(m[0])!r},{float(m[1])!r},{float(m[2])!r},{float(var)!r}\n")
    atomic_write(path, buf.getvalue())


def write_json(path, payload):
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- operators ----------------------------------------------------------------

def dump_operator(path, matrix):
    """Debug dump of a sparse or dense operator as Matrix Market."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mat = matrix if scipy.sparse.issparse(matrix) else np.asarray(matrix)
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(mat))
