"""Embedded triangle meshes: construction, validation, and generators.

A mesh is stored as a :class:`SimplicialComplex`: vertex positions in 3-space,
counterclockwise-oriented faces, and derived edges with a canonical
low-index-to-high-index orientation. All signed incidence used by the DEC
operators follows from that canonical edge orientation, so results do not
depend on the order faces were supplied in.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError, cKDTree

from .errors import (
    DegenerateFace,
    DegenerateHull,
    EmptyDomain,
    InconsistentOrientation,
    NonManifoldEdge,
    UnmappedLocation,
    ZeroNormal,
)

# Faces with area below this fraction of the mean face area are degenerate.
DEGENERATE_AREA_TOL = 1e-12


class SimplicialComplex:
    """Oriented 2-manifold triangle mesh embedded in R^3.

    Instances are immutable after construction (arrays are marked read-only)
    and safe to share across threads. Use :func:`build_complex` rather than
    calling the constructor directly; it derives the edge structure and
    validates the manifold and orientation conditions.

    Attributes
    ----------
    positions : (V, 3) float array
        Vertex coordinates.
    faces : (F, 3) int array
        Vertex indices per face, counterclockwise.
    edges : (E, 2) int array
        Derived edges, each stored (i, j) with i < j.
    face_edges : (F, 3) int array
        Edge index of each face side ``(v_s, v_{s+1})``.
    face_edge_signs : (F, 3) int array
        +1 where the face traverses the edge low-to-high, else -1.
    edge_faces : (E, 2) int array
        Incident face indices per edge; second entry -1 for boundary edges.
    boundary_edges : (B,) int array
        Indices into ``edges`` of edges with a single incident face.
    boundary_vertices : int array
        Sorted vertex indices appearing in any boundary edge.
    """

    def __init__(self, positions, faces, edges, face_edges, face_edge_signs,
                 edge_faces, boundary_edges, boundary_vertices):
        self.positions = positions
        self.faces = faces
        self.edges = edges
        self.face_edges = face_edges
        self.face_edge_signs = face_edge_signs
        self.edge_faces = edge_faces
        self.boundary_edges = boundary_edges
        self.boundary_vertices = boundary_vertices
        for arr in (positions, faces, edges, face_edges, face_edge_signs,
                    edge_faces, boundary_edges, boundary_vertices):
            arr.setflags(write=False)
        self._face_normals = None
        self._face_areas = None

    @property
    def num_vertices(self):
        return self.positions.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_faces(self):
        return self.faces.shape[0]

    @property
    def euler_characteristic(self):
        return self.num_vertices - self.num_edges + self.num_faces

    @property
    def has_boundary(self):
        return self.boundary_edges.size > 0

    def _face_geometry(self):
        if self._face_normals is None:
            p = self.positions[self.faces]
            cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
            norms = np.linalg.norm(cross, axis=1)
            self._face_areas = 0.5 * norms
            self._face_normals = cross / norms[:, None]
        return self._face_normals, self._face_areas

    @property
    def face_normals(self):
        return self._face_geometry()[0]

    @property
    def face_areas(self):
        return self._face_geometry()[1]

    @property
    def total_area(self):
        return float(self.face_areas.sum())

    def corner_angles(self):
        """Interior angle of each face at each of its 3 corners, shape (F, 3)."""
        p = self.positions[self.faces]
        angles = np.empty((self.num_faces, 3))
        for s in range(3):
            u = p[:, (s + 1) % 3] - p[:, s]
            v = p[:, (s + 2) % 3] - p[:, s]
            cu = np.linalg.norm(u, axis=1)
            cv = np.linalg.norm(v, axis=1)
            cosang = np.einsum("ij,ij->i", u, v) / (cu * cv)
            angles[:, s] = np.arccos(np.clip(cosang, -1.0, 1.0))
        return angles

    def __repr__(self):
        return (f"SimplicialComplex(V={self.num_vertices}, E={self.num_edges}, "
                f"F={self.num_faces}, chi={self.euler_characteristic}, "
                f"boundary={'yes' if self.has_boundary else 'no'})")


@dataclass(frozen=True)
class VertexGeometry:
    """Per-vertex geometry derived from a complex.

    ``normals`` are unit vectors from the angle-weighted sum of incident face
    normals; ``dual_areas`` are barycentric (one third of each incident face),
    so they sum to ``total_area``.
    """

    normals: np.ndarray
    dual_areas: np.ndarray
    total_area: float


def build_complex(positions, faces) -> SimplicialComplex:
    """Build and validate a :class:`SimplicialComplex`.

    Parameters
    ----------
    positions : (V, 3) or (V, 2) array_like
        Vertex coordinates; 2-D input is padded with z = 0.
    faces : (F, 3) array_like
        Counterclockwise vertex triples.

    Raises
    ------
    DegenerateFace
        Repeated vertex in a face, or face area below ``1e-12`` of the mean.
    NonManifoldEdge
        An edge with more than two incident faces.
    InconsistentOrientation
        Two incident faces traverse a shared edge in the same direction.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] not in (2, 3):
        raise ValueError("positions must be (V, 2) or (V, 3)")
    if positions.shape[1] == 2:
        positions = np.column_stack([positions, np.zeros(len(positions))])
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValueError("faces must be (F, 3)")
    nv = positions.shape[0]
    if nv < 3:
        raise ValueError("need at least 3 vertices")
    if faces.size and (faces.min() < 0 or faces.max() >= nv):
        raise ValueError("face index out of range")

    if ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])).any():
        raise DegenerateFace("face with repeated vertex")
    p = positions[faces]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    if faces.shape[0] and (areas < DEGENERATE_AREA_TOL * areas.mean()).any():
        bad = int(np.argmin(areas))
        raise DegenerateFace(f"face {bad} has vanishing area {areas[bad]:.3e}")

    # Directed half-edges; duplicates in the same direction break orientation.
    nf = faces.shape[0]
    halfedges = np.stack(
        [faces, faces[:, [1, 2, 0]]], axis=2).reshape(-1, 2)  # (3F, 2)
    lo = halfedges.min(axis=1)
    hi = halfedges.max(axis=1)
    forward = halfedges[:, 0] == lo  # traversal agrees with canonical (lo, hi)
    keys = lo.astype(np.int64) * nv + hi
    edges_keys, edge_of_halfedge, counts = np.unique(
        keys, return_inverse=True, return_counts=True)
    if (counts > 2).any():
        e = int(np.argmax(counts > 2))
        raise NonManifoldEdge(
            f"edge ({edges_keys[e] // nv}, {edges_keys[e] % nv}) has "
            f"{counts[e]} incident faces")
    # Interior edges must be traversed once in each direction.
    dir_sum = np.zeros(len(edges_keys), dtype=np.int64)
    np.add.at(dir_sum, edge_of_halfedge, np.where(forward, 1, -1))
    bad_dir = (counts == 2) & (dir_sum != 0)
    if bad_dir.any():
        e = int(np.argmax(bad_dir))
        raise InconsistentOrientation(
            f"edge ({edges_keys[e] // nv}, {edges_keys[e] % nv}) traversed "
            "twice in the same direction")

    edges = np.column_stack([edges_keys // nv, edges_keys % nv])
    face_edges = edge_of_halfedge.reshape(nf, 3)
    face_edge_signs = np.where(forward, 1, -1).reshape(nf, 3).astype(np.int64)

    edge_faces = np.full((len(edges), 2), -1, dtype=np.int64)
    face_ids = np.repeat(np.arange(nf), 3)
    order = np.argsort(edge_of_halfedge, kind="stable")
    sorted_faces = face_ids[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_faces[:, 0] = sorted_faces[starts]
    interior = counts == 2
    edge_faces[interior, 1] = sorted_faces[starts[interior] + 1]

    boundary_edges = np.flatnonzero(counts == 1)
    boundary_vertices = np.unique(edges[boundary_edges])

    return SimplicialComplex(positions, faces, edges, face_edges,
                             face_edge_signs, edge_faces, boundary_edges,
                             boundary_vertices)


def vertex_geometry(complex: SimplicialComplex) -> VertexGeometry:
    """Angle-weighted vertex normals and barycentric dual areas.

    The normal at vertex v is ``normalize(sum_f theta_{f,v} n_f)`` over
    incident faces; the dual area is one third of each incident face's area.

    Raises
    ------
    ZeroNormal
        If the angle-weighted sum vanishes at some vertex (includes vertices
        with no incident faces).
    """
    nv = complex.num_vertices
    normals = np.zeros((nv, 3))
    dual_areas = np.zeros(nv)
    fnorm, fareas = complex._face_geometry()
    angles = complex.corner_angles()
    for s in range(3):
        idx = complex.faces[:, s]
        np.add.at(normals, idx, angles[:, s, None] * fnorm)
        np.add.at(dual_areas, idx, fareas / 3.0)
    norms = np.linalg.norm(normals, axis=1)
    if (norms < 1e-14).any():
        v = int(np.argmin(norms))
        raise ZeroNormal(f"vertex {v}: angle-weighted normal sum vanished")
    return VertexGeometry(normals / norms[:, None], dual_areas,
                          float(fareas.sum()))


# -- generators ----------------------------------------------------------------

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
    (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
    (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
], dtype=np.float64)
_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def generate_icosphere(subdivisions: int, radius: float = 1.0) -> SimplicialComplex:
    """Icosahedron with ``subdivisions`` levels of midpoint subdivision.

    Midpoints are projected back to the sphere at every level, giving
    near-uniform triangles and V = 10 * 4**s + 2 vertices.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES.tolist()
    for _ in range(subdivisions):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    positions = np.array(verts) * radius
    return build_complex(positions, np.array(faces, dtype=np.int64))


def generate_torus(major_sections: int, minor_sections: int,
                   R: float, r: float) -> SimplicialComplex:
    """Structured torus mesh with V = major * minor vertices and no boundary."""
    if major_sections < 3 or minor_sections < 3:
        raise ValueError("sections must be >= 3")
    if not R > r > 0:
        raise ValueError("need R > r > 0")
    u = 2 * np.pi * np.arange(major_sections) / major_sections
    v = 2 * np.pi * np.arange(minor_sections) / minor_sections
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = R + r * np.cos(vv)
    positions = np.column_stack([
        (ring * np.cos(uu)).ravel(),
        (ring * np.sin(uu)).ravel(),
        (r * np.sin(vv)).ravel(),
    ])
    faces = []
    for i in range(major_sections):
        i1 = (i + 1) % major_sections
        for j in range(minor_sections):
            j1 = (j + 1) % minor_sections
            a = i * minor_sections + j
            b = i1 * minor_sections + j
            c = i1 * minor_sections + j1
            d = i * minor_sections + j1
            # (u, v) order is counterclockwise seen from outside
            faces += [(a, b, c), (a, c, d)]
    return build_complex(positions, np.array(faces, dtype=np.int64))


def _points_in_polygon(points, poly):
    """Crossing-number inside test. points (N, 2), poly (M, 2), open ring."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for i in range(len(poly)):
        crosses = (py[i] > y) != (qy[i] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = (qx[i] - px[i]) * (y - py[i]) / (qy[i] - py[i]) + px[i]
        inside ^= crosses & (x < xs)
    return inside


def _dist_to_polygon(points, poly):
    """Distance from each point to the closed polygon outline."""
    best = np.full(len(points), np.inf)
    closed = np.vstack([poly, poly[:1]])
    for a, b in zip(closed[:-1], closed[1:]):
        ab = b - a
        denom = ab @ ab
        if denom == 0:
            d = np.linalg.norm(points - a, axis=1)
        else:
            t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
            d = np.linalg.norm(points - (a + t[:, None] * ab), axis=1)
        best = np.minimum(best, d)
    return best


def _orient_ccw_2d(points2d, faces):
    p = points2d[faces]
    signed = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
              - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = signed < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces, np.abs(signed) / 2.0


def generate_grid_delaunay(nx: int, ny: int, bounds=(0.0, 0.0, 1.0, 1.0),
                           hole_polygon=None) -> SimplicialComplex:
    """Delaunay triangulation of an nx-by-ny grid at z = 0.

    An optional ``hole_polygon`` (sequence of (x, y) vertices) marks an
    excluded region: its vertices are snapped to the nearest grid points,
    grid vertices strictly inside are removed, and the rim becomes interior
    boundary.
    """
    if nx < 2 or ny < 2:
        raise ValueError("nx, ny must be >= 2")
    x0, y0, x1, y1 = bounds
    gx, gy = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny),
                         indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])

    keep = np.ones(len(points), dtype=bool)
    poly = None
    if hole_polygon is not None:
        poly = np.asarray(hole_polygon, dtype=np.float64)
        tree = cKDTree(points)
        _, snapped = tree.query(poly)
        snapped = points[np.array(sorted(set(snapped), key=list(snapped).index))]
        if len(snapped) >= 3:
            poly = snapped
            spacing = min((x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1))
            rim = _dist_to_polygon(points, poly) < 1e-9 * spacing
            keep = ~(_points_in_polygon(points, poly) & ~rim)
        else:
            poly = None
    if not keep.any():
        raise EmptyDomain("hole polygon removed every grid vertex")
    points = points[keep]

    tri = Delaunay(points)
    faces, areas = _orient_ccw_2d(points, tri.simplices)
    faces = faces[areas > 1e-12 * areas.mean()]
    if poly is not None:
        centroids = points[faces].mean(axis=1)
        faces = faces[~_points_in_polygon(centroids, poly)]
    if len(faces) == 0:
        raise EmptyDomain("no faces remain after hole removal")

    used = np.unique(faces)
    if len(used) < len(points):
        remap = np.full(len(points), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        points = points[used]
        faces = remap[faces]
    return build_complex(points, faces)


class LatLonMap:
    """Bidirectional map between grid coordinates and mesh vertices.

    Lookup keys are (lat, lon) rounded to 1e-6 degrees, with longitude
    normalized to [-180, 180). Pole rows collapse to a single vertex.
    """

    def __init__(self, vertex_latlon: np.ndarray):
        self.vertex_latlon = np.asarray(vertex_latlon, dtype=np.float64)
        self._index = {}
        for vid, (lat, lon) in enumerate(self.vertex_latlon):
            self._index[self._key(lat, lon)] = vid

    @staticmethod
    def _key(lat, lon):
        lon = ((lon + 180.0) % 360.0) - 180.0
        if abs(abs(lat) - 90.0) < 1e-9:
            lon = 0.0  # all longitudes coincide at a pole
        return (round(float(lat), 6), round(float(lon), 6))

    def vertex_for(self, lat, lon) -> int:
        key = self._key(lat, lon)
        if key not in self._index:
            raise UnmappedLocation(f"no mesh vertex at lat={lat}, lon={lon}")
        return self._index[key]

    def __len__(self):
        return len(self.vertex_latlon)


def sphere_from_latlon_grid(lats, lons, radius: float = 1.0):
    """Spherical mesh from a lat/lon grid via the convex hull.

    Grid points are projected to the unit sphere; duplicate points at the
    poles collapse to single vertices before the hull computation. Returns
    ``(complex, latlon_map)``.

    Raises
    ------
    DegenerateHull
        If the projected points are degenerate (e.g. coplanar).
    """
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    latlon = []
    for lat in lats:
        if abs(abs(lat) - 90.0) < 1e-9:
            latlon.append((lat, 0.0))
        else:
            for lon in lons:
                latlon.append((lat, ((lon + 180.0) % 360.0) - 180.0))
    latlon = np.array(sorted(set(latlon)), dtype=np.float64)
    phi = np.radians(latlon[:, 0])
    lam = np.radians(latlon[:, 1])
    points = np.column_stack([np.cos(phi) * np.cos(lam),
                              np.cos(phi) * np.sin(lam),
                              np.sin(phi)])
    try:
        hull = ConvexHull(points)
    except QhullError as exc:
        raise DegenerateHull(str(exc)) from exc
    if len(hull.vertices) != len(points):
        raise DegenerateHull(
            f"{len(points) - len(hull.vertices)} grid points fell inside the hull")

    # Orient each hull triangle outward (positive dot with its centroid).
    faces = hull.simplices.astype(np.int64)
    p = points[faces]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", normals, p.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]

    complex = build_complex(points * radius, faces)
    return complex, LatLonMap(latlon)


def add_outer_buffer(complex: SimplicialComplex, margin: float,
                     resolution: float):
    """Surround a planar complex with a triangulated buffer ring.

    The buffer pushes the outer boundary at least ``margin`` away from every
    original vertex so that artificial boundary effects decay before reaching
    the region of interest. New points are laid on a grid of spacing at most
    ``resolution``. The original faces are kept verbatim; only the annulus
    between the original convex hull and the enlarged bounding box is
    triangulated, so interior holes survive. The original outer boundary must
    be convex. Returns ``(buffered_complex, interest_mask)`` where the mask
    selects the original vertices.

    ``margin <= 0`` disables buffering and returns the input unchanged with an
    all-true mask.
    """
    nv = complex.num_vertices
    if margin <= 0:
        return complex, np.ones(nv, dtype=bool)
    if np.abs(complex.positions[:, 2]).max() > 1e-9:
        raise ValueError("outer buffer requires a planar (z = 0) complex")
    if resolution <= 0:
        raise ValueError("resolution must be > 0")

    pts = complex.positions[:, :2]
    x0, y0 = pts.min(axis=0) - margin
    x1, y1 = pts.max(axis=0) + margin
    nx = int(np.ceil((x1 - x0) / resolution)) + 1
    ny = int(np.ceil((y1 - y0) / resolution)) + 1
    gx, gy = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny),
                         indexing="ij")
    candidates = np.column_stack([gx.ravel(), gy.ravel()])

    # Keep candidates strictly outside the original hull and clear of the
    # original vertices, so the annulus triangles cannot overlap the mesh.
    hull_tri = Delaunay(pts)
    outside = hull_tri.find_simplex(candidates) < 0
    near = cKDTree(pts).query(candidates)[0] < 0.45 * resolution
    buffer_pts = candidates[outside & ~near]

    union = np.vstack([pts, buffer_pts])
    tri = Delaunay(union)
    touches_buffer = (tri.simplices >= nv).any(axis=1)
    ring_faces, ring_areas = _orient_ccw_2d(union, tri.simplices[touches_buffer])
    ring_faces = ring_faces[ring_areas > 1e-12 * ring_areas.mean()]

    faces = np.vstack([complex.faces, ring_faces])
    positions = np.column_stack([union, np.zeros(len(union))])
    buffered = build_complex(positions, faces)
    mask = np.zeros(buffered.num_vertices, dtype=bool)
    mask[:nv] = True
    return buffered, mask
