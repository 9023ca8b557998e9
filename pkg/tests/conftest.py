import numpy as np
import pytest

from meshvec.mesh import SimplicialComplex, build_complex


def regular_grid(nx, ny, spacing=1.0) -> SimplicialComplex:
    """Right-triangulated grid with all diagonals in the same direction."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing,
                         indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)])
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            faces += [(a, b, c), (a, c, d)]
    return build_complex(pts, np.array(faces, dtype=np.int64))


def jittered_grid(nx, ny, seed=0, scale=0.25) -> SimplicialComplex:
    """Delaunay mesh of a perturbed grid; generic angles, simple spectrum."""
    from scipy.spatial import Delaunay

    rng = np.random.default_rng(seed)
    xs, ys = np.meshgrid(np.linspace(0, nx - 1, nx), np.linspace(0, ny - 1, ny),
                         indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    interior = ((pts[:, 0] > 0) & (pts[:, 0] < nx - 1)
                & (pts[:, 1] > 0) & (pts[:, 1] < ny - 1))
    pts[interior] += scale * rng.uniform(-1, 1, size=(interior.sum(), 2))
    tri = Delaunay(pts)
    faces = tri.simplices.copy()
    p = pts[faces]
    signed = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
              - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    faces[signed < 0] = faces[signed < 0][:, [0, 2, 1]]
    return build_complex(np.column_stack([pts, np.zeros(len(pts))]), faces)


def random_hull_mesh(n_points=400, seed=0, bump=0.15) -> SimplicialComplex:
    """Random closed genus-0 mesh: perturbed convex hull of sphere samples."""
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    hull = ConvexHull(pts)
    faces = hull.simplices.astype(np.int64)
    p = pts[faces]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", normals, p.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    radii = 1.0 + bump * rng.uniform(-1, 1, n_points)
    return build_complex(pts * radii[:, None], faces)


def annulus_mesh(nx=12, ny=12) -> SimplicialComplex:
    """Square annulus: grid with a central square hole (first Betti number 1)."""
    from meshvec.mesh import generate_grid_delaunay

    hole = [(0.4, 0.4), (0.6, 0.4), (0.6, 0.6), (0.4, 0.6)]
    return generate_grid_delaunay(nx, ny, (0.0, 0.0, 1.0, 1.0), hole)


def flat_one_form(complex, field_vectors) -> np.ndarray:
    """Re-integrate a vertex field to edge values by midpoint quadrature."""
    i, j = complex.edges[:, 0], complex.edges[:, 1]
    evec = complex.positions[j] - complex.positions[i]
    mid = 0.5 * (field_vectors[i] + field_vectors[j])
    return np.einsum("ij,ij->i", mid, evec)


@pytest.fixture(scope="session")
def icosphere2():
    from meshvec.mesh import generate_icosphere

    return generate_icosphere(2)


@pytest.fixture(scope="session")
def icosphere3():
    from meshvec.mesh import generate_icosphere

    return generate_icosphere(3)


@pytest.fixture(scope="session")
def torus_small():
    from meshvec.mesh import generate_torus

    return generate_torus(48, 16, 2.0, 0.7)
