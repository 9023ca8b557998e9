"""Discrete exterior calculus operators on a simplicial complex.

Assembles the signed incidence matrices d0 (edges x vertices) and
d1 (faces x edges), the diagonal Hodge stars, the cotangent stiffness matrix
L = d0^T star1 d0, and the weak 1-form Laplacian used for harmonic fields.
Entries of d0 and d1 are +-1, so d1 @ d0 cancels exactly in floating point;
the composition is the zero matrix bit-for-bit.

Operators are assembled once per mesh by :meth:`DecOperators.build` and are
immutable afterwards; matrix-vector products are safe from multiple threads.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, SingularMass
from .mesh import SimplicialComplex, vertex_geometry

# Floor applied to nonpositive cotangent masses in the 1-form eigenproblem,
# as a fraction of the mean positive entry.
MASS1_CLAMP = 1e-10


def exterior_derivative_0(complex: SimplicialComplex) -> sp.csr_matrix:
    """Signed incidence E x V: row for edge (i, j), i < j, is -1 at i, +1 at j."""
    ne = complex.num_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = complex.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(ne, complex.num_vertices))


def exterior_derivative_1(complex: SimplicialComplex) -> sp.csr_matrix:
    """Signed incidence F x E; sign is the face's traversal vs canonical edge."""
    nf = complex.num_faces
    rows = np.repeat(np.arange(nf), 3)
    cols = complex.face_edges.ravel()
    vals = complex.face_edge_signs.ravel().astype(np.float64)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(nf, complex.num_edges))


def hodge_star_0(complex: SimplicialComplex, flat_mode: bool = False) -> np.ndarray:
    """Diagonal of the vertex mass: barycentric dual areas, or ones in flat mode."""
    if flat_mode:
        return np.ones(complex.num_vertices)
    return vertex_geometry(complex).dual_areas


def hodge_star_1(complex: SimplicialComplex) -> np.ndarray:
    """Diagonal cotangent weights per edge.

    Interior edge: (cot a + cot b) / 2 over the two opposite angles; boundary
    edge: half the single cotangent. Entries may be negative on obtuse
    triangulations and are kept as-is.
    """
    angles = complex.corner_angles()
    weights = np.zeros(complex.num_edges)
    # The edge at face slot s connects corners s and s+1; the opposite corner
    # is s+2, whose angle supplies the cotangent.
    for s in range(3):
        opp = angles[:, (s + 2) % 3]
        np.add.at(weights, complex.face_edges[:, s], 0.5 / np.tan(opp))
    return weights


def hodge_star_2(complex: SimplicialComplex) -> np.ndarray:
    """Diagonal of the face star: inverse face areas."""
    return 1.0 / complex.face_areas


def stiffness(complex: SimplicialComplex) -> sp.csr_matrix:
    """Cotangent stiffness d0^T star1 d0, symmetrized bit-exactly."""
    d0 = exterior_derivative_0(complex)
    s1 = hodge_star_1(complex)
    mat = (d0.T @ sp.diags(s1) @ d0).tocsr()
    return ((mat + mat.T) * 0.5).tocsr()


@dataclass(frozen=True)
class Hodge1System:
    """Weak 1-form Laplacian pencil (stiffness1, mass1).

    ``stiffness1 = star1 d0 star0^-1 d0^T star1 + d1^T star2 d1`` and
    ``mass1`` is star1 with nonpositive entries clamped so the generalized
    eigenproblem stays well-posed; its null space carries the discrete
    harmonic 1-forms.
    """

    stiffness1: sp.csr_matrix
    mass1: np.ndarray
    clamped_edges: int


class DecOperators:
    """All DEC operators for one mesh, assembled once and cached.

    ``flat_mode`` replaces star0 by the identity (recommended for flat
    domains, where dual areas only add boundary artifacts); it is fixed at
    construction because it is a property of the modeled domain, not of an
    individual call.
    """

    def __init__(self, complex: SimplicialComplex, flat_mode: bool = False):
        self.complex = complex
        self.flat_mode = flat_mode
        self.d0 = exterior_derivative_0(complex)
        self.d1 = exterior_derivative_1(complex)
        self.star0 = hodge_star_0(complex, flat_mode)
        self.star1 = hodge_star_1(complex)
        self.star2 = hodge_star_2(complex)
        mat = (self.d0.T @ sp.diags(self.star1) @ self.d0).tocsr()
        self.stiffness = ((mat + mat.T) * 0.5).tocsr()
        if (self.star0 <= 0).any() or (self.star2 <= 0).any():
            raise SingularMass("nonpositive star0/star2 diagonal")
        self._hodge1 = None

    @classmethod
    def build(cls, complex: SimplicialComplex, flat_mode: bool = False):
        return cls(complex, flat_mode)

    @property
    def mass(self) -> np.ndarray:
        """Diagonal of the vertex mass matrix used in eigenproblems."""
        return self.star0

    def divergence(self, one_form: np.ndarray) -> np.ndarray:
        """Per-vertex divergence star0^-1 d0^T star1 alpha.

        The sign convention makes ``divergence(d0 @ f)`` equal the cotangent
        Laplacian applied to f.
        """
        one_form = np.asarray(one_form, dtype=np.float64)
        if one_form.shape != (self.complex.num_edges,):
            raise DimensionMismatch(
                f"one-form has length {one_form.shape}, expected "
                f"({self.complex.num_edges},)")
        return (self.d0.T @ (self.star1 * one_form)) / self.star0

    def hodge1_system(self) -> Hodge1System:
        if self._hodge1 is None:
            s1 = sp.diags(self.star1)
            a = s1 @ self.d0 @ sp.diags(1.0 / self.star0) @ self.d0.T @ s1
            b = self.d1.T @ sp.diags(self.star2) @ self.d1
            mat = (a + b).tocsr()
            mat = ((mat + mat.T) * 0.5).tocsr()
            mass1 = self.star1.copy()
            positive = mass1[mass1 > 0]
            if positive.size == 0:
                raise SingularMass("all cotangent weights nonpositive")
            # cot(90deg) lands at ~1e-17 rather than exactly 0; treat entries
            # at rounding scale as zero too
            bad = mass1 <= 1e-12 * positive.mean()
            mass1[bad] = MASS1_CLAMP * positive.mean()
            if (mass1 <= 0).any():
                raise SingularMass("mass1 regularization failed")
            self._hodge1 = Hodge1System(mat, mass1, int(bad.sum()))
        return self._hodge1
