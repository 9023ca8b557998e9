"""Vertex vector fields: the sharp operator, tangent rotation, and bases.

Integrated 1-forms (one scalar per edge) are turned into per-vertex tangent
vectors by the primal-primal sharp: inside each face corner the two incident
edge values determine a unique in-plane vector, and the corner vectors are
averaged with interior-angle weights over the one-ring. The result is
explicitly projected onto the tangent plane of the vertex normal, since
curvature leaks small normal components into the interpolation.

The diverging / curling / harmonic bases follow the Hodge decomposition:
gradients of Laplacian eigenvectors (scaled by 1/sqrt(lambda)), their
quarter-turn rotations about the vertex normals, and sharps of harmonic
1-forms.
"""

from dataclasses import dataclass, field

import numpy as np

from .dec import exterior_derivative_0
from .errors import DimensionMismatch, IsolatedVertex, ZeroEigenvalueIncluded
from .mesh import SimplicialComplex, VertexGeometry, vertex_geometry
from .spectral import HarmonicBasis, SpectralBasis


@dataclass(frozen=True)
class VertexVectorField:
    """Ambient 3-vectors at the vertices, tangent to the surface.

    ``tangency_residual`` is the largest normal component magnitude observed
    before projection, relative to the vector norm.
    """

    vectors: np.ndarray
    tangency_residual: float = 0.0

    def __post_init__(self):
        self.vectors.setflags(write=False)


def make_tangent_field(vectors, normals) -> VertexVectorField:
    """Project raw vectors onto the tangent planes of ``normals``."""
    vectors = np.array(vectors, dtype=np.float64)
    normal_part = np.einsum("ij,ij->i", vectors, normals)
    norms = np.linalg.norm(vectors, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        residual = np.abs(normal_part) / norms
    residual = float(np.nanmax(residual, initial=0.0))
    vectors -= normal_part[:, None] * normals
    # Second pass drives the numerical flux below rounding of the first.
    normal_part = np.einsum("ij,ij->i", vectors, normals)
    vectors -= normal_part[:, None] * normals
    return VertexVectorField(vectors, residual)


def sharp_pp(complex: SimplicialComplex, one_form,
             geometry: VertexGeometry | None = None) -> VertexVectorField:
    """Primal-primal sharp: per-vertex vectors from an integrated 1-form.

    In each face corner the reconstruction solves ``u . t = alpha`` exactly
    for the two edges leaving the corner, so constant fields on flat meshes
    are recovered exactly; corners are blended with angle weights.

    Raises
    ------
    IsolatedVertex
        If some vertex has no incident faces.
    """
    one_form = np.asarray(one_form, dtype=np.float64)
    if one_form.shape != (complex.num_edges,):
        raise DimensionMismatch(
            f"one-form has shape {one_form.shape}, expected "
            f"({complex.num_edges},)")
    if geometry is None:
        geometry = vertex_geometry(complex)
    nv = complex.num_vertices
    acc = np.zeros((nv, 3))
    wsum = np.zeros(nv)
    pos = complex.positions
    faces = complex.faces
    angles = complex.corner_angles()
    for s in range(3):
        v = faces[:, s]
        t1 = pos[faces[:, (s + 1) % 3]] - pos[v]
        t2 = pos[faces[:, (s + 2) % 3]] - pos[v]
        # Edge v -> next is face slot s; edge prev -> v is slot s+2 (negated).
        a1 = (complex.face_edge_signs[:, s]
              * one_form[complex.face_edges[:, s]])
        a2 = (-complex.face_edge_signs[:, (s + 2) % 3]
              * one_form[complex.face_edges[:, (s + 2) % 3]])
        g11 = np.einsum("ij,ij->i", t1, t1)
        g12 = np.einsum("ij,ij->i", t1, t2)
        g22 = np.einsum("ij,ij->i", t2, t2)
        det = g11 * g22 - g12 * g12
        x = (g22 * a1 - g12 * a2) / det
        y = (g11 * a2 - g12 * a1) / det
        corner = x[:, None] * t1 + y[:, None] * t2
        w = angles[:, s]
        np.add.at(acc, v, w[:, None] * corner)
        np.add.at(wsum, v, w)
    if (wsum == 0).any():
        v = int(np.argmin(wsum))
        raise IsolatedVertex(f"vertex {v} has no incident faces")
    return make_tangent_field(acc / wsum[:, None], geometry.normals)


def rotate_tangent(field: VertexVectorField, normals) -> VertexVectorField:
    """Positive quarter turn about the vertex normal: v -> n x v."""
    return VertexVectorField(np.cross(normals, field.vectors),
                             field.tangency_residual)


def scaled_oneforms(complex: SimplicialComplex,
                    basis: SpectralBasis) -> tuple[np.ndarray, np.ndarray]:
    """Pre-sharp 1-forms ``d0 f_n / sqrt(lambda_n)`` for nonzero modes.

    Returns ``(forms, eigenvalues)`` with forms of shape (E, n_modes).
    The 1/sqrt(lambda) scaling makes the columns star1-orthonormal. Zero
    modes (constant eigenvectors) are excluded: their gradient vanishes and
    the scaling is singular there.
    """
    keep = ~basis.zero_modes()
    lam = basis.eigenvalues[keep]
    if (lam <= 0).any():
        raise ZeroEigenvalueIncluded("zero eigenvalue reached 1/sqrt scaling")
    d0 = exterior_derivative_0(complex)
    forms = (d0 @ basis.eigenvectors[:, keep]) / np.sqrt(lam)
    return forms, lam


def diverging_basis(complex: SimplicialComplex, basis: SpectralBasis,
                    geometry: VertexGeometry | None = None):
    """Curl-free basis fields: sharps of the scaled eigenvector gradients."""
    if geometry is None:
        geometry = vertex_geometry(complex)
    forms, lam = scaled_oneforms(complex, basis)
    fields = [sharp_pp(complex, forms[:, j], geometry)
              for j in range(forms.shape[1])]
    return fields, lam


def curling_basis(complex: SimplicialComplex, basis: SpectralBasis,
                  geometry: VertexGeometry | None = None):
    """Divergence-free basis fields: the diverging construction rotated by
    a quarter turn about the vertex normals.

    Pass a Dirichlet basis to obtain fields with no flux across the
    boundary; with a Neumann basis the fields are unconstrained there.
    """
    if geometry is None:
        geometry = vertex_geometry(complex)
    fields, lam = diverging_basis(complex, basis, geometry)
    return [rotate_tangent(f, geometry.normals) for f in fields], lam


MANUAL_FLAT = "manual_flat"


def harmonic_vertex_basis(complex: SimplicialComplex, harmonic,
                          geometry: VertexGeometry | None = None):
    """Harmonic vertex fields: sharps of harmonic 1-forms.

    ``harmonic`` is either a :class:`HarmonicBasis` or the string
    ``"manual_flat"``, which returns the two constant unit fields (1,0,0)
    and (0,1,0) on a flat mesh; that manual basis is exact for subsets of
    the plane. An empty list (sphere topology) is a valid result.
    """
    if geometry is None:
        geometry = vertex_geometry(complex)
    nv = complex.num_vertices
    if isinstance(harmonic, str):
        if harmonic != MANUAL_FLAT:
            raise ValueError(f"unknown harmonic mode {harmonic!r}")
        if np.abs(np.abs(geometry.normals[:, 2]) - 1.0).max() > 1e-6:
            raise ValueError("manual_flat harmonic basis requires a flat mesh")
        ex = np.tile([1.0, 0.0, 0.0], (nv, 1))
        ey = np.tile([0.0, 1.0, 0.0], (nv, 1))
        return [VertexVectorField(ex), VertexVectorField(ey)]
    if not isinstance(harmonic, HarmonicBasis):
        raise TypeError("harmonic must be a HarmonicBasis or 'manual_flat'")
    return [sharp_pp(complex, harmonic.one_forms[:, j], geometry)
            for j in range(harmonic.dimension)]


@dataclass
class VectorBases:
    """Diverging, curling, and harmonic vertex fields with their spectra.

    ``spectrum_div`` / ``spectrum_curl`` carry the full source eigenvalue
    lists (including any zero mode), which the kernel normalization uses;
    ``lambda_div`` / ``lambda_curl`` are the per-field eigenvalues.
    ``total_mass`` is the trace of the vertex mass matrix (the mesh area, or
    the vertex count in flat mode).
    """

    diverging: list = field(default_factory=list)
    curling: list = field(default_factory=list)
    harmonic: list = field(default_factory=list)
    lambda_div: np.ndarray = None
    lambda_curl: np.ndarray = None
    spectrum_div: np.ndarray = None
    spectrum_curl: np.ndarray = None
    total_mass: float = 0.0

    @property
    def num_vertices(self):
        for group in (self.diverging, self.curling, self.harmonic):
            if group:
                return group[0].vectors.shape[0]
        return 0

    @staticmethod
    def _stack(fields):
        if not fields:
            return None
        return np.column_stack([f.vectors.ravel() for f in fields])

    def diverging_matrix(self):
        """(3V, n) matrix of stacked diverging fields."""
        return self._stack(self.diverging)

    def curling_matrix(self):
        return self._stack(self.curling)

    def harmonic_matrix(self):
        return self._stack(self.harmonic)


def build_vector_bases(complex: SimplicialComplex, neumann: SpectralBasis,
                       curling_source: SpectralBasis | None = None,
                       harmonic=None,
                       geometry: VertexGeometry | None = None) -> VectorBases:
    """Assemble all basis fields for the vector kernels.

    ``curling_source`` defaults to the Neumann basis; pass a Dirichlet basis
    for no-flux boundaries. ``harmonic`` is a :class:`HarmonicBasis`,
    ``"manual_flat"``, or None for no harmonic component.
    """
    if geometry is None:
        geometry = vertex_geometry(complex)
    csource = curling_source if curling_source is not None else neumann
    div_fields, lam_div = diverging_basis(complex, neumann, geometry)
    curl_fields, lam_curl = curling_basis(complex, csource, geometry)
    harm_fields = ([] if harmonic is None
                   else harmonic_vertex_basis(complex, harmonic, geometry))
    return VectorBases(
        diverging=div_fields,
        curling=curl_fields,
        harmonic=harm_fields,
        lambda_div=lam_div,
        lambda_curl=lam_curl,
        spectrum_div=neumann.eigenvalues.copy(),
        spectrum_curl=csource.eigenvalues.copy(),
        total_mass=float(neumann.mass.sum()),
    )
