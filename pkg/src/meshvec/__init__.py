"""Intrinsic Gaussian processes for vector fields on triangle meshes.

The pipeline: build a :class:`~meshvec.mesh.SimplicialComplex`, assemble DEC
operators, solve the cotangent-Laplacian eigenproblem, lift the eigenvectors
to diverging/curling/harmonic vertex fields, combine them into
Hodge-compositional Matern kernels, and condition on observed vectors.
"""

from .dec import DecOperators, Hodge1System, exterior_derivative_0, exterior_derivative_1
from .fields import (
    VectorBases,
    VertexVectorField,
    build_vector_bases,
    curling_basis,
    diverging_basis,
    harmonic_vertex_basis,
    rotate_tangent,
    scaled_oneforms,
    sharp_pp,
)
from .gp import (
    FitResult,
    Observations,
    Posterior,
    enforce_no_flux,
    fit,
    fit_kappa_weights,
    make_observations,
    metrics,
    nll,
    posterior,
    sample,
    uv_to_ambient,
)
from .kernels import (
    CovarianceMatrix,
    KappaField,
    KernelParams,
    kappa_eval,
    nonstationary_vector_kernel,
    normalization,
    phi,
    scalar_kernel,
    scalar_precision,
    vector_kernel,
)
from .mesh import (
    LatLonMap,
    SimplicialComplex,
    VertexGeometry,
    add_outer_buffer,
    build_complex,
    generate_grid_delaunay,
    generate_icosphere,
    generate_torus,
    sphere_from_latlon_grid,
    vertex_geometry,
)
from .spectral import (
    HarmonicBasis,
    SpectralBasis,
    eigensolve,
    eigensolve_dirichlet,
    harmonic_oneforms,
)

__version__ = "0.1.0"
