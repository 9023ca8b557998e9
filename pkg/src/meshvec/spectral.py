"""Generalized eigenproblems: scalar Laplacian bases and harmonic 1-forms.

The scalar basis solves ``stiffness f = lambda mass f`` for the smallest
``L + 1`` eigenpairs, mass-orthonormal and sorted ascending. A dense solver
is used up to ``DENSE_LIMIT`` unknowns and ARPACK shift-invert above it.
The Dirichlet variant restricts the pencil to interior vertices and scatters
the eigenvectors back with exact zeros on the boundary.

Harmonic 1-forms are the numerical null space of the weak 1-form Laplacian,
detected by the spectral gap between near-zero and genuinely positive
eigenvalues.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .dec import DecOperators, Hodge1System
from .errors import ConvergenceFailure, NoBoundary, NoSpectralGap

DENSE_LIMIT = 3000

# Eigenvalues below this fraction of the largest computed one count as zero
# modes (the constant function on a closed mesh).
ZERO_MODE_REL = 1e-9


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenpairs of the scalar Laplacian pencil.

    ``eigenvectors`` has one column per mode, mass-orthonormal
    (``F.T @ diag(mass) @ F = I``); ``bc_kind`` is ``"neumann"`` or
    ``"dirichlet"``; ``mass`` is the star0 diagonal (or ones in flat mode)
    the basis is orthonormal against; ``method`` records the solver path
    (``"dense"`` or ``"iterative"``) because the two carry different
    orthonormality tolerances.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    bc_kind: str
    mass: np.ndarray
    method: str

    @property
    def truncation(self) -> int:
        return len(self.eigenvalues) - 1

    def zero_modes(self) -> np.ndarray:
        """Boolean mask of numerically zero eigenvalues."""
        scale = max(self.eigenvalues.max(), 1.0e-300)
        return self.eigenvalues <= ZERO_MODE_REL * scale


@dataclass(frozen=True)
class HarmonicBasis:
    """Numerical null space of the 1-form Laplacian, star1-orthonormal."""

    one_forms: np.ndarray  # (E, H)
    eigenvalues: np.ndarray  # the H near-zero eigenvalues
    first_nonharmonic: float
    gap_ratio: float

    @property
    def dimension(self) -> int:
        return self.one_forms.shape[1]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Scale each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _smallest_pairs(a: sp.spmatrix, mass_diag, k: int):
    """Smallest k eigenpairs of (a, diag(mass_diag)), mass-orthonormal.

    ``mass_diag=None`` solves the ordinary symmetric problem.
    """
    n = a.shape[0]
    if k > n:
        raise ValueError(f"requested {k} eigenpairs from a problem of size {n}")
    if n <= DENSE_LIMIT:
        b = None if mass_diag is None else np.diag(mass_diag)
        vals, vecs = scipy.linalg.eigh(a.toarray(), b,
                                       subset_by_index=[0, k - 1])
        method = "dense"
    else:
        # Shift-invert slightly below zero keeps the factor positive definite
        # even though the stiffness itself is singular.
        mscale = 1.0 if mass_diag is None else mass_diag.mean()
        sigma = -1e-3 * np.abs(a.diagonal()).mean() / mscale
        m = None if mass_diag is None else sp.diags(mass_diag).tocsc()
        # Fixed start vector keeps results deterministic across runs.
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            vals, vecs = eigsh(a.tocsc(), k=k, M=m, sigma=sigma, which="LM",
                               v0=v0)
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        method = "iterative"
    order = np.argsort(vals)
    vals = np.ascontiguousarray(vals[order])
    vecs = np.ascontiguousarray(vecs[:, order])
    # Defensive renormalization; both solvers already return B-orthonormal.
    weight = np.ones(n) if mass_diag is None else mass_diag
    norms = np.sqrt(np.einsum("ij,i,ij->j", vecs, weight, vecs))
    vecs /= norms
    return vals, _fix_signs(vecs), method


def eigensolve(dec: DecOperators, L: int) -> SpectralBasis:
    """Smallest ``L + 1`` Neumann eigenpairs of (stiffness, mass).

    Natural (Neumann) boundary behavior comes for free: nothing constrains
    boundary vertices. On a closed mesh the first eigenvalue is zero with a
    constant eigenvector.
    """
    nv = dec.complex.num_vertices
    if L + 1 > nv:
        raise ValueError(
            f"truncation L={L} needs L+1 <= V={nv} eigenpairs")
    vals, vecs, method = _smallest_pairs(dec.stiffness, dec.mass, L + 1)
    return SpectralBasis(vals, vecs, "neumann", dec.mass.copy(), method)


def eigensolve_dirichlet(dec: DecOperators, L: int) -> SpectralBasis:
    """Smallest ``L + 1`` Dirichlet eigenpairs, zero on the boundary.

    The pencil is restricted to interior vertices and the eigenvectors are
    scattered back to full length with exact zeros at boundary indices.
    """
    complex = dec.complex
    if not complex.has_boundary:
        raise NoBoundary("Dirichlet eigenproblem requires a mesh boundary")
    interior = np.setdiff1d(np.arange(complex.num_vertices),
                            complex.boundary_vertices)
    if L + 1 > interior.size:
        raise ValueError(
            f"truncation L={L} needs L+1 <= {interior.size} interior vertices")
    a = dec.stiffness[interior][:, interior]
    mass = dec.mass[interior]
    vals, vecs, method = _smallest_pairs(a.tocsr(), mass, L + 1)
    full = np.zeros((complex.num_vertices, L + 1))
    full[interior] = vecs
    full_mass = np.zeros(complex.num_vertices)
    full_mass[interior] = mass
    return SpectralBasis(vals, full, "dirichlet", full_mass, method)


def harmonic_oneforms(system: Hodge1System, tol: float = 1e-6,
                      n_probe: int = 8) -> HarmonicBasis:
    """Harmonic 1-forms: the numerical null space of the 1-form Laplacian.

    The ``n_probe`` smallest eigenvalues of ``stiffness1`` are computed;
    those smaller than ``tol`` times the largest probed eigenvalue are
    harmonic candidates. The candidate block must sit at least a factor 1e3
    below the first non-harmonic eigenvalue, otherwise
    :class:`NoSpectralGap` is raised. The dimension equals the surface's
    first Betti number.

    Since ``mass1`` is positive definite, the null space of the
    (stiffness1, mass1) pencil equals that of ``stiffness1`` alone; solving
    the ordinary problem avoids the 1e10 mass conditioning that the clamped
    cotangent weights can produce on right-angled triangulations. ``mass1``
    still defines the inner product the returned forms are orthonormal in.
    """
    ne = system.stiffness1.shape[0]
    k = min(n_probe, ne - 1) if ne > DENSE_LIMIT else min(n_probe, ne)
    vals, vecs, _ = _smallest_pairs(system.stiffness1, None, k)
    vals = np.maximum(vals, 0.0)  # tiny negatives are roundoff on a PSD matrix
    scale = vals[-1]
    if scale <= 0:
        raise NoSpectralGap("all probed eigenvalues vanish")
    h = int(np.sum(vals < tol * scale))
    if h > 0:
        largest_harmonic = vals[h - 1]
        first_nonharmonic = vals[h]
        if largest_harmonic > 1e-3 * first_nonharmonic:
            raise NoSpectralGap(
                f"candidate {largest_harmonic:.3e} vs first non-harmonic "
                f"{first_nonharmonic:.3e}: ratio above 1e-3")
        gap = first_nonharmonic / max(largest_harmonic, 1e-300)
    else:
        first_nonharmonic = vals[0]
        gap = np.inf

    forms = vecs[:, :h]
    # Gram-Schmidt polish in the mass1 inner product.
    for j in range(h):
        for i in range(j):
            forms[:, j] -= (forms[:, i] * system.mass1) @ forms[:, j] * forms[:, i]
        forms[:, j] /= np.sqrt((forms[:, j] * system.mass1) @ forms[:, j])
    return HarmonicBasis(forms, vals[:h], float(first_nonharmonic), float(gap))
