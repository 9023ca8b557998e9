"""Covariance kernels from spectral bases.

The scalar kernel is the truncated spectral sum
``K = (sigma^2 / C) F Phi(Lambda) F^T`` with ``Phi`` the Matern (finite nu)
or squared-exponential (nu = inf) eigenvalue scaling and
``C = (1/A) sum_n Phi(lambda_n)`` the constant that pins the area-weighted
mean marginal variance to sigma^2. Vector kernels are Gram matrices of the
diverging / curling / harmonic basis fields with the same per-mode scaling;
the harmonic block carries no scaling or normalization.

Non-stationary kernels evaluate a length-scale field kappa(s) at each vertex
and apply the scaling in symmetric square-root form, which keeps the result
a Gram matrix and hence positive semidefinite.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBases, IncompleteBasis
from .fields import VectorBases
from .spectral import SpectralBasis

INTRINSIC_DIM = 2  # surfaces; the Matern exponent uses this, not ambient 3

DEFAULT_TRUNCATION = 250


def phi(lam, nu: float, kappa: float):
    """Eigenvalue scaling: ``(2 nu / kappa^2 + lam)^(-nu - 1)`` for finite nu
    (the exponent is ``-nu - d/2`` with d = 2), ``exp(-kappa^2 lam / 2)`` for
    nu = inf."""
    lam = np.asarray(lam, dtype=np.float64)
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    if math.isinf(nu):
        return np.exp(-0.5 * kappa * kappa * lam)
    if nu <= 0:
        raise ValueError("nu must be > 0")
    return (2.0 * nu / (kappa * kappa) + lam) ** (-nu - INTRINSIC_DIM / 2.0)


def normalization(eigenvalues, nu: float, kappa: float, area: float) -> float:
    """Variance normalization ``C = (1/A) sum_n Phi(lambda_n)``."""
    if area <= 0:
        raise ValueError("area must be > 0")
    return float(phi(eigenvalues, nu, kappa).sum() / area)


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the Hodge-compositional vector kernel.

    ``sigma_*2`` are component variances; ``nu`` may be ``math.inf`` for the
    squared-exponential limit. ``L`` is the spectral truncation (capped at
    V - 1 by the eigensolver).
    """

    nu: float = 1.5
    kappa_d: float = 1.0
    kappa_c: float = 1.0
    sigma_d2: float = 1.0
    sigma_c2: float = 1.0
    sigma_h2: float = 0.0
    L: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        if not (self.nu > 0):
            raise ValueError("nu must be > 0")
        if self.kappa_d <= 0 or self.kappa_c <= 0:
            raise ValueError("length-scales must be > 0")
        sig = (self.sigma_d2, self.sigma_c2, self.sigma_h2)
        if any(s < 0 for s in sig):
            raise ValueError("variances must be >= 0")
        if not any(s > 0 for s in sig):
            raise ValueError("at least one variance must be > 0")

    def replace(self, **kw) -> "KernelParams":
        data = {f: getattr(self, f) for f in
                ("nu", "kappa_d", "kappa_c", "sigma_d2", "sigma_c2",
                 "sigma_h2", "L")}
        data.update(kw)
        return KernelParams(**data)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Dense symmetric covariance with provenance metadata."""

    matrix: np.ndarray
    kind: str  # "scalar" | "vector"
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape


def _symmetrize(mat):
    return (mat + mat.T) * 0.5


def scalar_kernel(basis: SpectralBasis, nu: float, kappa: float,
                  sigma2: float) -> CovarianceMatrix:
    """Scalar covariance over the vertices.

    The mass the basis is orthonormal against supplies the area:
    ``A = trace(star0)`` (the vertex count in flat mode), which makes the
    area-weighted mean of the diagonal exactly sigma^2.
    """
    area = float(basis.mass.sum())
    c = normalization(basis.eigenvalues, nu, kappa, area)
    weights = phi(basis.eigenvalues, nu, kappa) * (sigma2 / c)
    f = basis.eigenvectors
    mat = _symmetrize((f * weights) @ f.T)
    return CovarianceMatrix(mat, "scalar",
                            {"nu": nu, "kappa": kappa, "sigma2": sigma2,
                             "bc": basis.bc_kind})


def scalar_precision(basis: SpectralBasis, nu: float, kappa: float,
                     sigma2: float) -> np.ndarray:
    """Inverse of the scalar kernel, requiring a complete basis.

    With ``F^T M F = I`` and a full basis, ``F^-1 = F^T M``, so
    ``K^-1 = (C / sigma^2) M F Phi(Lambda)^-1 F^T M``. Only valid when the
    basis spans all of R^V; raises :class:`IncompleteBasis` otherwise.
    """
    f = basis.eigenvectors
    nv, nmodes = f.shape
    if nmodes != nv:
        raise IncompleteBasis(
            f"precision needs a complete basis: {nmodes} modes for {nv} "
            "vertices")
    area = float(basis.mass.sum())
    c = normalization(basis.eigenvalues, nu, kappa, area)
    inv_weights = (c / sigma2) / phi(basis.eigenvalues, nu, kappa)
    mf = basis.mass[:, None] * f
    return _symmetrize((mf * inv_weights) @ mf.T)


def _family_weights(lam, spectrum, nu, kappa, area):
    return phi(lam, nu, kappa) / normalization(spectrum, nu, kappa, area)


def _gram(matrix, weights):
    if matrix is None:
        return None
    return (matrix * weights) @ matrix.T


def vector_kernel_components(bases: VectorBases, params: KernelParams,
                             n_modes: int | None = None):
    """Unweighted component kernels ``(K_d, K_c, K_h)``; absent ones are None.

    ``n_modes`` truncates the diverging and curling sums to their first
    ``n_modes`` modes without renormalizing, so a truncated kernel equals
    the full one minus the omitted modes' outer products.
    """
    area = bases.total_mass
    kd = kc = kh = None
    bd = bases.diverging_matrix()
    if bd is not None:
        wd = _family_weights(bases.lambda_div, bases.spectrum_div,
                             params.nu, params.kappa_d, area)
        if n_modes is not None:
            bd, wd = bd[:, :n_modes], wd[:n_modes]
        kd = _gram(bd, wd)
    bc = bases.curling_matrix()
    if bc is not None:
        wc = _family_weights(bases.lambda_curl, bases.spectrum_curl,
                             params.nu, params.kappa_c, area)
        if n_modes is not None:
            bc, wc = bc[:, :n_modes], wc[:n_modes]
        kc = _gram(bc, wc)
    bh = bases.harmonic_matrix()
    if bh is not None:
        kh = bh @ bh.T  # no Phi scaling and no normalization by design
    return kd, kc, kh


def vector_kernel(bases: VectorBases, params: KernelParams,
                  n_modes: int | None = None) -> CovarianceMatrix:
    """Hodge-compositional vector kernel
    ``K = sigma_d^2 K_d + sigma_c^2 K_c + sigma_h^2 K_h`` over stacked
    per-vertex 3-vectors (shape 3V x 3V).

    Raises
    ------
    EmptyBases
        If every weighted component is absent or zero.
    """
    kd, kc, kh = vector_kernel_components(bases, params, n_modes)
    terms = [(params.sigma_d2, kd), (params.sigma_c2, kc),
             (params.sigma_h2, kh)]
    active = [(s, k) for s, k in terms if s > 0 and k is not None]
    if not active:
        raise EmptyBases("no basis fields carry weight in this kernel")
    n = active[0][1].shape[0]
    mat = np.zeros((n, n))
    for s, k in active:
        mat += s * k
    return CovarianceMatrix(_symmetrize(mat), "vector", {"params": params})


def vector_kernel_block(bases: VectorBases, params: KernelParams,
                        rows: np.ndarray,
                        cols: np.ndarray | None = None) -> np.ndarray:
    """Sub-block ``K[rows, cols]`` assembled without forming the full kernel.

    ``rows`` / ``cols`` index stacked components (3v + axis). Used by the
    fitting loop, where only the observed block enters the likelihood.
    """
    if cols is None:
        cols = rows
    area = bases.total_mass
    out = np.zeros((len(rows), len(cols)))
    specs = [
        (params.sigma_d2, bases.diverging_matrix(), bases.lambda_div,
         bases.spectrum_div, params.kappa_d),
        (params.sigma_c2, bases.curling_matrix(), bases.lambda_curl,
         bases.spectrum_curl, params.kappa_c),
    ]
    for sigma2, mat, lam, spectrum, kappa in specs:
        if sigma2 > 0 and mat is not None:
            w = _family_weights(lam, spectrum, params.nu, kappa, area)
            out += sigma2 * ((mat[rows] * w) @ mat[cols].T)
    bh = bases.harmonic_matrix()
    if params.sigma_h2 > 0 and bh is not None:
        out += params.sigma_h2 * (bh[rows] @ bh[cols].T)
    if not out.any() and params.sigma_d2 == 0 and params.sigma_c2 == 0 \
            and params.sigma_h2 == 0:
        raise EmptyBases("no basis fields carry weight in this kernel")
    return out


# -- non-stationary length-scales -----------------------------------------------


@dataclass(frozen=True)
class KappaField:
    """Low-rank length-scale field: Gaussian bumps plus a softplus floor.

    ``kappa(s) = floor + softplus(sum_b w_b exp(-(s - c_b)^2 / (2 l^2)))``,
    so the evaluated length-scale never drops below ``floor`` (default 1).
    """

    weights: np.ndarray
    centers: np.ndarray
    basis_lengthscale: float
    floor: float = 1.0

    def __post_init__(self):
        if len(self.weights) != len(self.centers):
            raise ValueError("weights and centers must have equal length")
        if self.basis_lengthscale <= 0:
            raise ValueError("basis_lengthscale must be > 0")

    def design_matrix(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        d = s[:, None] - np.asarray(self.centers)[None, :]
        return np.exp(-d * d / (2.0 * self.basis_lengthscale ** 2))

    def with_weights(self, weights) -> "KappaField":
        return KappaField(np.asarray(weights, dtype=np.float64),
                          self.centers, self.basis_lengthscale, self.floor)


def uniform_centers(count: int = 20, lo: float = -80.0,
                    hi: float = 80.0) -> np.ndarray:
    """Equally spaced RBF centers, matching the 20-basis latitude layout."""
    return np.linspace(lo, hi, count)


def kappa_eval(kappa_field: KappaField, s):
    """Evaluate the length-scale field at coordinates ``s``."""
    activation = kappa_field.design_matrix(s) @ kappa_field.weights
    out = kappa_field.floor + np.logaddexp(0.0, activation)
    if np.ndim(s) == 0:
        return float(out[0])
    return out


def _phi_grid(lam, nu, kappas):
    """(V, n) eigenvalue scalings, one row per vertex length-scale."""
    if math.isinf(nu):
        return np.exp(-0.5 * kappas[:, None] ** 2 * lam[None, :])
    return (2.0 * nu / kappas[:, None] ** 2
            + lam[None, :]) ** (-nu - INTRINSIC_DIM / 2.0)


def nonstationary_vector_kernel_block(bases: VectorBases,
                                      params: KernelParams,
                                      kappa_field: KappaField,
                                      vertex_coords,
                                      rows: np.ndarray,
                                      cols: np.ndarray | None = None) -> np.ndarray:
    """Sub-block of the non-stationary kernel over stacked component rows."""
    if cols is None:
        cols = rows
    s = np.asarray(vertex_coords, dtype=np.float64)
    kappas = kappa_eval(kappa_field, s)
    area = bases.total_mass
    out = np.zeros((len(rows), len(cols)))
    specs = [
        (params.sigma_d2, bases.diverging_matrix(), bases.lambda_div,
         bases.spectrum_div),
        (params.sigma_c2, bases.curling_matrix(), bases.lambda_curl,
         bases.spectrum_curl),
    ]
    for sigma2, mat, lam, spectrum in specs:
        if sigma2 > 0 and mat is not None:
            c = _phi_grid(spectrum, params.nu, kappas).sum(axis=1) / area
            scale = np.sqrt(_phi_grid(lam, params.nu, kappas) / c[:, None])
            scaled = mat * np.repeat(scale, 3, axis=0)
            out += sigma2 * (scaled[rows] @ scaled[cols].T)
    bh = bases.harmonic_matrix()
    if params.sigma_h2 > 0 and bh is not None:
        out += params.sigma_h2 * (bh[rows] @ bh[cols].T)
    return out


def nonstationary_vector_kernel(bases: VectorBases, params: KernelParams,
                                kappa_field: KappaField,
                                vertex_coords) -> CovarianceMatrix:
    """Vector kernel with a per-vertex length-scale.

    Each mode's contribution between vertices i and j is
    ``sqrt(Phi(lam_n; kappa(s_i))) * sqrt(Phi(lam_n; kappa(s_j)))`` times the
    field outer product, and the normalization applies per vertex as
    ``1/sqrt(C(s_i) C(s_j))``. The square-root placement keeps the kernel a
    Gram matrix, hence positive semidefinite, and reduces to the stationary
    kernel when kappa(s) is constant.

    ``vertex_coords`` is the per-vertex scalar the length-scale depends on
    (latitude in degrees for the global wind use).
    """
    s = np.asarray(vertex_coords, dtype=np.float64)
    if s.shape != (bases.num_vertices,):
        raise ValueError("vertex_coords must have one scalar per vertex")
    kappas = kappa_eval(kappa_field, s)
    area = bases.total_mass

    def scaled_gram(mat, lam, spectrum):
        # per-vertex normalization C(s_i), same structure as the scaling
        c = _phi_grid(spectrum, params.nu, kappas).sum(axis=1) / area
        scale = np.sqrt(_phi_grid(lam, params.nu, kappas) / c[:, None])
        scaled = mat * np.repeat(scale, 3, axis=0)
        return scaled @ scaled.T

    kd = kc = kh = None
    if bases.diverging_matrix() is not None:
        kd = scaled_gram(bases.diverging_matrix(), bases.lambda_div,
                         bases.spectrum_div)
    if bases.curling_matrix() is not None:
        kc = scaled_gram(bases.curling_matrix(), bases.lambda_curl,
                         bases.spectrum_curl)
    bh = bases.harmonic_matrix()
    if bh is not None:
        kh = bh @ bh.T
    terms = [(params.sigma_d2, kd), (params.sigma_c2, kc),
             (params.sigma_h2, kh)]
    active = [(sig, k) for sig, k in terms if sig > 0 and k is not None]
    if not active:
        raise EmptyBases("no basis fields carry weight in this kernel")
    mat = sum(sig * k for sig, k in active)
    return CovarianceMatrix(_symmetrize(mat), "vector",
                            {"params": params, "nonstationary": True})


# -- configuration ----------------------------------------------------------------


def kappa_field_from_config(block: dict) -> KappaField:
    """Build a :class:`KappaField` from a config sub-block.

    Accepts either explicit ``centers`` or ``n_centers`` with ``lo`` / ``hi``
    bounds; ``weights`` default to zero.
    """
    if "centers" in block:
        centers = np.asarray(block["centers"], dtype=np.float64)
    else:
        centers = uniform_centers(int(block.get("n_centers", 20)),
                                  float(block.get("lo", -80.0)),
                                  float(block.get("hi", 80.0)))
    weights = np.asarray(block.get("weights", np.zeros(len(centers))),
                         dtype=np.float64)
    return KappaField(weights, centers,
                      float(block.get("lengthscale", 10.0)),
                      float(block.get("floor", 1.0)))


def params_from_config(block: dict) -> KernelParams:
    """Kernel parameters from a ``[kernel]`` config block.

    ``sigma_d``, ``sigma_c``, ``sigma_h`` are standard deviations (as quoted
    in the experiments) and are squared here; ``nu`` accepts the string
    ``"inf"`` as well as a TOML float ``inf``.
    """
    nu = block.get("nu", 1.5)
    if isinstance(nu, str):
        nu = math.inf if nu.lower() in ("inf", "infinity") else float(nu)
    return KernelParams(
        nu=float(nu),
        kappa_d=float(block.get("kappa_d", 1.0)),
        kappa_c=float(block.get("kappa_c", 1.0)),
        sigma_d2=float(block.get("sigma_d", 1.0)) ** 2,
        sigma_c2=float(block.get("sigma_c", 1.0)) ** 2,
        sigma_h2=float(block.get("sigma_h", 0.0)) ** 2,
        L=int(block.get("L", DEFAULT_TRUNCATION)),
    )
