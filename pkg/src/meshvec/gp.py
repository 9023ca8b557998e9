"""Gaussian-process inference on mesh vector fields.

Observations are ambient 3-vectors at mesh vertices (tangency enforced on
ingest), conditioned with independent Gaussian noise per component. The
posterior, marginal likelihood, and sampling use dense Cholesky solves with
escalating jitter; hyperparameters are fitted by bounded derivative-free
search over the negative log marginal likelihood, with a random-walk
Metropolis mode for length-scale-field weights.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    EmptyMask,
    NoBoundary,
    PoleFrameUndefined,
    SingularSystem,
)
from .fields import VectorBases, VertexVectorField
from .kernels import (
    CovarianceMatrix,
    KappaField,
    KernelParams,
    nonstationary_vector_kernel_block,
    vector_kernel_block,
)
from .mesh import LatLonMap, SimplicialComplex, VertexGeometry, vertex_geometry

DEFAULT_NOISE = 1e-4

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Observations:
    """Observed tangent vectors at distinct mesh vertices.

    ``noise_variance`` is shared across the three ambient components.
    """

    vertex_ids: np.ndarray
    values: np.ndarray
    noise_variance: float = DEFAULT_NOISE

    @property
    def component_indices(self) -> np.ndarray:
        return component_indices(self.vertex_ids)

    @property
    def stacked(self) -> np.ndarray:
        return self.values.ravel()


def component_indices(vertex_ids) -> np.ndarray:
    """Stacked-component indices (3v, 3v+1, 3v+2) for each vertex id."""
    ids = np.asarray(vertex_ids, dtype=np.int64)
    return (3 * ids[:, None] + np.arange(3)[None, :]).ravel()


def make_observations(complex: SimplicialComplex, vertex_ids, values,
                      noise_variance: float = DEFAULT_NOISE,
                      geometry: VertexGeometry | None = None) -> Observations:
    """Validate and tangent-project raw observations."""
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(vertex_ids), 3):
        raise ValueError("values must be (m, 3) ambient vectors")
    if len(np.unique(vertex_ids)) != len(vertex_ids):
        raise ValueError("observed vertex ids must be distinct")
    if vertex_ids.size and (vertex_ids.min() < 0
                            or vertex_ids.max() >= complex.num_vertices):
        raise ValueError("observed vertex id out of range")
    if noise_variance <= 0:
        raise ValueError("noise variance must be > 0")
    if geometry is None:
        geometry = vertex_geometry(complex)
    normals = geometry.normals[vertex_ids]
    projected = values - np.einsum("ij,ij->i", values, normals)[:, None] * normals
    return Observations(vertex_ids, projected, float(noise_variance))


# -- tangent frames ----------------------------------------------------------------

def tangent_frames(normals):
    """East/north orthonormal frames: east = z x n, north = n x east.

    Raises
    ------
    PoleFrameUndefined
        Where the normal is (anti)parallel to the z axis.
    """
    normals = np.atleast_2d(normals)
    east = np.cross(np.array([0.0, 0.0, 1.0]), normals)
    norms = np.linalg.norm(east, axis=1)
    if (norms < 1e-8).any():
        v = int(np.argmin(norms))
        raise PoleFrameUndefined(
            f"east/north frame degenerates at vertex row {v}")
    east /= norms[:, None]
    north = np.cross(normals, east)
    return east, north


def uv_to_ambient(complex: SimplicialComplex, latlon_map: LatLonMap,
                  latlon, uv, noise_variance: float = DEFAULT_NOISE,
                  geometry: VertexGeometry | None = None) -> Observations:
    """Map (lat, lon, u, v) rows to ambient observations at mesh vertices.

    ``u`` rides the local east direction and ``v`` the local north.

    Raises
    ------
    UnmappedLocation
        For rows whose (lat, lon) is not a mesh vertex.
    PoleFrameUndefined
        For observations at the poles.
    """
    latlon = np.atleast_2d(np.asarray(latlon, dtype=np.float64))
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    if geometry is None:
        geometry = vertex_geometry(complex)
    ids = np.array([latlon_map.vertex_for(lat, lon) for lat, lon in latlon],
                   dtype=np.int64)
    east, north = tangent_frames(geometry.normals[ids])
    values = uv[:, :1] * east + uv[:, 1:2] * north
    return make_observations(complex, ids, values, noise_variance, geometry)


def ambient_to_uv(complex: SimplicialComplex, vertex_ids, vectors,
                  geometry: VertexGeometry | None = None) -> np.ndarray:
    """Project ambient vectors back to (u, v) components, shape (m, 2)."""
    if geometry is None:
        geometry = vertex_geometry(complex)
    ids = np.asarray(vertex_ids, dtype=np.int64)
    east, north = tangent_frames(geometry.normals[ids])
    vectors = np.atleast_2d(vectors)
    return np.column_stack([np.einsum("ij,ij->i", vectors, east),
                            np.einsum("ij,ij->i", vectors, north)])


# -- conditioning ----------------------------------------------------------------

def _cholesky_with_jitter(mat, jitters):
    """Lower Cholesky factor after the first successful jitter level."""
    for jitter in jitters:
        try:
            shifted = mat if jitter == 0 else mat + jitter * np.eye(len(mat))
            return scipy.linalg.cholesky(shifted, lower=True), jitter
        except scipy.linalg.LinAlgError:
            continue
    raise SingularSystem(
        f"Cholesky failed at every jitter level (max {jitters[-1]:.3e})")


def _jitter_ladder(mat, include_zero):
    base = 1e-10 * np.trace(mat) / len(mat)
    ladder = [base * 10 ** k for k in range(4)]
    return ([0.0] + ladder) if include_zero else ladder


def _nll_terms(chol, y):
    alpha = scipy.linalg.cho_solve((chol, True), y)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    quad = float(y.T @ alpha) if y.ndim == 1 else float(np.sum(y * alpha))
    m = y.shape[0] * (1 if y.ndim == 1 else y.shape[1])
    return 0.5 * quad + 0.5 * logdet * (1 if y.ndim == 1 else y.shape[1]) \
        + 0.5 * m * LOG_2PI


def nll_from_gram(koo, y, noise_variance: float) -> float:
    """NLL of observations with gram ``koo`` and iid noise.

    ``y`` may be a vector or an (m, R) matrix of independent realizations;
    realizations share the Cholesky factor and their NLLs add.
    """
    a = koo + noise_variance * np.eye(len(koo))
    chol, _ = _cholesky_with_jitter(a, _jitter_ladder(a, include_zero=True))
    return _nll_terms(chol, y)


@dataclass(frozen=True)
class Posterior:
    """GP posterior over the stacked vertex components.

    ``mean`` covers every vertex; ``covariance`` covers the prediction
    components only (None when only the diagonal summary was requested).
    ``variance`` is the covariance diagonal clamped at zero for reporting
    (``clamped`` counts how many entries needed it).
    """

    mean: VertexVectorField
    covariance: np.ndarray | None
    variance: np.ndarray
    predict_components: np.ndarray
    nll: float
    clamped: int


def _as_matrix(kernel):
    return kernel.matrix if isinstance(kernel, CovarianceMatrix) else kernel


def posterior(kernel, observations: Observations, predict_ids=None,
              diag_only: bool = False) -> Posterior:
    """Condition the prior on the observations.

    ``predict_ids`` restricts the stored covariance block to those vertices
    (the mean is always computed everywhere). ``diag_only`` skips the dense
    posterior covariance and keeps the marginal variances only, which is
    enough for exports and much lighter on large meshes. With no
    observations the posterior is the prior.
    """
    k = _as_matrix(kernel)
    n = k.shape[0]
    nv = n // 3
    if predict_ids is None:
        p = np.arange(n)
    else:
        p = component_indices(predict_ids)
    o = observations.component_indices
    y = observations.stacked
    if o.size == 0:
        cov = None if diag_only else k[np.ix_(p, p)].copy()
        variance = np.clip(k[p, p], 0.0, None)
        return Posterior(VertexVectorField(np.zeros((nv, 3))), cov, variance,
                         p, 0.0, 0)
    a = k[np.ix_(o, o)] + observations.noise_variance * np.eye(o.size)
    chol, _ = _cholesky_with_jitter(a, _jitter_ladder(a, include_zero=True))
    alpha = scipy.linalg.cho_solve((chol, True), y)
    mean = (k[:, o] @ alpha).reshape(nv, 3)
    kop = k[np.ix_(o, p)]
    w = scipy.linalg.cho_solve((chol, True), kop)
    if diag_only:
        cov = None
        raw_var = k[p, p] - np.einsum("ij,ij->j", kop, w)
    else:
        cov = k[np.ix_(p, p)] - kop.T @ w
        raw_var = np.diag(cov)
    variance = np.clip(raw_var, 0.0, None)
    return Posterior(VertexVectorField(mean), cov, variance, p,
                     _nll_terms(chol, y), int((raw_var < 0).sum()))


def nll(kernel, observations: Observations) -> float:
    """Negative log marginal likelihood of the observations."""
    k = _as_matrix(kernel)
    o = observations.component_indices
    return nll_from_gram(k[np.ix_(o, o)], observations.stacked,
                         observations.noise_variance)


def sample(source, count: int, seed: int,
           mean=None) -> list[VertexVectorField]:
    """Draw fields from a :class:`Posterior` or a prior covariance.

    Deterministic per seed: ``mean + chol(cov + jitter I) z`` with the
    jitter ladder starting at ``1e-10 trace/dim`` and escalating tenfold up
    to three times.
    """
    if isinstance(source, Posterior):
        cov = source.covariance
        if cov is None:
            raise ValueError(
                "sampling needs the full posterior covariance; recompute "
                "without diag_only")
        if len(source.predict_components) != cov.shape[0]:
            raise ValueError("posterior covariance block is inconsistent")
        if mean is None:
            mean = source.mean.vectors.ravel()[source.predict_components]
    else:
        cov = _as_matrix(source)
        if mean is None:
            mean = np.zeros(cov.shape[0])
    n = cov.shape[0]
    if n % 3:
        raise ValueError("can only sample full per-vertex component blocks")
    rng = np.random.default_rng(seed)
    if np.abs(cov).max() == 0.0:
        return [VertexVectorField(mean.reshape(-1, 3).copy())
                for _ in range(count)]
    chol, _ = _cholesky_with_jitter(cov, _jitter_ladder(cov, include_zero=False))
    z = rng.standard_normal((n, count))
    draws = mean[:, None] + chol @ z
    return [VertexVectorField(draws[:, j].reshape(-1, 3).copy())
            for j in range(count)]


# -- boundary post-processing ---------------------------------------------------

def boundary_outward_normals(complex: SimplicialComplex,
                             geometry: VertexGeometry | None = None):
    """Outward in-plane normals at boundary vertices.

    At each boundary vertex the two incident boundary edges contribute an
    in-plane edge normal (tangent rotated into the vertex tangent plane),
    signed to point away from the adjacent face; the vertex normal is their
    normalized average. Returns ``(vertex_ids, normals)``.
    """
    if not complex.has_boundary:
        raise NoBoundary("mesh has no boundary")
    if geometry is None:
        geometry = vertex_geometry(complex)
    pos = complex.positions
    acc = {int(v): np.zeros(3) for v in complex.boundary_vertices}
    for e in complex.boundary_edges:
        i, j = complex.edges[e]
        f = complex.edge_faces[e, 0]
        centroid = pos[complex.faces[f]].mean(axis=0)
        midpoint = 0.5 * (pos[i] + pos[j])
        tangent = pos[j] - pos[i]
        for v in (i, j):
            nrm = np.cross(tangent, geometry.normals[v])
            nrm_len = np.linalg.norm(nrm)
            if nrm_len == 0:
                continue
            nrm /= nrm_len
            if nrm @ (centroid - midpoint) > 0:
                nrm = -nrm
            acc[int(v)] += nrm
    ids = np.array(sorted(acc), dtype=np.int64)
    normals = np.array([acc[int(v)] for v in ids])
    lengths = np.linalg.norm(normals, axis=1)
    lengths[lengths == 0] = 1.0
    return ids, normals / lengths[:, None]


def enforce_no_flux(complex: SimplicialComplex, field: VertexVectorField,
                    geometry: VertexGeometry | None = None) -> VertexVectorField:
    """Remove the outward boundary-normal component at boundary vertices.

    Interior vertices are untouched (bit-identical); the projection is
    applied twice so the residual flux is below rounding.
    """
    ids, normals = boundary_outward_normals(complex, geometry)
    vectors = field.vectors.copy()
    for _ in range(2):
        flux = np.einsum("ij,ij->i", vectors[ids], normals)
        vectors[ids] -= flux[:, None] * normals
    return VertexVectorField(vectors, field.tangency_residual)


def boundary_flux(complex: SimplicialComplex, field: VertexVectorField,
                  geometry: VertexGeometry | None = None) -> np.ndarray:
    """Signed outward-normal components at the boundary vertices."""
    ids, normals = boundary_outward_normals(complex, geometry)
    return np.einsum("ij,ij->i", field.vectors[ids], normals)


# -- metrics ----------------------------------------------------------------------

def metrics(predicted, truth, mask=None) -> dict:
    """Pointwise error summary between two vector samples.

    Returns ``mse`` (mean squared vector error), ``component_mse`` per
    ambient axis, and ``mean_norm`` of the truth (the normalization scale).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if mask is None:
        idx = np.arange(len(truth))
    else:
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
    if idx.size == 0:
        raise EmptyMask("metrics mask selects no vertices")
    diff = predicted[idx] - truth[idx]
    return {
        "mse": float(np.mean(np.sum(diff * diff, axis=1))),
        "component_mse": [float(x) for x in np.mean(diff * diff, axis=0)],
        "mean_norm": float(np.mean(np.linalg.norm(truth[idx], axis=1))),
    }


# -- hyperparameter fitting -------------------------------------------------------

FITTABLE = ("nu", "kappa_d", "kappa_c", "sigma_d2", "sigma_c2", "sigma_h2",
            "noise")


@dataclass
class FitResult:
    params: KernelParams
    noise_variance: float
    nll: float
    trace: list = field(default_factory=list)
    n_evals: int = 0
    budget_exhausted: bool = False
    kappa_field: KappaField | None = None


def _stack_observations(observations):
    obs_list = (observations if isinstance(observations, (list, tuple))
                else [observations])
    first = obs_list[0]
    for obs in obs_list[1:]:
        if not np.array_equal(obs.vertex_ids, first.vertex_ids):
            raise ValueError("all realizations must share vertex ids")
    y = np.column_stack([obs.stacked for obs in obs_list])
    return first.component_indices, y, first.noise_variance


def fit(bases: VectorBases, observations, param_space: dict,
        budget: int = 200, base_params: KernelParams | None = None,
        start: dict | None = None) -> FitResult:
    """Minimize the NLL over a box in log10 parameter space.

    ``param_space`` maps names from ``FITTABLE`` to (low, high) bounds;
    parameters not listed stay at their ``base_params`` values. ``budget``
    caps NLL evaluations; exhausting it is reported on the result, not an
    error. A list of Observations is treated as independent realizations.

    The search is a bounded Powell descent from ``start`` (default: the
    geometric midpoint of each box), so the final NLL never exceeds the
    initial one.
    """
    if not param_space:
        raise ValueError("param_space must name at least one parameter")
    unknown = set(param_space) - set(FITTABLE)
    if unknown:
        raise ValueError(f"unknown fit parameters: {sorted(unknown)}")
    base = base_params if base_params is not None else KernelParams()
    o, y, base_noise = _stack_observations(observations)
    names = sorted(param_space)
    lo = np.log10([param_space[n][0] for n in names])
    hi = np.log10([param_space[n][1] for n in names])
    if start:
        x0 = np.log10([start[n] for n in names])
    else:
        x0 = 0.5 * (lo + hi)

    trace = []

    def build(x):
        values = dict(zip(names, 10.0 ** np.asarray(x)))
        noise = values.pop("noise", base_noise)
        return base.replace(**values), noise

    def objective(x):
        params, noise = build(x)
        koo = vector_kernel_block(bases, params, o)
        val = nll_from_gram(koo, y, noise)
        trace.append({"x": [float(v) for v in 10.0 ** np.asarray(x)],
                      "nll": float(val)})
        return val

    result = scipy.optimize.minimize(
        objective, x0, method="Powell",
        bounds=list(zip(lo, hi)),
        options={"maxfev": budget, "xtol": 1e-3, "ftol": 1e-6})
    evals = len(trace)
    best = min(trace, key=lambda t: t["nll"])
    x_best = np.log10(best["x"])
    params, noise = build(x_best)
    return FitResult(params=params, noise_variance=noise, nll=best["nll"],
                     trace=trace, n_evals=evals,
                     budget_exhausted=evals >= budget or not result.success)


def fit_kappa_weights(bases: VectorBases, observations,
                      base_params: KernelParams, kappa_field: KappaField,
                      vertex_coords, n_iter: int = 2000, seed: int = 0,
                      burn: int | None = None,
                      proposal_scale: float = 0.2) -> FitResult:
    """Random-walk Metropolis over length-scale-field weights.

    Standard normal priors on the weights; the proposal scale adapts during
    burn-in toward a 25% acceptance rate. Returns the posterior-mean weights
    (and the NLL they achieve).
    """
    o, y, noise = _stack_observations(observations)
    s = np.asarray(vertex_coords, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if burn is None:
        burn = n_iter // 2

    def neg_log_post(w):
        kf = kappa_field.with_weights(w)
        koo = nonstationary_vector_kernel_block(bases, base_params, kf, s, o)
        return nll_from_gram(koo, y, noise) + 0.5 * float(w @ w)

    w = np.asarray(kappa_field.weights, dtype=np.float64).copy()
    current = neg_log_post(w)
    scale = proposal_scale
    accepted = 0
    window_accepts = 0
    draws = []
    trace = []
    for it in range(n_iter):
        prop = w + scale * rng.standard_normal(len(w))
        cand = neg_log_post(prop)
        if math.log(rng.random()) < current - cand:
            w, current = prop, cand
            accepted += 1
            window_accepts += 1
        if it < burn and (it + 1) % 50 == 0:
            rate = window_accepts / 50.0
            scale *= math.exp(rate - 0.25)
            window_accepts = 0
        if it >= burn:
            draws.append(w.copy())
        trace.append({"nll": float(current)})
    mean_w = np.mean(draws, axis=0)
    kf = kappa_field.with_weights(mean_w)
    koo = nonstationary_vector_kernel_block(bases, base_params, kf, s, o)
    final = nll_from_gram(koo, y, noise)
    return FitResult(params=base_params, noise_variance=noise,
                     nll=float(final), trace=trace, n_evals=n_iter + 2,
                     budget_exhausted=False, kappa_field=kf)
