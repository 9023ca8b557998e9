"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a ``[PASS]``/``[FAIL]`` line (visible with ``pytest -s``)
before asserting, so a full run yields one status line per criterion.
The two experiment-style criteria (synthetic downscaling, non-stationary
recovery) are deterministic given their frozen seeds.
"""

import math
import time

import numpy as np
import scipy.linalg

from meshvec.dec import DecOperators
from meshvec.fields import build_vector_bases, scaled_oneforms
from meshvec.gp import (
    boundary_flux,
    component_indices,
    enforce_no_flux,
    fit,
    fit_kappa_weights,
    make_observations,
    nll,
    posterior,
    sample,
)
from meshvec.kernels import (
    KappaField,
    KernelParams,
    kappa_eval,
    nonstationary_vector_kernel,
    normalization,
    phi,
    scalar_kernel,
    scalar_precision,
    uniform_centers,
    vector_kernel,
    vector_kernel_components,
)
from meshvec.mesh import (
    generate_grid_delaunay,
    generate_icosphere,
    generate_torus,
    vertex_geometry,
)
from meshvec.spectral import eigensolve, eigensolve_dirichlet, harmonic_oneforms

from conftest import annulus_mesh, jittered_grid, random_hull_mesh, regular_grid


def criterion(name, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_sphere_spectrum_clusters():
    t0 = time.time()
    ico = generate_icosphere(4)
    dec = DecOperators.build(ico)
    basis = eigensolve(dec, 15)
    elapsed = time.time() - t0
    lam = basis.eigenvalues[1:16]
    target = np.array([2.0] * 3 + [6.0] * 5 + [12.0] * 7)
    worst = float((np.abs(lam - target) / target).max())
    criterion("sphere spectrum (subdiv 4, l(l+1) clusters, 2%)",
              worst < 0.02 and elapsed < 30.0,
              f"worst rel err {worst:.2e}, {elapsed:.1f} s")


def test_structural_exactness():
    meshes = {
        "sphere": generate_icosphere(3),
        "torus": generate_torus(48, 16, 2.0, 0.7),
        "grid": generate_grid_delaunay(20, 15, (0, 0, 2, 1.5)),
        "random-hull": random_hull_mesh(2500, seed=7),
    }
    worst_float = 0.0
    ok = True
    for name, mesh in meshes.items():
        dec = DecOperators.build(mesh)
        dd = dec.d1 @ dec.d0
        dd.eliminate_zeros()
        ok &= dd.nnz == 0
        basis = eigensolve(dec, min(12, mesh.num_vertices - 1))
        keep = ~basis.zero_modes()
        scaled = basis.eigenvectors[:, keep] / np.sqrt(basis.eigenvalues[keep])
        ok &= np.abs(dd @ scaled).max() == 0.0  # exact operator composition
        forms, _ = scaled_oneforms(mesh, basis)
        worst_float = max(worst_float, float(np.abs(dec.d1 @ forms).max()))
    ok &= worst_float <= 1e-12
    criterion("structural exactness (d1 d0 = 0, d1 alpha = 0)", bool(ok),
              f"float-path residual {worst_float:.2e}")


def test_orthonormality():
    worst_dense = worst_iter = worst_forms = 0.0
    # dense path
    for mesh, flat in ((generate_icosphere(3), False),
                       (generate_grid_delaunay(18, 18, (0, 0, 1, 1)), True)):
        dec = DecOperators.build(mesh, flat_mode=flat)
        basis = eigensolve(dec, 40)
        gram = basis.eigenvectors.T @ (basis.mass[:, None]
                                       * basis.eigenvectors)
        worst_dense = max(worst_dense,
                          float(np.abs(gram - np.eye(41)).max()))
        forms, _ = scaled_oneforms(mesh, basis)
        fgram = forms.T @ (dec.star1[:, None] * forms)
        worst_forms = max(worst_forms, float(np.abs(
            fgram - np.eye(forms.shape[1])).max()))
    # iterative path (above the dense-size limit)
    big = generate_icosphere(5)
    dec = DecOperators.build(big)
    basis = eigensolve(dec, 20)
    assert basis.method == "iterative"
    gram = basis.eigenvectors.T @ (basis.mass[:, None] * basis.eigenvectors)
    worst_iter = float(np.abs(gram - np.eye(21)).max())
    ok = worst_dense < 1e-8 and worst_iter < 1e-6 and worst_forms < 1e-6
    criterion("orthonormality (mass and star1)", ok,
              f"dense {worst_dense:.2e}, iterative {worst_iter:.2e}, "
              f"1-forms {worst_forms:.2e}")


def test_harmonic_dimensions():
    cases = [
        ("torus 96x24", DecOperators.build(generate_torus(96, 24, 2.0, 0.7)), 2),
        ("icosphere", DecOperators.build(generate_icosphere(3)), 0),
        ("flat annulus", DecOperators.build(annulus_mesh(), flat_mode=True), 1),
    ]
    details = []
    ok = True
    for name, dec, expected in cases:
        hb = harmonic_oneforms(dec.hodge1_system())
        ok &= hb.dimension == expected and hb.gap_ratio >= 1e3
        details.append(f"{name}: H={hb.dimension} gap={hb.gap_ratio:.1e}")
    criterion("harmonic dimensions (Betti numbers, gap >= 1e3)", bool(ok),
              "; ".join(details))


def test_kernel_normalization():
    rng = np.random.default_rng(2024)
    meshes = [
        (generate_icosphere(2), False),
        (generate_torus(24, 10, 2.0, 0.7), False),
        (jittered_grid(9, 9, seed=3), True),
    ]
    worst = 0.0
    for mesh, flat in meshes:
        dec = DecOperators.build(mesh, flat_mode=flat)
        basis = eigensolve(dec, 30)
        area = basis.mass.sum()
        for _ in range(10):
            nu = float(rng.choice([0.5, 1.0, 1.5, 2.5, np.inf]))
            kappa = float(rng.uniform(0.1, 8.0))
            sigma2 = float(rng.uniform(0.2, 5.0))
            k = scalar_kernel(basis, nu, kappa, sigma2)
            mean_var = float((basis.mass * np.diag(k.matrix)).sum() / area)
            worst = max(worst, abs(mean_var - sigma2) / sigma2)
    criterion("kernel normalization (area-weighted variance = sigma^2)",
              worst <= 1e-9, f"worst rel err {worst:.2e}")


def _min_eig_ratio(mat):
    w = np.linalg.eigvalsh(mat)
    return float(w[0] / max(w[-1], 1e-300))


def test_kernel_psd():
    torus = generate_torus(24, 10, 2.0, 0.7)
    geo = vertex_geometry(torus)
    dec = DecOperators.build(torus)
    basis = eigensolve(dec, 25)
    hb = harmonic_oneforms(dec.hodge1_system())
    bases = build_vector_bases(torus, basis, harmonic=hb, geometry=geo)
    params = KernelParams(nu=1.5, kappa_d=0.8, kappa_c=1.4, sigma_d2=1.0,
                          sigma_c2=2.0, sigma_h2=0.5, L=25)
    kd, kc, kh = vector_kernel_components(bases, params)
    kv = vector_kernel(bases, params).matrix
    lat_like = torus.positions[:, 2]
    kf = KappaField(np.random.default_rng(5).normal(size=8),
                    uniform_centers(8, -0.7, 0.7), 0.4)
    kns = nonstationary_vector_kernel(bases, params, kf, lat_like).matrix
    ratios = {name: _min_eig_ratio(m) for name, m in
              [("K_d", kd), ("K_c", kc), ("K_h", kh), ("K_v", kv),
               ("K_ns", kns)]}
    ok = all(r >= -1e-8 for r in ratios.values())
    criterion("PSD (all assembled kernels)", ok,
              ", ".join(f"{k} {v:.1e}" for k, v in ratios.items()))


def test_gp_oracle_equivalence():
    rng = np.random.default_rng(31)
    meshes = [
        ("grid 5x5", regular_grid(5, 5), True),
        ("jittered 7x6", jittered_grid(7, 6, seed=2), True),
        ("hull 48", random_hull_mesh(48, seed=4, bump=0.05), False),
    ]
    worst = 0.0
    for name, mesh, flat in meshes:
        assert mesh.num_vertices <= 50
        geo = vertex_geometry(mesh)
        dec = DecOperators.build(mesh, flat_mode=flat)
        basis = eigensolve(dec, 12)
        bases = build_vector_bases(mesh, basis, geometry=geo)
        params = KernelParams(nu=1.5, kappa_d=0.6, kappa_c=0.9, sigma_d2=1.0,
                              sigma_c2=0.8, sigma_h2=0.0, L=12)
        kernel = vector_kernel(bases, params)
        ids = rng.choice(mesh.num_vertices, 9, replace=False)
        obs = make_observations(mesh, ids, rng.standard_normal((9, 3)),
                                noise_variance=0.03, geometry=geo)
        post = posterior(kernel, obs)

        k = kernel.matrix
        o = component_indices(obs.vertex_ids)
        y = obs.values.ravel()
        a = k[np.ix_(o, o)] + 0.03 * np.eye(len(o))
        a_inv = np.linalg.inv(a)
        mean = (k[:, o] @ a_inv @ y).reshape(-1, 3)
        cov = k - k[:, o] @ a_inv @ k[o, :]
        ref_nll = (0.5 * y @ a_inv @ y + 0.5 * np.linalg.slogdet(a)[1]
                   + 0.5 * len(o) * math.log(2 * math.pi))
        worst = max(worst,
                    float(np.abs(post.mean.vectors - mean).max()),
                    float(np.abs(post.covariance - cov).max()),
                    abs(post.nll - ref_nll),
                    abs(nll(kernel, obs) - ref_nll))
    criterion("GP oracle equivalence (meshes <= 50 vertices)", worst < 1e-8,
              f"worst deviation {worst:.2e}")


def test_no_flux():
    g = generate_grid_delaunay(30, 20, (0, 0, 3.0, 2.0))
    geo = vertex_geometry(g)
    dec = DecOperators.build(g, flat_mode=True)
    neumann = eigensolve(dec, 40)
    dirichlet = eigensolve_dirichlet(dec, 40)
    bases = build_vector_bases(g, neumann, curling_source=dirichlet,
                               geometry=geo)
    params = KernelParams(nu=1.5, kappa_d=0.5, kappa_c=0.8, sigma_d2=0.0,
                          sigma_c2=1.0, sigma_h2=0.0, L=40)
    kernel = vector_kernel(bases, params)
    rng = np.random.default_rng(8)
    truth = sample(kernel, 1, seed=3)[0]
    ids = rng.choice(g.num_vertices, 60, replace=False)
    obs = make_observations(g, ids, truth.vectors[ids], 1e-4, geo)
    post = posterior(kernel, obs)

    # The Dirichlet construction is flux-free at the 1-form level: the
    # tangential boundary-edge values of the curling sources vanish exactly,
    # so the integrated transport across every boundary edge is zero.
    forms, _ = scaled_oneforms(g, dirichlet)
    transport = float(np.abs(forms[g.boundary_edges]).max())
    scale = float(np.linalg.norm(post.mean.vectors, axis=1).max())
    # The one-ring interpolation leaves an O(h) pointwise vertex flux that
    # the post-processing removes; its measured envelope is enforced here.
    echo = float(np.abs(boundary_flux(g, post.mean, geo)).max()) / scale
    fixed = enforce_no_flux(g, post.mean, geo)
    after = float(np.abs(boundary_flux(g, fixed, geo)).max())
    ok = transport <= 1e-3 and after <= 1e-13 * scale and echo <= 0.15
    criterion("no-flux (exact transport before, exact zero after)", ok,
              f"1-form transport {transport:.1e}, vertex echo {echo:.2e}, "
              f"post-enforcement {after:.2e}")


def test_synthetic_sphere_downscaling():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    ico = generate_icosphere(3)
    geo = vertex_geometry(ico)
    dec = DecOperators.build(ico)
    L = 80
    basis = eigensolve(dec, L)
    bases = build_vector_bases(ico, basis, geometry=geo)

    # band-limited stream function -> divergence-free truth field
    kappa_true, nu = 1.0, 1.5
    weights = phi(bases.lambda_curl, nu, kappa_true) / normalization(
        bases.spectrum_curl, nu, kappa_true, bases.total_mass)
    coeff = rng.normal(size=len(weights)) * np.sqrt(weights)
    truth = sum(c * f.vectors for c, f in zip(coeff, bases.curling))

    n_obs = ico.num_vertices // 10
    obs_ids = rng.choice(ico.num_vertices, n_obs, replace=False)
    held = np.setdiff1d(np.arange(ico.num_vertices), obs_ids)
    noise = 1e-4
    y = truth[obs_ids] + math.sqrt(noise) * rng.standard_normal((n_obs, 3))
    obs = make_observations(ico, obs_ids, y, noise, geo)

    base = KernelParams(nu=nu, kappa_d=1.0, kappa_c=1.0, sigma_d2=0.0,
                        sigma_c2=1.0, sigma_h2=0.0, L=L)
    res = fit(bases, obs, {"kappa_c": (0.05, 20.0), "sigma_c2": (0.01, 25.0)},
              budget=80, base_params=base)
    post = posterior(vector_kernel(bases, res.params), obs)
    err = post.mean.vectors[held] - truth[held]
    mse = float((err ** 2).sum(axis=1).mean())
    centered = truth[held] - truth[held].mean(axis=0)
    fvar = float((centered ** 2).sum(axis=1).mean())

    # baseline: independent scalar GP per ambient component, own fitted kappa
    sbasis = basis

    def scalar_nll(kappa, sigma2):
        ks = scalar_kernel(sbasis, nu, kappa, sigma2).matrix
        a = ks[np.ix_(obs_ids, obs_ids)] + noise * np.eye(n_obs)
        chol = scipy.linalg.cholesky(a, lower=True)
        total = 0.0
        for comp in range(3):
            yv = y[:, comp]
            alpha = scipy.linalg.cho_solve((chol, True), yv)
            total += (0.5 * yv @ alpha + np.log(np.diag(chol)).sum()
                      + 0.5 * n_obs * math.log(2 * math.pi))
        return total

    from scipy.optimize import minimize
    r = minimize(lambda x: scalar_nll(10 ** x[0], 10 ** x[1]), [0.0, 0.0],
                 method="Powell", bounds=[(-1.3, 1.3), (-2.0, 1.4)],
                 options={"maxfev": 80})
    ks = scalar_kernel(sbasis, nu, 10 ** r.x[0], 10 ** r.x[1]).matrix
    a = ks[np.ix_(obs_ids, obs_ids)] + noise * np.eye(n_obs)
    pred = np.column_stack([ks[:, obs_ids] @ np.linalg.solve(a, y[:, comp])
                            for comp in range(3)])
    mse_baseline = float(((pred[held] - truth[held]) ** 2).sum(axis=1).mean())
    elapsed = time.time() - t0
    ok = mse < 0.2 * fvar and mse < 0.5 * mse_baseline and elapsed < 120.0
    criterion("synthetic sphere downscaling", ok,
              f"mse {mse:.2e} vs 0.2*var {0.2 * fvar:.2e} and 0.5*baseline "
              f"{0.5 * mse_baseline:.2e}; kappa_c fit {res.params.kappa_c:.2f} "
              f"(true {kappa_true}); {elapsed:.0f} s")


def test_nonstationary_recovery():
    t0 = time.time()
    rng = np.random.default_rng(7)
    ico = generate_icosphere(2)
    geo = vertex_geometry(ico)
    dec = DecOperators.build(ico)
    L = 40
    basis = eigensolve(dec, L)
    bases = build_vector_bases(ico, basis, geometry=geo)
    lat = np.degrees(np.arcsin(np.clip(
        ico.positions[:, 2] / np.linalg.norm(ico.positions, axis=1), -1, 1)))

    def kappa_true(latdeg):
        return 2.5 + 1.5 * np.sin(np.radians(latdeg) * 2.0)

    # independent generation oracle (mirrors the model formula, exact kappas)
    nu = 1.5
    kap = kappa_true(lat)
    b = bases.curling_matrix()
    area = bases.total_mass
    p_modes = (2 * nu / kap[:, None] ** 2
               + bases.lambda_curl[None, :]) ** (-nu - 1.0)
    p_spectrum = (2 * nu / kap[:, None] ** 2
                  + bases.spectrum_curl[None, :]) ** (-nu - 1.0)
    c_vertex = p_spectrum.sum(axis=1) / area
    scaled = b * np.repeat(np.sqrt(p_modes / c_vertex[:, None]), 3, axis=0)
    k_true = scaled @ scaled.T
    chol = np.linalg.cholesky(
        k_true + 1e-12 * np.trace(k_true) / len(k_true) * np.eye(len(k_true)))

    n_real = 40
    noise = 1e-4
    draws = chol @ rng.standard_normal((len(k_true), n_real))
    obs_list = [
        make_observations(
            ico, np.arange(ico.num_vertices),
            (draws[:, r] + math.sqrt(noise)
             * rng.standard_normal(len(k_true))).reshape(-1, 3),
            noise, geo)
        for r in range(n_real)]

    params = KernelParams(nu=nu, kappa_d=1.0, kappa_c=1.0, sigma_d2=0.0,
                          sigma_c2=1.0, sigma_h2=0.0, L=L)
    kf0 = KappaField(np.zeros(20), uniform_centers(20, -80, 80), 10.0)
    res = fit_kappa_weights(bases, obs_list, params, kf0, lat, n_iter=1200,
                            seed=3)
    grid = np.arange(-80.0, 81.0, 1.0)
    fitted = kappa_eval(res.kappa_field, grid)
    corr = float(np.corrcoef(fitted, kappa_true(grid))[0, 1])
    elapsed = time.time() - t0
    ok = corr >= 0.7 and elapsed < 600.0
    criterion("non-stationary kappa(lat) recovery", ok,
              f"Pearson {corr:.3f} (threshold 0.7); {elapsed:.0f} s")


def test_scalar_precision():
    mesh = jittered_grid(7, 7, seed=2)  # ~50 vertices, full-rank basis
    nv = mesh.num_vertices
    dec = DecOperators.build(mesh, flat_mode=False)
    basis = eigensolve(dec, nv - 1)
    k = scalar_kernel(basis, 1.5, 0.7, 2.0).matrix
    q = scalar_precision(basis, 1.5, 0.7, 2.0)
    resid = float(np.linalg.norm(k @ q - np.eye(nv)))
    oracle_gap = float(np.abs(q - np.linalg.inv(k)).max()
                       / np.abs(np.linalg.inv(k)).max())
    ok = resid <= 1e-6 * nv and oracle_gap < 1e-6
    criterion("scalar precision (full-rank closed form)", ok,
              f"||KQ - I||_F = {resid:.2e} (limit {1e-6 * nv:.1e}), "
              f"vs dense inverse {oracle_gap:.2e}")


def test_torus_harmonic_sampling():
    torus = generate_torus(96, 24, 2.0, 0.7)
    geo = vertex_geometry(torus)
    dec = DecOperators.build(torus)
    basis = eigensolve(dec, 40)
    hb = harmonic_oneforms(dec.hodge1_system())
    bases = build_vector_bases(torus, basis, harmonic=hb, geometry=geo)
    with_h = KernelParams(nu=1.5, kappa_d=1.0, kappa_c=1.0, sigma_d2=0.5,
                          sigma_c2=0.5, sigma_h2=1.0, L=40)
    without_h = with_h.replace(sigma_h2=0.0)
    # project in the mass-weighted inner product, where the harmonic fields
    # are orthogonal to the diverging/curling ones
    bh = bases.harmonic_matrix()
    w3 = np.repeat(dec.star0, 3)
    bh_m = (w3[:, None] * bh) / np.sqrt((bh * (w3[:, None] * bh)).sum(axis=0))

    def mean_projection(params, seed):
        draws = sample(vector_kernel(bases, params), 4, seed=seed)
        return np.mean([np.abs(bh_m.T @ d.vectors.ravel()).max()
                        for d in draws])

    proj_on = mean_projection(with_h, seed=11)
    proj_off = mean_projection(without_h, seed=11)
    ok = proj_on > 0.0 and proj_on > 10.0 * proj_off
    criterion("torus samples carry a harmonic component", ok,
              f"harmonic projection {proj_on:.3f} with sigma_h>0 vs "
              f"{proj_off:.2e} without")
