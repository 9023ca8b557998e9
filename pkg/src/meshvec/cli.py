"""Command-line pipelines: mesh generation, spectra, sampling, inference.

Runs are driven by a TOML config (JSON accepted as a fallback) with a small
set of flag overrides; every command writes its outputs atomically under the
configured output directory and is deterministic given (config, seed).

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

import os

_threads = os.environ.get("MESHVEC_THREADS")
if _threads:
    # Must happen before numpy initializes its BLAS thread pools.
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import fileio
from .dec import DecOperators
from .errors import ConfigError, MeshvecError, SingularMass
from .errors import (
    ConvergenceFailure,
    NoSpectralGap,
    SingularSystem,
)
from .fields import build_vector_bases
from .gp import (
    Observations,
    enforce_no_flux,
    fit,
    fit_kappa_weights,
    make_observations,
    metrics,
    posterior,
    sample,
    uv_to_ambient,
)
from .kernels import (
    KernelParams,
    kappa_eval,
    kappa_field_from_config,
    nonstationary_vector_kernel,
    params_from_config,
    vector_kernel,
)
from .mesh import (
    add_outer_buffer,
    generate_grid_delaunay,
    generate_icosphere,
    generate_torus,
    sphere_from_latlon_grid,
    vertex_geometry,
)
from .spectral import eigensolve, eigensolve_dirichlet, harmonic_oneforms

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (ConvergenceFailure, SingularSystem, NoSpectralGap,
                   SingularMass, np.linalg.LinAlgError)


@dataclass
class RunConfig:
    """Parsed run configuration; see each command's --help for the keys."""

    mesh: dict
    kernel: dict = field(default_factory=dict)
    boundary: str = "open"
    flat_mode: bool = False
    harmonic: str = "auto"
    observations: str | None = None
    truth: str | None = None
    output: Path = Path("out")
    seed: int = 0
    count: int = 4
    fit: dict = field(default_factory=dict)


def load_config(path: str, overrides: dict) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = p.read_bytes()
    try:
        if p.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomli.loads(raw.decode())
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    run = data.get("run", {})
    mesh = data.get("mesh")
    if not mesh:
        raise ConfigError("config needs a [mesh] block")
    sources = [k for k in ("generator", "file") if k in mesh]
    if len(sources) != 1:
        raise ConfigError(
            "[mesh] must set exactly one of 'generator' or 'file'")
    cfg = RunConfig(
        mesh=mesh,
        kernel=data.get("kernel", {}),
        boundary=run.get("boundary", "open"),
        flat_mode=bool(run.get("flat_mode", False)),
        harmonic=run.get("harmonic", "auto"),
        observations=run.get("observations"),
        truth=run.get("truth"),
        output=Path(run.get("output", "out")),
        seed=int(run.get("seed", 0)),
        count=int(run.get("count", 4)),
        fit=data.get("fit", {}),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.output = Path(cfg.output)
    if cfg.boundary not in ("open", "no_flux"):
        raise ConfigError(f"run.boundary must be open|no_flux, got {cfg.boundary}")
    if cfg.harmonic not in ("auto", "manual_flat", "none"):
        raise ConfigError(
            f"run.harmonic must be auto|manual_flat|none, got {cfg.harmonic}")
    return cfg


def make_mesh(block: dict):
    """Build the mesh named by a [mesh] block; returns (complex, latlon_map,
    interest_mask)."""
    latlon_map = None
    mask = None
    if "file" in block:
        complex = fileio.read_mesh(block["file"])
        if "latlon_map" in block:
            latlon_map = fileio.read_latlon_map(block["latlon_map"])
    else:
        gen = block["generator"]
        if gen == "icosphere":
            complex = generate_icosphere(int(block.get("subdivisions", 2)),
                                         float(block.get("radius", 1.0)))
        elif gen == "torus":
            complex = generate_torus(int(block.get("major_sections", 96)),
                                     int(block.get("minor_sections", 24)),
                                     float(block.get("major_radius", 2.0)),
                                     float(block.get("minor_radius", 0.7)))
        elif gen == "grid":
            bounds = tuple(block.get("bounds", (0.0, 0.0, 1.0, 1.0)))
            complex = generate_grid_delaunay(int(block.get("nx", 10)),
                                             int(block.get("ny", 10)),
                                             bounds,
                                             block.get("hole"))
        elif gen == "latlon_sphere":
            lat_step = float(block.get("lat_step", 10.0))
            lon_step = float(block.get("lon_step", 10.0))
            lats = block.get("lats", np.arange(-90.0, 90.0 + 1e-9, lat_step))
            lons = block.get("lons", np.arange(-180.0, 180.0, lon_step))
            complex, latlon_map = sphere_from_latlon_grid(
                lats, lons, float(block.get("radius", 1.0)))
        else:
            raise ConfigError(f"unknown mesh generator {gen!r}")
    buffer_block = block.get("buffer")
    if buffer_block:
        complex, mask = add_outer_buffer(
            complex, float(buffer_block.get("margin", 0.0)),
            float(buffer_block.get("resolution", 1.0)))
    return complex, latlon_map, mask


@dataclass
class Model:
    complex: object
    geometry: object
    dec: DecOperators
    params: KernelParams
    neumann: object
    curl_source: object
    bases: object
    latlon_map: object
    interest_mask: object
    warnings: list


def _effective_truncation(requested: int, explicit: bool, available: int,
                          what: str) -> int:
    if requested + 1 > available:
        if explicit:
            raise ConfigError(
                f"kernel.L={requested} violates L+1 <= {what} ({available})")
        return available - 1
    return requested


def build_model(cfg: RunConfig, need_kernel: bool = True) -> Model:
    complex, latlon_map, mask = make_mesh(cfg.mesh)
    if cfg.boundary == "no_flux" and not complex.has_boundary:
        raise ConfigError("run.boundary=no_flux requires a mesh with boundary")
    geometry = vertex_geometry(complex)
    dec_ops = DecOperators.build(complex, cfg.flat_mode)
    params = params_from_config(cfg.kernel)
    explicit_L = "L" in cfg.kernel
    L = _effective_truncation(params.L, explicit_L, complex.num_vertices,
                              "V")
    neumann = eigensolve(dec_ops, L)
    curl_source = None
    if cfg.boundary == "no_flux":
        interior = complex.num_vertices - len(complex.boundary_vertices)
        Ld = _effective_truncation(params.L, explicit_L, interior,
                                   "interior vertex count")
        curl_source = eigensolve_dirichlet(dec_ops, Ld)
    warnings = []
    bases = None
    if need_kernel:
        harmonic = None
        if params.sigma_h2 > 0:
            if cfg.harmonic == "manual_flat":
                harmonic = "manual_flat"
            elif cfg.harmonic == "auto":
                hb = harmonic_oneforms(dec_ops.hodge1_system())
                if hb.dimension == 0:
                    warnings.append(
                        "sigma_h > 0 but the harmonic basis is empty on this "
                        "mesh; the harmonic component is dropped")
                    harmonic = None
                else:
                    harmonic = hb
        bases = build_vector_bases(complex, neumann,
                                   curling_source=curl_source,
                                   harmonic=harmonic, geometry=geometry)
    return Model(complex, geometry, dec_ops, params.replace(L=L), neumann,
                 curl_source, bases, latlon_map, mask, warnings)


def _build_kernel(model: Model, cfg: RunConfig):
    kf_block = cfg.kernel.get("kappa_field")
    if kf_block and kf_block.get("weights") is not None:
        kf = kappa_field_from_config(kf_block)
        coords = _vertex_coordinate(model, kf_block.get("coordinate",
                                                        "latitude"))
        return nonstationary_vector_kernel(model.bases, model.params, kf,
                                           coords)
    return vector_kernel(model.bases, model.params)


def _vertex_coordinate(model: Model, name: str) -> np.ndarray:
    pos = model.complex.positions
    if name == "latitude":
        r = np.linalg.norm(pos, axis=1)
        return np.degrees(np.arcsin(np.clip(pos[:, 2] / r, -1.0, 1.0)))
    if name in ("x", "y", "z"):
        return pos[:, "xyz".index(name)]
    raise ConfigError(f"unknown kappa_field coordinate {name!r}")


def _load_observations(cfg: RunConfig, model: Model) -> Observations:
    if not cfg.observations:
        raise ConfigError("run.observations is required for this command")
    path = Path(cfg.observations)
    if not path.exists():
        raise FileNotFoundError(f"observation file not found: {path}")
    noise = float(cfg.kernel.get("noise", 1e-4))
    mode, a, b = fileio.read_observation_csv(path)
    if mode == "ambient":
        return make_observations(model.complex, a, b, noise, model.geometry)
    if model.latlon_map is None:
        raise ConfigError(
            "lat/lon observations need a latlon_sphere mesh or a "
            "mesh.latlon_map file")
    at_pole = np.abs(np.abs(a[:, 0]) - 90.0) < 1e-9
    if at_pole.any():
        print(f"warning: dropping {int(at_pole.sum())} pole observation(s); "
              "the east/north frame is undefined there", file=sys.stderr)
        a, b = a[~at_pole], b[~at_pole]
    return uv_to_ambient(model.complex, model.latlon_map, a, b, noise,
                         model.geometry)


# -- commands -------------------------------------------------------------------

def cmd_meshgen(cfg: RunConfig, args) -> int:
    complex, latlon_map, mask = make_mesh(cfg.mesh)
    out = cfg.output
    fmt = cfg.mesh.get("output_format", "obj")
    if fmt == "obj":
        fileio.write_obj(out / "mesh.obj", complex)
    elif fmt == "off":
        fileio.write_off(out / "mesh.off", complex)
    else:
        raise ConfigError(f"unknown mesh.output_format {fmt!r}")
    if latlon_map is not None:
        fileio.write_latlon_map(out / "latlon_map.csv", latlon_map)
    if mask is not None:
        fileio.atomic_write(out / "interest_mask.csv", "vertex_id,interest\n"
                            + "".join(f"{i},{int(m)}\n"
                                      for i, m in enumerate(mask)))
    print(f"wrote {complex!r} to {out}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, args) -> int:
    model = build_model(cfg, need_kernel=False)
    out = cfg.output
    fileio.write_spectrum_csv(out / "spectrum.csv", model.neumann.eigenvalues)
    fileio.write_matrix_csv(out / "eigenvectors.csv",
                            model.neumann.eigenvectors)
    if model.curl_source is not None:
        fileio.write_spectrum_csv(out / "spectrum_dirichlet.csv",
                                  model.curl_source.eigenvalues)
    if args.harmonic:
        hb = harmonic_oneforms(model.dec.hodge1_system())
        print(f"harmonic dimension H = {hb.dimension} "
              f"(spectral gap {hb.gap_ratio:.3e})")
        if hb.dimension:
            fileio.write_matrix_csv(out / "harmonics.csv", hb.one_forms)
    print(f"wrote spectrum of {model.complex!r} to {out}")
    return EXIT_OK


def cmd_sample(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    for warning in model.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    kernel = _build_kernel(model, cfg)
    draws = sample(kernel, cfg.count, cfg.seed)
    if cfg.boundary == "no_flux":
        draws = [enforce_no_flux(model.complex, d, model.geometry)
                 for d in draws]
    for k, draw in enumerate(draws, start=1):
        fileio.write_field_csv(cfg.output / f"sample_{k}.csv", model.complex,
                               draw.vectors)
        fileio.write_vtk(cfg.output / f"sample_{k}.vtk", model.complex,
                         draw.vectors, name="sample")
    print(f"wrote {cfg.count} prior samples to {cfg.output}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    for warning in model.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    obs = _load_observations(cfg, model)
    kernel = _build_kernel(model, cfg)
    post = posterior(kernel, obs, diag_only=True)
    mean = post.mean
    if cfg.boundary == "no_flux":
        mean = enforce_no_flux(model.complex, mean, model.geometry)
    per_vertex_var = post.variance.reshape(-1, 3).sum(axis=1)
    fileio.write_posterior_csv(cfg.output / "posterior_mean.csv",
                               mean.vectors, per_vertex_var)
    fileio.write_vtk(cfg.output / "posterior_mean.vtk", model.complex,
                     mean.vectors, name="posterior_mean")
    report = {"nll": post.nll,
              "observed_vertices": int(len(obs.vertex_ids)),
              "noise_variance": obs.noise_variance}
    if cfg.truth:
        ids, truth = fileio.read_field_csv(cfg.truth)
        report.update(metrics(mean.vectors[ids], truth))
        held = ~np.isin(ids, obs.vertex_ids)
        if held.any():
            report["heldout_mse"] = metrics(mean.vectors[ids], truth,
                                            held)["mse"]
    fileio.write_json(cfg.output / "metrics.json", report)
    print(f"posterior written to {cfg.output} (nll={post.nll:.3f})")
    return EXIT_OK


def _fit_space(block: dict) -> dict:
    """Translate config-level bounds (std devs) to KernelParams names."""
    space = {}
    for name, bounds in block.items():
        lo, hi = float(bounds[0]), float(bounds[1])
        if name in ("sigma_d", "sigma_c", "sigma_h"):
            space[name + "2"] = (lo * lo, hi * hi)
        elif name in ("nu", "kappa_d", "kappa_c", "noise"):
            space[name] = (lo, hi)
        else:
            raise ConfigError(f"unknown fit parameter {name!r}")
    return space


def cmd_fit(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    obs = _load_observations(cfg, model)
    mode = cfg.fit.get("mode", "nll")
    out = cfg.output
    if mode == "nll":
        if not cfg.fit.get("space"):
            raise ConfigError("[fit] needs a nonempty 'space' table")
        space = _fit_space(cfg.fit["space"])
        result = fit(model.bases, obs, space,
                     budget=int(cfg.fit.get("budget", 200)),
                     base_params=model.params)
        best = result.params
        payload = {
            "mode": "nll",
            "best": {"nu": best.nu, "kappa_d": best.kappa_d,
                     "kappa_c": best.kappa_c,
                     "sigma_d": math.sqrt(best.sigma_d2),
                     "sigma_c": math.sqrt(best.sigma_c2),
                     "sigma_h": math.sqrt(best.sigma_h2),
                     "noise": result.noise_variance},
            "nll": result.nll,
            "n_evals": result.n_evals,
            "budget_exhausted": result.budget_exhausted,
            "trace": [t["nll"] for t in result.trace],
        }
    elif mode == "mcmc":
        kf_block = cfg.kernel.get("kappa_field")
        if not kf_block:
            raise ConfigError("fit.mode=mcmc needs a [kernel.kappa_field] block")
        kf0 = kappa_field_from_config(kf_block)
        coords = _vertex_coordinate(model, kf_block.get("coordinate",
                                                        "latitude"))
        result = fit_kappa_weights(
            model.bases, obs, model.params, kf0, coords,
            n_iter=int(cfg.fit.get("budget", 2000)), seed=cfg.seed)
        lats = np.arange(-80.0, 80.0 + 0.5, 1.0)
        curve = kappa_eval(result.kappa_field, lats)
        fileio.atomic_write(out / "kappa_curve.csv", "lat_deg,kappa\n"
                            + "".join(f"{float(lat)!r},{float(k)!r}\n"
                                      for lat, k in zip(lats, curve)))
        payload = {
            "mode": "mcmc",
            "weights": [float(w) for w in result.kappa_field.weights],
            "nll": result.nll,
            "n_evals": result.n_evals,
            "trace": [t["nll"] for t in result.trace[:: max(1, len(result.trace) // 500)]],
        }
    else:
        raise ConfigError(f"unknown fit.mode {mode!r}")
    fileio.write_json(out / "fit.json", payload)
    print(f"fit complete (nll={payload['nll']:.3f}); wrote {out / 'fit.json'}")
    return EXIT_OK


def cmd_metrics(cfg, args) -> int:
    pred_ids, pred = fileio.read_field_csv(args.predicted)
    truth_ids, truth = fileio.read_field_csv(args.truth)
    if not np.array_equal(pred_ids, truth_ids):
        common, pi, ti = np.intersect1d(pred_ids, truth_ids,
                                        return_indices=True)
        if common.size == 0:
            raise ValueError("predicted and truth files share no vertex ids")
        pred, truth = pred[pi], truth[ti]
    report = metrics(pred, truth)
    out = Path(args.output or "metrics.json")
    fileio.write_json(out, report)
    print(f"mse={report['mse']:.6g} -> {out}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------

_CONFIG_KEYS = {
    "meshgen": ("[mesh] generator|file, subdivisions, radius, major_sections, "
                "minor_sections, major_radius, minor_radius, nx, ny, bounds, "
                "hole, lat_step, lon_step, lats, lons, latlon_map, "
                "output_format, buffer.margin, buffer.resolution; "
                "[run] output"),
    "spectrum": ("[mesh] (as meshgen); [kernel] L, flat_mode via [run]; "
                 "[run] boundary, output"),
    "sample": ("[mesh]; [kernel] nu, kappa_d, kappa_c, sigma_d, sigma_c, "
               "sigma_h, L, noise, kappa_field.*; [run] boundary, flat_mode, "
               "harmonic, output, seed, count"),
    "predict": ("[mesh]; [kernel] (as sample); [run] boundary, flat_mode, "
                "harmonic, observations, truth, output, seed"),
    "fit": ("[mesh]; [kernel] (as sample); [fit] mode (nll|mcmc), space "
            "(per-parameter [lo, hi]), budget; [run] observations, output, "
            "seed"),
}


def _add_common(sub, name):
    p = sub.add_parser(
        name, help=f"{name} pipeline",
        epilog=f"config keys read: {_CONFIG_KEYS.get(name, 'none')}")
    if name != "metrics":
        p.add_argument("--config", required=True,
                       help="TOML (or JSON) run configuration")
        p.add_argument("--output", help="override run.output directory")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--observations",
                       help="override run.observations path")
        p.add_argument("--truth", help="override run.truth path")
        p.add_argument("--count", type=int, help="override run.count")
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="meshvec",
        description="Intrinsic Gaussian processes for vector fields on "
                    "triangle meshes. MESHVEC_THREADS caps BLAS parallelism.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub, "meshgen").set_defaults(func=cmd_meshgen)
    spectrum = _add_common(sub, "spectrum")
    spectrum.add_argument("--harmonic", action="store_true",
                          help="also report the harmonic basis dimension")
    spectrum.set_defaults(func=cmd_spectrum)
    _add_common(sub, "sample").set_defaults(func=cmd_sample)
    _add_common(sub, "predict").set_defaults(func=cmd_predict)
    _add_common(sub, "fit").set_defaults(func=cmd_fit)
    m = sub.add_parser("metrics", help="compare two field CSV files",
                       epilog="reads no config keys")
    m.add_argument("--predicted", required=True)
    m.add_argument("--truth", required=True)
    m.add_argument("--output", help="metrics JSON path (default metrics.json)")
    m.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "metrics":
            return args.func(None, args)
        overrides = {k: getattr(args, k, None)
                     for k in ("output", "seed", "observations", "truth",
                               "count")}
        if overrides.get("output"):
            overrides["output"] = Path(overrides["output"])
        cfg = load_config(args.config, overrides)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except (MeshvecError, OSError, ValueError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
