import json
import textwrap

import numpy as np
import pytest

from meshvec.cli import main

from conftest import random_hull_mesh


def write_config(path, text):
    path.write_text(textwrap.dedent(text))
    return str(path)


SPHERE_CONFIG = """
    [mesh]
    generator = "icosphere"
    subdivisions = 2

    [kernel]
    nu = 1.5
    kappa_d = 1.5
    kappa_c = 1.5
    sigma_d = 0.5
    sigma_c = 1.0
    sigma_h = 0.0
    L = 30

    [run]
    output = "{out}"
    seed = 7
    count = 2
"""


@pytest.fixture()
def sphere_config(tmp_path):
    out = tmp_path / "out"
    return write_config(tmp_path / "cfg.toml",
                        SPHERE_CONFIG.format(out=out)), out


class TestSpectrumCommand:
    def test_sphere_spectrum_files(self, sphere_config, capsys):
        cfg, out = sphere_config
        assert main(["spectrum", "--config", cfg]) == 0
        lines = (out / "spectrum.csv").read_text().splitlines()
        assert lines[0] == "index,eigenvalue"
        assert abs(float(lines[1].split(",")[1])) < 1e-9
        assert (out / "eigenvectors.csv").exists()

    def test_torus_harmonic_report(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "t.toml", """
            [mesh]
            generator = "torus"
            major_sections = 32
            minor_sections = 12
            major_radius = 2.0
            minor_radius = 0.7

            [kernel]
            L = 20

            [run]
            output = "%s"
        """ % (tmp_path / "out"))
        assert main(["spectrum", "--config", cfg, "--harmonic"]) == 0
        assert "harmonic dimension H = 2" in capsys.readouterr().out

    def test_truncation_too_large_is_config_error(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "t.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 0

            [kernel]
            L = 500

            [run]
            output = "%s"
        """ % (tmp_path / "out"))
        assert main(["spectrum", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert "L" in err and "L+1 <= V" in err


class TestSampleCommand:
    def test_deterministic_outputs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg = write_config(tmp_path / "cfg.toml",
                           SPHERE_CONFIG.format(out=out1))
        assert main(["sample", "--config", cfg]) == 0
        assert main(["sample", "--config", cfg, "--output", str(out2)]) == 0
        for name in ("sample_1.csv", "sample_2.csv", "sample_1.vtk"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_sphere_harmonic_warning(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 1

            [kernel]
            sigma_h = 1.0
            L = 10

            [run]
            output = "%s"
            count = 1
        """ % (tmp_path / "out"))
        assert main(["sample", "--config", cfg]) == 0
        assert "harmonic basis is empty" in capsys.readouterr().err

    def test_obj_mesh_input_runs_end_to_end(self, tmp_path):
        from meshvec.fileio import read_field_csv, write_obj

        mesh = random_hull_mesh(300, seed=21)
        write_obj(tmp_path / "bunnylike.obj", mesh)
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            file = "%s"

            [kernel]
            kappa_d = 0.5
            kappa_c = 0.5
            L = 25

            [run]
            output = "%s"
            count = 1
        """ % (tmp_path / "bunnylike.obj", tmp_path / "out"))
        assert main(["sample", "--config", cfg]) == 0
        ids, vecs = read_field_csv(tmp_path / "out" / "sample_1.csv")
        assert len(ids) == mesh.num_vertices


class TestPredictCommand:
    def make_synthetic(self, tmp_path):
        """Prior sample on a sphere observed at every 5th vertex."""
        from meshvec import (
            DecOperators,
            KernelParams,
            build_vector_bases,
            eigensolve,
            generate_icosphere,
            sample,
            vector_kernel,
            vertex_geometry,
        )
        from meshvec.fileio import atomic_write, write_field_csv

        ico = generate_icosphere(2)
        geo = vertex_geometry(ico)
        basis = eigensolve(DecOperators.build(ico), 30)
        bases = build_vector_bases(ico, basis, geometry=geo)
        params = KernelParams(nu=1.5, kappa_d=1.5, kappa_c=1.5,
                              sigma_d2=0.25, sigma_c2=1.0, sigma_h2=0.0, L=30)
        kernel = vector_kernel(bases, params)
        truth = sample(kernel, 1, seed=7)[0]
        write_field_csv(tmp_path / "truth.csv", ico, truth.vectors)
        ids = np.arange(0, ico.num_vertices, 5)
        rows = ["vertex_id,vx,vy,vz"]
        rows += [f"{i},{float(truth.vectors[i, 0])!r},"
                 f"{float(truth.vectors[i, 1])!r},"
                 f"{float(truth.vectors[i, 2])!r}" for i in ids]
        atomic_write(tmp_path / "obs.csv", "\n".join(rows) + "\n")
        prior_var = float(np.diag(kernel.matrix).mean())
        return prior_var

    def test_downscaling_sanity(self, tmp_path):
        prior_var = self.make_synthetic(tmp_path)
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 2

            [kernel]
            nu = 1.5
            kappa_d = 1.5
            kappa_c = 1.5
            sigma_d = 0.5
            sigma_c = 1.0
            L = 30
            noise = 1e-6

            [run]
            output = "%s"
            observations = "%s"
            truth = "%s"
        """ % (tmp_path / "out", tmp_path / "obs.csv",
               tmp_path / "truth.csv"))
        assert main(["predict", "--config", cfg]) == 0
        report = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert report["mse"] < prior_var
        assert (tmp_path / "out" / "posterior_mean.csv").exists()
        assert (tmp_path / "out" / "posterior_mean.vtk").exists()

    def test_missing_observations_no_partial_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 1

            [kernel]
            L = 10

            [run]
            output = "%s"
            observations = "%s"
        """ % (out, tmp_path / "nope.csv"))
        assert main(["predict", "--config", cfg]) == 3
        assert not (out / "posterior_mean.csv").exists()
        assert not (out / "metrics.json").exists()

    def test_no_flux_boundary_zeroed(self, tmp_path):
        from meshvec import generate_grid_delaunay, vertex_geometry
        from meshvec.fileio import atomic_write, read_field_csv
        from meshvec.gp import boundary_outward_normals

        g = generate_grid_delaunay(12, 9, (0, 0, 3, 2))
        rows = ["vertex_id,vx,vy,vz"]
        rng = np.random.default_rng(0)
        ids = rng.choice(g.num_vertices, 15, replace=False)
        for i in ids:
            vx, vy = rng.standard_normal(2)
            rows.append(f"{i},{float(vx)!r},{float(vy)!r},0.0")
        atomic_write(tmp_path / "obs.csv", "\n".join(rows) + "\n")
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "grid"
            nx = 12
            ny = 9
            bounds = [0.0, 0.0, 3.0, 2.0]

            [kernel]
            nu = 1.5
            kappa_d = 1.0
            kappa_c = 1.0
            sigma_d = 1.0
            sigma_c = 1.0
            L = 40

            [run]
            boundary = "no_flux"
            flat_mode = true
            output = "%s"
            observations = "%s"
        """ % (tmp_path / "out", tmp_path / "obs.csv"))
        assert main(["predict", "--config", cfg]) == 0
        vids, mean = read_field_csv(tmp_path / "out" / "posterior_mean.csv")
        bids, bnorms = boundary_outward_normals(g, vertex_geometry(g))
        flux = np.einsum("ij,ij->i", mean[bids], bnorms)
        assert np.abs(flux).max() <= 1e-12

    def test_no_flux_requires_boundary(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 1

            [run]
            boundary = "no_flux"
            output = "%s"
        """ % (tmp_path / "out"))
        assert main(["sample", "--config", cfg]) == 2


class TestFitCommand:
    def prepare_observations(self, tmp_path):
        from meshvec import (
            DecOperators,
            KernelParams,
            build_vector_bases,
            eigensolve,
            generate_icosphere,
            sample,
            vector_kernel,
            vertex_geometry,
        )
        from meshvec.fileio import atomic_write

        ico = generate_icosphere(1)
        geo = vertex_geometry(ico)
        basis = eigensolve(DecOperators.build(ico), 15)
        bases = build_vector_bases(ico, basis, geometry=geo)
        params = KernelParams(nu=1.5, kappa_d=1.0, kappa_c=2.0, sigma_d2=0.0,
                              sigma_c2=1.0, sigma_h2=0.0, L=15)
        truth = sample(vector_kernel(bases, params), 1, seed=5)[0]
        rows = ["vertex_id,vx,vy,vz"]
        rows += [f"{i},{float(v[0])!r},{float(v[1])!r},{float(v[2])!r}"
                 for i, v in enumerate(truth.vectors)]
        atomic_write(tmp_path / "obs.csv", "\n".join(rows) + "\n")

    def test_nll_fit_monotone(self, tmp_path):
        self.prepare_observations(tmp_path)
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 1

            [kernel]
            nu = 1.5
            sigma_d = 0.0
            sigma_c = 1.0
            L = 15

            [run]
            output = "%s"
            observations = "%s"

            [fit]
            budget = 20

            [fit.space]
            kappa_c = [0.2, 10.0]
        """ % (tmp_path / "out", tmp_path / "obs.csv"))
        assert main(["fit", "--config", cfg]) == 0
        report = json.loads((tmp_path / "out" / "fit.json").read_text())
        assert report["nll"] <= report["trace"][0] + 1e-9
        assert 0.2 <= report["best"]["kappa_c"] <= 10.0

    def test_kappa_mode_writes_curve(self, tmp_path):
        self.prepare_observations(tmp_path)
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 1

            [kernel]
            nu = 1.5
            sigma_d = 0.0
            sigma_c = 1.0
            L = 15

            [kernel.kappa_field]
            n_centers = 20
            lengthscale = 10.0

            [run]
            output = "%s"
            observations = "%s"
            seed = 1

            [fit]
            mode = "mcmc"
            budget = 30
        """ % (tmp_path / "out", tmp_path / "obs.csv"))
        assert main(["fit", "--config", cfg]) == 0
        lines = (tmp_path / "out" / "kappa_curve.csv").read_text().splitlines()
        assert lines[0] == "lat_deg,kappa"
        assert len(lines) == 162  # header + 161 latitudes (-80..80)
        report = json.loads((tmp_path / "out" / "fit.json").read_text())
        assert len(report["weights"]) == 20

    def test_empty_space_is_config_error(self, tmp_path):
        self.prepare_observations(tmp_path)
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "icosphere"
            subdivisions = 1

            [run]
            output = "%s"
            observations = "%s"

            [fit]
            budget = 5
        """ % (tmp_path / "out", tmp_path / "obs.csv"))
        assert main(["fit", "--config", cfg]) == 2


class TestMeshgenAndMetrics:
    def test_meshgen_latlon(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "latlon_sphere"
            lat_step = 30.0
            lon_step = 45.0

            [run]
            output = "%s"
        """ % (tmp_path / "out"))
        assert main(["meshgen", "--config", cfg]) == 0
        assert (tmp_path / "out" / "mesh.obj").exists()
        assert (tmp_path / "out" / "latlon_map.csv").exists()

    def test_metrics_command(self, tmp_path):
        from meshvec import generate_icosphere
        from meshvec.fileio import write_field_csv

        ico = generate_icosphere(1)
        rng = np.random.default_rng(0)
        truth = rng.standard_normal((ico.num_vertices, 3))
        write_field_csv(tmp_path / "truth.csv", ico, truth)
        write_field_csv(tmp_path / "pred.csv", ico, truth + [0.1, 0.0, 0.0])
        out = tmp_path / "m.json"
        assert main(["metrics", "--predicted", str(tmp_path / "pred.csv"),
                     "--truth", str(tmp_path / "truth.csv"),
                     "--output", str(out)]) == 0
        report = json.loads(out.read_text())
        assert abs(report["mse"] - 0.01) < 1e-12

    def test_bad_config_missing_mesh(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.toml", "[run]\nseed = 1\n")
        assert main(["spectrum", "--config", cfg]) == 2

    def test_json_config_fallback(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "mesh": {"generator": "icosphere", "subdivisions": 1},
            "kernel": {"L": 10},
            "run": {"output": str(tmp_path / "out")},
        }))
        assert main(["spectrum", "--config", str(cfg)]) == 0

    @pytest.mark.parametrize("command", ["meshgen", "spectrum", "sample",
                                         "predict", "fit"])
    def test_help_lists_config_keys(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "config keys read" in text
        assert "[mesh]" in text

    def test_dirichlet_spectrum_exported_for_no_flux(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.toml", """
            [mesh]
            generator = "grid"
            nx = 8
            ny = 8

            [kernel]
            L = 10

            [run]
            boundary = "no_flux"
            flat_mode = true
            output = "%s"
        """ % (tmp_path / "out"))
        assert main(["spectrum", "--config", cfg]) == 0
        lines = (tmp_path / "out"
                 / "spectrum_dirichlet.csv").read_text().splitlines()
        assert lines[0] == "index,eigenvalue"
        assert float(lines[1].split(",")[1]) > 0.0  # no zero Dirichlet mode
