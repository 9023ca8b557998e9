import io

import h5py
import numpy as np
import pytest


def synthetic_era5_netcdf(lats, lons, u, v, scale=None) -> bytes:
    """NetCDF4/HDF5 payload shaped like an ERA5 response."""
    buf = io.BytesIO()
    with h5py.File(buf, "w") as f:
        f.create_dataset("latitude", data=np.asarray(lats, dtype=np.float64))
        f.create_dataset("longitude", data=np.asarray(lons, dtype=np.float64))
        du = f.create_dataset("u", data=np.asarray(u)[None, :, :])
        dv = f.create_dataset("v", data=np.asarray(v)[None, :, :])
        if scale is not None:
            for d in (du, dv):
                d.attrs["scale_factor"] = scale
                d.attrs["add_offset"] = 0.0
    return buf.getvalue()


class FakeEra5Transport:
    """Deterministic stand-in for the CDS service."""

    def __init__(self, lats, lons, u, v):
        self.payload = synthetic_era5_netcdf(lats, lons, u, v)
        self.calls = 0

    def fetch(self, dataset, request):
        self.calls += 1
        return self.payload


class FakeDrifterTransport:
    def __init__(self, rows):
        header = "lat,lon,u,v,time\n"
        self.payload = (header + "".join(rows)).encode()
        self.calls = 0

    def fetch(self, params):
        self.calls += 1
        return self.payload


@pytest.fixture()
def era5_grid():
    lats = np.arange(90.0, -90.1, -10.0)  # ERA5 convention: descending
    lons = np.arange(0.0, 360.0, 10.0)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((len(lats), len(lons)))
    v = rng.standard_normal((len(lats), len(lons)))
    return lats, lons, u, v
