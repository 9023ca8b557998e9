"""ERA5 reanalysis downloads (u/v wind components on pressure levels).

Talks the Climate Data Store retrieve protocol through a small injectable
transport, so tests (and the cache) never need the network. Credentials come
from the environment only: ``CDSAPI_URL`` and ``CDSAPI_KEY``.

Responses are NetCDF4 (HDF5) payloads; parsing goes through h5py.
"""

import io
import os
import time

import h5py
import numpy as np

from .cache import RawCache
from .datasets import AuthError, GriddedWind, ServiceUnavailable

MONTHLY_DATASET = "reanalysis-era5-pressure-levels-monthly-means"
HOURLY_DATASET = "reanalysis-era5-pressure-levels"

VARIABLES = {
    "u": "u_component_of_wind",
    "v": "v_component_of_wind",
}

RETRIES = 3
BACKOFF_SECONDS = 2.0


class CdsTransport:
    """Minimal CDS retrieve client: submit, poll, download."""

    def __init__(self, url=None, key=None, session=None):
        self.url = url or os.environ.get("CDSAPI_URL")
        self.key = key or os.environ.get("CDSAPI_KEY")
        if not self.url or not self.key:
            raise AuthError(
                "CDSAPI_URL and CDSAPI_KEY must be set to download ERA5 data")
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def fetch(self, dataset: str, request: dict) -> bytes:
        last = None
        for attempt in range(RETRIES):
            try:
                resp = self.session.post(
                    f"{self.url}/resources/{dataset}",
                    json=request,
                    headers={"Authorization": f"Bearer {self.key}"},
                    timeout=300)
                if resp.status_code in (401, 403):
                    raise AuthError(f"service rejected credentials "
                                    f"({resp.status_code})")
                if resp.status_code >= 500:
                    raise ServiceUnavailable(f"HTTP {resp.status_code}")
                resp.raise_for_status()
                return resp.content
            except ServiceUnavailable as exc:
                last = exc
                time.sleep(BACKOFF_SECONDS * (attempt + 1))
        raise ServiceUnavailable(f"gave up after {RETRIES} attempts: {last}")


def _build_request(variable_set, level_hpa, period, grid_deg):
    variables = [VARIABLES[v] for v in variable_set]
    request = {
        "product_type": period.get("product", "monthly_averaged_reanalysis"),
        "variable": variables,
        "pressure_level": str(int(level_hpa)),
        "grid": [float(grid_deg), float(grid_deg)],
        "format": "netcdf",
    }
    request.update({k: period[k] for k in ("year", "month", "day", "time")
                    if k in period})
    dataset = HOURLY_DATASET if period.get("hourly") else MONTHLY_DATASET
    return dataset, request


def count_time_slices(payload: bytes) -> int:
    """Number of time slices in a NetCDF4 ERA5 payload (1 if no time axis)."""
    with h5py.File(io.BytesIO(payload), "r") as f:
        shape = f["u"].shape
    return shape[0] if len(shape) > 2 else 1


def parse_era5_netcdf(payload: bytes, slice_index: int = 0) -> GriddedWind:
    """Extract one u/v grid from a NetCDF4 (HDF5) ERA5 payload.

    ``slice_index`` selects along the time axis when present (hourly
    datasets carry one slice per hour). Latitudes are flipped to ascending
    order and longitudes wrapped to [-180, 180).
    """
    with h5py.File(io.BytesIO(payload), "r") as f:
        lat_name = "latitude" if "latitude" in f else "lat"
        lon_name = "longitude" if "longitude" in f else "lon"
        lats = np.asarray(f[lat_name], dtype=np.float64)
        lons = np.asarray(f[lon_name], dtype=np.float64)

        def read(name):
            ds = f[name]
            data = np.asarray(ds[slice_index] if ds.ndim > 2 else ds,
                              dtype=np.float64)
            while data.ndim > 2:  # e.g. a singleton pressure-level axis
                data = data[0]
            scale = ds.attrs.get("scale_factor", 1.0)
            offset = ds.attrs.get("add_offset", 0.0)
            return data * scale + offset

        u = read("u")
        v = read("v")
    if lats[0] > lats[-1]:
        lats = lats[::-1]
        u = u[::-1]
        v = v[::-1]
    lons = ((lons + 180.0) % 360.0) - 180.0
    order = np.argsort(lons)
    return GriddedWind(lats, lons[order], u[:, order], v[:, order])


def fetch_era5_raw(variable_set=("u", "v"), level_hpa=500, period=None,
                   grid_deg=2.0, cache=None, transport=None) -> bytes:
    """Download (or reload from cache) the raw NetCDF payload.

    ``period`` is a dict: ``{"year": "2020", "month": "07"}`` for monthly
    means, plus ``"hourly": True`` with ``day``/``time`` lists for hourly
    slices (the three 2020/21 winter months give 2208 of them). Identical
    requests are served from the content-addressed cache without touching
    the network.
    """
    if period is None:
        period = {"year": "2020", "month": "07"}
    dataset, request = _build_request(variable_set, level_hpa, period,
                                      grid_deg)
    cache = cache if cache is not None else RawCache()
    cache_request = {"dataset": dataset, **request}
    payload = cache.get(cache_request)
    if payload is None:
        if transport is None:
            transport = CdsTransport()
        payload = transport.fetch(dataset, request)
        cache.put(cache_request, payload)
    return payload


def fetch_era5(variable_set=("u", "v"), level_hpa=500, period=None,
               grid_deg=2.0, cache=None, transport=None,
               slice_index: int = 0) -> GriddedWind:
    """Download (or reload from cache) one ERA5 u/v grid.

    ``slice_index`` picks a time slice of hourly datasets; see
    :func:`count_time_slices` for how many the payload carries.
    """
    if period is None:
        period = {"year": "2020", "month": "07"}
    payload = fetch_era5_raw(variable_set, level_hpa, period, grid_deg,
                             cache, transport)
    dataset, _ = _build_request(variable_set, level_hpa, period, grid_deg)
    grid = parse_era5_netcdf(payload, slice_index)
    grid.meta.update({
        "source": "era5",
        "dataset": dataset,
        "variables": list(variable_set),
        "pressure_level_hPa": int(level_hpa),
        "period": dict(period),
        "grid_deg": float(grid_deg),
        "time_slice": int(slice_index),
    })
    return grid
