"""Near-surface drifter current observations from a marine data service.

The service endpoint returns CSV rows ``lat,lon,u,v,time``; credentials and
endpoint come from the environment (``MARINE_DATA_URL``,
``MARINE_DATA_TOKEN``). Responses are cached content-addressed like ERA5.
"""

import csv
import io
import os
import time

import numpy as np

from .cache import RawCache
from .datasets import AuthError, NoDataInWindow, PointObservations, ServiceUnavailable

RETRIES = 3
BACKOFF_SECONDS = 2.0


class MarineTransport:
    def __init__(self, url=None, token=None, session=None):
        self.url = url or os.environ.get("MARINE_DATA_URL")
        self.token = token or os.environ.get("MARINE_DATA_TOKEN")
        if not self.url or not self.token:
            raise AuthError("MARINE_DATA_URL and MARINE_DATA_TOKEN must be "
                            "set to download drifter data")
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def fetch(self, params: dict) -> bytes:
        last = None
        for attempt in range(RETRIES):
            try:
                resp = self.session.get(
                    self.url, params=params,
                    headers={"Authorization": f"Bearer {self.token}"},
                    timeout=120)
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


def parse_drifter_csv(payload: bytes) -> PointObservations:
    reader = csv.DictReader(io.StringIO(payload.decode()))
    lats, lons, us, vs = [], [], [], []
    for row in reader:
        try:
            lat, lon = float(row["lat"]), float(row["lon"])
            u, v = float(row["u"]), float(row["v"])
        except (KeyError, TypeError, ValueError):
            continue  # drop malformed / missing-value rows
        if not all(np.isfinite([lat, lon, u, v])):
            continue
        lats.append(lat)
        lons.append(lon)
        us.append(u)
        vs.append(v)
    return PointObservations(np.array(lats), np.array(lons),
                             np.array(us), np.array(vs))


def fetch_drifters(region_bbox, timestamp, cache=None,
                   transport=None) -> PointObservations:
    """Drifter u/v observations inside ``(lat0, lon0, lat1, lon1)`` at
    ``timestamp`` (ISO string).

    Raises
    ------
    NoDataInWindow
        If no valid observation falls inside the box.
    """
    lat0, lon0, lat1, lon1 = [float(x) for x in region_bbox]
    params = {
        "bbox": f"{lat0},{lon0},{lat1},{lon1}",
        "time": str(timestamp),
        "variables": "u,v",
    }
    cache = cache if cache is not None else RawCache()
    cache_request = {"service": "drifters", **params}
    payload = cache.get(cache_request)
    if payload is None:
        if transport is None:
            transport = MarineTransport()
        payload = transport.fetch(params)
        cache.put(cache_request, payload)
    points = parse_drifter_csv(payload)
    inside = ((points.lats >= min(lat0, lat1))
              & (points.lats <= max(lat0, lat1))
              & (points.lons >= min(lon0, lon1))
              & (points.lons <= max(lon0, lon1)))
    if not inside.any():
        raise NoDataInWindow(
            f"no drifter observations in bbox {region_bbox} at {timestamp}")
    out = PointObservations(points.lats[inside], points.lons[inside],
                            points.u[inside], points.v[inside])
    out.meta.update({"source": "drifters", "bbox": list(region_bbox),
                     "timestamp": str(timestamp)})
    return out
