"""In-memory containers for gridded and scattered wind/current data."""

from dataclasses import dataclass, field

import numpy as np


class IngestError(Exception):
    """Base class for ingestion failures."""


class AuthError(IngestError):
    """Missing or rejected service credentials."""


class ServiceUnavailable(IngestError):
    """The remote service kept failing after retries."""


class NoDataInWindow(IngestError):
    """A query returned no observations."""


class IncompatibleStride(IngestError):
    """Requested stride is not a multiple of the native resolution."""


class EmptyInput(IngestError):
    """No rows to write."""


@dataclass
class GriddedWind:
    """Regular lat/lon grid of u/v components.

    ``u`` and ``v`` have shape (nlat, nlon); ``meta`` carries provenance
    (source, variable names, pressure level, timestamp).
    """

    lats: np.ndarray
    lons: np.ndarray
    u: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.lons = np.asarray(self.lons, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        expected = (len(self.lats), len(self.lons))
        if self.u.shape != expected or self.v.shape != expected:
            raise ValueError(
                f"u/v must have shape {expected}, got {self.u.shape}")

    def to_points(self) -> "PointObservations":
        glon, glat = np.meshgrid(self.lons, self.lats)
        return PointObservations(glat.ravel(), glon.ravel(),
                                 self.u.ravel(), self.v.ravel(),
                                 dict(self.meta))


@dataclass
class PointObservations:
    """Scattered (lat, lon, u, v) observations."""

    lats: np.ndarray
    lons: np.ndarray
    u: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.lons = np.asarray(self.lons, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        n = len(self.lats)
        if not (len(self.lons) == len(self.u) == len(self.v) == n):
            raise ValueError("lat/lon/u/v must have equal lengths")

    def __len__(self):
        return len(self.lats)
