"""Observation ingestion: reanalysis winds and drifter currents to CSV."""

from .canonical import read_canonical, validate_canonical, write_canonical
from .datasets import (
    AuthError,
    EmptyInput,
    GriddedWind,
    IncompatibleStride,
    IngestError,
    NoDataInWindow,
    PointObservations,
    ServiceUnavailable,
)
from .drifters import fetch_drifters
from .era5 import count_time_slices, fetch_era5, fetch_era5_raw
from .transform import remove_zonal_mean, subsample_grid

__version__ = "0.1.0"
