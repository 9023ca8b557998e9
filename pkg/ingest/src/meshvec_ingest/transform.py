"""Grid-level preprocessing: stride subsampling and zonal-mean removal."""

import numpy as np

from .datasets import GriddedWind, IncompatibleStride

STRIDE_TOL = 1e-9


def _native_step(values) -> float:
    steps = np.diff(values)
    if steps.size == 0:
        raise IncompatibleStride("axis has a single point")
    if np.abs(steps - steps[0]).max() > STRIDE_TOL * abs(steps[0]):
        raise IncompatibleStride("grid axis is not uniform")
    return float(steps[0])


def subsample_grid(grid: GriddedWind, stride_deg: float) -> GriddedWind:
    """Keep every point on the ``stride_deg`` lattice.

    The stride must be an integer multiple of the native resolution;
    ``stride == native`` is the identity.
    """
    out_meta = dict(grid.meta)
    factors = []
    for axis in (grid.lats, grid.lons):
        native = abs(_native_step(axis))
        ratio = stride_deg / native
        if abs(ratio - round(ratio)) > STRIDE_TOL * max(1.0, ratio):
            raise IncompatibleStride(
                f"stride {stride_deg} is not a multiple of the native "
                f"resolution {native}")
        factors.append(int(round(ratio)))
    flat, flon = factors
    out_meta["stride_deg"] = float(stride_deg)
    return GriddedWind(grid.lats[::flat], grid.lons[::flon],
                       grid.u[::flat, ::flon], grid.v[::flat, ::flon],
                       out_meta)


def remove_zonal_mean(grid: GriddedWind) -> GriddedWind:
    """Subtract the longitude-mean u and v from every latitude band."""
    u = grid.u - grid.u.mean(axis=1, keepdims=True)
    v = grid.v - grid.v.mean(axis=1, keepdims=True)
    meta = dict(grid.meta)
    meta["zonal_mean_removed"] = True
    return GriddedWind(grid.lats.copy(), grid.lons.copy(), u, v, meta)
