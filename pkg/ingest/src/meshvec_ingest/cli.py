"""CLI wrapper: ``meshvec-ingest era5|drifters`` producing canonical CSVs."""

import argparse
import sys

from .cache import RawCache
from .canonical import validate_canonical, write_canonical
from .datasets import IngestError
from .drifters import fetch_drifters
from .era5 import fetch_era5
from .transform import remove_zonal_mean, subsample_grid


def build_parser():
    parser = argparse.ArgumentParser(
        prog="meshvec-ingest",
        description="Fetch wind/current observations into the canonical "
                    "lat_deg,lon_deg,u,v CSV. Credentials come from the "
                    "environment (CDSAPI_URL/CDSAPI_KEY for ERA5, "
                    "MARINE_DATA_URL/MARINE_DATA_TOKEN for drifters).")
    sub = parser.add_subparsers(dest="command", required=True)

    era5 = sub.add_parser("era5", help="ERA5 pressure-level winds")
    era5.add_argument("--level", type=int, default=500,
                      help="pressure level in hPa")
    era5.add_argument("--year", default="2020")
    era5.add_argument("--month", default="07")
    era5.add_argument("--grid", type=float, default=2.0,
                      help="native request grid in degrees")
    era5.add_argument("--stride", type=float,
                      help="subsample to this stride (multiple of --grid)")
    era5.add_argument("--remove-zonal-mean", action="store_true")

    drifters = sub.add_parser("drifters", help="near-surface drifter currents")
    drifters.add_argument("--bbox", required=True,
                          help="lat0,lon0,lat1,lon1")
    drifters.add_argument("--time", required=True,
                          help="ISO timestamp, e.g. 2025-03-15T12:00:00")

    for p in (era5, drifters):
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--cache-dir", help="raw download cache directory")
        p.add_argument("--no-normalize", action="store_true",
                       help="keep physical units (factor 1 in the sidecar)")
    return parser


def run(args) -> int:
    cache = RawCache(args.cache_dir) if args.cache_dir else None
    if args.command == "era5":
        grid = fetch_era5(level_hpa=args.level,
                          period={"year": args.year, "month": args.month},
                          grid_deg=args.grid, cache=cache)
        if args.stride:
            grid = subsample_grid(grid, args.stride)
        if args.remove_zonal_mean:
            grid = remove_zonal_mean(grid)
        data = grid
    else:
        bbox = [float(x) for x in args.bbox.split(",")]
        if len(bbox) != 4:
            raise ValueError("--bbox needs lat0,lon0,lat1,lon1")
        data = fetch_drifters(bbox, args.time, cache=cache)
    path = write_canonical(data, normalize=not args.no_normalize,
                           out_path=args.out)
    validate_canonical(path)
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except IngestError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
