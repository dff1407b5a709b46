"""Convert a stack of single-band rasters into the binary grid format.

The fit and eof commands read a panel of pixels from a flat binary
container: a 20-byte header (magic "CGSG", format version, grid rows,
grid cols, number of time steps, all little-endian uint32) followed by
row-major float64 values, one (rows * cols)-wide record per time step.
Pixel j of record t is grid cell (j // cols, j % cols).

This script documents the expected conversion; reading the rasters
themselves needs a GDAL-style dependency this package does not carry,
so the reading step is left as a stub.
"""

import argparse
import glob
import sys

import numpy as np

from cgssm import io


def read_band(path):
    """Return one raster band as a 2-D float array.

    Replace with e.g. rasterio:

        with rasterio.open(path) as src:
            return src.read(1).astype(float)
    """
    raise NotImplementedError(
        "plug in a raster reader here (rasterio.open(path).read(1))")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("pattern", help="glob of raster files, one per period, "
                                    "sorted lexically by time")
    ap.add_argument("--out", required=True, help="output grid file")
    args = ap.parse_args()

    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"no files match {args.pattern}", file=sys.stderr)
        return 3

    bands = [read_band(path) for path in paths]
    rows, cols = bands[0].shape
    values = np.stack([band.reshape(-1) for band in bands])
    grid = io.GridDataset(rows=rows, cols=cols, values=values,
                          timestamps=[str(p) for p in paths])
    io.save_grid(args.out, grid)
    print(f"wrote {args.out}: {rows}x{cols} pixels, {len(paths)} periods")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
