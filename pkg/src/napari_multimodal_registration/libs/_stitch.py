"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Sliding-window tiling of a volume and stride-averaged
reconstruction through a per-tile mapping.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ._volume import WORKING_DTYPE, Volume

logger = logging.getLogger(__name__)

Mapper = Callable[[np.ndarray], np.ndarray]

LUT_ENTRIES = 256


def _axis_origins(n: int, tile: int, stride: int) -> List[int]:
    origins = list(range(0, n - tile + 1, stride))
    if origins[-1] != n - tile:
        origins.append(n - tile)
    return origins


@dataclass(frozen=True)
class TilePlan:
    """
    Attributes
    ----------
    dims : Tuple[int, int, int]
        Volume dims (x, y, z).
    tile_dims : Tuple[int, int, int]
        Tile size (x, y, z).
    strides : Tuple[int, int, int]
        Stride (x, y, z).
    origins : Tuple[Tuple[int, ...], ...]
        Tile origins per axis (x, y, z); the last one of every axis ends at
        the volume border.
    """

    dims: Tuple[int, int, int]
    tile_dims: Tuple[int, int, int]
    strides: Tuple[int, int, int]
    origins: Tuple[Tuple[int, ...], ...]

    def tiles(self) -> List[Tuple[int, int, int]]:
        """Tile origins (x, y, z), x fastest."""
        ox, oy, oz = self.origins
        return [(x, y, z) for z, y, x in product(oz, oy, ox)]

    def __len__(self) -> int:
        return int(np.prod([len(o) for o in self.origins]))

    def slices(self, origin: Tuple[int, int, int]) -> Tuple[slice, slice, slice]:
        """Array slices (z, y, x) of the tile at ``origin``."""
        return tuple(
            slice(o, o + t) for o, t in zip(reversed(origin), reversed(self.tile_dims))
        )

    def coverage(self) -> np.ndarray:
        """Number of tiles covering each voxel, (z, y, x)."""
        counts = np.zeros(tuple(reversed(self.dims)), dtype=np.int64)
        for origin in self.tiles():
            counts[self.slices(origin)] += 1
        return counts


def plan_tiles(
    dims: Sequence[int], tile_dims: Sequence[int], strides: Sequence[int]
) -> TilePlan:
    """
    Tile origins at multiples of the stride, with the last tile of every axis
    moved inward to end at the border.
    """
    dims, tile_dims, strides = (tuple(int(v) for v in t) for t in (dims, tile_dims, strides))
    if not len(dims) == len(tile_dims) == len(strides) == 3:
        raise ValueError("dims, tile_dims and strides need 3 components")
    for n, t, s in zip(dims, tile_dims, strides):
        if t > n:
            raise ValueError(f"tile {tile_dims} larger than volume {dims}")
        if not 1 <= s <= t:
            raise ValueError(f"stride must lie in [1, tile size], got {strides} for {tile_dims}")
    origins = tuple(tuple(_axis_origins(n, t, s)) for n, t, s in zip(dims, tile_dims, strides))
    return TilePlan(dims, tile_dims, strides, origins)


def stitch_map(
    volume: Volume,
    plan: TilePlan,
    mapper: Mapper,
    threads: int = 1,
    progress: Optional[Callable] = None,
) -> Volume:
    """
    Map every tile and average the overlapping results.

    Parameters
    ----------
    volume : Volume
        Source volume.
    plan : TilePlan
        Tiling of ``volume``.
    mapper : Callable[[np.ndarray], np.ndarray]
        Receives a (z, y, x) tile and returns one of the same shape.
    threads : int
        Tiles mapped concurrently. Accumulation order is the plan order.
    progress : Callable, optional
        Wrapper such as ``tqdm``.

    Returns
    -------
    Volume
        Per voxel, the sum of mapped contributions divided by the coverage.
    """
    if tuple(plan.dims) != tuple(volume.dims):
        raise ValueError(f"plan dims {plan.dims} do not match volume dims {volume.dims}")

    tiles = plan.tiles()
    source = volume.data

    def map_tile(origin):
        tile = source[plan.slices(origin)]
        mapped = np.asarray(mapper(tile.copy()))
        if mapped.shape != tile.shape:
            raise ValueError(f"mapper changed tile shape {tile.shape} to {mapped.shape}")
        return origin, mapped

    total = np.zeros(source.shape, dtype=np.float64)
    counts = np.zeros(source.shape, dtype=np.int64)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = pool.map(map_tile, tiles)
        if progress is not None:
            results = progress(results, total=len(tiles))
        for origin, mapped in results:
            region = plan.slices(origin)
            total[region] += mapped
            counts[region] += 1

    logger.info("stitched %d tiles of %s", len(tiles), plan.tile_dims)
    return volume.with_data((total / counts).astype(WORKING_DTYPE))


def identity_mapper(tile: np.ndarray) -> np.ndarray:
    return tile


def affine_mapper(a: float, b: float) -> Mapper:
    """``tile * a + b``."""

    def mapper(tile: np.ndarray) -> np.ndarray:
        return tile.astype(np.float64) * a + b

    return mapper


def load_lut(path) -> pd.DataFrame:
    """Read a lookup table of 256 ``in out`` lines."""
    table = pd.read_csv(path, sep=r"\s+", header=None, names=["in", "out"], comment="#")
    if len(table) != LUT_ENTRIES:
        raise ValueError(f"lookup table {path} has {len(table)} rows, expected {LUT_ENTRIES}")
    if not np.all(np.diff(table["in"].to_numpy()) > 0):
        raise ValueError(f"lookup table {path} inputs must be strictly increasing")
    return table


def lut_mapper(table: pd.DataFrame) -> Mapper:
    """Piecewise linear remap through a lookup table, clamped at its ends."""
    xp = table["in"].to_numpy(dtype=np.float64)
    fp = table["out"].to_numpy(dtype=np.float64)

    def mapper(tile: np.ndarray) -> np.ndarray:
        return np.interp(tile, xp, fp)

    return mapper


def parse_mapper(text: str) -> Mapper:
    """``identity``, ``affine:a,b`` or ``lut:<path>``."""
    kind, _, argument = text.partition(":")
    if kind == "identity" and not argument:
        return identity_mapper
    if kind == "affine":
        try:
            a, b = (float(v) for v in argument.split(","))
        except ValueError:
            raise ValueError(f"affine mapper needs 'affine:a,b', got {text!r}") from None
        return affine_mapper(a, b)
    if kind == "lut" and argument:
        return lut_mapper(load_lut(argument))
    raise ValueError(f"unknown mapper {text!r}, use identity, affine:a,b or lut:<file>")
