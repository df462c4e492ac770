"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Modality independent neighbourhood descriptors (MIND).

Each voxel gets one entry per neighbourhood offset: a Gaussian-weighted
patch distance to the shifted patch, mapped through ``exp(-d / v)`` and
normalized so the largest entry is 1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage as ndi

from ._volume import WORKING_DTYPE, Volume

logger = logging.getLogger(__name__)

# (x, y, z) offsets
SIX_NEIGHBORHOOD: Tuple[Tuple[int, int, int], ...] = (
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
)

_VARIANCE_CLAMP = (1e-6, 1e6)


@dataclass(frozen=True)
class MindParams:
    """
    Parameters
    ----------
    sigma : float
        Standard deviation of the patch Gaussian, in voxels.
    neighborhood : Tuple[Tuple[int, int, int], ...]
        Offsets ``r_i`` in (x, y, z) order, one descriptor channel each.
    """

    sigma: float = 0.5
    neighborhood: Tuple[Tuple[int, int, int], ...] = SIX_NEIGHBORHOOD

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        offsets = tuple(tuple(int(c) for c in r) for r in self.neighborhood)
        if not offsets:
            raise ValueError("neighborhood must not be empty")
        for r in offsets:
            if len(r) != 3:
                raise ValueError(f"offsets must have 3 components, got {r}")
            if r == (0, 0, 0):
                raise ValueError("neighborhood must not contain the zero offset")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "neighborhood", offsets)

    @property
    def patch_half_size(self) -> int:
        return int(math.ceil(1.5 * self.sigma))

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "neighborhood": [list(r) for r in self.neighborhood]}


@dataclass(frozen=True)
class MindField:
    """
    Descriptor field of a volume.

    ``data`` has shape (nz, ny, nx, channels); channel ``i`` belongs to
    ``offsets[i]``.
    """

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    offsets: Tuple[Tuple[int, int, int], ...] = field(default=SIX_NEIGHBORHOOD)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=WORKING_DTYPE)
        if data.ndim != 4:
            raise ValueError(f"descriptor data must be (z, y, x, c), got {data.shape}")
        if data.shape[-1] != len(self.offsets):
            raise ValueError(
                f"{data.shape[-1]} channels but {len(self.offsets)} offsets"
            )
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape[2::-1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[-1])


def _gaussian_taps(params: MindParams) -> np.ndarray:
    h = params.patch_half_size
    j = np.arange(-h, h + 1, dtype=np.float64)
    taps = np.exp(-(j**2) / (2.0 * params.sigma**2))
    # separable: the 3D kernel is the outer product, normalized to sum 1
    return taps / taps.sum()


def shift_clamped(data: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """``out[p] = data[clamp(p + offset)]`` with ``offset`` in (x, y, z)."""
    out = data
    for axis, r in enumerate(reversed(tuple(offset))):
        if r == 0:
            continue
        n = data.shape[axis]
        index = np.clip(np.arange(n) + int(r), 0, n - 1)
        out = np.take(out, index, axis=axis)
    return out


def _patch_distances(data: np.ndarray, offsets, params: MindParams) -> np.ndarray:
    taps = _gaussian_taps(params)
    result = np.empty((len(offsets),) + data.shape)
    for i, r in enumerate(offsets):
        squared = (data - shift_clamped(data, r)) ** 2
        for axis in range(3):
            squared = ndi.correlate1d(squared, taps, axis=axis, mode="nearest")
        result[i] = squared
    return result


def patch_distance(volume: Volume, x: Sequence[int], r: Sequence[int], params: MindParams) -> float:
    """
    Gaussian-weighted squared difference between the patch at ``x`` and the
    patch at ``x + r``.

    Parameters
    ----------
    volume : Volume
        The image.
    x : Sequence[int]
        Voxel (x, y, z).
    r : Sequence[int]
        Offset (x, y, z).
    params : MindParams
        Supplies sigma and the patch half size.
    """
    data = volume.data.astype(np.float64)
    nz, ny, nx = data.shape
    h = params.patch_half_size
    taps = _gaussian_taps(params)
    xi, yi, zi = (int(c) for c in x)
    rx, ry, rz = (int(c) for c in r)
    total = 0.0
    for jz in range(-h, h + 1):
        for jy in range(-h, h + 1):
            for jx in range(-h, h + 1):
                pz = min(max(zi + jz, 0), nz - 1)
                py = min(max(yi + jy, 0), ny - 1)
                px = min(max(xi + jx, 0), nx - 1)
                qz = min(max(pz + rz, 0), nz - 1)
                qy = min(max(py + ry, 0), ny - 1)
                qx = min(max(px + rx, 0), nx - 1)
                weight = taps[jz + h] * taps[jy + h] * taps[jx + h]
                total += weight * (data[pz, py, px] - data[qz, qy, qx]) ** 2
    return float(total)


def compute_mind(volume: Volume, params: Optional[MindParams] = None) -> MindField:
    """
    Dense MIND descriptor of ``volume``.

    Parameters
    ----------
    volume : Volume
        Input image; every axis needs at least ``2 * patch_half_size + 1``
        voxels.
    params : MindParams, optional
        Defaults to sigma 0.5 over the six-neighbourhood.

    Returns
    -------
    MindField
        Entries in (0, 1], largest entry of every voxel equal to 1.
    """
    params = params or MindParams()
    min_dim = 2 * params.patch_half_size + 1
    if min(volume.dims) < min_dim:
        raise ValueError(
            f"volume dims {volume.dims} smaller than the {min_dim}-voxel patch"
        )

    data = volume.data.astype(np.float64)
    distances = _patch_distances(data, params.neighborhood, params)

    if params.neighborhood == SIX_NEIGHBORHOOD:
        six = distances
    else:
        six = _patch_distances(data, SIX_NEIGHBORHOOD, params)
    variance = six.mean(axis=0)
    mean_variance = float(variance.mean())

    if mean_variance <= 0.0:
        logger.debug("flat volume, MIND descriptor is constant")
        descriptor = np.ones(data.shape + (len(params.neighborhood),), dtype=WORKING_DTYPE)
        return MindField(descriptor, volume.spacing, volume.origin, params.neighborhood)

    lo, hi = _VARIANCE_CLAMP
    variance = np.clip(variance, lo * mean_variance, hi * mean_variance)

    # subtracting the per-voxel minimum distance is the max-normalization
    exponent = (distances - distances.min(axis=0, keepdims=True)) / variance
    descriptor = np.exp(-exponent)
    descriptor = np.maximum(descriptor, np.finfo(WORKING_DTYPE).tiny)
    descriptor = np.moveaxis(descriptor, 0, -1)
    return MindField(
        descriptor.astype(WORKING_DTYPE), volume.spacing, volume.origin, params.neighborhood
    )


def _check_fields(field_a: MindField, field_b: MindField):
    if field_a.data.shape != field_b.data.shape:
        raise ValueError(
            f"descriptor fields differ: {field_a.data.shape} vs {field_b.data.shape}"
        )


def mind_pointwise_map(field_a: MindField, field_b: MindField) -> np.ndarray:
    """Mean absolute descriptor difference at every voxel, (nz, ny, nx)."""
    _check_fields(field_a, field_b)
    diff = np.abs(field_a.data.astype(np.float64) - field_b.data.astype(np.float64))
    return diff.mean(axis=-1)


def mind_pointwise_dissimilarity(field_a: MindField, field_b: MindField, x: Sequence[int]) -> float:
    """Mean absolute descriptor difference at voxel ``x`` given as (x, y, z)."""
    _check_fields(field_a, field_b)
    xi, yi, zi = (int(c) for c in x)
    a = field_a.data[zi, yi, xi].astype(np.float64)
    b = field_b.data[zi, yi, xi].astype(np.float64)
    return float(np.abs(a - b).mean())


def mind_total(field_a: MindField, field_b: MindField) -> float:
    """Sum over voxels of the squared pointwise dissimilarity."""
    return float(np.sum(mind_pointwise_map(field_a, field_b) ** 2))
