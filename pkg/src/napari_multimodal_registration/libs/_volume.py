"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Volume containers, isotropic resampling, intensity scaling and
Gaussian pyramids.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage as ndi
from skimage.exposure import rescale_intensity as _sk_rescale_intensity
from skimage.filters import gaussian

logger = logging.getLogger(__name__)

WORKING_DTYPE = np.float32

_PYRAMID_SIGMA = 1.0
# sigma=1 with truncate=2 gives the 5-tap kernel
_PYRAMID_TRUNCATE = 2.0
_MIN_PYRAMID_DIM = 4


def _as_triplet(values: Sequence[float], name: str) -> Tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if len(values) != 3:
        raise ValueError(f"{name} must have 3 components, got {values}")
    return values


@dataclass(frozen=True)
class Volume:
    """
    Dense 3D scalar volume.

    Parameters
    ----------
    data : np.ndarray
        Voxel values in (z, y, x) order, x varying fastest.
    spacing : Tuple[float, float, float]
        Voxel size in mm, (x, y, z) order.
    origin : Tuple[float, float, float]
        Physical position of voxel (0, 0, 0) in mm, (x, y, z) order.
    """

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=WORKING_DTYPE)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains NaN or Inf")
        spacing = _as_triplet(self.spacing, "spacing")
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _as_triplet(self.origin, "origin"))

    @property
    def dims(self) -> Tuple[int, int, int]:
        """Voxel counts in (x, y, z) order."""
        return tuple(int(n) for n in self.data.shape[::-1])

    @property
    def n_voxels(self) -> int:
        return int(self.data.size)

    def with_data(self, data: np.ndarray) -> "Volume":
        return replace(self, data=data)


@dataclass(frozen=True)
class LabelVolume:
    """
    Dense 3D label volume. Label 0 is background.

    Parameters
    ----------
    data : np.ndarray
        Non-negative integer labels in (z, y, x) order.
    spacing : Tuple[float, float, float]
        Voxel size in mm, (x, y, z) order.
    origin : Tuple[float, float, float]
        Physical position of voxel (0, 0, 0) in mm.
    label_names : Dict[int, str]
        Optional structure name per label.
    """

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    label_names: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"label data must be 3D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            if not np.all(np.equal(np.mod(data, 1), 0)):
                raise ValueError("label data must be integer valued")
        if data.size and data.min() < 0:
            raise ValueError("labels must be non-negative")
        data = np.ascontiguousarray(data, dtype=np.int32)
        spacing = _as_triplet(self.spacing, "spacing")
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _as_triplet(self.origin, "origin"))
        object.__setattr__(
            self,
            "label_names",
            {int(k): str(v) for k, v in dict(self.label_names).items()},
        )

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape[::-1])

    @property
    def labels(self) -> List[int]:
        """Labels present in the volume, background excluded."""
        return [int(v) for v in np.unique(self.data) if v > 0]

    def name_of(self, label: int) -> str:
        return self.label_names.get(int(label), f"label_{int(label)}")

    def with_data(self, data: np.ndarray) -> "LabelVolume":
        return replace(self, data=data)


def resample_isotropic(volume, target_spacing_mm: float, interp: str = "trilinear"):
    """
    Resample a volume onto an isotropic grid.

    Parameters
    ----------
    volume : Volume or LabelVolume
        The volume to resample. Labels should use ``interp="nearest"``.
    target_spacing_mm : float
        The output voxel size in mm.
    interp : str
        ``"trilinear"`` or ``"nearest"``.

    Returns
    -------
    Volume or LabelVolume
        Same type as the input, spacing ``(t, t, t)`` and dims
        ``round(dims * spacing / t)`` clamped to at least 1.
    """
    if target_spacing_mm <= 0:
        raise ValueError(f"target spacing must be > 0, got {target_spacing_mm}")
    order = _interp_order(interp)
    t = float(target_spacing_mm)

    # (z, y, x) order from here on
    spacing_zyx = np.asarray(volume.spacing[::-1], dtype=np.float64)
    shape_zyx = np.asarray(volume.data.shape, dtype=np.float64)
    new_shape = np.maximum(1, np.round(shape_zyx * spacing_zyx / t)).astype(int)

    axes = [np.arange(n, dtype=np.float64) * t / s for n, s in zip(new_shape, spacing_zyx)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=0)

    source = volume.data
    if isinstance(volume, LabelVolume):
        source = source.astype(np.float64)
        order = 0
    resampled = ndi.map_coordinates(source, coords, order=order, mode="nearest")

    logger.debug(
        "resampled %s -> %s at %.3f mm",
        volume.dims,
        tuple(int(n) for n in new_shape[::-1]),
        t,
    )
    if isinstance(volume, LabelVolume):
        return replace(volume, data=np.rint(resampled).astype(np.int32), spacing=(t, t, t))
    return replace(volume, data=resampled.astype(WORKING_DTYPE), spacing=(t, t, t))


def rescale_intensity(volume: Volume, lo: float, hi: float) -> Volume:
    """
    Affinely map the intensity range of a volume to ``[lo, hi]``.

    A constant volume maps to ``lo`` everywhere.
    """
    if not hi > lo:
        raise ValueError(f"hi must be greater than lo, got lo={lo} hi={hi}")
    data = volume.data.astype(np.float64)
    vmin, vmax = float(data.min()), float(data.max())
    if vmax == vmin:
        return volume.with_data(np.full(data.shape, lo, dtype=WORKING_DTYPE))
    scaled = _sk_rescale_intensity(
        data, in_range=(vmin, vmax), out_range=(float(lo), float(hi))
    )
    return volume.with_data(scaled.astype(WORKING_DTYPE))


def smooth(volume: Volume, sigma: float = _PYRAMID_SIGMA) -> Volume:
    """Gaussian smoothing with clamp-to-edge boundaries."""
    smoothed = gaussian(
        volume.data.astype(np.float64),
        sigma=sigma,
        mode="nearest",
        truncate=_PYRAMID_TRUNCATE,
        preserve_range=True,
        channel_axis=None,
    )
    return volume.with_data(smoothed.astype(WORKING_DTYPE))


def downsample(volume: Volume) -> Volume:
    """Smooth and keep every second voxel along each axis."""
    smoothed = smooth(volume)
    return replace(
        volume,
        data=smoothed.data[::2, ::2, ::2],
        spacing=tuple(2.0 * s for s in volume.spacing),
    )


def gaussian_pyramid(volume: Volume, levels: int) -> List[Volume]:
    """
    Build a Gaussian pyramid, finest level first.

    Parameters
    ----------
    volume : Volume
        Level 0 of the pyramid.
    levels : int
        Number of levels, including the input.

    Returns
    -------
    List[Volume]
        ``result[l]`` has dims ``ceil(dims / 2**l)`` and spacing
        ``spacing * 2**l``.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    coarsest = [int(np.ceil(n / 2 ** (levels - 1))) for n in volume.dims]
    if min(coarsest) < _MIN_PYRAMID_DIM:
        raise ValueError(
            f"{levels} pyramid levels shrink dims {volume.dims} to {tuple(coarsest)}; "
            f"every axis must keep at least {_MIN_PYRAMID_DIM} voxels"
        )
    pyramid = [volume]
    for _ in range(1, levels):
        pyramid.append(downsample(pyramid[-1]))
    return pyramid


def _interp_order(interp: str) -> int:
    if interp == "trilinear":
        return 1
    if interp == "nearest":
        return 0
    raise ValueError(f"unknown interpolation {interp!r}, use 'trilinear' or 'nearest'")
