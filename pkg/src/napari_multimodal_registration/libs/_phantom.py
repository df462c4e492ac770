"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Deterministic synthetic volumes with known deformations and
labels, and a second pseudo-modality obtained by an intensity remap.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, NamedTuple, Tuple

import numpy as np
from scipy import ndimage as ndi

from ._interpolation import identity_positions
from ._transform import DenseField, warp
from ._volume import WORKING_DTYPE, LabelVolume, Volume

logger = logging.getLogger(__name__)

DEFORMATIONS = ("none", "sinusoidal", "random_smooth")
REMAPS = ("identity", "gamma", "inverted_bands")

_BLOB_SIGMA = (2.5, 4.0)
_NOISE_FRACTION = 0.02
_CORE_LEVEL = 0.5


@dataclass(frozen=True)
class PhantomSpec:
    """
    Parameters
    ----------
    dims : Tuple[int, int, int]
        Volume dims (x, y, z).
    seed : int
        Seed of the counter-based generator.
    n_blobs : int
        Number of Gaussian blobs; blob ``i`` carries label ``i + 1``.
    deformation : str
        ``"none"``, ``"sinusoidal"`` or ``"random_smooth"``.
    amplitude : float
        Largest displacement in voxels.
    period : float
        Period of the sinusoidal deformation, in voxels.
    smoothing : float
        Gaussian sigma of the random smooth deformation, in voxels.
    remap : str
        ``"identity"``, ``"gamma"`` or ``"inverted_bands"``.
    gamma : float
        Exponent of the gamma remap.
    bands : int
        Number of bands of the inverted-bands remap.
    """

    dims: Tuple[int, int, int] = (64, 64, 64)
    seed: int = 0x5EED
    n_blobs: int = 12
    deformation: str = "sinusoidal"
    amplitude: float = 3.0
    period: float = 32.0
    smoothing: float = 8.0
    remap: str = "identity"
    gamma: float = 2.0
    bands: int = 4

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 4:
            raise ValueError(f"dims must be 3 values >= 4, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if self.n_blobs < 1:
            raise ValueError(f"n_blobs must be >= 1, got {self.n_blobs}")
        if self.deformation not in DEFORMATIONS:
            raise ValueError(f"unknown deformation {self.deformation!r}, use one of {DEFORMATIONS}")
        if self.remap not in REMAPS:
            raise ValueError(f"unknown remap {self.remap!r}, use one of {REMAPS}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.deformation == "sinusoidal" and not self.amplitude < self.period / 4:
            raise ValueError(
                f"amplitude {self.amplitude} must stay below period / 4 = "
                f"{self.period / 4} to keep the deformation invertible"
            )
        if self.deformation == "random_smooth" and not self.amplitude < self.smoothing:
            raise ValueError(
                f"amplitude {self.amplitude} must stay below the smoothing "
                f"sigma {self.smoothing} to keep the deformation invertible"
            )
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.bands < 1:
            raise ValueError(f"bands must be >= 1, got {self.bands}")

    def to_dict(self) -> Dict:
        return asdict(self)


class Phantom(NamedTuple):
    volume_a: Volume
    volume_b: Volume
    labels_a: LabelVolume
    labels_b: LabelVolume
    truth: DenseField


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _blobs(spec: PhantomSpec, rng: np.random.Generator):
    shape = tuple(reversed(spec.dims))
    positions = identity_positions(shape)
    lo = 0.2 * np.asarray(shape)
    hi = 0.8 * np.asarray(shape)
    centres = rng.uniform(lo, hi, size=(spec.n_blobs, 3))
    sigmas = rng.uniform(*_BLOB_SIGMA, size=spec.n_blobs)
    amplitudes = rng.uniform(0.5, 1.0, size=spec.n_blobs)

    intensity = np.zeros(shape)
    best = np.zeros(shape)
    labels = np.zeros(shape, dtype=np.int32)
    for i in range(spec.n_blobs):
        squared = np.sum((positions - centres[i]) ** 2, axis=-1)
        profile = np.exp(-squared / (2.0 * sigmas[i] ** 2))
        intensity += amplitudes[i] * profile
        core = (profile > _CORE_LEVEL) & (profile > best)
        labels[core] = i + 1
        best = np.maximum(best, profile)
    return intensity, labels


def _ramp(shape) -> np.ndarray:
    nz, ny, nx = shape
    z, y, x = np.meshgrid(
        np.linspace(0, 1, nz), np.linspace(0, 1, ny), np.linspace(0, 1, nx), indexing="ij"
    )
    return 0.3 * x + 0.2 * y + 0.1 * z


def sinusoidal_field(dims: Tuple[int, int, int], amplitude: float, period: float) -> DenseField:
    """``(A / sqrt 3) * (sin 2 pi y / P, sin 2 pi z / P, sin 2 pi x / P)``."""
    shape = tuple(reversed(dims))
    z, y, x = np.moveaxis(identity_positions(shape), -1, 0)
    k = 2.0 * np.pi / period
    scale = amplitude / np.sqrt(3.0)
    return DenseField(np.stack([np.sin(k * y), np.sin(k * z), np.sin(k * x)], axis=-1) * scale)


def random_smooth_field(
    dims: Tuple[int, int, int], amplitude: float, smoothing: float, rng: np.random.Generator
) -> DenseField:
    """Gaussian-smoothed white noise scaled to a maximum norm of ``amplitude``."""
    shape = tuple(reversed(dims))
    data = np.stack(
        [
            ndi.gaussian_filter(rng.standard_normal(shape), smoothing, mode="nearest")
            for _ in range(3)
        ],
        axis=-1,
    )
    largest = float(np.linalg.norm(data, axis=-1).max())
    if largest > 0:
        data *= amplitude / largest
    return DenseField(data)


def _normalized(data: np.ndarray) -> np.ndarray:
    data = data.astype(np.float64)
    lo, hi = float(data.min()), float(data.max())
    if hi == lo:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)


def apply_remap(volume: Volume, spec: PhantomSpec) -> Volume:
    """Second pseudo-modality of ``volume``."""
    if spec.remap == "identity":
        return volume
    t = _normalized(volume.data)
    if spec.remap == "gamma":
        remapped = t**spec.gamma
    else:
        # triangle wave: n monotone bands of alternating direction
        remapped = 1.0 - np.abs(np.mod(t * spec.bands, 2.0) - 1.0)
    return volume.with_data(remapped.astype(WORKING_DTYPE))


def generate(spec: PhantomSpec) -> Phantom:
    """
    Render a phantom pair.

    ``volume_b = remap(warp(volume_a, truth))`` and ``labels_b`` is
    ``labels_a`` warped by ``truth``, so registering fixed ``volume_b`` and
    moving ``volume_a`` should recover ``truth``.
    """
    rng = _rng(spec.seed)
    intensity, labels = _blobs(spec, rng)
    intensity += _ramp(intensity.shape)
    spread = float(intensity.max() - intensity.min())
    intensity += rng.normal(0.0, _NOISE_FRACTION * spread, size=intensity.shape)

    volume_a = Volume(intensity.astype(WORKING_DTYPE))
    labels_a = LabelVolume(
        labels, label_names={i + 1: f"blob_{i + 1}" for i in range(spec.n_blobs)}
    )

    if spec.deformation == "sinusoidal":
        truth = sinusoidal_field(spec.dims, spec.amplitude, spec.period)
    elif spec.deformation == "random_smooth":
        truth = random_smooth_field(spec.dims, spec.amplitude, spec.smoothing, rng)
    else:
        truth = DenseField.zeros(spec.dims)

    volume_b = apply_remap(warp(volume_a, truth), spec)
    labels_b = warp(labels_a, truth, interp="nearest")
    logger.info(
        "phantom %s: %d blobs, %s deformation, %s remap",
        spec.dims,
        spec.n_blobs,
        spec.deformation,
        spec.remap,
    )
    return Phantom(volume_a, volume_b, labels_a, labels_b, truth)
