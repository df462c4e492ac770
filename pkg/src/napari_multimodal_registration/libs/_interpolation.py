"""
Trilinear sampling with clamp-to-edge indices and analytic derivatives.

Positions are given in array-axis order (z, y, x). Displacement vectors used
elsewhere in the package are stored (x, y, z); ``warped_positions`` does the
conversion.
"""

from itertools import product
from typing import List, NamedTuple, Optional, Tuple

import numpy as np


class Corner(NamedTuple):
    index: np.ndarray  # flat index into the sampled array
    weight: np.ndarray  # trilinear weight
    dweight: Optional[np.ndarray]  # d weight / d position, (..., 3) in (x, y, z)


def identity_positions(shape: Tuple[int, int, int]) -> np.ndarray:
    """Voxel positions of an array of ``shape``, (..., 3) in (z, y, x)."""
    grids = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape], indexing="ij")
    return np.stack(grids, axis=-1)


def warped_positions(displacement: np.ndarray) -> np.ndarray:
    """
    Sampling positions ``x + d(x)``.

    Parameters
    ----------
    displacement : np.ndarray
        Shape (nz, ny, nx, 3), vector components in (x, y, z) order.

    Returns
    -------
    np.ndarray
        Shape (nz, ny, nx, 3) in (z, y, x) order.
    """
    return identity_positions(displacement.shape[:3]) + displacement[..., ::-1]


def corners(
    positions: np.ndarray, shape: Tuple[int, int, int], with_derivative: bool = False
) -> List[Corner]:
    """
    The 8 trilinear corners of every position.

    Indices are clamped to the array, which is equivalent to clamp-to-edge
    sampling. Weights of each position sum to 1.
    """
    positions = np.asarray(positions, dtype=np.float64)
    base = np.floor(positions)
    frac = positions - base
    base = base.astype(np.int64)

    lo, hi, w_lo, w_hi = [], [], [], []
    for axis, n in enumerate(shape):
        lo.append(np.clip(base[..., axis], 0, n - 1))
        hi.append(np.clip(base[..., axis] + 1, 0, n - 1))
        w_hi.append(frac[..., axis])
        w_lo.append(1.0 - frac[..., axis])

    strides = (shape[1] * shape[2], shape[2], 1)
    result = []
    for bits in product((0, 1), repeat=3):
        index = np.zeros(positions.shape[:-1], dtype=np.int64)
        factors = []
        signs = []
        for axis, bit in enumerate(bits):
            index += (hi[axis] if bit else lo[axis]) * strides[axis]
            factors.append(w_hi[axis] if bit else w_lo[axis])
            signs.append(1.0 if bit else -1.0)
        weight = factors[0] * factors[1] * factors[2]
        dweight = None
        if with_derivative:
            dz = signs[0] * factors[1] * factors[2]
            dy = signs[1] * factors[0] * factors[2]
            dx = signs[2] * factors[0] * factors[1]
            dweight = np.stack([dx, dy, dz], axis=-1)
        result.append(Corner(index, weight, dweight))
    return result


def sample(
    array: np.ndarray, positions: np.ndarray, with_gradient: bool = False
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Trilinear sample of a 3D array.

    Returns
    -------
    Tuple[np.ndarray, Optional[np.ndarray]]
        Sampled values and, if requested, their derivative with respect to
        the sampling position as (..., 3) in (x, y, z) order.
    """
    flat = np.asarray(array, dtype=np.float64).ravel()
    values = np.zeros(positions.shape[:-1], dtype=np.float64)
    gradient = np.zeros(positions.shape, dtype=np.float64) if with_gradient else None
    for corner in corners(positions, array.shape, with_derivative=with_gradient):
        sampled = flat[corner.index]
        values += corner.weight * sampled
        if with_gradient:
            gradient += corner.dweight * sampled[..., None]
    return values, gradient
