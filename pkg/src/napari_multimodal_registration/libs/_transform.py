"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Control-point grids, dense displacement fields, warping,
composition, inversion and the inverse-consistency averaging step.

Displacements are in voxels. Arrays are stored (z, y, x, 3) with vector
components in (x, y, z) order.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Tuple

import numpy as np
from scipy import ndimage as ndi

from ._interpolation import identity_positions, sample, warped_positions
from ._volume import WORKING_DTYPE, LabelVolume, Volume, _interp_order

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DenseField:
    """
    Per-voxel displacement field.

    Parameters
    ----------
    data : np.ndarray
        Shape (nz, ny, nx, 3); components (dx, dy, dz) in voxels.
    metadata : Dict[str, Any]
        Free-form annotations, e.g. the residual of an inversion.
    """

    data: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 4 or data.shape[-1] != 3:
            raise ValueError(f"dense field must have shape (z, y, x, 3), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("dense field contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, dims: Tuple[int, int, int]) -> "DenseField":
        nx, ny, nz = dims
        return cls(np.zeros((nz, ny, nx, 3)))

    @classmethod
    def constant(cls, dims: Tuple[int, int, int], vector) -> "DenseField":
        nx, ny, nz = dims
        data = np.empty((nz, ny, nx, 3))
        data[...] = np.asarray(vector, dtype=np.float64)
        return cls(data)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape[2::-1])

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.data, axis=-1)

    def max_norm(self) -> float:
        return float(self.norm().max()) if self.data.size else 0.0

    def __add__(self, other: "DenseField") -> "DenseField":
        _check_dims(self.dims, other.dims)
        return DenseField(self.data + other.data)

    def __sub__(self, other: "DenseField") -> "DenseField":
        _check_dims(self.dims, other.dims)
        return DenseField(self.data - other.data)

    def __mul__(self, factor: float) -> "DenseField":
        return DenseField(self.data * float(factor))

    __rmul__ = __mul__

    def __neg__(self) -> "DenseField":
        return DenseField(-self.data)


def grid_dims_for(dims: Tuple[int, int, int], spacing_vox: int) -> Tuple[int, int, int]:
    """Node counts covering ``dims`` with one boundary layer on each side."""
    return tuple(int(np.ceil((n - 1) / spacing_vox)) + 3 for n in dims)


@dataclass(frozen=True)
class ControlGrid:
    """
    Regular lattice of control-point displacements.

    Node ``i`` along an axis sits at voxel coordinate ``(i - 1) * spacing_vox``,
    so the first node lies one spacing before voxel 0.

    Parameters
    ----------
    spacing_vox : int
        Control-point spacing in voxels.
    displacements : np.ndarray
        Shape (gz, gy, gx, 3); components (dx, dy, dz) in voxels.
    """

    spacing_vox: int
    displacements: np.ndarray

    def __post_init__(self):
        if int(self.spacing_vox) < 1:
            raise ValueError(f"spacing_vox must be >= 1, got {self.spacing_vox}")
        disp = np.ascontiguousarray(self.displacements, dtype=np.float64)
        if disp.ndim != 4 or disp.shape[-1] != 3:
            raise ValueError(f"grid displacements must have shape (z, y, x, 3), got {disp.shape}")
        if min(disp.shape[:3]) < 2:
            raise ValueError("a control grid needs at least 2 nodes per axis")
        if not np.all(np.isfinite(disp)):
            raise ValueError("grid displacements contain NaN or Inf")
        object.__setattr__(self, "spacing_vox", int(self.spacing_vox))
        object.__setattr__(self, "displacements", disp)

    @classmethod
    def zeros(cls, dims: Tuple[int, int, int], spacing_vox: int) -> "ControlGrid":
        gx, gy, gz = grid_dims_for(dims, spacing_vox)
        return cls(spacing_vox, np.zeros((gz, gy, gx, 3)))

    @property
    def grid_dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.displacements.shape[2::-1])

    def covers(self, dims: Tuple[int, int, int]) -> bool:
        return all(
            (g - 1) * self.spacing_vox >= n for g, n in zip(self.grid_dims, dims)
        )

    def with_displacements(self, displacements: np.ndarray) -> "ControlGrid":
        return replace(self, displacements=displacements)

    def node_positions(self) -> np.ndarray:
        """Voxel positions of the nodes, (gz, gy, gx, 3) in (z, y, x)."""
        return (identity_positions(self.displacements.shape[:3]) - 1.0) * self.spacing_vox


def _axis_matrix(n_vox: int, n_nodes: int, spacing_vox: int) -> np.ndarray:
    """Linear interpolation weights from nodes to voxels along one axis."""
    u = np.arange(n_vox, dtype=np.float64) / spacing_vox + 1.0
    i0 = np.minimum(np.floor(u).astype(int), n_nodes - 2)
    frac = u - i0
    matrix = np.zeros((n_vox, n_nodes))
    rows = np.arange(n_vox)
    matrix[rows, i0] = 1.0 - frac
    matrix[rows, i0 + 1] += frac
    return matrix


def _interpolation_matrices(grid: ControlGrid, dims: Tuple[int, int, int]):
    if not grid.covers(dims):
        raise ValueError(
            f"control grid {grid.grid_dims} at spacing {grid.spacing_vox} "
            f"does not cover volume dims {dims}"
        )
    nx, ny, nz = dims
    gx, gy, gz = grid.grid_dims
    s = grid.spacing_vox
    return _axis_matrix(nz, gz, s), _axis_matrix(ny, gy, s), _axis_matrix(nx, gx, s)


def interpolate_dense(grid: ControlGrid, dims: Tuple[int, int, int]) -> DenseField:
    """
    Trilinear interpolation of node displacements onto every voxel.

    Exact at voxels that coincide with nodes.
    """
    lz, ly, lx = _interpolation_matrices(grid, dims)
    dense = np.einsum("za,abcd->zbcd", lz, grid.displacements, optimize=True)
    dense = np.einsum("yb,zbcd->zycd", ly, dense, optimize=True)
    dense = np.einsum("xc,zycd->zyxd", lx, dense, optimize=True)
    return DenseField(dense)


def pullback(grid: ControlGrid, dense_gradient: np.ndarray) -> np.ndarray:
    """
    Adjoint of :func:`interpolate_dense`.

    Maps a per-voxel gradient (nz, ny, nx, 3) to a per-node gradient with the
    shape of ``grid.displacements``.
    """
    nz, ny, nx = dense_gradient.shape[:3]
    lz, ly, lx = _interpolation_matrices(grid, (nx, ny, nz))
    nodes = np.einsum("xc,zyxd->zycd", lx, dense_gradient, optimize=True)
    nodes = np.einsum("yb,zycd->zbcd", ly, nodes, optimize=True)
    nodes = np.einsum("za,zbcd->abcd", lz, nodes, optimize=True)
    return nodes


def sample_grid(grid: ControlGrid, positions: np.ndarray) -> np.ndarray:
    """Node displacements interpolated at arbitrary voxel positions (z, y, x)."""
    grid_coords = positions / grid.spacing_vox + 1.0
    out = np.empty(positions.shape[:-1] + (3,))
    for c in range(3):
        out[..., c], _ = sample(grid.displacements[..., c], grid_coords)
    return out


def upsample_grid(grid: ControlGrid, fine_dims: Tuple[int, int, int]) -> ControlGrid:
    """
    Carry a coarse-level grid to the next finer pyramid level.

    The spacing in voxels is unchanged, so node positions halve physically;
    displacements double because voxels halve.
    """
    fine = ControlGrid.zeros(fine_dims, grid.spacing_vox)
    coarse_positions = fine.node_positions() / 2.0
    return fine.with_displacements(2.0 * sample_grid(grid, coarse_positions))


def fit_grid(grid: ControlGrid, dense: DenseField) -> ControlGrid:
    """Set every node to the dense displacement sampled at the node position."""
    values = np.empty_like(grid.displacements)
    positions = grid.node_positions()
    for c in range(3):
        values[..., c], _ = sample(dense.data[..., c], positions)
    return grid.with_displacements(values)


def _check_dims(a, b):
    if tuple(a) != tuple(b):
        raise ValueError(f"dims mismatch: {tuple(a)} vs {tuple(b)}")


def warp(moving, dense: DenseField, interp: str = "trilinear"):
    """
    Resample ``moving`` at ``x + d(x)`` with clamp-to-edge sampling.

    Parameters
    ----------
    moving : Volume or LabelVolume
        The image to deform. Label volumes are always sampled nearest.
    dense : DenseField
        Displacement of every output voxel.
    interp : str
        ``"trilinear"`` or ``"nearest"``.

    Returns
    -------
    Volume or LabelVolume
        The warped image, same type and geometry as ``moving``.
    """
    _check_dims(moving.dims, dense.dims)
    order = _interp_order(interp)
    if not dense.data.any():
        return moving.with_data(moving.data.copy())
    positions = np.moveaxis(warped_positions(dense.data), -1, 0)
    if isinstance(moving, LabelVolume):
        warped = ndi.map_coordinates(
            moving.data.astype(np.float64), positions, order=0, mode="nearest"
        )
        return moving.with_data(np.rint(warped).astype(np.int32))
    warped = ndi.map_coordinates(
        moving.data, positions, order=order, mode="nearest", output=WORKING_DTYPE
    )
    return moving.with_data(warped)


def _sample_field(f: np.ndarray, positions: np.ndarray) -> np.ndarray:
    out = np.empty(positions.shape[:-1] + (3,))
    coords = np.moveaxis(positions, -1, 0)
    for c in range(3):
        out[..., c] = ndi.map_coordinates(f[..., c], coords, order=1, mode="nearest")
    return out


def compose(f: DenseField, g: DenseField) -> DenseField:
    """``(f o g)(x) = g(x) + f(x + g(x))``, f sampled trilinearly."""
    _check_dims(f.dims, g.dims)
    return DenseField(g.data + _sample_field(f.data, warped_positions(g.data)))


def invert(dense: DenseField, iterations: int = 20, tol: float = 0.01) -> DenseField:
    """
    Fixed-point inversion ``inv <- -d(x + inv(x))``.

    Returns the iterate with the smallest residual
    ``max |compose(dense, inv)|``. The residual and a convergence flag are
    stored in ``metadata``; non-convergence is logged, not raised.
    """
    inverse = -dense.data
    best, best_residual = inverse, np.inf
    converged = False
    for iteration in range(1, iterations + 1):
        updated = -_sample_field(dense.data, warped_positions(inverse))
        # residual of the current iterate equals the size of its update
        residual = float(np.abs(updated - inverse).max()) if inverse.size else 0.0
        if residual < best_residual:
            best, best_residual = inverse, residual
        inverse = updated
        if residual < tol:
            converged = True
            break
    if not converged:
        logger.warning(
            "field inversion did not converge after %d iterations, residual %.4f voxel",
            iterations,
            best_residual,
        )
    return DenseField(
        best,
        metadata={
            "inversion_residual": best_residual,
            "converged": converged,
            "iterations": iteration if iterations > 0 else 0,
        },
    )


def consistency_residual(fwd: DenseField, bwd: DenseField) -> float:
    """``max |compose(fwd, bwd)|`` in voxels."""
    return compose(fwd, bwd).max_norm()


def inverse_consistency_step(
    fwd: DenseField, bwd: DenseField, iterations: int = 20, tol: float = 0.01
) -> Tuple[DenseField, DenseField]:
    """
    Average each field with the inverse of the other.

    ``fwd' = (fwd + invert(bwd)) / 2`` and ``bwd' = (bwd + invert(fwd)) / 2``.
    """
    _check_dims(fwd.dims, bwd.dims)
    inv_bwd = invert(bwd, iterations, tol)
    inv_fwd = invert(fwd, iterations, tol)
    return (
        DenseField(0.5 * fwd.data + 0.5 * inv_bwd.data),
        DenseField(0.5 * bwd.data + 0.5 * inv_fwd.data),
    )


def sample_volume(volume: Volume, dense: DenseField) -> Tuple[np.ndarray, np.ndarray]:
    """Warped intensities and their derivative with respect to the displacement."""
    _check_dims(volume.dims, dense.dims)
    return sample(volume.data, warped_positions(dense.data), with_gradient=True)
