"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Smoothness penalties on control-grid displacements.

Both penalties work on forward differences between neighbouring nodes,
divided by the node spacing, with zero difference past the last node. Sums
are divided by the number of nodes.
"""

from typing import Callable, Dict, List, Tuple

import numpy as np

from ._transform import ControlGrid

TV_EPSILON = 0.01


def _forward_differences(grid: ControlGrid) -> List[np.ndarray]:
    u = grid.displacements
    diffs = []
    for axis in range(3):
        d = np.zeros_like(u)
        head = [slice(None)] * 4
        tail = [slice(None)] * 4
        head[axis] = slice(None, -1)
        tail[axis] = slice(1, None)
        d[tuple(head)] = (u[tuple(tail)] - u[tuple(head)]) / grid.spacing_vox
        diffs.append(d)
    return diffs


def _differences_adjoint(weights: List[np.ndarray], spacing: int) -> np.ndarray:
    """Transpose of :func:`_forward_differences` applied to per-axis weights."""
    gradient = np.zeros_like(weights[0])
    for axis, w in enumerate(weights):
        head = [slice(None)] * 4
        tail = [slice(None)] * 4
        head[axis] = slice(None, -1)
        tail[axis] = slice(1, None)
        gradient[tuple(head)] -= w[tuple(head)] / spacing
        gradient[tuple(tail)] += w[tuple(head)] / spacing
    return gradient


def _node_count(grid: ControlGrid) -> int:
    return int(np.prod(grid.displacements.shape[:3]))


def regularizer_tv(grid: ControlGrid, epsilon: float = TV_EPSILON) -> Tuple[float, np.ndarray]:
    """
    Smoothed isotropic total variation.

    Parameters
    ----------
    grid : ControlGrid
        Node displacements to penalize.
    epsilon : float
        Smoothing of the square root at zero.

    Returns
    -------
    Tuple[float, np.ndarray]
        The penalty and its gradient with respect to the node displacements.
    """
    diffs = _forward_differences(grid)
    squared = sum(np.sum(d**2, axis=-1) for d in diffs)
    root = np.sqrt(squared + epsilon**2)
    n = _node_count(grid)
    value = float(np.sum(root - epsilon)) / n
    weights = [d / root[..., None] / n for d in diffs]
    return value, _differences_adjoint(weights, grid.spacing_vox)


def regularizer_l2(grid: ControlGrid) -> Tuple[float, np.ndarray]:
    """Sum of squared forward differences and its gradient."""
    diffs = _forward_differences(grid)
    n = _node_count(grid)
    value = float(sum(np.sum(d**2) for d in diffs)) / n
    weights = [2.0 * d / n for d in diffs]
    return value, _differences_adjoint(weights, grid.spacing_vox)


REGULARIZERS: Dict[str, Callable[[ControlGrid], Tuple[float, np.ndarray]]] = {
    "tv": regularizer_tv,
    "l2": regularizer_l2,
}
