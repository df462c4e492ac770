"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Rigid pre-alignment with a (1+1) evolution strategy.

Parameters are three Euler angles (radians, ``xyz`` convention) and three
translations (mm). A fixed-space point ``p`` maps to the moving-space point
``R (p - c) + c + t`` with ``c`` the centre of the fixed volume.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ._interpolation import identity_positions
from ._similarity import NmiMeasure
from ._transform import DenseField, warp
from ._volume import Volume

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED
# initial mutation scale: radians for rotations, mm for translations
DEFAULT_STEPS = (0.05, 0.05, 0.05, 2.0, 2.0, 2.0)
GROW = 1.05
SHRINK = 0.98


def rigid_matrix(params: Sequence[float]) -> np.ndarray:
    """4x4 homogeneous matrix of ``(rx, ry, rz, tx, ty, tz)`` about the origin."""
    params = np.asarray(params, dtype=np.float64)
    matrix = np.eye(4)
    matrix[:3, :3] = Rotation.from_euler("xyz", params[:3]).as_matrix()
    matrix[:3, 3] = params[3:]
    return matrix


def _centre(volume: Volume) -> np.ndarray:
    dims = np.asarray(volume.dims, dtype=np.float64)
    return np.asarray(volume.origin) + (dims - 1.0) / 2.0 * np.asarray(volume.spacing)


def rigid_field(params: Sequence[float], volume: Volume) -> DenseField:
    """
    Dense displacement field, in voxels, of a rigid transform on the grid of
    ``volume``.
    """
    spacing = np.asarray(volume.spacing)
    origin = np.asarray(volume.origin)
    centre = _centre(volume)
    matrix = rigid_matrix(params)

    # (z, y, x) index order to physical (x, y, z)
    points = identity_positions(volume.data.shape)[..., ::-1] * spacing + origin
    mapped = (points - centre) @ matrix[:3, :3].T + centre + matrix[:3, 3]
    return DenseField((mapped - points) / spacing)


@dataclass
class RigidResult:
    """
    Attributes
    ----------
    params : np.ndarray
        ``(rx, ry, rz, tx, ty, tz)``, radians and mm.
    matrix : np.ndarray
        4x4 matrix of ``params`` about the volume centre.
    warped : Volume
        The moving volume resampled onto the fixed grid.
    cost : float
        NMI at ``params``.
    iterations : int
        Evaluated mutations.
    """

    params: np.ndarray
    matrix: np.ndarray
    warped: Volume
    cost: float
    iterations: int

    @property
    def rotation_deg(self) -> np.ndarray:
        return np.degrees(self.params[:3])

    @property
    def translation_mm(self) -> np.ndarray:
        return self.params[3:].copy()


class OnePlusOneES:
    """
    Minimize ``objective`` with one parent and one mutated child per
    iteration. Per-parameter step sizes grow on success and shrink on
    failure.
    """

    def __init__(
        self,
        objective: Callable[[np.ndarray], float],
        parent: Sequence[float],
        steps: Sequence[float],
        seed: int = DEFAULT_SEED,
        min_step: float = 1e-6,
    ):
        self.objective = objective
        self.parent = np.asarray(parent, dtype=np.float64)
        self.steps = np.asarray(steps, dtype=np.float64)
        if self.parent.shape != self.steps.shape:
            raise ValueError("parent and steps must have the same length")
        self.rng = np.random.default_rng(seed)
        self.fitness = float(objective(self.parent))
        self.min_step = min_step
        self.iteration = 0

    def run(self) -> Tuple[np.ndarray, float]:
        self.iteration += 1
        child = self.parent + self.steps * self.rng.standard_normal(self.parent.shape)
        fitness = float(self.objective(child))
        if fitness < self.fitness:
            self.parent = child
            self.fitness = fitness
            self.steps = self.steps * GROW
        else:
            self.steps = self.steps * SHRINK
        return self.parent, self.fitness

    def stop(self, max_iterations: int) -> bool:
        return self.iteration >= max_iterations or float(self.steps.max()) < self.min_step


def register_rigid(
    fixed: Volume,
    moving: Volume,
    iters: int = 400,
    seed: int = DEFAULT_SEED,
    steps: Optional[Sequence[float]] = None,
    initial: Optional[Sequence[float]] = None,
) -> RigidResult:
    """
    Rigid alignment of ``moving`` onto ``fixed`` maximizing NMI.

    Parameters
    ----------
    fixed, moving : Volume
        Volumes of equal dims and spacing.
    iters : int
        Number of mutations.
    seed : int
        Seed of the mutation generator.
    steps : Sequence[float], optional
        Initial mutation scales, radians and mm.
    initial : Sequence[float], optional
        Starting parameters; identity by default.

    Returns
    -------
    RigidResult
    """
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    measure = NmiMeasure(fixed, moving)

    def objective(params: np.ndarray) -> float:
        return measure.value(rigid_field(params, fixed))

    es = OnePlusOneES(
        objective,
        np.zeros(6) if initial is None else initial,
        DEFAULT_STEPS if steps is None else steps,
        seed=seed,
    )
    start_cost = es.fitness
    while not es.stop(iters):
        es.run()

    params = es.parent.copy()
    logger.info(
        "rigid: cost %.6f -> %.6f after %d iterations, rotation %s deg, translation %s mm",
        start_cost,
        es.fitness,
        es.iteration,
        np.round(np.degrees(params[:3]), 3).tolist(),
        np.round(params[3:], 3).tolist(),
    )

    centre = _centre(fixed)
    about_centre = np.eye(4)
    about_centre[:3, 3] = centre
    to_origin = np.eye(4)
    to_origin[:3, 3] = -centre
    matrix = about_centre @ rigid_matrix(params) @ to_origin

    return RigidResult(
        params=params,
        matrix=matrix,
        warped=warp(moving, rigid_field(params, fixed)),
        cost=es.fitness,
        iterations=es.iteration,
    )
