"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Multi-resolution deformable registration on a linearly
interpolated control grid.

The cost is ``E_dissim(fixed, moving o d(k)) + lambda * R(k)``, minimized by
gradient descent with an Armijo backtracking line search at every level of a
Gaussian pyramid, coarsest first.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ._mind import MindParams
from ._regularization import REGULARIZERS
from ._similarity import (
    CombinedMeasure,
    Dissimilarity,
    LnccMeasure,
    MindMeasure,
    NmiMeasure,
    NMI_BINS,
    combine_scale,
    normalize_strategy,
)
from ._transform import (
    ControlGrid,
    DenseField,
    consistency_residual,
    fit_grid,
    interpolate_dense,
    inverse_consistency_step,
    pullback,
    upsample_grid,
)
from ._volume import Volume, gaussian_pyramid

logger = logging.getLogger(__name__)

MEASURES = ("nmi", "mind", "nmi_mind", "lncc")
_MEASURE_ALIASES = {"nmi+mind": "nmi_mind"}

ARMIJO_C = 1e-4


@dataclass(frozen=True)
class RegistrationConfig:
    """
    Hyperparameters of one deformable registration.

    Parameters
    ----------
    measure : str
        ``"nmi"``, ``"mind"``, ``"nmi_mind"`` (also ``"nmi+mind"``) or
        ``"lncc"``.
    beta : float
        Weight of NMI in the combined measure.
    scale_strategy : str
        How the MIND scale ``s`` is chosen: ``"fixed"``, ``"grad"`` or
        ``"delta"``.
    fixed_s : float
        Scale for ``scale_strategy="fixed"``.
    lam : float
        Regularization weight lambda.
    regularizer : str
        ``"tv"`` or ``"l2"``.
    spacing_vox : int
        Control-point spacing in voxels, identical at every level.
    levels : int
        Pyramid levels.
    max_iters_per_level : int
        Iteration cap per level.
    step_tol : float
        Stop a level once the relative cost change of a step falls below it.
    symmetric : bool
        Optimize forward and backward grids together and apply the
        inverse-consistency step.
    every_n_iterations : int
        Apply the inverse-consistency step every n iterations; 0 applies it
        only at the end of each level.
    window_radius : int
        LNCC window radius.
    mind_sigma : float
        MIND patch sigma.
    bins : int
        NMI histogram bins.
    max_step_vox : float
        Largest node move of the first line-search trial.
    max_halvings : int
        Line-search step halvings before giving up.
    """

    measure: str = "nmi"
    beta: float = 0.8
    scale_strategy: str = "grad"
    fixed_s: float = 1.0
    lam: float = 0.05
    regularizer: str = "tv"
    spacing_vox: int = 8
    levels: int = 3
    max_iters_per_level: int = 100
    step_tol: float = 1e-5
    symmetric: bool = False
    every_n_iterations: int = 0
    window_radius: int = 3
    mind_sigma: float = 0.5
    bins: int = NMI_BINS
    max_step_vox: float = 1.0
    max_halvings: int = 20

    def __post_init__(self):
        measure = _MEASURE_ALIASES.get(self.measure, self.measure)
        if measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}, use one of {MEASURES}")
        object.__setattr__(self, "measure", measure)
        object.__setattr__(self, "scale_strategy", normalize_strategy(self.scale_strategy))
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}, use 'tv' or 'l2'")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.fixed_s > 0:
            raise ValueError(f"fixed_s must be > 0, got {self.fixed_s}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.spacing_vox < 2:
            raise ValueError(f"spacing_vox must be >= 2, got {self.spacing_vox}")
        if self.max_iters_per_level < 0:
            raise ValueError("max_iters_per_level must be >= 0")
        if self.every_n_iterations < 0:
            raise ValueError("every_n_iterations must be >= 0")
        if self.window_radius < 1:
            raise ValueError(f"window_radius must be >= 1, got {self.window_radius}")
        if not self.max_step_vox > 0:
            raise ValueError("max_step_vox must be > 0")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class LevelTrace:
    """
    Optimization record of one pyramid level.

    ``costs`` holds the starting cost and the cost after every accepted
    line-search step. An inverse-consistency step changes the grids without
    a line search: its iteration goes to ``consistency_steps`` and the cost
    it leaves behind to ``consistency_costs``, so ``costs`` only ever
    decreases between two consistency steps.
    """

    level: int
    dims: Tuple[int, int, int]
    costs: List[float] = field(default_factory=list)
    scale: Optional[float] = None
    iterations: int = 0
    stop_reason: str = ""
    consistency_steps: List[int] = field(default_factory=list)
    consistency_costs: List[float] = field(default_factory=list)

    def segments(self) -> List[List[float]]:
        """
        Cost runs between consistency steps, each starting from the cost
        its first line search started from. Every run is non-increasing.
        """
        runs = []
        start = 0
        head: List[float] = []
        for step, cost in zip(self.consistency_steps, self.consistency_costs):
            runs.append(head + self.costs[start : step + 1])
            start = step + 1
            head = [cost]
        runs.append(head + self.costs[start:])
        return [run for run in runs if run]

    @property
    def final_cost(self) -> float:
        runs = self.segments()
        return runs[-1][-1] if runs else float("nan")


@dataclass
class RegistrationResult:
    """
    Outcome of :func:`register_deformable`.

    ``traces`` are ordered coarsest level first. ``backward_grid`` is only
    set for symmetric runs.
    """

    grid: ControlGrid
    dims: Tuple[int, int, int]
    config: RegistrationConfig
    traces: List[LevelTrace]
    wall_time: float
    backward_grid: Optional[ControlGrid] = None

    def field(self) -> DenseField:
        return interpolate_dense(self.grid, self.dims)

    def backward_field(self) -> Optional[DenseField]:
        if self.backward_grid is None:
            return None
        return interpolate_dense(self.backward_grid, self.dims)

    @property
    def final_cost(self) -> float:
        for trace in reversed(self.traces):
            if trace.costs:
                return trace.final_cost
        return float("nan")

    @property
    def scales(self) -> List[Optional[float]]:
        return [trace.scale for trace in self.traces]

    @property
    def cost_traces(self) -> List[List[float]]:
        return [list(trace.costs) for trace in self.traces]


def build_measure(
    fixed: Volume,
    moving: Volume,
    config: RegistrationConfig,
    scale: Optional[float] = None,
) -> Dissimilarity:
    """
    Dissimilarity named by ``config.measure``.

    For ``nmi_mind`` the scale must be given, or ``config.fixed_s`` is used.
    """
    if config.measure == "nmi":
        return NmiMeasure(fixed, moving, config.bins)
    if config.measure == "lncc":
        return LnccMeasure(fixed, moving, config.window_radius)
    params = MindParams(sigma=config.mind_sigma)
    if config.measure == "mind":
        return MindMeasure(fixed, moving, params)
    return CombinedMeasure(
        NmiMeasure(fixed, moving, config.bins),
        MindMeasure(fixed, moving, params),
        config.beta,
        config.fixed_s if scale is None else scale,
    )


class _Objective:
    """Total cost of one grid (or of a forward/backward pair) at one level."""

    def __init__(self, measures: List[Dissimilarity], config: RegistrationConfig, dims):
        self.measures = measures
        self.regularizer = REGULARIZERS[config.regularizer]
        self.lam = config.lam
        self.dims = dims

    def __call__(self, grids: List[ControlGrid]) -> Tuple[float, List[np.ndarray]]:
        total = 0.0
        gradients = []
        for measure, grid in zip(self.measures, grids):
            value, gradient = _grid_cost(measure, grid, self.dims, self.regularizer, self.lam)
            total += value
            gradients.append(gradient)
        return total, gradients


def _grid_cost(measure, grid, dims, regularizer, lam) -> Tuple[float, np.ndarray]:
    dense = interpolate_dense(grid, dims)
    value, dense_gradient = measure.value_and_gradient(dense)
    gradient = pullback(grid, dense_gradient)
    if lam > 0:
        penalty, penalty_gradient = regularizer(grid)
        value += lam * penalty
        gradient = gradient + lam * penalty_gradient
    return float(value), gradient


def total_cost(
    fixed: Volume,
    moving: Volume,
    grid: ControlGrid,
    config: RegistrationConfig,
    measure: Optional[Dissimilarity] = None,
) -> Tuple[float, np.ndarray]:
    """
    ``E_dissim + lambda * R`` and its gradient with respect to the nodes.

    The dissimilarity gradient is pulled back from voxels to nodes through
    the transpose of the grid interpolation.
    """
    measure = measure or build_measure(fixed, moving, config)
    return _grid_cost(
        measure, grid, fixed.dims, REGULARIZERS[config.regularizer], config.lam
    )


def _max_node_move(gradients: List[np.ndarray]) -> float:
    return max(float(np.linalg.norm(g, axis=-1).max()) for g in gradients)


def _line_search(objective, grids, cost, gradients, config: RegistrationConfig):
    """Armijo backtracking from a step whose largest node move is ``max_step_vox``."""
    slope = sum(float(np.sum(g * g)) for g in gradients)
    step = config.max_step_vox / _max_node_move(gradients)
    for halving in range(config.max_halvings + 1):
        trial = [
            grid.with_displacements(grid.displacements - step * g)
            for grid, g in zip(grids, gradients)
        ]
        trial_cost, trial_gradients = objective(trial)
        if trial_cost <= cost - ARMIJO_C * step * slope:
            logger.debug("accepted step %.4g after %d halvings", step, halving)
            return trial, trial_cost, trial_gradients
        step *= 0.5
    return None


def default_probe(nmi: NmiMeasure, grid: ControlGrid) -> ControlGrid:
    """One NMI descent step from ``grid`` moving the largest node by one voxel."""
    dense = interpolate_dense(grid, nmi.dims)
    gradient = pullback(grid, nmi.gradient(dense))
    largest = float(np.linalg.norm(gradient, axis=-1).max())
    if largest == 0.0:
        return grid
    return grid.with_displacements(grid.displacements - gradient / largest)


def resolve_measure(
    fixed, moving, grid, config, scale: Optional[float] = None
) -> Tuple[Dissimilarity, Optional[float]]:
    """
    Build the measure of ``config`` for a pair, probing the MIND scale at
    ``grid`` unless it is given or fixed. The scale is None for single
    measures.
    """
    if config.measure != "nmi_mind":
        return build_measure(fixed, moving, config), None
    if scale is not None:
        return build_measure(fixed, moving, config, scale), scale
    params = MindParams(sigma=config.mind_sigma)
    nmi = NmiMeasure(fixed, moving, config.bins)
    mind = MindMeasure(fixed, moving, params)
    if config.scale_strategy == "fixed":
        scale = config.fixed_s
    else:
        probe = default_probe(nmi, grid)
        scale = combine_scale(
            fixed,
            moving,
            probe,
            config.scale_strategy,
            config.fixed_s,
            nmi=nmi,
            mind=mind,
            initial=grid,
        )
    return CombinedMeasure(nmi, mind, config.beta, scale), scale


def _consistency(grids: List[ControlGrid], dims) -> List[ControlGrid]:
    fwd = interpolate_dense(grids[0], dims)
    bwd = interpolate_dense(grids[1], dims)
    fwd, bwd = inverse_consistency_step(fwd, bwd)
    return [fit_grid(grids[0], fwd), fit_grid(grids[1], bwd)]


def _optimize_level(objective, grids, config: RegistrationConfig, trace: LevelTrace):
    cost, gradients = objective(grids)
    trace.costs.append(cost)
    trace.stop_reason = "max_iters"
    for iteration in range(1, config.max_iters_per_level + 1):
        if _max_node_move(gradients) == 0.0:
            trace.stop_reason = "stationary"
            break
        accepted = _line_search(objective, grids, cost, gradients, config)
        if accepted is None:
            trace.stop_reason = "line_search"
            break
        grids, new_cost, gradients = accepted
        trace.iterations = iteration
        change = (cost - new_cost) / max(abs(cost), 1e-12)
        cost = new_cost
        trace.costs.append(cost)
        logger.debug("level %d iteration %d cost %.6g", trace.level, iteration, cost)

        if config.symmetric and config.every_n_iterations and iteration % config.every_n_iterations == 0:
            grids = _consistency(grids, trace.dims)
            cost, gradients = objective(grids)
            trace.consistency_steps.append(iteration)
            trace.consistency_costs.append(cost)
        if change < config.step_tol:
            trace.stop_reason = "step_tol"
            break
    if config.symmetric:
        grids = _consistency(grids, trace.dims)
        trace.consistency_steps.append(trace.iterations)
        trace.consistency_costs.append(objective(grids)[0])
    return grids


def register_deformable(
    fixed: Volume,
    moving: Volume,
    config: Optional[RegistrationConfig] = None,
) -> RegistrationResult:
    """
    Deformable registration of ``moving`` onto ``fixed``.

    Parameters
    ----------
    fixed, moving : Volume
        Volumes of equal dims and spacing.
    config : RegistrationConfig, optional
        Hyperparameters; defaults if omitted.

    Returns
    -------
    RegistrationResult
        ``warp(moving, result.field())`` is aligned with ``fixed``.
    """
    config = config or RegistrationConfig()
    if tuple(fixed.dims) != tuple(moving.dims):
        raise ValueError(f"dims mismatch: {fixed.dims} vs {moving.dims}")
    if np.ptp(fixed.data) == 0 and np.ptp(moving.data) == 0:
        raise ValueError("both volumes are constant, nothing to register")

    start = time.perf_counter()
    fixed_pyramid = gaussian_pyramid(fixed, config.levels)
    moving_pyramid = gaussian_pyramid(moving, config.levels)

    grids: List[ControlGrid] = []
    traces: List[LevelTrace] = []
    for level in reversed(range(config.levels)):
        level_fixed = fixed_pyramid[level]
        level_moving = moving_pyramid[level]
        dims = level_fixed.dims
        if grids:
            grids = [upsample_grid(grid, dims) for grid in grids]
        else:
            grids = [ControlGrid.zeros(dims, config.spacing_vox)]
            if config.symmetric:
                grids.append(ControlGrid.zeros(dims, config.spacing_vox))

        measure, scale = resolve_measure(level_fixed, level_moving, grids[0], config)
        measures = [measure]
        if config.symmetric:
            backward, _ = resolve_measure(
                level_moving, level_fixed, grids[1], config, scale
            )
            measures.append(backward)

        trace = LevelTrace(level=level, dims=dims, scale=scale)
        objective = _Objective(measures, config, dims)
        grids = _optimize_level(objective, grids, config, trace)
        traces.append(trace)
        logger.info(
            "level %d dims %s: %d iterations (%s), cost %.6g%s",
            level,
            dims,
            trace.iterations,
            trace.stop_reason,
            trace.final_cost,
            "" if scale is None else f", s={scale:.6g}",
        )

    result = RegistrationResult(
        grid=grids[0],
        dims=fixed.dims,
        config=config,
        traces=traces,
        wall_time=time.perf_counter() - start,
        backward_grid=grids[1] if config.symmetric else None,
    )
    if config.symmetric:
        residual = consistency_residual(result.field(), result.backward_field())
        logger.info("inverse consistency residual %.4f voxel", residual)
    return result
