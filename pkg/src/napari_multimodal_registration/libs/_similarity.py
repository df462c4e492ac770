"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Dissimilarity measures between a fixed volume and a moving
volume warped by a dense displacement field, with analytic gradients.

Every measure follows the same small interface: ``value(field)``,
``gradient(field)`` and ``value_and_gradient(field)``. Gradients are per
voxel, shape (nz, ny, nx, 3), components (x, y, z) in voxels.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage as ndi

from ._interpolation import corners, warped_positions
from ._mind import MindField, MindParams, compute_mind
from ._transform import (
    ControlGrid,
    DenseField,
    interpolate_dense,
    pullback,
    sample_volume,
)
from ._volume import Volume

logger = logging.getLogger(__name__)

NMI_BINS = 100
PERCENTILES = (0.5, 99.5)
LNCC_VARIANCE_FLOOR = 1e-8

SCALE_STRATEGIES = ("fixed", "grad", "delta")
_STRATEGY_ALIASES = {
    "fixed": "fixed",
    "grad": "grad",
    "initial_gradient": "grad",
    "delta": "delta",
    "dissimilarity_change": "delta",
}


def _check_dims(fixed, other):
    if tuple(fixed.dims) != tuple(other.dims):
        raise ValueError(f"dims mismatch: {tuple(fixed.dims)} vs {tuple(other.dims)}")


def intensity_range(data: np.ndarray) -> Tuple[float, float]:
    """The 0.5 / 99.5 percentile range, widened to min/max if it collapses."""
    lo, hi = (float(v) for v in np.percentile(data, PERCENTILES))
    if hi <= lo:
        vmin, vmax = float(np.min(data)), float(np.max(data))
        if vmax > vmin:
            logger.warning(
                "percentile range collapsed at %.6g, using min/max [%.6g, %.6g]",
                lo,
                vmin,
                vmax,
            )
        lo, hi = vmin, vmax
    return lo, hi


def bin_indices(data: np.ndarray, value_range: Tuple[float, float], bins: int) -> np.ndarray:
    """Equal-width bin of every value; values outside the range go to the end bins."""
    lo, hi = value_range
    if hi <= lo:
        return np.zeros(data.shape, dtype=np.int64)
    scaled = (np.asarray(data, dtype=np.float64) - lo) / (hi - lo) * bins
    return np.clip(np.floor(scaled), 0, bins - 1).astype(np.int64)


def entropy(probabilities: np.ndarray) -> float:
    """``-sum p ln p`` over the non-zero entries."""
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class JointHistogram:
    """
    Normalized joint intensity histogram.

    Rows index fixed-image bins, columns index moving-image bins.
    """

    bins: int
    range_f: Tuple[float, float]
    range_m: Tuple[float, float]
    joint: np.ndarray

    @property
    def marginal_fixed(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def marginal_moving(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def entropies(self) -> Tuple[float, float, float]:
        """``(H_fixed, H_moving, H_joint)``."""
        return (
            entropy(self.marginal_fixed),
            entropy(self.marginal_moving),
            entropy(self.joint),
        )


def build_joint_histogram(
    fixed: Volume, warped_moving: Volume, bins: int = NMI_BINS
) -> JointHistogram:
    """Joint histogram of two already aligned volumes."""
    _check_dims(fixed, warped_moving)
    measure = NmiMeasure(fixed, warped_moving, bins=bins, allow_constant=True)
    return measure.histogram(DenseField.zeros(fixed.dims))


class Dissimilarity:
    """Base class of the measures. Lower values mean better alignment."""

    name = "dissimilarity"

    def __init__(self, fixed: Volume, moving: Volume):
        _check_dims(fixed, moving)
        self.fixed = fixed
        self.moving = moving

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.fixed.dims

    def value(self, field: DenseField) -> float:
        raise NotImplementedError

    def gradient(self, field: DenseField) -> np.ndarray:
        raise NotImplementedError

    def value_and_gradient(self, field: DenseField) -> Tuple[float, np.ndarray]:
        return self.value(field), self.gradient(field)

    def _check_field(self, field: DenseField):
        _check_dims(self.fixed, field)


class NmiMeasure(Dissimilarity):
    """
    Negative normalized mutual information ``-(H_f + H_m) / H_fm``.

    Each fixed voxel spreads unit mass over the bins of the 8 moving voxels
    around its warped position, weighted trilinearly. Intensity ranges are
    taken from the volumes given at construction.

    Parameters
    ----------
    fixed, moving : Volume
        Volumes of equal dims.
    bins : int
        Bins per axis.
    allow_constant : bool
        Accept two constant volumes (histogram construction only).
    """

    name = "nmi"

    def __init__(
        self,
        fixed: Volume,
        moving: Volume,
        bins: int = NMI_BINS,
        allow_constant: bool = False,
    ):
        super().__init__(fixed, moving)
        if bins < 2:
            raise ValueError(f"bins must be >= 2, got {bins}")
        if not allow_constant and _is_constant(fixed.data) and _is_constant(moving.data):
            raise ValueError("NMI is undefined for two constant volumes")
        self.bins = int(bins)
        self.range_f = intensity_range(fixed.data)
        self.range_m = intensity_range(moving.data)
        self._bins_f = bin_indices(fixed.data, self.range_f, self.bins)
        self._bins_m = bin_indices(moving.data, self.range_m, self.bins).ravel()
        self._n = fixed.n_voxels

    def _corner_keys(self, field: DenseField, with_derivative: bool):
        self._check_field(field)
        positions = warped_positions(field.data)
        for corner in corners(positions, self.moving.data.shape, with_derivative):
            yield corner, self._bins_f * self.bins + self._bins_m[corner.index]

    def histogram(self, field: DenseField) -> JointHistogram:
        joint = np.zeros(self.bins * self.bins)
        for corner, keys in self._corner_keys(field, with_derivative=False):
            joint += np.bincount(
                keys.ravel(), weights=corner.weight.ravel(), minlength=self.bins**2
            )
        joint = joint.reshape(self.bins, self.bins) / self._n
        return JointHistogram(self.bins, self.range_f, self.range_m, joint)

    def _value_of(self, histogram: JointHistogram) -> Tuple[float, float, float, float]:
        h_f, h_m, h_fm = histogram.entropies()
        if h_fm <= 0.0:
            raise ValueError("joint entropy is zero, both volumes are constant")
        return -(h_f + h_m) / h_fm, h_f, h_m, h_fm

    def value(self, field: DenseField) -> float:
        return self._value_of(self.histogram(field))[0]

    def value_and_gradient(self, field: DenseField) -> Tuple[float, np.ndarray]:
        histogram = self.histogram(field)
        value, h_f, h_m, h_fm = self._value_of(histogram)

        floor = 1.0 / (2.0 * self._n)
        joint = np.where(histogram.joint > 0, histogram.joint, floor)
        marginal = histogram.marginal_moving
        marginal = np.where(marginal > 0, marginal, floor)
        # d value / d p(a, b)
        table = (np.log(marginal)[None, :] + 1.0) / h_fm - (h_f + h_m) / h_fm**2 * (
            np.log(joint) + 1.0
        )
        table = table.ravel()

        gradient = np.zeros(field.data.shape)
        for corner, keys in self._corner_keys(field, with_derivative=True):
            gradient += corner.dweight * table[keys][..., None]
        if _is_constant(self.moving.data):
            # a constant moving volume does not change under any displacement
            gradient[...] = 0.0
        return value, gradient / self._n

    def gradient(self, field: DenseField) -> np.ndarray:
        return self.value_and_gradient(field)[1]


class MindMeasure(Dissimilarity):
    """
    Sum over voxels of the squared mean absolute MIND difference.

    Descriptors are computed once per volume, each on its own grid. The
    warped moving descriptor is the moving descriptor field sampled
    trilinearly at ``x + d(x)``; it is not recomputed from the warped
    moving image, so its value differs slightly from
    ``compute_mind(warp(moving, d))`` where the field stretches patches.
    """

    name = "mind"

    def __init__(self, fixed: Volume, moving: Volume, params: Optional[MindParams] = None):
        super().__init__(fixed, moving)
        self.params = params or MindParams()
        self.fixed_field = compute_mind(fixed, self.params)
        self.moving_field = compute_mind(moving, self.params)
        self._fixed = self.fixed_field.data.astype(np.float64)
        channels = self.moving_field.channels
        self._moving_flat = self.moving_field.data.astype(np.float64).reshape(-1, channels)

    def warped_descriptor(
        self, field: DenseField, with_derivative: bool = False
    ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Moving descriptors at the warped positions.

        Returns
        -------
        Tuple[np.ndarray, Optional[np.ndarray]]
            Values (nz, ny, nx, c) and, if requested, their derivative with
            respect to the displacement, (nz, ny, nx, c, 3).
        """
        self._check_field(field)
        positions = warped_positions(field.data)
        values = np.zeros(self._fixed.shape)
        derivative = np.zeros(self._fixed.shape + (3,)) if with_derivative else None
        for corner in corners(positions, self.moving.data.shape, with_derivative):
            sampled = self._moving_flat[corner.index]
            values += corner.weight[..., None] * sampled
            if with_derivative:
                derivative += sampled[..., None] * corner.dweight[..., None, :]
        return values, derivative

    def warped_field(self, field: DenseField) -> MindField:
        values, _ = self.warped_descriptor(field)
        return MindField(
            values, self.moving.spacing, self.moving.origin, self.params.neighborhood
        )

    def value(self, field: DenseField) -> float:
        values, _ = self.warped_descriptor(field)
        pointwise = np.abs(values - self._fixed).mean(axis=-1)
        return float(np.sum(pointwise**2))

    def value_and_gradient(self, field: DenseField) -> Tuple[float, np.ndarray]:
        values, derivative = self.warped_descriptor(field, with_derivative=True)
        diff = values - self._fixed
        pointwise = np.abs(diff).mean(axis=-1)
        channels = diff.shape[-1]
        weights = 2.0 * pointwise[..., None] / channels * np.sign(diff)
        gradient = np.einsum("zyxc,zyxcd->zyxd", weights, derivative, optimize=True)
        return float(np.sum(pointwise**2)), gradient

    def gradient(self, field: DenseField) -> np.ndarray:
        return self.value_and_gradient(field)[1]


def _box_mean(data: np.ndarray, radius: int) -> np.ndarray:
    return ndi.uniform_filter(data, size=2 * radius + 1, mode="nearest")


def _box_mean_adjoint(data: np.ndarray, radius: int) -> np.ndarray:
    """Exact transpose of :func:`_box_mean` with clamp-to-edge padding."""
    size = 2 * radius + 1
    out = np.asarray(data, dtype=np.float64)
    for axis in range(out.ndim):
        moved = np.moveaxis(out, axis, 0)
        n = moved.shape[0]
        padded = np.zeros((n + 4 * radius,) + moved.shape[1:])
        padded[2 * radius : 2 * radius + n] = moved
        cumulative = np.concatenate(
            [np.zeros((1,) + moved.shape[1:]), np.cumsum(padded, axis=0)]
        )
        full = cumulative[size:] - cumulative[:-size]
        folded = full[radius : radius + n].copy()
        folded[0] += full[:radius].sum(axis=0)
        folded[-1] += full[radius + n :].sum(axis=0)
        out = np.moveaxis(folded / size, 0, axis)
    return out


class _LocalStatistics:
    def __init__(self, a: np.ndarray, w: np.ndarray, radius: int):
        self.mean_a = _box_mean(a, radius)
        self.mean_w = _box_mean(w, radius)
        self.cov = _box_mean(a * w, radius) - self.mean_a * self.mean_w
        self.var_a = _box_mean(a * a, radius) - self.mean_a**2
        self.var_w = _box_mean(w * w, radius) - self.mean_w**2
        self.valid = (self.var_a > LNCC_VARIANCE_FLOOR) & (self.var_w > LNCC_VARIANCE_FLOOR)
        denominator = np.where(self.valid, self.var_a * self.var_w, 1.0)
        self.cc2 = np.where(self.valid, self.cov**2 / denominator, 0.0)


def lncc_dissimilarity(fixed: Volume, warped_moving: Volume, window_radius: int = 3) -> float:
    """``1 - mean(cc^2)`` over (2r+1)^3 windows."""
    _check_dims(fixed, warped_moving)
    if window_radius < 1:
        raise ValueError(f"window_radius must be >= 1, got {window_radius}")
    stats = _LocalStatistics(
        fixed.data.astype(np.float64), warped_moving.data.astype(np.float64), window_radius
    )
    return float(1.0 - stats.cc2.mean())


class LnccMeasure(Dissimilarity):
    """Local normalized cross-correlation, ``1 - mean(cc^2)``."""

    name = "lncc"

    def __init__(self, fixed: Volume, moving: Volume, window_radius: int = 3):
        super().__init__(fixed, moving)
        if window_radius < 1:
            raise ValueError(f"window_radius must be >= 1, got {window_radius}")
        self.window_radius = int(window_radius)
        self._fixed = fixed.data.astype(np.float64)

    def value(self, field: DenseField) -> float:
        self._check_field(field)
        warped, _ = sample_volume(self.moving, field)
        stats = _LocalStatistics(self._fixed, warped, self.window_radius)
        return float(1.0 - stats.cc2.mean())

    def value_and_gradient(self, field: DenseField) -> Tuple[float, np.ndarray]:
        self._check_field(field)
        warped, position_derivative = sample_volume(self.moving, field)
        r = self.window_radius
        stats = _LocalStatistics(self._fixed, warped, r)

        denominator = np.where(stats.valid, stats.var_a * stats.var_w, 1.0)
        a = np.where(stats.valid, 2.0 * stats.cov / denominator, 0.0)
        b = np.where(stats.valid, 2.0 * stats.cov**2 / (denominator * stats.var_w), 0.0)
        d_cc2 = (
            self._fixed * _box_mean_adjoint(a, r)
            - _box_mean_adjoint(a * stats.mean_a, r)
            - warped * _box_mean_adjoint(b, r)
            + _box_mean_adjoint(b * stats.mean_w, r)
        )
        d_warped = -d_cc2 / warped.size
        return float(1.0 - stats.cc2.mean()), d_warped[..., None] * position_derivative

    def gradient(self, field: DenseField) -> np.ndarray:
        return self.value_and_gradient(field)[1]


class CombinedMeasure(Dissimilarity):
    """``beta * E_nmi + (1 - beta) * scale * E_mind``."""

    name = "nmi_mind"

    def __init__(self, nmi: NmiMeasure, mind: MindMeasure, beta: float, scale: float):
        super().__init__(nmi.fixed, nmi.moving)
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {beta}")
        if not scale > 0:
            raise ValueError(f"scale must be > 0, got {scale}")
        self.nmi = nmi
        self.mind = mind
        self.beta = float(beta)
        self.scale = float(scale)

    def combine(self, nmi_term, mind_term):
        return self.beta * nmi_term + (1.0 - self.beta) * self.scale * mind_term

    def value(self, field: DenseField) -> float:
        return float(self.combine(self.nmi.value(field), self.mind.value(field)))

    def value_and_gradient(self, field: DenseField) -> Tuple[float, np.ndarray]:
        v_nmi, g_nmi = self.nmi.value_and_gradient(field)
        v_mind, g_mind = self.mind.value_and_gradient(field)
        return float(self.combine(v_nmi, v_mind)), self.combine(g_nmi, g_mind)

    def gradient(self, field: DenseField) -> np.ndarray:
        return self.value_and_gradient(field)[1]


def _is_constant(data: np.ndarray) -> bool:
    return bool(data.size == 0 or np.ptp(data) == 0)


def nmi_dissimilarity(fixed: Volume, warped_moving: Volume, bins: int = NMI_BINS) -> float:
    """NMI of two aligned volumes, in [-2, -1]."""
    return NmiMeasure(fixed, warped_moving, bins).value(DenseField.zeros(fixed.dims))


def nmi_gradient(fixed: Volume, moving: Volume, field: DenseField, bins: int = NMI_BINS) -> np.ndarray:
    return NmiMeasure(fixed, moving, bins).gradient(field)


def mind_dissimilarity(
    fixed: Volume, moving: Volume, field: DenseField, params: Optional[MindParams] = None
) -> float:
    """MIND dissimilarity with the moving descriptor warped by ``field``."""
    return MindMeasure(fixed, moving, params).value(field)


def mind_gradient(
    fixed: Volume, moving: Volume, field: DenseField, params: Optional[MindParams] = None
) -> np.ndarray:
    return MindMeasure(fixed, moving, params).gradient(field)


def combined_dissimilarity(
    fixed: Volume,
    moving: Volume,
    field: DenseField,
    beta: float,
    s: float,
    params: Optional[MindParams] = None,
) -> float:
    measure = CombinedMeasure(
        NmiMeasure(fixed, moving), MindMeasure(fixed, moving, params), beta, s
    )
    return measure.value(field)


@dataclass(frozen=True)
class CombineParams:
    """
    Parameters
    ----------
    beta : float
        Weight of the NMI term, in [0, 1].
    strategy : str
        ``"fixed"``, ``"grad"`` (ratio of gradient norms at the probe) or
        ``"delta"`` (ratio of dissimilarity changes towards the probe).
    fixed_s : float
        Scale used by the ``"fixed"`` strategy.
    """

    beta: float = 0.8
    strategy: str = "grad"
    fixed_s: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.fixed_s > 0:
            raise ValueError(f"fixed_s must be > 0, got {self.fixed_s}")
        object.__setattr__(self, "strategy", normalize_strategy(self.strategy))


def normalize_strategy(strategy: str) -> str:
    try:
        return _STRATEGY_ALIASES[strategy]
    except KeyError:
        raise ValueError(
            f"unknown scale strategy {strategy!r}, use one of {SCALE_STRATEGIES}"
        ) from None


_DEGENERATE = 1e-12


def combine_scale(
    fixed: Volume,
    moving: Volume,
    probe: ControlGrid,
    strategy: str,
    fixed_s: float = 1.0,
    nmi: Optional[NmiMeasure] = None,
    mind: Optional[MindMeasure] = None,
    initial: Optional[ControlGrid] = None,
) -> float:
    """
    Scale ``s`` that balances the MIND term against the NMI term.

    Parameters
    ----------
    fixed, moving : Volume
        The image pair at the current pyramid level.
    probe : ControlGrid
        Grid state at which gradients (``"grad"``) or the dissimilarity
        change (``"delta"``) are measured.
    strategy : str
        ``"fixed"``, ``"grad"`` or ``"delta"``.
    fixed_s : float
        Returned as is by ``"fixed"``.
    nmi, mind : optional
        Prebuilt measures, reused to avoid recomputing descriptors.
    initial : ControlGrid, optional
        Start state for ``"delta"``; the zero grid by default.

    Returns
    -------
    float
        Strictly positive scale.
    """
    strategy = normalize_strategy(strategy)
    if strategy == "fixed":
        if not fixed_s > 0:
            raise ValueError(f"fixed_s must be > 0, got {fixed_s}")
        return float(fixed_s)

    dims = fixed.dims
    nmi = nmi or NmiMeasure(fixed, moving)
    mind = mind or MindMeasure(fixed, moving)
    probe_field = interpolate_dense(probe, dims)

    if strategy == "grad":
        numerator = np.linalg.norm(pullback(probe, nmi.gradient(probe_field)))
        denominator = np.linalg.norm(pullback(probe, mind.gradient(probe_field)))
    else:
        initial = initial or ControlGrid.zeros(dims, probe.spacing_vox)
        if np.array_equal(initial.displacements, probe.displacements):
            raise ValueError("degenerate scale probe: probe equals the initial grid")
        initial_field = interpolate_dense(initial, dims)
        numerator = abs(nmi.value(initial_field) - nmi.value(probe_field))
        denominator = abs(mind.value(initial_field) - mind.value(probe_field))

    if denominator < _DEGENERATE or numerator < _DEGENERATE:
        raise ValueError(
            f"degenerate scale probe: ratio {numerator:.3g} / {denominator:.3g}"
        )
    return float(numerator / denominator)
