"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Overlap, structure volume and displacement accuracy metrics.
"""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ._transform import DenseField, warp
from ._volume import LabelVolume


def _check_dims(a, b):
    if tuple(a.dims) != tuple(b.dims):
        raise ValueError(f"dims mismatch: {tuple(a.dims)} vs {tuple(b.dims)}")


@dataclass
class DiceReport:
    """
    Attributes
    ----------
    per_label : Dict[int, float]
        Dice of every label present on at least one side.
    mean : float
        Mean Dice over labels present on both sides; NaN if there are none.
    skipped : List[int]
        Labels present on one side only.
    names : Dict[int, str]
        Structure names, where known.
    """

    per_label: Dict[int, float]
    mean: float
    skipped: List[int] = field(default_factory=list)
    names: Dict[int, str] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"label": label, "name": self.names.get(label, f"label_{label}"), "dice": dice}
            for label, dice in sorted(self.per_label.items())
        ]
        return pd.DataFrame(rows, columns=["label", "name", "dice"])

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def __str__(self) -> str:
        frame = self.to_frame()
        lines = [frame.to_string(index=False, float_format=lambda v: f"{v:.3f}")]
        lines.append(f"mean dice: {self.mean:.3f}")
        if self.skipped:
            lines.append(f"skipped labels: {' '.join(str(v) for v in self.skipped)}")
        return "\n".join(lines)


def dice(a: LabelVolume, b: LabelVolume) -> DiceReport:
    """
    Per-label Dice overlap ``2 |A & B| / (|A| + |B|)``.

    Labels absent on both sides are ignored. A label present on one side
    only scores 0 and is listed in ``skipped``; it does not enter the mean.
    """
    _check_dims(a, b)
    labels_a, labels_b = set(a.labels), set(b.labels)
    per_label: Dict[int, float] = {}
    evaluated = []
    for label in sorted(labels_a | labels_b):
        mask_a = a.data == label
        mask_b = b.data == label
        total = int(mask_a.sum()) + int(mask_b.sum())
        per_label[label] = 2.0 * int(np.logical_and(mask_a, mask_b).sum()) / total
        if label in labels_a and label in labels_b:
            evaluated.append(per_label[label])

    skipped = sorted(labels_a ^ labels_b)
    if not evaluated:
        warnings.warn("no label is present in both volumes, mean Dice undefined")
        mean = float("nan")
    else:
        mean = float(np.mean(evaluated))
    names = {**b.label_names, **a.label_names}
    return DiceReport(per_label, mean, skipped, names)


def propagate_labels(labels: LabelVolume, dense: DenseField) -> LabelVolume:
    """Nearest-neighbour warp of a label volume."""
    _check_dims(labels, dense)
    return warp(labels, dense, interp="nearest")


def _label_volumes_cm3(labels: LabelVolume) -> Dict[int, float]:
    voxel_mm3 = float(np.prod(labels.spacing))
    values, counts = np.unique(labels.data, return_counts=True)
    return {
        int(v): float(c) * voxel_mm3 / 1000.0 for v, c in zip(values, counts) if v > 0
    }


def _group_means(group: List[LabelVolume]) -> Dict[int, float]:
    per_label: Dict[int, List[float]] = {}
    for labels in group:
        for label, volume in _label_volumes_cm3(labels).items():
            per_label.setdefault(label, []).append(volume)
    return {label: float(np.mean(v)) for label, v in per_label.items()}


def volume_stats(
    group_a: List[LabelVolume], group_b: Optional[List[LabelVolume]] = None
) -> pd.DataFrame:
    """
    Mean structure volume per label and the ratio between two groups.

    Parameters
    ----------
    group_a : List[LabelVolume]
        First group, for example segmentations in one modality.
    group_b : List[LabelVolume], optional
        Second group. Without it the ratio column is NaN.

    Returns
    -------
    pd.DataFrame
        Columns ``label, name, mean_a_cm3, mean_b_cm3, ratio_percent``. A
        label missing from a group has a NaN mean there and a NaN ratio.
    """
    if not group_a:
        raise ValueError("group_a must contain at least one label volume")
    group_b = group_b or []
    means_a = _group_means(group_a)
    means_b = _group_means(group_b)
    names: Dict[int, str] = {}
    for labels in list(group_b) + list(group_a):
        names.update(labels.label_names)

    rows = []
    for label in sorted(set(means_a) | set(means_b)):
        mean_a = means_a.get(label, np.nan)
        mean_b = means_b.get(label, np.nan)
        ratio = 100.0 * mean_a / mean_b if mean_b and not np.isnan(mean_b) else np.nan
        rows.append(
            {
                "label": label,
                "name": names.get(label, f"label_{label}"),
                "mean_a_cm3": mean_a,
                "mean_b_cm3": mean_b,
                "ratio_percent": ratio,
            }
        )
    return pd.DataFrame(
        rows, columns=["label", "name", "mean_a_cm3", "mean_b_cm3", "ratio_percent"]
    )


def endpoint_error(estimated: DenseField, truth: DenseField) -> Tuple[float, float]:
    """Mean and maximum Euclidean distance between two fields, in voxels."""
    _check_dims(estimated, truth)
    error = np.linalg.norm(estimated.data - truth.data, axis=-1)
    return float(error.mean()), float(error.max())
