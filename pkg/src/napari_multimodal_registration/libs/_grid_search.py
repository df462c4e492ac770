"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Exhaustive search over regularization weight, control-point
spacing and pyramid levels.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from itertools import product
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ._evaluation import dice, propagate_labels
from ._registration import (
    RegistrationConfig,
    RegistrationResult,
    build_measure,
    register_deformable,
)
from ._volume import LabelVolume, Volume

logger = logging.getLogger(__name__)

Scorer = Callable[[RegistrationResult, Volume, Volume], float]

# searched when no values are given
DEFAULT_LAMBDAS = (0.0125, 0.025, 0.05, 0.1, 0.2)
DEFAULT_SPACINGS = (8, 10, 12, 14, 16)
DEFAULT_LEVELS = (2, 3, 4)

COLUMNS = [
    "lambda",
    "spacing",
    "levels",
    "score",
    "final_cost",
    "status",
    "error",
    "wall_time",
]


def dissimilarity_scorer(result: RegistrationResult, fixed: Volume, moving: Volume) -> float:
    """Dissimilarity of the registered pair without the regularizer."""
    scales = [s for s in result.scales if s is not None]
    measure = build_measure(fixed, moving, result.config, scales[-1] if scales else None)
    return float(measure.value(result.field()))


def dice_scorer(fixed_labels: LabelVolume, moving_labels: LabelVolume) -> Scorer:
    """``1 - mean Dice`` of the propagated moving labels against the fixed labels."""

    def scorer(result: RegistrationResult, fixed: Volume, moving: Volume) -> float:
        warped = propagate_labels(moving_labels, result.field())
        return 1.0 - dice(fixed_labels, warped).mean

    return scorer


def _row(key: Tuple[float, int, int], status: str = "ok", error: str = "") -> Dict:
    lam, spacing, levels = key
    return {
        "lambda": lam,
        "spacing": spacing,
        "levels": levels,
        "score": np.nan,
        "final_cost": np.nan,
        "status": status,
        "error": error,
        "wall_time": 0.0,
    }


def _run_cell(fixed, moving, config, scorer) -> Dict:
    start = time.perf_counter()
    row = _row((config.lam, config.spacing_vox, config.levels))
    try:
        result = register_deformable(fixed, moving, config)
        row["final_cost"] = result.final_cost
        row["score"] = float(scorer(result, fixed, moving))
    except (ValueError, FloatingPointError) as err:
        logger.warning(
            "grid cell lambda=%g spacing=%d levels=%d failed: %s",
            config.lam,
            config.spacing_vox,
            config.levels,
            err,
        )
        row["status"] = "failed"
        row["error"] = str(err)
    row["wall_time"] = time.perf_counter() - start
    return row


def grid_search(
    fixed: Volume,
    moving: Volume,
    base_config: RegistrationConfig,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    spacings: Sequence[int] = DEFAULT_SPACINGS,
    levels_list: Sequence[int] = DEFAULT_LEVELS,
    scorer: Optional[Scorer] = None,
    threads: int = 1,
    progress: Optional[Callable] = None,
) -> pd.DataFrame:
    """
    Register once per parameter combination and rank the runs.

    Parameters
    ----------
    fixed, moving : Volume
        The image pair.
    base_config : RegistrationConfig
        Every other hyperparameter.
    lambdas, spacings, levels_list : Sequence
        Values to combine.
    scorer : Callable, optional
        ``scorer(result, fixed, moving)``, lower is better. Defaults to the
        final dissimilarity.
    threads : int
        Cells run concurrently.
    progress : Callable, optional
        Wrapper such as ``tqdm``.

    Returns
    -------
    pd.DataFrame
        One row per combination with columns ``lambda, spacing, levels,
        score, final_cost, status, error, wall_time``, best first; failed
        cells last; ties ordered by (lambda, spacing, levels).
    """
    if not lambdas or not spacings or not levels_list:
        raise ValueError("lambdas, spacings and levels_list must be non-empty")
    scorer = scorer or dissimilarity_scorer

    keys = list(
        dict.fromkeys(
            (float(lam), int(spacing), int(levels))
            for lam, spacing, levels in product(lambdas, spacings, levels_list)
        )
    )
    cells: Dict[Tuple[float, int, int], RegistrationConfig] = {}
    rows: Dict[Tuple[float, int, int], Dict] = {}
    for key in keys:
        try:
            cells[key] = replace(base_config, lam=key[0], spacing_vox=key[1], levels=key[2])
        except ValueError as err:
            logger.warning("grid cell %s is invalid: %s", key, err)
            rows[key] = _row(key, "failed", f"invalid grid cell: {err}")

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = {
            pool.submit(_run_cell, fixed, moving, config, scorer): key
            for key, config in cells.items()
        }
        completed = as_completed(futures)
        if progress is not None:
            completed = progress(completed, total=len(futures))
        for future in completed:
            key = futures[future]
            rows[key] = future.result()
            logger.info("grid cell %s: score %s", key, rows[key]["score"])

    table = pd.DataFrame([rows[key] for key in keys], columns=COLUMNS)
    table = table.sort_values(
        ["score", "lambda", "spacing", "levels"], na_position="last", kind="mergesort"
    )
    return table.reset_index(drop=True)
