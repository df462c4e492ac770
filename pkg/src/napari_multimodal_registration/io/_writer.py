"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: napari writer contributions saving image and labels layers as
MetaImage (.mha).
"""

from __future__ import annotations

from typing import Any, List, Tuple

import numpy as np

from ..libs._volume import LabelVolume, Volume
from ._metaimage import save_mha


def _geometry(meta: dict) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    # napari keeps scale / translate in (z, y, x)
    scale = meta.get("scale")
    translate = meta.get("translate")
    spacing = tuple(float(v) for v in reversed(scale[-3:])) if scale is not None else (1.0,) * 3
    origin = tuple(float(v) for v in reversed(translate[-3:])) if translate is not None else (0.0,) * 3
    return spacing, origin


def _with_suffix(path: str) -> str:
    return path if path.lower().endswith(".mha") else f"{path}.mha"


def write_single_image(path: str, data: Any, meta: dict) -> List[str]:
    """Writes a single 3D image layer as MET_FLOAT.

    Parameters
    ----------
    path : str
        A string path indicating where to save the image file.
    data : The layer data
        The `.data` attribute from the napari layer, (z, y, x).
    meta : dict
        A dictionary containing all other attributes from the napari layer
        (excluding the `.data` layer attribute).

    Returns
    -------
    [path] : A list containing the string path to the saved file.
    """
    spacing, origin = _geometry(meta)
    path = _with_suffix(path)
    save_mha(Volume(np.asarray(data), spacing, origin), path)
    return [path]


def write_labels(path: str, data: Any, meta: dict) -> List[str]:
    """Writes a 3D labels layer as MET_UCHAR or MET_USHORT.

    Returns
    -------
    [path] : A list containing the string path to the saved file.
    """
    spacing, origin = _geometry(meta)
    path = _with_suffix(path)
    save_mha(LabelVolume(np.asarray(data), spacing, origin), path)
    return [path]
