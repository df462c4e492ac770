from ._metaimage import (
    MetaImageError,
    load_field,
    load_mha,
    save_field,
    save_mha,
    save_mind,
)
from ._reader import napari_get_reader
from ._writer import write_labels, write_single_image

__all__ = (
    "load_mha",
    "save_mha",
    "load_field",
    "save_field",
    "save_mind",
    "MetaImageError",
    "napari_get_reader",
    "write_single_image",
    "write_labels",
)
