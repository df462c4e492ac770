__version__ = "0.1.0"

from .io import (
    load_field,
    load_mha,
    napari_get_reader,
    save_field,
    save_mha,
    write_labels,
    write_single_image,
)

__all__ = (
    "load_mha",
    "save_mha",
    "load_field",
    "save_field",
    "napari_get_reader",
    "write_single_image",
    "write_labels",
)
