"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: napari reader contribution for MetaImage (.mha) volumes.
"""

from pathlib import Path

from ._metaimage import load_mha, read_metaimage

LABEL_SUFFIXES = ("labels", "label", "seg")


def is_label_path(path) -> bool:
    """Files whose stem ends in ``labels``, ``label`` or ``seg`` open as labels."""
    stem = Path(path).stem.lower()
    return stem.endswith(LABEL_SUFFIXES)


def napari_get_reader(path):
    """Return :func:`reader_function` for ``.mha`` paths, ``None`` otherwise.

    Parameters
    ----------
    path : str or list of str
        Path to file, or list of paths.

    Returns
    -------
    function or None
        If the path is a recognized format, return a function that accepts the
        same path or list of paths, and returns a list of layer data tuples.
    """
    if isinstance(path, list):
        if not path:
            return None
        path = path[0]

    if not str(path).lower().endswith(".mha"):
        return None

    return reader_function


def reader_function(path):
    """Read one or more .mha files into layer data tuples.

    Scalar volumes become image layers, or labels layers when the file name
    says so. Multi-channel files (displacement fields, descriptors) become
    image layers with the channel axis first.

    Parameters
    ----------
    path : str or list of str
        Path to file, or list of paths.

    Returns
    -------
    layer_data : list of tuples
        ``(data, add_kwargs, layer_type)`` per file, with ``scale`` and
        ``translate`` taken from the spacing and origin, in (z, y, x) order.
    """
    paths = [path] if isinstance(path, (str, Path)) else path
    layers = []
    for _path in paths:
        header, data = read_metaimage(_path)
        add_kwargs = {
            "name": Path(_path).stem,
            "scale": tuple(reversed(header.spacing)),
            "translate": tuple(reversed(header.origin)),
            "metadata": {"element_type": header.element_type, "path": str(_path)},
        }
        if header.channels != 1:
            add_kwargs["channel_axis"] = 0
            layers.append((data.transpose(3, 0, 1, 2), add_kwargs, "image"))
        elif is_label_path(_path) and header.dtype.kind != "f":
            volume = load_mha(_path, as_labels=True)
            layers.append((volume.data, add_kwargs, "labels"))
        else:
            volume = load_mha(_path)
            layers.append((volume.data, add_kwargs, "image"))
    return layers
