"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: Reader and writer for single-file MetaImage (.mha) volumes with
an embedded, uncompressed payload.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from ..libs._mind import MindField
from ..libs._transform import DenseField
from ..libs._volume import WORKING_DTYPE, LabelVolume, Volume

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ELEMENT_TYPES: Dict[str, np.dtype] = {
    "MET_UCHAR": np.dtype("u1"),
    "MET_SHORT": np.dtype("i2"),
    "MET_USHORT": np.dtype("u2"),
    "MET_FLOAT": np.dtype("f4"),
    "MET_DOUBLE": np.dtype("f8"),
}

# accepted header keys
KNOWN_KEYS = (
    "ObjectType",
    "NDims",
    "BinaryData",
    "BinaryDataByteOrderMSB",
    "CompressedData",
    "DimSize",
    "ElementNumberOfChannels",
    "ElementType",
    "ElementSpacing",
    "Offset",
    "ElementDataFile",
)
_REQUIRED_KEYS = ("ObjectType", "NDims", "DimSize", "ElementType", "ElementDataFile")


class MetaImageError(ValueError):
    """Malformed or unsupported MetaImage file."""


@dataclass(frozen=True)
class MetaImageHeader:
    dims: Tuple[int, int, int]
    element_type: str
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    channels: int = 1
    msb: bool = False

    @property
    def dtype(self) -> np.dtype:
        dtype = ELEMENT_TYPES[self.element_type]
        return dtype.newbyteorder(">" if self.msb else "<")

    def payload_bytes(self) -> int:
        return int(np.prod(self.dims)) * self.channels * self.dtype.itemsize

    def lines(self) -> List[str]:
        lines = [
            "ObjectType = Image",
            "NDims = 3",
            "DimSize = " + " ".join(str(n) for n in self.dims),
        ]
        if self.msb:
            lines.append("BinaryDataByteOrderMSB = True")
        if self.channels != 1:
            lines.append(f"ElementNumberOfChannels = {self.channels}")
        lines += [
            f"ElementType = {self.element_type}",
            "ElementSpacing = " + " ".join(repr(float(v)) for v in self.spacing),
            "Offset = " + " ".join(repr(float(v)) for v in self.origin),
            "ElementDataFile = LOCAL",
        ]
        return lines


def _parse_bool(key: str, value: str) -> bool:
    if value.lower() in ("true", "1"):
        return True
    if value.lower() in ("false", "0"):
        return False
    raise MetaImageError(f"header key {key}: expected True or False, got {value!r}")


def _parse_numbers(key: str, value: str, kind, count: int):
    try:
        numbers = tuple(kind(v) for v in value.split())
    except ValueError:
        raise MetaImageError(f"header key {key}: cannot parse {value!r}") from None
    if len(numbers) != count:
        raise MetaImageError(f"header key {key}: expected {count} values, got {value!r}")
    return numbers


def parse_header(raw: bytes) -> Tuple[MetaImageHeader, int]:
    """
    Parse the text header of a MetaImage file.

    Returns
    -------
    Tuple[MetaImageHeader, int]
        The header and the byte offset of the payload.
    """
    fields: Dict[str, str] = {}
    offset = 0
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise MetaImageError("header ended before ElementDataFile")
        line = raw[offset:end].decode("ascii", errors="replace").strip()
        line_offset, offset = offset, end + 1
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep:
            raise MetaImageError(f"malformed header line at byte {line_offset}: {line!r}")
        if key not in KNOWN_KEYS:
            raise MetaImageError(f"unsupported header key {key!r} at byte {line_offset}")
        fields[key] = value
        if key == "ElementDataFile":
            break

    for key in _REQUIRED_KEYS:
        if key not in fields:
            raise MetaImageError(f"missing header key {key}")
    if fields["ObjectType"] != "Image":
        raise MetaImageError(f"header key ObjectType: unsupported value {fields['ObjectType']!r}")
    if fields["NDims"] != "3":
        raise MetaImageError(f"header key NDims: only 3D images are supported, got {fields['NDims']}")
    if fields["ElementDataFile"] != "LOCAL":
        raise MetaImageError("header key ElementDataFile: only LOCAL payloads are supported")
    if not _parse_bool("BinaryData", fields.get("BinaryData", "True")):
        raise MetaImageError("header key BinaryData: ASCII payloads are not supported")
    if _parse_bool("CompressedData", fields.get("CompressedData", "False")):
        raise MetaImageError("header key CompressedData: compressed payloads are not supported")
    if fields["ElementType"] not in ELEMENT_TYPES:
        raise MetaImageError(f"header key ElementType: unsupported type {fields['ElementType']!r}")

    dims = _parse_numbers("DimSize", fields["DimSize"], int, 3)
    if min(dims) < 1:
        raise MetaImageError(f"header key DimSize: dims must be positive, got {dims}")
    spacing = _parse_numbers("ElementSpacing", fields.get("ElementSpacing", "1 1 1"), float, 3)
    if min(spacing) <= 0:
        raise MetaImageError(f"header key ElementSpacing: spacing must be positive, got {spacing}")
    header = MetaImageHeader(
        dims=dims,
        element_type=fields["ElementType"],
        spacing=spacing,
        origin=_parse_numbers("Offset", fields.get("Offset", "0 0 0"), float, 3),
        channels=_parse_numbers(
            "ElementNumberOfChannels", fields.get("ElementNumberOfChannels", "1"), int, 1
        )[0],
        msb=_parse_bool("BinaryDataByteOrderMSB", fields.get("BinaryDataByteOrderMSB", "False")),
    )
    if header.channels < 1:
        raise MetaImageError("header key ElementNumberOfChannels: must be >= 1")
    return header, offset


def read_metaimage(path: PathLike) -> Tuple[MetaImageHeader, np.ndarray]:
    """
    Read header and payload.

    The array is (z, y, x) for one channel and (z, y, x, c) otherwise.
    """
    raw = Path(path).read_bytes()
    header, offset = parse_header(raw)
    expected = header.payload_bytes()
    found = len(raw) - offset
    if found != expected:
        raise MetaImageError(
            f"data length mismatch: header expects {expected} bytes at offset "
            f"{offset}, found {found}"
        )
    data = np.frombuffer(raw, dtype=header.dtype, count=expected // header.dtype.itemsize, offset=offset)
    shape = tuple(reversed(header.dims))
    if header.channels != 1:
        shape += (header.channels,)
    return header, data.reshape(shape).astype(header.dtype.newbyteorder("="))


def write_metaimage(path: PathLike, data: np.ndarray, header: MetaImageHeader) -> None:
    data = np.ascontiguousarray(data, dtype=header.dtype)
    text = "\n".join(header.lines()) + "\n"
    with open(path, "wb") as stream:
        stream.write(text.encode("ascii"))
        stream.write(data.tobytes())
    logger.debug("wrote %s (%s, %s)", path, header.element_type, header.dims)


def load_mha(path: PathLike, as_labels: bool = False) -> Union[Volume, LabelVolume]:
    """
    Load a scalar MetaImage volume.

    The header does not say whether an integer payload holds intensities or
    labels, so integer files load as an intensity Volume unless
    ``as_labels`` is set. Labels written by :func:`save_mha` come back as a
    LabelVolume only with ``as_labels=True``.

    Parameters
    ----------
    path : str or Path
        The .mha file.
    as_labels : bool
        Return a LabelVolume; the element type must be an integer type.

    Returns
    -------
    Volume or LabelVolume
        Intensities are widened to the working float type.
    """
    header, data = read_metaimage(path)
    if header.channels != 1:
        raise MetaImageError(
            f"{path} has {header.channels} channels, expected a scalar volume"
        )
    if as_labels:
        if header.dtype.kind == "f":
            raise MetaImageError(f"{path}: labels need an integer ElementType, got {header.element_type}")
        return LabelVolume(data, header.spacing, header.origin)
    if header.dtype.kind == "f" and not np.all(np.isfinite(data)):
        raise MetaImageError(f"{path}: payload contains NaN or Inf")
    return Volume(data.astype(WORKING_DTYPE), header.spacing, header.origin)


def _label_element_type(data: np.ndarray) -> str:
    largest = int(data.max()) if data.size else 0
    if largest <= np.iinfo(np.uint8).max:
        return "MET_UCHAR"
    if largest <= np.iinfo(np.uint16).max:
        return "MET_USHORT"
    raise ValueError(f"label {largest} does not fit the supported integer element types")


def save_mha(volume: Union[Volume, LabelVolume], path: PathLike) -> None:
    """Save a volume as MET_FLOAT, or labels as MET_UCHAR / MET_USHORT."""
    if isinstance(volume, LabelVolume):
        element_type = _label_element_type(volume.data)
    else:
        element_type = "MET_FLOAT"
    header = MetaImageHeader(volume.dims, element_type, volume.spacing, volume.origin)
    write_metaimage(path, volume.data, header)


def save_field(
    dense: DenseField,
    path: PathLike,
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0),
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> None:
    """Save a displacement field as 3-channel MET_DOUBLE, channel fastest."""
    header = MetaImageHeader(dense.dims, "MET_DOUBLE", spacing, origin, channels=3)
    write_metaimage(path, dense.data, header)


def load_field(path: PathLike) -> DenseField:
    header, data = read_metaimage(path)
    if header.channels != 3:
        raise MetaImageError(f"{path}: displacement fields need 3 channels, got {header.channels}")
    return DenseField(data.astype(np.float64))


def save_mind(descriptor: MindField, path: PathLike) -> None:
    """Save a descriptor field as multi-channel MET_FLOAT."""
    header = MetaImageHeader(
        descriptor.dims,
        "MET_FLOAT",
        descriptor.spacing,
        descriptor.origin,
        channels=descriptor.channels,
    )
    write_metaimage(path, descriptor.data, header)

