import numpy as np
import pytest

from napari_multimodal_registration.io import (
    MetaImageError,
    load_field,
    load_mha,
    save_field,
    save_mha,
    save_mind,
)
from napari_multimodal_registration.io._metaimage import read_metaimage
from napari_multimodal_registration.libs import (
    DenseField,
    LabelVolume,
    Volume,
    compute_mind,
)

HEADER = (
    "ObjectType = Image\n"
    "NDims = 3\n"
    "DimSize = 2 2 2\n"
    "ElementType = MET_UCHAR\n"
    "ElementSpacing = 1.25 6 1.25\n"
    "ElementDataFile = LOCAL\n"
)


def _write(path, header, payload):
    path.write_bytes(header.encode("ascii") + payload)
    return path


def test_load_uchar(tmp_path):
    path = _write(tmp_path / "a.mha", HEADER, bytes(range(8)))
    volume = load_mha(path)

    assert volume.data.dtype == np.float32
    np.testing.assert_array_equal(volume.data.ravel(), np.arange(8))
    # x varies fastest
    assert volume.data[0, 0, 1] == 1
    assert volume.data[1, 0, 0] == 4
    assert volume.spacing == (1.25, 6.0, 1.25)
    assert volume.origin == (0.0, 0.0, 0.0)


def test_load_short_data(tmp_path):
    path = _write(tmp_path / "a.mha", HEADER, bytes(range(7)))
    with pytest.raises(MetaImageError, match="data length mismatch"):
        load_mha(path)


@pytest.mark.parametrize(
    "old, new, key",
    [
        ("MET_UCHAR", "MET_LONG", "ElementType"),
        ("DimSize = 2 2 2", "DimSize = 2 2", "DimSize"),
        ("ElementDataFile", "CompressedData = True\nElementDataFile", "CompressedData"),
        ("ElementDataFile", "Modality = MET_MOD_CT\nElementDataFile", "Modality"),
        ("ElementDataFile = LOCAL", "ElementDataFile = a.raw", "ElementDataFile"),
    ],
)
def test_load_rejects_header(tmp_path, old, new, key):
    path = _write(tmp_path / "a.mha", HEADER.replace(old, new), bytes(range(8)))
    with pytest.raises(MetaImageError, match=key):
        load_mha(path)


def test_volume_round_trip(tmp_path):
    data = np.random.default_rng(3).normal(size=(3, 4, 5)).astype(np.float32)
    volume = Volume(data, spacing=(0.5, 0.75, 2.0), origin=(-1.0, 2.5, 0.0))
    save_mha(volume, tmp_path / "v.mha")
    loaded = load_mha(tmp_path / "v.mha")

    np.testing.assert_array_equal(loaded.data, volume.data)
    assert loaded.spacing == volume.spacing
    assert loaded.origin == volume.origin


def test_label_element_type(tmp_path):
    data = np.zeros((3, 3, 3), dtype=np.int32)
    data[1, 1, 1] = 3
    save_mha(LabelVolume(data), tmp_path / "small.mha")
    data[0, 0, 0] = 1000
    save_mha(LabelVolume(data), tmp_path / "large.mha")

    small, _ = read_metaimage(tmp_path / "small.mha")
    large, _ = read_metaimage(tmp_path / "large.mha")
    assert small.element_type == "MET_UCHAR"
    assert large.element_type == "MET_USHORT"
    np.testing.assert_array_equal(load_mha(tmp_path / "large.mha", as_labels=True).data, data)


def test_float_as_labels_rejected(tmp_path):
    save_mha(Volume(np.zeros((2, 2, 2))), tmp_path / "v.mha")
    with pytest.raises(MetaImageError):
        load_mha(tmp_path / "v.mha", as_labels=True)


def test_save_unwritable(tmp_path):
    with pytest.raises(OSError):
        save_mha(Volume(np.zeros((2, 2, 2))), tmp_path / "missing" / "v.mha")


def test_field_round_trip(tmp_path):
    field = DenseField(np.random.default_rng(0).normal(size=(2, 3, 4, 3)))
    save_field(field, tmp_path / "f.mha")
    np.testing.assert_array_equal(load_field(tmp_path / "f.mha").data, field.data)


def test_scalar_file_is_not_a_field(tmp_path):
    save_mha(Volume(np.zeros((2, 2, 2))), tmp_path / "v.mha")
    with pytest.raises(MetaImageError, match="3 channels"):
        load_field(tmp_path / "v.mha")


def test_save_mind(tmp_path):
    descriptor = compute_mind(Volume(np.random.default_rng(1).random((4, 4, 4))))
    save_mind(descriptor, tmp_path / "mind.mha")
    header, data = read_metaimage(tmp_path / "mind.mha")
    assert header.channels == 6
    np.testing.assert_array_equal(data, descriptor.data)


def test_labels_need_flag_to_round_trip(tmp_path):
    data = np.zeros((4, 3, 2), dtype=np.int32)
    data[1:3, 1, :] = 2
    labels = LabelVolume(data, (0.5, 1.0, 2.0), (1.0, -2.0, 3.0))
    path = tmp_path / "labels.mha"
    save_mha(labels, path)

    plain = load_mha(path)
    assert not isinstance(plain, LabelVolume)
    np.testing.assert_array_equal(plain.data, data.astype(np.float32))

    loaded = load_mha(path, as_labels=True)
    assert isinstance(loaded, LabelVolume)
    np.testing.assert_array_equal(loaded.data, data)
    assert loaded.spacing == labels.spacing
    assert loaded.origin == labels.origin
