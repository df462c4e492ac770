import numpy as np

from napari_multimodal_registration import napari_get_reader, save_field, save_mha
from napari_multimodal_registration.libs import DenseField, LabelVolume, Volume


# tmp_path is a pytest fixture
def test_reader(tmp_path):
    my_test_file = str(tmp_path / "myfile.mha")
    original_data = np.random.rand(5, 6, 7).astype(np.float32)
    save_mha(Volume(original_data, spacing=(0.5, 1.0, 2.0)), my_test_file)

    reader = napari_get_reader(my_test_file)
    assert callable(reader)

    layer_data_list = reader(my_test_file)
    assert isinstance(layer_data_list, list) and len(layer_data_list) > 0
    layer_data_tuple = layer_data_list[0]
    assert isinstance(layer_data_tuple, tuple) and len(layer_data_tuple) == 3

    data, add_kwargs, layer_type = layer_data_tuple
    np.testing.assert_allclose(original_data, data)
    assert layer_type == "image"
    assert add_kwargs["scale"] == (2.0, 1.0, 0.5)


def test_reader_labels_by_name(tmp_path):
    path = str(tmp_path / "case01_labels.mha")
    data = np.zeros((4, 4, 4), dtype=np.int32)
    data[1:3, 1:3, 1:3] = 7
    save_mha(LabelVolume(data), path)

    [(layer, _, layer_type)] = napari_get_reader(path)(path)
    assert layer_type == "labels"
    np.testing.assert_array_equal(layer, data)


def test_reader_field_channel_axis(tmp_path):
    path = str(tmp_path / "field.mha")
    field = DenseField(np.random.rand(3, 4, 5, 3))
    save_field(field, path)

    [(layer, add_kwargs, layer_type)] = napari_get_reader([path])([path])
    assert layer_type == "image"
    assert add_kwargs["channel_axis"] == 0
    assert layer.shape == (3, 3, 4, 5)
    np.testing.assert_array_equal(layer[0], field.data[..., 0])


def test_get_reader_pass():
    reader = napari_get_reader("fake.file")
    assert reader is None


def test_get_reader_empty_list():
    assert napari_get_reader([]) is None
