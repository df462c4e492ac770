import numpy as np
import pandas as pd
import pytest

from napari_multimodal_registration.libs import (
    DenseField,
    LabelVolume,
    dice,
    endpoint_error,
    propagate_labels,
    volume_stats,
)


def _cube(label=1, start=(2, 2, 2), size=4, shape=(8, 8, 8), spacing=(1.0, 1.0, 1.0)):
    data = np.zeros(shape, dtype=np.int32)
    x, y, z = start
    data[z : z + size, y : y + size, x : x + size] = label
    return LabelVolume(data, spacing=spacing)


def test_dice_identical():
    report = dice(_cube(), _cube())
    assert report.per_label == {1: 1.0}
    assert report.mean == 1.0
    assert report.skipped == []


def test_dice_shifted_cube():
    report = dice(_cube(), _cube(start=(4, 2, 2)))
    assert report.per_label[1] == pytest.approx(0.5)
    assert report.mean == pytest.approx(0.5)


def test_dice_disjoint():
    report = dice(_cube(start=(0, 0, 0), size=3), _cube(start=(4, 4, 4), size=3))
    assert report.mean == 0.0


def test_dice_is_symmetric():
    a = _cube()
    b = _cube(start=(3, 1, 2), size=5)
    assert dice(a, b).per_label == dice(b, a).per_label


def test_dice_one_sided_labels():
    a = _cube()
    data = a.data.copy()
    data[0, 0, 0] = 7
    report = dice(a, LabelVolume(data))
    assert report.skipped == [7]
    assert report.per_label[7] == 0.0
    assert report.mean == pytest.approx(report.per_label[1])


def test_dice_no_common_label():
    with pytest.warns(UserWarning, match="no label"):
        report = dice(_cube(label=1), _cube(label=2))
    assert np.isnan(report.mean)
    assert report.skipped == [1, 2]


def test_dice_dims_mismatch():
    with pytest.raises(ValueError, match="dims mismatch"):
        dice(_cube(), _cube(shape=(8, 8, 9)))


def test_dice_report_output(tmp_path):
    a = LabelVolume(_cube().data, label_names={1: "cube"})
    report = dice(a, _cube(start=(4, 2, 2)))
    assert "mean dice: 0.500" in str(report)

    path = tmp_path / "dice.csv"
    report.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["label", "name", "dice"]
    assert frame.loc[0, "name"] == "cube"


def test_propagate_labels_integer_shift():
    labels = _cube()
    shifted = propagate_labels(labels, DenseField.constant(labels.dims, (1.0, 0.0, 0.0)))
    assert isinstance(shifted, LabelVolume)
    np.testing.assert_array_equal(shifted.data[..., :-1], labels.data[..., 1:])


def test_propagate_labels_keeps_label_set():
    labels = _cube()
    moved = propagate_labels(labels, DenseField.constant(labels.dims, (0.3, -0.6, 0.2)))
    assert set(np.unique(moved.data)) <= {0, 1}


def test_volume_stats():
    cube = _cube(size=5, shape=(10, 10, 10), spacing=(2.5, 2.5, 2.5))
    bigger = _cube(size=5, shape=(10, 10, 10), spacing=(2.5, 2.5, 2.5))
    data = bigger.data.copy()
    data[8, :5, :5] = 1
    stats = volume_stats([cube, cube], [LabelVolume(data, spacing=(2.5, 2.5, 2.5))])

    row = stats.iloc[0]
    assert list(stats.columns) == ["label", "name", "mean_a_cm3", "mean_b_cm3", "ratio_percent"]
    assert row["mean_a_cm3"] == pytest.approx(1.953125)
    assert row["mean_b_cm3"] == pytest.approx(150 * 15.625 / 1000)
    assert row["ratio_percent"] == pytest.approx(100.0 * 125 / 150)


def test_volume_stats_identical_groups():
    group = [_cube(), _cube(start=(1, 1, 1))]
    stats = volume_stats(group, group)
    assert stats["ratio_percent"].tolist() == [100.0]


def test_volume_stats_missing_label():
    stats = volume_stats([_cube(label=1)], [_cube(label=2)])
    assert stats["label"].tolist() == [1, 2]
    assert np.isnan(stats.loc[0, "ratio_percent"])
    assert np.isnan(stats.loc[1, "mean_a_cm3"])


def test_volume_stats_single_group():
    stats = volume_stats([_cube()])
    assert stats.loc[0, "mean_a_cm3"] == pytest.approx(0.064)
    assert np.isnan(stats.loc[0, "ratio_percent"])


def test_volume_stats_empty():
    with pytest.raises(ValueError):
        volume_stats([])


def test_endpoint_error():
    estimated = DenseField.constant((4, 4, 4), (3.0, 4.0, 0.0))
    mean, largest = endpoint_error(estimated, DenseField.zeros((4, 4, 4)))
    assert mean == pytest.approx(5.0)
    assert largest == pytest.approx(5.0)


def test_endpoint_error_mismatch():
    with pytest.raises(ValueError):
        endpoint_error(DenseField.zeros((4, 4, 4)), DenseField.zeros((4, 4, 5)))
