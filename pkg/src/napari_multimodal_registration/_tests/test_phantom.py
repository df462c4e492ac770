import numpy as np
import pytest

from napari_multimodal_registration.libs import (
    LabelVolume,
    PhantomSpec,
    Volume,
    generate,
    invert,
)
from napari_multimodal_registration.libs._phantom import apply_remap, sinusoidal_field
from napari_multimodal_registration.libs._transform import consistency_residual


def _small(**kwargs):
    values = dict(dims=(20, 20, 20), n_blobs=3, amplitude=1.0, period=16)
    values.update(kwargs)
    return PhantomSpec(**values)


def test_generate_is_deterministic():
    first = generate(_small())
    second = generate(_small())
    np.testing.assert_array_equal(first.volume_a.data, second.volume_a.data)
    np.testing.assert_array_equal(first.volume_b.data, second.volume_b.data)
    np.testing.assert_array_equal(first.labels_b.data, second.labels_b.data)


def test_seed_changes_phantom():
    first = generate(_small())
    second = generate(_small(seed=1))
    assert not np.array_equal(first.volume_a.data, second.volume_a.data)


def test_phantom_shapes(small_phantom):
    assert small_phantom.volume_a.dims == (24, 24, 24)
    assert small_phantom.volume_b.dims == (24, 24, 24)
    assert small_phantom.truth.dims == (24, 24, 24)
    assert isinstance(small_phantom.labels_a, LabelVolume)
    assert 1 <= len(small_phantom.labels_a.labels) <= 4
    assert set(small_phantom.labels_a.labels) <= {1, 2, 3, 4}
    assert small_phantom.labels_a.name_of(1) == "blob_1"


def test_no_deformation_identity_remap():
    phantom = generate(_small(deformation="none"))
    np.testing.assert_array_equal(phantom.volume_b.data, phantom.volume_a.data)
    np.testing.assert_array_equal(phantom.labels_b.data, phantom.labels_a.data)
    assert phantom.truth.max_norm() == 0.0


def test_gamma_remap():
    spec = PhantomSpec(remap="gamma", gamma=2.0)
    volume = Volume(np.linspace(2.0, 4.0, 27).reshape(3, 3, 3))
    remapped = apply_remap(volume, spec)
    t = (volume.data.astype(np.float64) - 2.0) / 2.0
    np.testing.assert_allclose(remapped.data, t**2, atol=1e-6)


def test_inverted_bands_remap():
    spec = PhantomSpec(remap="inverted_bands", bands=2)
    volume = Volume(np.linspace(0.0, 1.0, 27).reshape(3, 3, 3))
    remapped = apply_remap(volume, spec).data.ravel()
    assert remapped[0] == pytest.approx(0.0)
    assert remapped[13] == pytest.approx(1.0)
    assert remapped[-1] == pytest.approx(0.0, abs=1e-6)


def test_remapped_phantom_keeps_structure():
    phantom = generate(_small(deformation="none", remap="gamma"))
    a = phantom.volume_a.data.ravel()
    b = phantom.volume_b.data.ravel()
    # gamma is monotone, so intensity order survives
    order = np.argsort(a, kind="stable")
    assert np.all(np.diff(b[order]) >= -1e-6)


def test_sinusoidal_amplitude():
    field = sinusoidal_field((64, 64, 64), 3.0, 32.0)
    assert field.max_norm() == pytest.approx(3.0, rel=1e-9)


def test_sinusoidal_truth_is_invertible():
    truth = generate(PhantomSpec(dims=(32, 32, 32), n_blobs=4, period=32)).truth
    inverse = invert(truth, iterations=20)
    assert consistency_residual(truth, inverse) < 0.1


def test_random_smooth_amplitude():
    spec = _small(deformation="random_smooth", amplitude=2.0, smoothing=4.0)
    truth = generate(spec).truth
    assert truth.max_norm() == pytest.approx(2.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dims": (3, 20, 20)},
        {"n_blobs": 0},
        {"deformation": "twist"},
        {"remap": "log"},
        {"amplitude": 5.0, "period": 16},
        {"deformation": "random_smooth", "amplitude": 4.0, "smoothing": 4.0},
        {"gamma": 0.0},
        {"bands": 0},
    ],
)
def test_spec_invalid(kwargs):
    with pytest.raises(ValueError):
        PhantomSpec(**kwargs)


def test_spec_to_dict():
    assert PhantomSpec().to_dict()["seed"] == 0x5EED
