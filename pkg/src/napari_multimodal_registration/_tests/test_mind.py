from itertools import product

import numpy as np
import pytest

from napari_multimodal_registration.libs import (
    MindField,
    MindParams,
    Volume,
    compute_mind,
    mind_pointwise_dissimilarity,
    mind_pointwise_map,
    mind_total,
    patch_distance,
)


def _integer_noise(shape=(8, 8, 8), seed=0):
    return Volume(np.random.default_rng(seed).integers(0, 100, size=shape))


def _impulse_oracle(x, r, sigma):
    """Direct sum over the patch of a 5^3 volume with a unit impulse at its centre."""
    data = np.zeros((5, 5, 5))
    data[2, 2, 2] = 1.0
    h = int(np.ceil(1.5 * sigma))
    taps = np.exp(-np.arange(-h, h + 1) ** 2 / (2 * sigma**2))
    taps /= taps.sum()

    def clamp(v):
        return min(max(v, 0), 4)

    total = 0.0
    for jx, jy, jz in product(range(-h, h + 1), repeat=3):
        p = [clamp(x[0] + jx), clamp(x[1] + jy), clamp(x[2] + jz)]
        q = [clamp(p[0] + r[0]), clamp(p[1] + r[1]), clamp(p[2] + r[2])]
        weight = taps[jx + h] * taps[jy + h] * taps[jz + h]
        total += weight * (data[p[2], p[1], p[0]] - data[q[2], q[1], q[0]]) ** 2
    return total


def test_params_half_size():
    assert MindParams(0.5).patch_half_size == 1
    assert MindParams(1.0).patch_half_size == 2
    assert MindParams(2.0).patch_half_size == 3


@pytest.mark.parametrize(
    "kwargs",
    [{"sigma": 0.0}, {"neighborhood": ()}, {"neighborhood": ((0, 0, 0),)}],
)
def test_params_invalid(kwargs):
    with pytest.raises(ValueError):
        MindParams(**kwargs)


def test_patch_distance_constant():
    volume = Volume(np.full((5, 5, 5), 3.0))
    assert patch_distance(volume, (2, 2, 2), (1, 0, 0), MindParams()) == 0.0


def test_patch_distance_scales_quadratically(noise):
    params = MindParams()
    base = patch_distance(noise, (3, 4, 5), (0, 1, 0), params)
    scaled = patch_distance(noise.with_data(2.0 * noise.data), (3, 4, 5), (0, 1, 0), params)
    assert scaled == pytest.approx(4.0 * base, rel=1e-12)


@pytest.mark.parametrize("x", [(2, 2, 2), (1, 2, 2), (0, 0, 4)])
def test_patch_distance_impulse(x):
    data = np.zeros((5, 5, 5))
    data[2, 2, 2] = 1.0
    value = patch_distance(Volume(data), x, (1, 0, 0), MindParams(0.5))
    assert value == pytest.approx(_impulse_oracle(x, (1, 0, 0), 0.5), rel=1e-12)


def test_dense_distances_match_patch_distance(noise):
    # the dense descriptor uses the same distances as the pointwise oracle
    params = MindParams()
    descriptor = compute_mind(noise, params)
    x = (4, 5, 3)
    distances = np.array([patch_distance(noise, x, r, params) for r in params.neighborhood])
    variance = distances.mean()
    expected = np.exp(-(distances - distances.min()) / variance)
    np.testing.assert_allclose(descriptor.data[3, 5, 4], expected, rtol=1e-5)


def test_mind_constant_volume():
    descriptor = compute_mind(Volume(np.full((4, 4, 4), 2.0)))
    np.testing.assert_array_equal(descriptor.data, 1.0)


def test_mind_range_and_max(noise):
    descriptor = compute_mind(noise)
    assert descriptor.channels == 6
    assert np.all(descriptor.data > 0)
    assert np.all(descriptor.data <= 1)
    np.testing.assert_allclose(descriptor.data.max(axis=-1), 1.0, atol=1e-6)


def test_mind_intensity_invariance():
    volume = _integer_noise()
    shifted = volume.with_data(2.0 * volume.data + 10.0)
    np.testing.assert_allclose(
        compute_mind(shifted).data, compute_mind(volume).data, atol=1e-5
    )


def test_mind_too_small():
    with pytest.raises(ValueError, match="patch"):
        compute_mind(Volume(np.zeros((2, 8, 8))))


def test_mind_custom_neighborhood(noise):
    params = MindParams(neighborhood=((2, 0, 0), (0, 2, 0)))
    descriptor = compute_mind(noise, params)
    assert descriptor.channels == 2
    assert descriptor.offsets == ((2, 0, 0), (0, 2, 0))


def test_pointwise_identical(noise):
    descriptor = compute_mind(noise)
    assert np.all(mind_pointwise_map(descriptor, descriptor) == 0)
    assert mind_total(descriptor, descriptor) == 0.0


def test_pointwise_one_channel_off():
    a = MindField(np.ones((3, 3, 3, 6)))
    data = np.ones((3, 3, 3, 6))
    data[1, 1, 1, 2] = 0.0
    b = MindField(data)

    assert mind_pointwise_dissimilarity(a, b, (1, 1, 1)) == pytest.approx(1 / 6)
    assert mind_pointwise_dissimilarity(a, b, (0, 1, 1)) == 0.0
    assert mind_total(a, b) == pytest.approx((1 / 6) ** 2)


def test_mind_total_brute_force():
    rng = np.random.default_rng(7)
    a = MindField(rng.random((3, 4, 5, 6)))
    b = MindField(rng.random((3, 4, 5, 6)))

    expected = 0.0
    for z, y, x in product(range(3), range(4), range(5)):
        pointwise = sum(
            abs(float(a.data[z, y, x, i]) - float(b.data[z, y, x, i])) for i in range(6)
        ) / 6
        assert mind_pointwise_dissimilarity(a, b, (x, y, z)) == pytest.approx(pointwise)
        expected += pointwise**2

    assert mind_total(a, b) == pytest.approx(expected, rel=1e-6)
    assert mind_total(a, b) == mind_total(b, a)


def test_mind_mismatch():
    with pytest.raises(ValueError):
        mind_total(MindField(np.ones((3, 3, 3, 6))), MindField(np.ones((3, 3, 4, 6))))
