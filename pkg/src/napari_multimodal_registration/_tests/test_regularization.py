import numpy as np
import pytest

from napari_multimodal_registration.libs import (
    ControlGrid,
    regularizer_l2,
    regularizer_tv,
)


def _random_grid(seed=0, spacing=4):
    grid = ControlGrid.zeros((12, 10, 8), spacing)
    rng = np.random.default_rng(seed)
    return grid.with_displacements(rng.normal(size=grid.displacements.shape))


def _finite_difference_check(regularizer, grid, rtol, n=50, eps=1e-2):
    _, gradient = regularizer(grid)
    rng = np.random.default_rng(1)
    shape = grid.displacements.shape
    for _ in range(n):
        index = tuple(int(rng.integers(0, s)) for s in shape)
        plus = grid.displacements.copy()
        minus = grid.displacements.copy()
        plus[index] += eps
        minus[index] -= eps
        numeric = (
            regularizer(grid.with_displacements(plus))[0]
            - regularizer(grid.with_displacements(minus))[0]
        ) / (2 * eps)
        assert gradient[index] == pytest.approx(numeric, rel=rtol, abs=1e-10)


@pytest.mark.parametrize("regularizer", [regularizer_tv, regularizer_l2])
def test_zero_grid(regularizer):
    value, gradient = regularizer(ControlGrid.zeros((8, 8, 8), 4))
    assert value == 0.0
    assert np.all(gradient == 0.0)


@pytest.mark.parametrize("regularizer", [regularizer_tv, regularizer_l2])
def test_translation_is_free(regularizer):
    grid = ControlGrid.zeros((8, 8, 8), 4)
    grid = grid.with_displacements(np.broadcast_to([1.0, -2.0, 0.5], grid.displacements.shape))
    value, gradient = regularizer(grid)
    assert value == 0.0
    np.testing.assert_allclose(gradient, 0.0, atol=1e-15)


def test_tv_gradient():
    _finite_difference_check(regularizer_tv, _random_grid(), rtol=1e-5, eps=1e-4)


def test_l2_gradient():
    _finite_difference_check(regularizer_l2, _random_grid(), rtol=1e-6)


def test_l2_value():
    grid = ControlGrid(2, np.zeros((2, 2, 2, 3)))
    data = grid.displacements.copy()
    data[0, 0, 1, 0] = 2.0
    value, _ = regularizer_l2(grid.with_displacements(data))
    # the node differs by 2 from each of its three neighbours, spacing 2, 8 nodes
    assert value == pytest.approx(3.0 / 8)


def test_tv_epsilon():
    grid = _random_grid(spacing=2)
    rough, _ = regularizer_tv(grid, epsilon=1e-6)
    smooth, _ = regularizer_tv(grid, epsilon=1.0)
    assert smooth < rough


def test_penalties_grow_with_roughness():
    grid = _random_grid()
    rougher = grid.with_displacements(3.0 * grid.displacements)
    assert regularizer_tv(rougher)[0] > regularizer_tv(grid)[0]
    assert regularizer_l2(rougher)[0] == pytest.approx(9.0 * regularizer_l2(grid)[0])
