import numpy as np
import pytest

from napari_multimodal_registration.libs import (
    ControlGrid,
    DenseField,
    RegistrationConfig,
    Volume,
    build_measure,
    interpolate_dense,
    register_deformable,
    regularizer_tv,
    total_cost,
    warp,
)
from napari_multimodal_registration.libs._registration import (
    LevelTrace,
    resolve_measure,
)
from napari_multimodal_registration.libs._transform import consistency_residual

from .conftest import make_textured


def _offset_grid(dims, spacing=4, seed=0):
    grid = ControlGrid.zeros(dims, spacing)
    rng = np.random.default_rng(seed)
    data = np.empty(grid.displacements.shape)
    data[...] = (0.3, -0.4, 0.25)
    data += rng.uniform(-0.05, 0.05, size=data.shape)
    return grid.with_displacements(data)


def _misaligned_pair(shape=(16, 16, 16)):
    fixed = make_textured(shape, seed=4, smoothing=1.5)
    nx, ny, nz = fixed.dims
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    bump = np.exp(-((x - nx / 2) ** 2 + (y - ny / 2) ** 2 + (z - nz / 2) ** 2) / 40.0)
    truth = DenseField(np.stack([1.5 * bump, -bump, 0.5 * bump], axis=-1))
    # fixed(x) = moving(x + truth(x)) up to interpolation
    moving = warp(fixed, -truth)
    return fixed, moving


def test_config_aliases_and_defaults():
    config = RegistrationConfig(measure="nmi+mind", scale_strategy="initial_gradient")
    assert config.measure == "nmi_mind"
    assert config.scale_strategy == "grad"
    assert config.beta == 0.8
    assert config.max_iters_per_level == 100
    assert config.step_tol == 1e-5
    assert config.to_dict()["lam"] == 0.05


@pytest.mark.parametrize(
    "kwargs",
    [
        {"measure": "ssd"},
        {"regularizer": "bending"},
        {"lam": -1.0},
        {"levels": 0},
        {"spacing_vox": 1},
        {"beta": 1.2},
        {"scale_strategy": "median"},
        {"window_radius": 0},
    ],
)
def test_config_invalid(kwargs):
    with pytest.raises(ValueError):
        RegistrationConfig(**kwargs)


def test_build_measure_names(textured, other_textured):
    for name in ("nmi", "mind", "lncc", "nmi_mind"):
        measure = build_measure(textured, other_textured, RegistrationConfig(measure=name))
        assert measure.name == name


def test_resolve_measure_single(textured, other_textured):
    grid = ControlGrid.zeros(textured.dims, 4)
    measure, scale = resolve_measure(textured, other_textured, grid, RegistrationConfig())
    assert measure.name == "nmi"
    assert scale is None


def test_resolve_measure_fixed_scale(textured, other_textured):
    config = RegistrationConfig(measure="nmi_mind", scale_strategy="fixed", fixed_s=2.5)
    grid = ControlGrid.zeros(textured.dims, 4)
    measure, scale = resolve_measure(textured, other_textured, grid, config)
    assert scale == 2.5
    assert measure.scale == 2.5


def test_total_cost_without_regularizer(textured, other_textured):
    config = RegistrationConfig(lam=0.0)
    grid = _offset_grid(textured.dims)
    cost, _ = total_cost(textured, other_textured, grid, config)
    expected = build_measure(textured, other_textured, config).value(
        interpolate_dense(grid, textured.dims)
    )
    assert cost == pytest.approx(expected, rel=1e-12)


def test_total_cost_identity(textured):
    config = RegistrationConfig(lam=0.5)
    cost, _ = total_cost(textured, textured, ControlGrid.zeros(textured.dims, 4), config)
    assert cost == pytest.approx(-2.0, abs=1e-6)


def test_total_cost_adds_regularizer(textured, other_textured):
    grid = _offset_grid(textured.dims)
    plain, _ = total_cost(textured, other_textured, grid, RegistrationConfig(lam=0.0))
    regularized, _ = total_cost(textured, other_textured, grid, RegistrationConfig(lam=0.2))
    assert regularized == pytest.approx(plain + 0.2 * regularizer_tv(grid)[0], rel=1e-12)


@pytest.mark.parametrize("measure, rtol", [("nmi", 1e-3), ("lncc", 1e-3), ("mind", 1e-2)])
def test_total_cost_gradient(textured, other_textured, measure, rtol):
    config = RegistrationConfig(measure=measure, lam=0.05)
    grid = _offset_grid(textured.dims)
    dissimilarity = build_measure(textured, other_textured, config)
    _, gradient = total_cost(textured, other_textured, grid, config, dissimilarity)

    rng = np.random.default_rng(3)
    eps = 1e-4
    # node 0 of every axis sits outside the volume
    for _ in range(20):
        index = tuple(int(rng.integers(1, n - 1)) for n in grid.displacements.shape[:3])
        index += (int(rng.integers(0, 3)),)
        plus = grid.displacements.copy()
        minus = grid.displacements.copy()
        plus[index] += eps
        minus[index] -= eps
        numeric = (
            total_cost(textured, other_textured, grid.with_displacements(plus), config, dissimilarity)[0]
            - total_cost(textured, other_textured, grid.with_displacements(minus), config, dissimilarity)[0]
        ) / (2 * eps)
        assert gradient[index] == pytest.approx(numeric, rel=rtol, abs=1e-9)


@pytest.mark.parametrize(
    "measure, reasons",
    [
        ("nmi", {"line_search", "stationary"}),
        ("mind", {"stationary"}),
        ("lncc", {"stationary", "line_search", "step_tol", "max_iters"}),
    ],
)
def test_identical_images_stay_at_identity(textured, measure, reasons):
    config = RegistrationConfig(measure=measure, spacing_vox=4, levels=1, max_iters_per_level=5)
    result = register_deformable(textured, textured, config)

    assert result.field().max_norm() < 0.25
    assert result.traces[0].stop_reason in reasons


def test_registration_reduces_cost():
    fixed, moving = _misaligned_pair()
    config = RegistrationConfig(
        measure="lncc", lam=0.01, spacing_vox=4, levels=2, max_iters_per_level=15
    )
    result = register_deformable(fixed, moving, config)

    assert [trace.level for trace in result.traces] == [1, 0]
    assert result.traces[0].dims == (8, 8, 8)
    for trace in result.traces:
        assert np.all(np.diff(trace.costs) < 0)
        assert trace.stop_reason in ("stationary", "line_search", "step_tol", "max_iters")
    assert result.traces[0].costs[-1] < result.traces[0].costs[0]
    assert result.traces[-1].costs[-1] <= result.traces[-1].costs[0]
    assert result.field().dims == fixed.dims
    assert result.final_cost == result.traces[-1].costs[-1]
    assert result.wall_time >= 0


def test_registration_is_deterministic():
    fixed, moving = _misaligned_pair((12, 12, 12))
    config = RegistrationConfig(spacing_vox=4, levels=1, max_iters_per_level=5)
    first = register_deformable(fixed, moving, config)
    second = register_deformable(fixed, moving, config)
    np.testing.assert_array_equal(first.grid.displacements, second.grid.displacements)
    assert first.cost_traces == second.cost_traces


def test_large_lambda_keeps_grid_flat(textured, other_textured):
    config = RegistrationConfig(
        lam=1e6, spacing_vox=4, levels=1, max_iters_per_level=10
    )
    result = register_deformable(textured, other_textured, config)
    nodes = result.grid.displacements
    for axis in range(3):
        assert np.abs(np.diff(nodes, axis=axis)).max() < 1e-2


def test_combined_measure_records_scale():
    fixed, moving = _misaligned_pair()
    config = RegistrationConfig(
        measure="nmi+mind", spacing_vox=4, levels=2, max_iters_per_level=3
    )
    result = register_deformable(fixed, moving, config)

    assert len(result.scales) == 2
    assert all(s is not None and s > 0 for s in result.scales)


def test_symmetric_registration():
    fixed, moving = _misaligned_pair((12, 12, 12))
    config = RegistrationConfig(
        measure="lncc",
        spacing_vox=4,
        levels=1,
        max_iters_per_level=6,
        symmetric=True,
        every_n_iterations=2,
    )
    result = register_deformable(fixed, moving, config)

    backward = result.backward_field()
    assert backward is not None
    assert backward.dims == fixed.dims
    trace = result.traces[0]
    assert trace.consistency_steps[-1] == trace.iterations
    assert np.isfinite(consistency_residual(result.field(), backward))


@pytest.mark.parametrize("every", [1, 2, 3])
def test_symmetric_costs_decrease_between_consistency_steps(every):
    fixed, moving = _misaligned_pair()
    config = RegistrationConfig(
        measure="lncc",
        spacing_vox=4,
        levels=1,
        max_iters_per_level=20,
        step_tol=0.0,
        symmetric=True,
        every_n_iterations=every,
    )
    trace = register_deformable(fixed, moving, config).traces[0]

    assert len(trace.consistency_costs) == len(trace.consistency_steps)
    runs = trace.segments()
    assert sum(len(run) for run in runs) == len(trace.costs) + len(trace.consistency_costs)
    for run in runs:
        assert np.all(np.diff(run) <= 0)
    assert trace.final_cost == trace.consistency_costs[-1]


def test_level_trace_segments():
    trace = LevelTrace(level=0, dims=(8, 8, 8), costs=[5.0, 4.0, 3.0, 3.5, 3.2])
    trace.consistency_steps = [2, 4]
    trace.consistency_costs = [3.8, 3.3]
    assert trace.segments() == [[5.0, 4.0, 3.0], [3.8, 3.5, 3.2], [3.3]]
    assert trace.final_cost == 3.3

    plain = LevelTrace(level=0, dims=(8, 8, 8), costs=[2.0, 1.0])
    assert plain.segments() == [[2.0, 1.0]]
    assert plain.final_cost == 1.0


def test_both_constant_rejected():
    constant = Volume(np.ones((8, 8, 8)))
    with pytest.raises(ValueError, match="constant"):
        register_deformable(constant, constant)


def test_dims_mismatch_rejected(textured):
    with pytest.raises(ValueError, match="dims"):
        register_deformable(textured, Volume(np.ones((8, 8, 8))))


def test_too_many_levels_rejected(textured, other_textured):
    with pytest.raises(ValueError, match="pyramid"):
        register_deformable(textured, other_textured, RegistrationConfig(levels=4))
