import numpy as np
import pytest
from scipy import ndimage as ndi

from napari_multimodal_registration.libs import PhantomSpec, Volume, generate


def make_textured(shape=(12, 12, 12), seed=0, smoothing=1.0, scale=1.0):
    """Smoothed noise plus a ramp, (z, y, x)."""
    rng = np.random.default_rng(seed)
    data = ndi.gaussian_filter(rng.standard_normal(shape), smoothing, mode="nearest")
    ramp = np.linspace(0.0, 0.5, shape[-1])[None, None, :]
    return Volume((data + ramp) * scale)


def make_noise(shape=(10, 10, 10), seed=0, scale=100.0):
    rng = np.random.default_rng(seed)
    return Volume(rng.uniform(0.0, scale, size=shape))


@pytest.fixture
def textured():
    return make_textured()


@pytest.fixture
def other_textured():
    return make_textured(seed=1)


@pytest.fixture
def noise():
    return make_noise()


@pytest.fixture(scope="session")
def small_phantom():
    spec = PhantomSpec(
        dims=(24, 24, 24), n_blobs=4, deformation="sinusoidal", amplitude=1.5, period=16
    )
    return generate(spec)
