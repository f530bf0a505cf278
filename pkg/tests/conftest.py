import numpy as np
import pytest

from dwspectral.core_image import ClassLabel
from dwspectral.harness import ExperimentConfig
from dwspectral.physics import (
    AcquisitionParams,
    PhantomSpec,
    Shape,
    default_phantom_spec,
    render_phantom,
)


@pytest.fixture(scope="session")
def acq():
    return AcquisitionParams()


@pytest.fixture(scope="session")
def default_volume(acq):
    """Full-size noiseless phantom volume: (stacks, truth maps)."""
    return render_phantom(default_phantom_spec(), acq)


@pytest.fixture(scope="session")
def small_spec():
    return default_phantom_spec(width=48, height=48, slices=6)


@pytest.fixture(scope="session")
def small_volume(small_spec, acq):
    return render_phantom(small_spec, acq)


@pytest.fixture
def small_cfg(small_spec):
    return ExperimentConfig(
        phantom=small_spec,
        training_slice=3,
        noise_levels=(0.0, 0.05, 0.10),
        seeds=(1, 2, 3),
    )


@pytest.fixture(scope="session")
def uniform_matter_spec():
    """Every pixel MATTER: a single rect covering the whole 16x16 frame."""
    shape = Shape(
        "rect", ClassLabel.MATTER, {"x0": 0, "y0": 0, "x1": 15, "y1": 15}
    )
    return PhantomSpec(16, 16, 2, (shape,))
