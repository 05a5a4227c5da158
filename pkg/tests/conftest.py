import numpy as np
import pytest

from sparsetouch.plate import (PlateSpec, SamplingGrid, default_plate_spec,
                               default_sampling_grid, generate_dataset,
                               rectangular_grid)


@pytest.fixture(scope="session")
def small_spec():
    """Coarse series truncation keeps per-test plate sums cheap."""
    return PlateSpec(width_a=200.0, height_b=120.0, thickness_h=2.0,
                     youngs_E=2000.0, poisson_nu=0.35, series_terms=40)


@pytest.fixture(scope="session")
def small_dataset(small_spec):
    """A 48-sensor, 140-trial plate dataset shared across test modules."""
    grid = default_sampling_grid(small_spec, sensor_shape=(8, 6),
                                 force_shape=(7, 5), magnitudes=(10.0, 34.0))
    return generate_dataset(small_spec, grid)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
