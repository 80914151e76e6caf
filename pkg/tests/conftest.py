"""Shared fixtures: small closed-loop models and scenes."""

import pytest

from foveal_explorer.geometry import DistanceBinning
from foveal_explorer.synthetic import make_generator_model


@pytest.fixture(scope="session")
def binning_180():
    return DistanceBinning.uniform(7, 181.02)


@pytest.fixture(scope="session")
def generator_model(binning_180):
    """Ground-truth score model for 4 object classes."""
    return make_generator_model(4, binning_180)


@pytest.fixture(scope="session")
def tiny_model():
    """2-class model over 3 bins, asymmetric enough to test calibration."""
    binning = DistanceBinning.uniform(3, 90.0)
    return make_generator_model(2, binning, own_start=10.0, own_decay=0.6, own_floor=1.2, off_value=0.5)
