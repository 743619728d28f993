import os
import sys

import numpy as np
import pytest

# Add the backend directory to Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.data.synthetic import gen_synthetic  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    """4 classes x 20 examples, 1x8x8."""
    return gen_synthetic(4, 20, 1, 8, 8, seed=7)


@pytest.fixture
def small_dataset():
    """4 classes x 25 examples, 1x16x16."""
    return gen_synthetic(4, 25, 1, 16, 16, seed=11)

