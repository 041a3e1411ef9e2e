import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from pathlib import Path

import numpy as np
import pytest

from distributions import AtomicRV

DATA_DIR = Path(__file__).parent.parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def portfolio() -> AtomicRV:
    """The 4-atom worked fixture."""
    return AtomicRV(np.array([-10.0, -5.0, 0.0, 5.0]))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
