import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils import close_logging  # noqa: E402


@pytest.fixture
def gen():
    return np.random.default_rng(20180)


@pytest.fixture(autouse=True)
def _detach_logging():
    yield
    close_logging()
