import os
import sys
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("pkg", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_not_converged():
    from qrgmm.errors import NotConverged
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConverged)
        yield
