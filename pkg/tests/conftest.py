import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from markovgeom.expfam import ExpFamily, GeneratorSet
from markovgeom.models import two_state_reference
from markovgeom.pf_core import TransitionKernel

settings.register_profile(
    "default", max_examples=40, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# frozen oracle values (derived by hand / exact arithmetic, see tests/test_oracles.py)
M2_STATIONARY = (4 / 7, 3 / 7)
M2_ETA0 = 3 / 7
M2_PHI2 = 156 / 343
M2_D_UNIFORM = (4 / 7) * (0.7 * np.log(1.4) + 0.3 * np.log(0.6)) + (3 / 7) * (0.4 * np.log(0.8) + 0.6 * np.log(1.2))


def random_kernel(rng, size, floor=0.05) -> TransitionKernel:
    a = rng.random((size, size)) + floor
    return TransitionKernel.from_columns(a / a.sum(axis=0))


def random_family(rng, size, d, scale=1.0) -> ExpFamily:
    # at most size^2 - size generators can be independent on a full support
    if d > size * size - size:
        raise ValueError(f"d = {d} exceeds size^2 - size = {size * size - size}")
    while True:
        fam = ExpFamily(random_kernel(rng, size), GeneratorSet(scale * rng.normal(size=(d, size, size))))
        if fam.independence.independent:
            return fam


@pytest.fixture
def m2():
    return two_state_reference().family


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
