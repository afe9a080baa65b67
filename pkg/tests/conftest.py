import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("fluctlab", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("fluctlab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_mode_vector(rng, M, scale=1.0):
    return scale * (rng.normal(size=M) + 1j * rng.normal(size=M))


def random_symmetric(rng, M, hs=None):
    K = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    K = 0.5 * (K + K.T)
    if hs is not None:
        K *= hs / np.linalg.norm(K)
    return K
