import os
import sys

import hypothesis
import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)
sys.path.insert(0, os.path.join(ROOT, 'src'))

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


def complex_normal(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_dictionary(rng: np.random.Generator, n: int, J: int) -> np.ndarray:
    D = complex_normal(rng, n, J)
    return D / np.linalg.norm(D, axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
