import numpy as np
import pytest
from hypothesis import settings

settings.register_profile('edas', deadline=None, max_examples=200)
settings.load_profile('edas')


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
