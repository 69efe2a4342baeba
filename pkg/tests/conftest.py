import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def write_text(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path
