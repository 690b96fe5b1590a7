import numpy as np
import pytest

from freqct.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(12345)


def random_grid(seed: int, rows: int, cols: int) -> np.ndarray:
    return RngStream(seed).uniforms(rows * cols).reshape(rows, cols)
