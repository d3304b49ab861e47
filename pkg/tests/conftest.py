import sys
from pathlib import Path

import numpy as np
import pytest

# make the sibling oracles module importable from every test file
sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20260819))


def unit_rows(mat):
    mat = np.asarray(mat, dtype=np.float64)
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)
