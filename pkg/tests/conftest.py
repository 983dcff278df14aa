import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_dump_arrays(rng, n_layers, d_model, n_samples, max_tokens=16):
    """Random float32 sample chunks for a dump with the given geometry."""
    chunks = []
    for _ in range(n_samples):
        t = int(rng.integers(1, max_tokens + 1))
        chunks.append(rng.normal(size=(t, n_layers, d_model)).astype("<f4"))
    return chunks
