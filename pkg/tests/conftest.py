import numpy as np
import pytest

from vcdet.store import Corpus, DescriptorSet, Role


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_corpus(rng, role, count, d, n_max=6, prefix="V", unit=True):
    sets = []
    for i in range(count):
        n = int(rng.integers(1, n_max + 1))
        m = unit_rows(rng, n, d) if unit else rng.standard_normal((n, d))
        sets.append(DescriptorSet(f"{prefix}{i:03d}", np.arange(n, dtype=float), m))
    return Corpus.from_sets(role, sets)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
