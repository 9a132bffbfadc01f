import numpy as np
import pytest

from hedgerow import ClearBackend, HeBackend, make_test_params


@pytest.fixture(scope="session")
def params64():
    """Small ring for bulk randomized operation tests (depth 2)."""
    return make_test_params(64, num_primes=6, depth_budget=2)


@pytest.fixture(scope="session")
def params256():
    """Circuit-sized test ring: enough depth and noise room for the full
    comparison + scoring chain with encrypted split codes."""
    return make_test_params(256, num_primes=11, depth_budget=3)


@pytest.fixture(scope="session")
def he64(params64):
    return HeBackend(params64)


@pytest.fixture(scope="session")
def clear64(params64):
    return ClearBackend(params64)


@pytest.fixture(scope="session")
def keys64(he64):
    return he64.keygen(seed=0x5EED)


@pytest.fixture(scope="session")
def clear_keys64(clear64):
    return clear64.keygen(seed=0x5EED)


@pytest.fixture(scope="session")
def he256(params256):
    return HeBackend(params256)


@pytest.fixture(scope="session")
def clear256(params256):
    return ClearBackend(params256)


@pytest.fixture(scope="session")
def keys256(he256):
    return he256.keygen(seed=0xFACE)


@pytest.fixture(scope="session")
def clear_keys256(clear256):
    return clear256.keygen(seed=0xFACE)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
