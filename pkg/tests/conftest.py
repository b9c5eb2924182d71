import numpy as np
import pytest
import scipy.sparse as sp

from gkdefl import SaddlePointSystem, build_1d_channel


def make_random_system(rng, m=None, n=None, label="rand"):
    """Well-conditioned random SPD W and full-rank A (full rank a.s.)."""
    m = int(m if m is not None else rng.integers(6, 41))
    n = int(n if n is not None else rng.integers(2, min(m, 21)))
    R = rng.standard_normal((m, m))
    W = sp.csr_matrix(R @ R.T + m * np.eye(m))
    A = sp.csr_matrix(rng.standard_normal((m, n)))
    g = rng.standard_normal(m)
    r = rng.standard_normal(n)
    return SaddlePointSystem(W, A, g, r, label).validate()


def empty_triplets(system):
    from gkdefl import EllipticTriplets
    return EllipticTriplets(np.zeros((system.m, 0)), np.zeros(0),
                            np.zeros((system.n, 0)))


@pytest.fixture(scope="session")
def channel8():
    return build_1d_channel(8)


@pytest.fixture(scope="session")
def channel16():
    return build_1d_channel(16)


@pytest.fixture(scope="session")
def channel64():
    return build_1d_channel(64)
