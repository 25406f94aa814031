import numpy as np
import pytest


def random_orthonormal(rng, D, d):
    return np.linalg.qr(rng.standard_normal((D, d)))[0]


def random_rotation(rng, D):
    Q, R = np.linalg.qr(rng.standard_normal((D, D)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
