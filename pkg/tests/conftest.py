import math

import numpy as np
import pytest

from furstenberg.sl2 import GroupElement, compose, diagonal, rotation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_element(rng, max_log_norm=3.0) -> GroupElement:
    lam = math.exp(rng.uniform(0.0, max_log_norm))
    return compose([rotation(rng.uniform(0, math.pi)), diagonal(lam), rotation(-rng.uniform(0, math.pi))])


def random_unit_det(rng, n, max_log_norm=3.0) -> np.ndarray:
    """Stack of n random unit-determinant matrices."""
    t1, t2 = rng.uniform(0, math.pi, n), rng.uniform(0, math.pi, n)
    lam = np.exp(rng.uniform(0.0, max_log_norm, n))
    out = np.zeros((n, 2, 2))
    c1, s1, c2, s2 = np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2)
    out[:, 0, 0] = lam * c1 * c2 + s1 * s2 / lam
    out[:, 0, 1] = lam * c1 * s2 - s1 * c2 / lam
    out[:, 1, 0] = lam * s1 * c2 - c1 * s2 / lam
    out[:, 1, 1] = lam * s1 * s2 + c1 * c2 / lam
    return out
