import numpy as np
import pytest

from blowupforge.measures import Atomic, Cantor, LebesgueDensity, Product


def cantor_leaves(depth, rho=1 / 3, w=(0.5, 0.5), a=0.0, length=1.0):
    """Left endpoints and weights of the depth-``depth`` cylinders, by direct enumeration."""
    left = np.array([a])
    weight = np.array([1.0])
    size = length
    for _ in range(depth):
        size_next = size * rho
        left = np.concatenate([left, left + size - size_next])
        weight = np.concatenate([weight * w[0], weight * w[1]])
        size = size_next
    order = np.argsort(left, kind="stable")
    return left[order], weight[order], size


@pytest.fixture
def cantor():
    return Cantor()


@pytest.fixture
def lebesgue2():
    return LebesgueDensity([0, 0], [1, 1])


@pytest.fixture
def atoms():
    return Atomic([[0.2], [0.9]], [0.7, 0.3])


@pytest.fixture
def leb_cantor():
    return Product([LebesgueDensity([0], [1]), Cantor()])
