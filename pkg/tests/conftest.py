# tests/conftest.py

import numpy as np
import pytest

from backend.quaternion import QuaternionMatrix


def cone_array(rng: np.random.Generator, shape, dop=None, intensity=(0.2, 2.0)) -> np.ndarray:
    """随机 H_S 元素 I(1 + Φμ)，形状 shape + (4,)"""
    shape = tuple(shape)
    I = rng.uniform(*intensity, size=shape)
    phi = rng.uniform(0.0, 1.0, size=shape) if dop is None else np.broadcast_to(dop, shape)
    mu = rng.standard_normal(shape + (3,))
    mu /= np.linalg.norm(mu, axis=-1, keepdims=True)
    return np.concatenate([I[..., None], (I * phi)[..., None] * mu], axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def make_cone():
    return cone_array


@pytest.fixture
def exact_instance(rng):
    """
    小规模精确实例: 两个完全偏振、轴不同的源，H 含纯像素
    """
    M, N = 12, 24
    W = QuaternionMatrix(cone_array(rng, (M, 2), dop=1.0, intensity=(0.5, 1.5)))
    H = rng.uniform(0.1, 1.0, size=(2, N))
    H[1, :4] = 0.0
    H[0, 4:8] = 0.0
    return W, H, W @ H
