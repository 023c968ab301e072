import numpy as np
import pytest

from xyorbit.lattice import LatticeSpec, build_coupling_table
from xyorbit.model import ModelParams


def ring(n, alpha=1.5):
    return build_coupling_table(LatticeSpec(1, (n,), alpha))


def make_params(n=3, beta=0.3, q=4, h=0.0, theta=0.0, alpha=1.5):
    return ModelParams(ring(n, alpha), beta=beta, q=q, h=h, theta=theta)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
