import numpy as np
import pytest

from kdisc import KernelSpec

RADIAL_NAMES = ["gaussian", "laplace", "imq", "matern0.5", "matern1.5", "matern2.5", "matern3.5", "matern4.5"]
SMOOTH_NAMES = ["gaussian", "imq", "matern1.5", "matern2.5", "matern3.5", "matern4.5"]


def make_kernel(name, bandwidth=1.0, r=None):
    return KernelSpec.from_name(name, bandwidth, r=r)


def radial_kernels(bandwidth=1.0):
    """All radial families, plus a Matérn kernel on a non-Euclidean distance."""
    out = [make_kernel(n, bandwidth) for n in RADIAL_NAMES]
    out.append(make_kernel("matern2.5", bandwidth, r=3.0))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
