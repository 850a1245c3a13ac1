import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from horocount import lorentz as lz
from horocount.groups import orthogonal_axes_schottky, radial_basepoint, sl2z_lattice_spec

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def random_rotation(rng, m):
    q, r = np.linalg.qr(rng.normal(size=(m, m)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_k(rng, n):
    kd = np.eye(n + 1)
    kd[:-1, :-1] = random_rotation(rng, n)
    P = lz.frame(n).Pdiag
    return P.T @ kd @ P


def random_element(rng, n, tmax=3.0, smax=3.0):
    t = rng.uniform(-tmax, tmax, size=n - 1)
    s = rng.uniform(-smax, smax)
    return lz.u_matrix(t) @ lz.a_matrix(s, n) @ random_k(rng, n)


def random_point(rng, n, smax=3.0):
    return lz.point_of(random_element(rng, n, smax=smax))


def random_boundary(rng, n):
    x = rng.normal(size=n)
    return lz.boundary_from_direction(x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def schottky():
    return orthogonal_axes_schottky(n=2, length=4.0, rank=2)


@pytest.fixture(scope="session")
def lattice():
    return sl2z_lattice_spec()


@pytest.fixture(scope="session")
def schottky_x(schottky):
    return radial_basepoint(schottky, 0)
