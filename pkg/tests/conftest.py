import math

import numpy as np
import pytest

from comink.cone.cone import atom_margins, make_cone
from comink.logger.logger import init_logger
from comink.measures.measure import make_measure

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


@pytest.fixture(autouse=True, scope="session")
def quiet_logger():
    init_logger(console_output=True, logfile=False, level="WARNING", capture_warnings=False)


@pytest.fixture
def quadrant():
    return make_cone(2, [[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def octant():
    return make_cone(3, np.eye(3))


@pytest.fixture
def two_atom_phi():
    return make_measure([([-0.6, -0.8], 1.0), ([-0.8, -0.6], 1.0)])


def sample_atoms(C, rng, count, min_margin=0.1):
    """Uniform unit vectors of Omega_C at margin at least min_margin."""
    atoms = []
    while len(atoms) < count:
        v = rng.standard_normal(C.dim)
        v /= np.linalg.norm(v)
        if np.all(C.generators @ v < 0.0) and atom_margins(C, [v])[0] >= min_margin:
            atoms.append(v)
    return np.array(atoms)


@pytest.fixture
def random_measure():
    def factory(C, seed, count, min_margin=0.1, low=0.1, high=2.0):
        rng = np.random.default_rng(seed)
        atoms = sample_atoms(C, rng, count, min_margin)
        masses = rng.uniform(low, high, size=count)
        return make_measure(zip(atoms, masses), C.dim)

    return factory


@pytest.fixture
def random_cfull():
    """Random support numbers on random normals; some cuts may be redundant."""
    from comink.coconvex.cfull import build

    def factory(C, seed, count, min_margin=0.1):
        rng = np.random.default_rng(seed)
        normals = sample_atoms(C, rng, count, min_margin)
        support = -rng.uniform(0.2, 2.0, size=count)
        return build(C, normals, support)

    return factory
