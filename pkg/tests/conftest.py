import numpy as np
import pytest

from contactflex.diffeo import Box


def fd_jacobian(f, P, h=1e-6):
    """Central differences of a batch map, columns = d/dx, d/dy, d/dz."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    cols = [(f(P + h * e) - f(P - h * e)) / (2 * h) for e in np.eye(3)]
    return np.stack(cols, axis=2)


def fd_grad(g, P, h=1e-6):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return np.stack([(g(P + h * e) - g(P - h * e)) / (2 * h) for e in np.eye(3)], axis=1)


@pytest.fixture
def grid11():
    return Box.cube(1.0).grid(11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# maps used by the factorization round-trip checks, all on [-1, 1]^3
CORPUS = [
    "identity",
    "reeb:0.1",
    "reeb:0.5",
    "map:(x, y + 0.1, z)",
    "map:(x + 0.05*sin(y), y + 0.1*z, z)",
    "bumpshear:0.1,0.5,2.5",
    "hamflow:0.2:bump:0.5,3,1",
    "hamflow:0.2:bump:0,2,0.5",
    "hamflow:0.1:x*y + sin(z)",
]


def corpus_map(name):
    from contactflex.diffeo import ParsedMap, builtin

    if name.startswith("map:"):
        return ParsedMap(name[4:])
    return builtin(name)
