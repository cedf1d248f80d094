import numpy as np
import pytest

from hodgegp import build_complex
from hodgegp.data import random_complex

# The 7-node, 10-edge, 3-triangle complex whose incidence matrices are the
# golden reference data; edge/triangle lists in canonical order.
HOUSE_EDGES = [
    (1, 2), (1, 3), (1, 4), (2, 3), (2, 5),
    (3, 4), (3, 5), (3, 6), (5, 6), (5, 7),
]
HOUSE_TRIANGLES = [(1, 2, 3), (2, 3, 5), (3, 5, 6)]

GOLDEN_B1 = np.array(
    [
        [-1, -1, -1, 0, 0, 0, 0, 0, 0, 0],
        [1, 0, 0, -1, -1, 0, 0, 0, 0, 0],
        [0, 1, 0, 1, 0, -1, -1, -1, 0, 0],
        [0, 0, 1, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 1, 0, -1, -1],
        [0, 0, 0, 0, 0, 0, 0, 1, 1, 0],
        [0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    ]
)

GOLDEN_B2 = np.array(
    [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 0, 0],
        [1, 1, 0],
        [0, -1, 0],
        [0, 0, 0],
        [0, 1, 1],
        [0, 0, -1],
        [0, 0, 1],
        [0, 0, 0],
    ]
)


@pytest.fixture(scope="session")
def house():
    """The reference complex with one open triangle {1,3,4} (a hole)."""
    return build_complex(range(1, 8), HOUSE_EDGES, HOUSE_TRIANGLES)


@pytest.fixture(scope="session")
def filled_triangle():
    return build_complex([1, 2, 3], [(1, 2), (1, 3), (2, 3)], [(1, 2, 3)])


@pytest.fixture(scope="session")
def open_cycle():
    """3-cycle without a face: pure 1-dimensional hole."""
    return build_complex([1, 2, 3], [(1, 2), (1, 3), (2, 3)])


def random_complexes(count, seed0=0, min_triangles=0, **kw):
    """Stream of varied connected random complexes for property tests."""
    out = []
    seed = seed0
    rng = np.random.default_rng(seed0)
    while len(out) < count:
        n = int(rng.integers(5, 14))
        p = float(rng.uniform(0.25, 0.8))
        fill = float(rng.uniform(0.0, 1.0))
        try:
            sc = random_complex(n, p, fill, seed=seed)
        except Exception:
            seed += 1
            continue
        seed += 1
        if sc.n_edges < 3 or sc.n_triangles < min_triangles:
            continue
        out.append(sc)
    return out
