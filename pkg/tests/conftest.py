import sys
from pathlib import Path

import numpy as np
import pytest

import folio

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def small_product():
    Y = folio.path_space(6)
    Z = folio.cycle_space(5)
    space, partition = folio.lq_product(Y, Z, 2.0)
    return Y, Z, space, partition


@pytest.fixture(scope="session")
def certified_bundle(small_product):
    _, _, space, partition = small_product
    bundle = folio.build_quotient(space, partition)
    report = folio.check_mm_foliation(bundle, 1e-9)
    assert report.passed
    return report.bundle


def random_metric_space(rng, n, label="r"):
    """Random space: points in the plane, snapped Euclidean metric."""
    pts = rng.random((n, 2))
    diff = pts[:, None, :] - pts[None, :, :]
    dist = folio.spaces.snap_distances(np.sqrt((diff ** 2).sum(-1)))
    w = rng.random(n) + 0.2
    w /= w.sum()
    return folio.FiniteMMSpace(tuple(f"{label}{i}" for i in range(n)), dist, w, 0,
                               {"kind": "euclidean", "data": pts})
