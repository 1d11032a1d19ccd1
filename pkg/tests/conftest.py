import math

import numpy as np
import pytest

from moirelines import LevelLine, LineStatus, Rect, TraceBudget, two_cosine_potential
from moirelines.potential import SuperpositionPotential
from moirelines.geometry import EuclideanTransform

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def two_cos() -> SuperpositionPotential:
    """f = cos x + cos y exactly: the second layer has zero amplitude."""
    v = two_cosine_potential(TWO_PI)
    u = two_cosine_potential(TWO_PI, amplitude=0.0)
    return SuperpositionPotential(v, u, EuclideanTransform(0.0))


def polyline(points, status=LineStatus.OPEN_BUDGET_EXHAUSTED, level=0.0, cell=0.1):
    """Synthetic LevelLine around an explicit vertex array."""
    pts = np.asarray(points, dtype=float)
    seg = np.diff(pts, axis=0)
    arc = float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))
    return LevelLine(
        level=level,
        points=pts,
        status=status,
        arc_length=arc,
        seed=pts[0],
        cell_size=cell,
    )


@pytest.fixture
def make_polyline():
    return polyline


@pytest.fixture
def small_window() -> Rect:
    return Rect.centered((0.0, 0.0), 2.0 * TWO_PI)


@pytest.fixture
def small_budget(two_cos) -> TraceBudget:
    return TraceBudget.for_potential(two_cos, cells_per_period=16, length_periods=20.0)
