import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qsections import SectionFamilySpec, build_euclidean_foliation, build_heisenberg, generate_section  # noqa: E402


def graph(model, function="zero", **params):
    return generate_section(model, SectionFamilySpec("graph_of_function", dict(function=function, **params)))


@pytest.fixture
def line10():
    """Bases 0..9 with a single fiber sample at height 0."""
    m = build_euclidean_foliation(np.arange(10), [0.0])
    return m, graph(m)


@pytest.fixture
def abs_graph():
    """Graph of |y| over bases -2..2 with heights 0..2."""
    m = build_euclidean_foliation(np.arange(-2, 3), np.arange(0, 3))
    return m, graph(m, "abs")


@pytest.fixture
def heis_small():
    base = [(a, b) for a in range(-2, 3) for b in range(-2, 3)]
    m = build_heisenberg(base, np.arange(-5, 6))
    return m, graph(m)
