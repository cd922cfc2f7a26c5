import math

import numpy as np
import pytest

from qsections import (
    DomainError,
    PowerModulus,
    PreconditionError,
    build_euclidean_foliation,
    build_heisenberg,
    check_ball_inclusion,
    check_theorem_chain,
    comparability_constant,
    compute_ell_eta,
    fit_regularity,
)
from qsections.regularity import boundary_distance, geometric_radii, measure_profile, projected_profile

from conftest import graph


def test_measure_profile_line(line10):
    m, sec = line10
    prof = measure_profile(m.space, m.quotient, sec, 5, np.array([0.5, 1.0, 2.5, 100.0]))
    assert prof.tolist() == [1.0, 1.0, 5.0, 10.0]


def test_projected_profile_counts_fibers():
    m = build_euclidean_foliation(np.arange(5), np.arange(-2, 3))
    x = m.point_index(2, 0)
    # a vertical fiber is hit iff its horizontal offset is below r
    assert projected_profile(m.space, m.quotient, x, np.array([0.5, 1.5, 10])).tolist() == [1, 3, 5]


def test_geometric_radii():
    assert geometric_radii(2, 8, 3) == pytest.approx([2.0, 4.0, 8.0], rel=1e-14)
    with pytest.raises(DomainError):
        geometric_radii(8, 2)


class TestComparability:
    def test_vertical_foliation_is_exactly_one(self):
        m = build_euclidean_foliation(np.arange(20), np.linspace(-5, 5, 11))
        pairs = [(m.point_index(y, 0), m.point_index(y, 10)) for y in range(20)]
        comp = comparability_constant(m.space, m.quotient, pairs, geometric_radii(0.5, 10))
        assert comp.C == 1.0 and comp.witness is None

    def test_heisenberg_at_least_one(self, heis_small):
        m, _ = heis_small
        pairs = [(m.point_index(12, 0), m.point_index(12, 10))]
        comp = comparability_constant(m.space, m.quotient, pairs, [1.0, 2.0, 3.0])
        assert comp.C >= 1.0

    def test_pairs_must_share_fiber(self, line10):
        m, _ = line10
        with pytest.raises(DomainError):
            comparability_constant(m.space, m.quotient, [(0, 1)], [1.0])


class TestRegularityFit:
    def test_line_exponent(self):
        m = build_euclidean_foliation(np.arange(200), [0.0])
        rep = fit_regularity(m.space, m.quotient, graph(m), range(80, 121), geometric_radii(2, 32))
        assert rep.Q == pytest.approx(1.0, abs=0.1)
        assert rep.c_lower <= rep.c_upper
        for _, r, mass in rep.samples:
            assert rep.c_lower * r ** rep.Q <= mass * (1 + 1e-12)
            assert mass <= rep.c_upper * r ** rep.Q * (1 + 1e-12)

    def test_boundary_centers_excluded(self):
        m = build_euclidean_foliation(np.arange(50), [0.0])
        rep = fit_regularity(m.space, m.quotient, graph(m), [2, 25], geometric_radii(2, 8))
        assert rep.excluded_centers == [2]
        assert [c.base for c in rep.per_center] == [25]
        assert rep.r0 == 24.0

    def test_all_excluded(self):
        m = build_euclidean_foliation(np.arange(10), [0.0])
        with pytest.raises(DomainError):
            fit_regularity(m.space, m.quotient, graph(m), [0, 9], geometric_radii(2, 8))

    def test_counting_measure_scales(self):
        m = build_euclidean_foliation(np.arange(100), [0.0])
        sec = graph(m)
        a = fit_regularity(m.space, m.quotient, sec, range(40, 60), geometric_radii(2, 16))
        b = fit_regularity(m.space, m.quotient.scaled(3.0), sec, range(40, 60), geometric_radii(2, 16))
        assert b.Q == pytest.approx(a.Q, rel=1e-12)
        assert b.c_upper == pytest.approx(3 * a.c_upper, rel=1e-12)

    def test_boundary_distance_without_coords(self, line10):
        m, _ = line10
        assert boundary_distance(m.quotient, [0, 4]).tolist() == [0.0, 4.0]


class TestBallInclusion:
    def test_abs_graph_with_lipschitz_modulus(self, abs_graph):
        m, sec = abs_graph
        ell = compute_ell_eta(m.space, m.quotient, sec, PowerModulus(math.sqrt(2)), range(m.space.size))
        v = check_ball_inclusion(m.space, m.quotient, sec, ell.value, range(5), [0.5, 1, 1.5, 2, 3])
        assert v.passed and v.checked == 25

    def test_too_small_factor_fails(self, abs_graph):
        m, sec = abs_graph
        v = check_ball_inclusion(m.space, m.quotient, sec, 0.5, [2], [1.5])
        assert not v.passed
        assert v.first_violations[0]["bases"] == [1, 3]


class TestChain:
    def model(self):
        m = build_euclidean_foliation(np.arange(-60, 61), np.arange(0, 61))
        return m, graph(m), graph(m, "abs")

    def test_chain_passes(self):
        m, phi, psi = self.model()
        v = check_theorem_chain(m.space, m.quotient, phi, psi, PowerModulus(math.sqrt(2)),
                                geometric_radii(2, 16), range(40, 81, 4))
        assert v.passed
        assert v.C == 1.0
        assert v.ell_eta == pytest.approx(math.sqrt(2))
        assert v.c3 <= v.c3_empirical and v.c4_empirical <= v.c4

    def test_precondition(self):
        m, phi, psi = self.model()
        with pytest.raises(PreconditionError):
            check_theorem_chain(m.space, m.quotient, phi, psi, PowerModulus(1.0),
                                geometric_radii(2, 16), range(40, 81, 4))

    def test_heisenberg_comparability_pairs(self):
        grid = [(a, b) for a in range(-3, 4) for b in range(-3, 4)]
        m = build_heisenberg(grid, np.arange(-4, 5))
        pairs = [(m.point_index(y, 4), m.point_index(y, 8)) for y in range(len(grid))]
        C = comparability_constant(m.space, m.quotient, pairs, [1.0, 2.0]).C
        assert math.isfinite(C) and C >= 1.0
