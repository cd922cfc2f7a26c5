import math

import numpy as np
import pytest

from qsections import (
    Ball,
    DomainError,
    FiniteMetricSpace,
    QuotientStructure,
    SectionSample,
    ball_points,
    build_euclidean_foliation,
    build_heisenberg,
    fiber_distance,
    project_ball,
    pushforward_ball_measure,
    structure_from_document,
    validate_metric,
)
from qsections.metric_core import fiber_distances

from conftest import graph
import oracles


class TestValidateMetric:
    def test_line_is_metric(self):
        space = FiniteMetricSpace(coords=[0.0, 1.0, 2.0])
        assert validate_metric(space).ok

    def test_asymmetry_reported(self):
        space = FiniteMetricSpace(matrix=[[0, 1], [2, 0]])
        v = validate_metric(space)
        assert not v.ok
        assert {"kind": "symmetry", "points": [0, 1]} in v.violations

    def test_triangle_reported(self):
        D = [[0, 1, 3], [1, 0, 1], [3, 1, 0]]
        v = validate_metric(FiniteMetricSpace(matrix=D))
        assert not v.ok
        assert [x["kind"] for x in v.violations] == ["triangle", "triangle"]
        assert v.violations[0]["points"] == [0, 1, 2]

    def test_report_is_capped(self):
        n = 30
        D = np.full((n, n), 10.0)
        np.fill_diagonal(D, 0)
        D[0, 1] = D[1, 0] = 1.0
        D[1, 2:] = D[2:, 1] = 1.0
        v = validate_metric(FiniteMetricSpace(matrix=D), max_report=100)
        assert not v.ok
        assert len(v.violations) == 100

    def test_coincident_points_flagged(self):
        v = validate_metric(FiniteMetricSpace(matrix=[[0, 0], [0, 0]]))
        assert [x["kind"] for x in v.violations] == ["positivity", "positivity"]


class TestQuotient:
    def test_fibers_partition(self):
        q = QuotientStructure.from_fibers({0: [0, 2], 1: [1]}, 3)
        assert q.n_bases == 2
        assert q.fiber_of.tolist() == [0, 1, 0]
        assert [f.tolist() for f in q.fiber_points] == [[0, 2], [1]]
        assert q.measure.tolist() == [1.0, 1.0]

    @pytest.mark.parametrize("fibers", [{0: [0, 1], 1: [1]}, {0: [0]}, {0: [0, 1], 1: []}])
    def test_bad_partitions(self, fibers):
        with pytest.raises(DomainError):
            QuotientStructure.from_fibers(fibers, 2)

    def test_measure_positive(self):
        with pytest.raises(DomainError):
            QuotientStructure(np.array([0, 1]), np.array([1.0, 0.0]))

    def test_section_property(self):
        q = QuotientStructure.from_fibers({0: [0, 2], 1: [1]}, 3)
        SectionSample([2, 1]).validate(q)
        with pytest.raises(DomainError):
            SectionSample([1, 1]).validate(q)

    def test_ball_radius_positive(self):
        with pytest.raises(DomainError):
            Ball(0, 0.0)


class TestFiberDistance:
    def test_plane_vertical_line(self):
        m = build_euclidean_foliation([0, 1, 2, 3], np.arange(-10, 11))
        x = m.point_index(0, 10)
        assert tuple(m.space.coords[x]) == (0.0, 0.0)
        assert fiber_distance(m.space, m.quotient, x, 3) == 3.0

    def test_own_fiber_is_zero(self):
        m = build_euclidean_foliation([0, 1], [0, 1, 2])
        assert fiber_distance(m.space, m.quotient, m.point_index(1, 2), 1) == 0.0

    def test_heisenberg_center_coset(self):
        m = build_heisenberg([(1, 0), (0, 0)], np.linspace(-5, 5, 101))
        x = m.point_index(0, 50)
        assert tuple(m.space.coords[x]) == (1.0, 0.0, 0.0)
        # oracle: minimize (1 + t^2)^(1/4) over the same t grid
        expected = min((1 + t * t) ** 0.25 for t in np.linspace(-5, 5, 101))
        assert expected == 1.0
        assert fiber_distance(m.space, m.quotient, x, 1) == pytest.approx(expected, rel=1e-12)

    def test_unknown_ids(self):
        m = build_euclidean_foliation([0, 1], [0])
        with pytest.raises(DomainError):
            fiber_distance(m.space, m.quotient, 5, 0)
        with pytest.raises(DomainError):
            fiber_distance(m.space, m.quotient, 0, 7)

    def test_generic_scan_matches_vertical_oracle(self):
        m = build_euclidean_foliation(np.arange(7) * 0.5, np.linspace(-2, 2, 9))
        plain = QuotientStructure(m.quotient.fiber_of, m.quotient.measure)
        xs = np.arange(m.space.size)
        assert np.array_equal(fiber_distances(m.space, plain, xs), fiber_distances(m.space, m.quotient, xs))

    def test_generic_scan_matches_coset_oracle(self, heis_small):
        m, _ = heis_small
        plain = QuotientStructure(m.quotient.fiber_of, m.quotient.measure)
        xs = np.arange(0, m.space.size, 7)
        assert np.array_equal(fiber_distances(m.space, plain, xs), fiber_distances(m.space, m.quotient, xs))

    def test_matches_bruteforce(self):
        bases, heights = [0.0, 1.5, 4.0], [-1.0, 0.0, 2.5]
        m = build_euclidean_foliation(bases, heights)
        fibers = oracles.foliation_fibers(bases, heights)
        for x in range(m.space.size):
            pt = tuple(m.space.coords[x])
            for y in range(3):
                assert fiber_distance(m.space, m.quotient, x, y) == oracles.fiber_dist(oracles.euclid, pt, fibers[y])


class TestBalls:
    def test_line_ball(self, line10):
        m, _ = line10
        assert ball_points(m.space, Ball(5, 2.5)).tolist() == [3, 4, 5, 6, 7]

    def test_tiny_ball_is_center(self, line10):
        m, _ = line10
        assert ball_points(m.space, Ball(5, 0.5)).tolist() == [5]

    def test_huge_ball_is_everything(self, line10):
        m, _ = line10
        assert ball_points(m.space, Ball(5, 100)).tolist() == list(range(10))

    def test_balls_are_open(self, line10):
        m, _ = line10
        assert ball_points(m.space, Ball(5, 2.0)).tolist() == [4, 5, 6]

    def test_pushforward(self, line10):
        m, phi = line10
        assert pushforward_ball_measure(m.space, m.quotient, phi, Ball(phi.point(5), 2.5)) == 5.0
        assert pushforward_ball_measure(m.space, m.quotient, phi, Ball(phi.point(5), 0.5)) == 1.0
        heavy = m.quotient.scaled(2.0)
        assert pushforward_ball_measure(m.space, heavy, phi, Ball(phi.point(5), 2.5)) == 10.0

    def test_pushforward_needs_center_on_section(self):
        m = build_euclidean_foliation(np.arange(3), [0, 1])
        phi = graph(m)
        with pytest.raises(DomainError):
            pushforward_ball_measure(m.space, m.quotient, phi, Ball(m.point_index(0, 1), 1.0))

    def test_project_ball(self):
        m = build_euclidean_foliation(np.arange(-3, 4), np.arange(-3, 4))
        phi = graph(m)
        center = phi.point(3)
        assert tuple(m.space.coords[center]) == (0.0, 0.0)
        # oracle: enumerate the sampled points strictly inside the unit disc
        inside = {b for b in range(-3, 4) for s in range(-3, 4) if math.hypot(b, s) < 1}
        assert inside == {0}
        assert project_ball(m.space, m.quotient, Ball(center, 1.0)).tolist() == [3]
        assert project_ball(m.space, m.quotient, Ball(center, 1.0), restrict_to=phi.assignment).tolist() == [3]
        assert project_ball(m.space, m.quotient, Ball(center, 100.0)).tolist() == list(range(7))


class TestDocument:
    def doc(self):
        return {
            "points": [10, 11, 12, 13],
            "fibers": {"7": [10, 11], "8": [12, 13]},
            "measure": {"7": 1.5, "8": 2.0},
            "section": {"7": 11, "8": 12},
            # row-major strict lower triangle of a path metric 10-11-12-13
            "metric": {"kind": "explicit", "lower": [1, 2, 1, 3, 2, 1]},
        }

    def test_explicit_document(self):
        space, q, sec, ids = structure_from_document(self.doc())
        assert ids == {"points": [10, 11, 12, 13], "bases": [7, 8]}
        assert space.dist(0, 3) == 3.0 and space.dist(3, 0) == 3.0
        assert space.dist(2, 1) == 1.0
        assert q.measure.tolist() == [1.5, 2.0]
        assert sec.assignment.tolist() == [1, 2]
        assert validate_metric(space).ok

    def test_coordinate_document(self):
        doc = self.doc()
        doc["metric"] = {"kind": "euclidean", "coords": [[0, 0], [0, 1], [1, 0], [1, 1]]}
        space, q, sec, _ = structure_from_document(doc)
        assert space.dist(0, 3) == math.sqrt(2)
        assert fiber_distance(space, q, 0, 1) == 1.0

    def test_koranyi_document(self):
        doc = self.doc()
        doc["metric"] = {"kind": "koranyi", "coords": [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]]}
        space, _, _, _ = structure_from_document(doc)
        assert space.dist(0, 1) == 1.0

    def test_bad_documents(self):
        doc = self.doc()
        doc["metric"]["lower"] = [1, 2]
        with pytest.raises(DomainError):
            structure_from_document(doc)
        doc = self.doc()
        doc["section"] = {"7": 12, "8": 13}
        with pytest.raises(DomainError):
            structure_from_document(doc)
        doc = self.doc()
        del doc["fibers"]
        with pytest.raises(DomainError):
            structure_from_document(doc)
