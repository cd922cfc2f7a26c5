"""Finite metric spaces, quotient structures, sections and balls.

Points and bases are dense integer indices.  Geometry lives only in the
distance oracle of :class:`FiniteMetricSpace`; everything else is
combinatorial bookkeeping over index arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "FiniteMetricSpace",
    "QuotientStructure",
    "SectionSample",
    "Ball",
    "MetricValidation",
    "register_metric",
    "validate_metric",
    "fiber_distance",
    "fiber_distances",
    "ball_points",
    "pushforward_ball_measure",
    "project_ball",
    "structure_from_document",
    "DENOMINATOR_FLOOR",
]

# Denominators below this are treated as zero by every verifier.
DENOMINATOR_FLOOR = 1e-12


class DomainError(ValueError):
    """Raised when an operation is called outside its domain."""


def euclidean_rows(origin: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # Coordinates are summed in a fixed order so that closed-form fiber
    # oracles can reproduce these values exactly.
    acc = (targets[:, 0] - origin[0]) ** 2
    for k in range(1, targets.shape[1]):
        acc += (targets[:, k] - origin[k]) ** 2
    return np.sqrt(acc)


_METRICS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "euclidean": euclidean_rows,
}


def register_metric(name: str, rows: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> None:
    """Register a coordinate metric ``rows(origin, targets) -> distances``."""
    _METRICS[name] = rows


class FiniteMetricSpace:
    """A finite point cloud with a symmetric distance oracle.

    Either ``coords`` together with a registered ``metric`` name, or a dense
    ``matrix`` of pairwise distances, must be given.
    """

    def __init__(self, coords=None, metric: str = "euclidean", matrix=None):
        if (coords is None) == (matrix is None):
            raise DomainError("give exactly one of coords or matrix")
        if matrix is not None:
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise DomainError("distance matrix must be square")
            matrix.setflags(write=False)
            self.coords = None
            self.metric = "explicit"
            self._matrix = matrix
            self._rows = None
            self.size = matrix.shape[0]
        else:
            coords = np.array(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if metric not in _METRICS:
                raise DomainError(f"unknown metric kind {metric!r}")
            coords.setflags(write=False)
            self.coords = coords
            self.metric = metric
            self._matrix = None
            self._rows = _METRICS[metric]
            self.size = coords.shape[0]
        if self.size < 1:
            raise DomainError("a metric space needs at least one point")

    def __len__(self) -> int:
        return self.size

    def _check(self, i: int) -> int:
        if not 0 <= int(i) < self.size:
            raise DomainError(f"unknown point id {i}")
        return int(i)

    def distances_from(self, i: int, targets: Optional[np.ndarray] = None) -> np.ndarray:
        """Distances from point ``i`` to ``targets`` (default: every point)."""
        i = self._check(i)
        if self._matrix is not None:
            row = self._matrix[i]
            return row.copy() if targets is None else row[targets]
        pts = self.coords if targets is None else self.coords[targets]
        return self._rows(self.coords[i], pts)

    def dist(self, i: int, j: int) -> float:
        j = self._check(j)
        return float(self.distances_from(i, np.array([j]))[0])

    def matrix(self, idx: Optional[Sequence[int]] = None) -> np.ndarray:
        """Dense distance matrix restricted to ``idx`` (default: all points)."""
        idx = np.arange(self.size) if idx is None else np.asarray(idx, dtype=int)
        if self._matrix is not None:
            return self._matrix[np.ix_(idx, idx)].copy()
        out = np.empty((len(idx), len(idx)))
        for k, i in enumerate(idx):
            out[k] = self.distances_from(i, idx)
        return out


@dataclass(frozen=True, eq=False)
class QuotientStructure:
    """Fiber partition of the point set over a base index set with a measure.

    ``fiber_oracle(xs, ys)``, when present, must return the same matrix of
    point-to-fiber distances as the generic scan; model spaces supply it to
    avoid scanning very large fibers.
    """

    fiber_of: np.ndarray
    measure: np.ndarray
    base_coords: Optional[np.ndarray] = None
    fiber_oracle: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    fiber_points: tuple = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fiber_of = np.asarray(self.fiber_of, dtype=np.int64)
        measure = np.asarray(self.measure, dtype=float)
        m = len(measure)
        if m == 0:
            raise DomainError("base set is empty")
        if fiber_of.ndim != 1 or (len(fiber_of) and (fiber_of.min() < 0 or fiber_of.max() >= m)):
            raise DomainError("fiber_of must map every point to a known base")
        if np.any(measure <= 0) or not np.all(np.isfinite(measure)):
            raise DomainError("measure must be positive on every base")
        order = np.argsort(fiber_of, kind="stable")
        counts = np.bincount(fiber_of, minlength=m)
        if np.any(counts == 0):
            raise DomainError(f"empty fiber over base {int(np.argmin(counts))}")
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        fibers = tuple(order[o:o + c] for o, c in zip(offsets, counts))
        for arr in (fiber_of, measure, order, offsets):
            arr.setflags(write=False)
        object.__setattr__(self, "fiber_of", fiber_of)
        object.__setattr__(self, "measure", measure)
        object.__setattr__(self, "fiber_points", fibers)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_offsets", offsets)

    @classmethod
    def from_fibers(cls, fibers: Mapping[int, Iterable[int]], n_points: int,
                    measure: Optional[Mapping[int, float]] = None, **kw) -> "QuotientStructure":
        """Build from a ``base -> point ids`` mapping with bases ``0..m-1``."""
        m = len(fibers)
        fiber_of = np.full(n_points, -1, dtype=np.int64)
        for y, pts in fibers.items():
            if not 0 <= y < m:
                raise DomainError(f"base ids must be 0..{m - 1}, got {y}")
            for p in pts:
                if fiber_of[p] != -1:
                    raise DomainError(f"point {p} lies in two fibers")
                fiber_of[p] = y
        if np.any(fiber_of < 0):
            raise DomainError(f"point {int(np.argmin(fiber_of))} lies in no fiber")
        w = np.ones(m) if measure is None else np.array([measure[y] for y in range(m)], dtype=float)
        return cls(fiber_of, w, **kw)

    @property
    def n_bases(self) -> int:
        return len(self.measure)

    @property
    def n_points(self) -> int:
        return len(self.fiber_of)

    def check_base(self, y: int) -> int:
        if not 0 <= int(y) < self.n_bases:
            raise DomainError(f"unknown base id {y}")
        return int(y)

    def scaled(self, factor: float) -> "QuotientStructure":
        return QuotientStructure(self.fiber_of, self.measure * factor,
                                 self.base_coords, self.fiber_oracle)


@dataclass(frozen=True, eq=False)
class SectionSample:
    """One chosen point per base: ``assignment[y]`` is the point over ``y``."""

    assignment: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def __len__(self) -> int:
        return len(self.assignment)

    def validate(self, q: QuotientStructure) -> "SectionSample":
        if len(self.assignment) != q.n_bases:
            raise DomainError("a section must assign a point to every base")
        if np.any(self.assignment < 0) or np.any(self.assignment >= q.n_points):
            raise DomainError("section assigns an unknown point")
        bad = np.nonzero(q.fiber_of[self.assignment] != np.arange(q.n_bases))[0]
        if len(bad):
            raise DomainError(f"section property fails at base {int(bad[0])}")
        return self

    def point(self, y: int) -> int:
        return int(self.assignment[y])

    def base_of_point(self, p: int) -> int:
        hit = np.nonzero(self.assignment == p)[0]
        if not len(hit):
            raise DomainError(f"point {p} is not on the section image")
        return int(hit[0])


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("ball radius must be positive")


@dataclass
class MetricValidation:
    ok: bool
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations}


def validate_metric(space: FiniteMetricSpace, tol: float = 1e-9,
                    max_report: int = 100) -> MetricValidation:
    """Check symmetry, identity of indiscernibles and the triangle inequality.

    Every triple is examined; at most ``max_report`` failures are listed.
    """
    D = space.matrix()
    n = len(D)
    violations: list = []

    def report(kind, *ids):
        if len(violations) < max_report:
            violations.append({"kind": kind, "points": [int(i) for i in ids]})
        return True

    failed = False
    scale = np.maximum(np.abs(D), np.abs(D.T))
    for i, j in zip(*np.nonzero(np.abs(D - D.T) > tol * scale)):
        if i < j:
            failed = report("symmetry", i, j)
    for i in np.nonzero(np.abs(np.diag(D)) > 0)[0]:
        failed = report("identity", i, i)
    off = ~np.eye(n, dtype=bool)
    for i, j in zip(*np.nonzero(off & (D <= 0))):
        failed = report("positivity", i, j)
    for k in range(n):
        via = D[:, k][:, None] + D[k, :][None, :]
        bad = D > via * (1 + tol)
        if bad.any():
            for i, j in zip(*np.nonzero(bad)):
                failed = report("triangle", i, k, j)
                if len(violations) >= max_report:
                    break
    return MetricValidation(not failed, violations)


def fiber_distances(space: FiniteMetricSpace, q: QuotientStructure, xs,
                    ys=None) -> np.ndarray:
    """Matrix of ``d(x, fiber(y))`` for ``x`` in ``xs`` and ``y`` in ``ys``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    ys = np.arange(q.n_bases) if ys is None else np.atleast_1d(np.asarray(ys, dtype=np.int64))
    if len(xs) and (xs.min() < 0 or xs.max() >= space.size):
        raise DomainError("unknown point id")
    if len(ys) and (ys.min() < 0 or ys.max() >= q.n_bases):
        raise DomainError("unknown base id")
    if q.fiber_oracle is not None:
        return q.fiber_oracle(xs, ys)
    out = np.empty((len(xs), len(ys)))
    for k, x in enumerate(xs):
        row = space.distances_from(x)[q._order]
        out[k] = np.minimum.reduceat(row, q._offsets)[ys]
    return out


def fiber_distance(space: FiniteMetricSpace, q: QuotientStructure, x: int, y: int) -> float:
    """Distance from point ``x`` to the fiber over base ``y`` (a min over samples)."""
    q.check_base(y)
    return float(fiber_distances(space, q, [x], [y])[0, 0])


def ball_points(space: FiniteMetricSpace, b: Ball) -> np.ndarray:
    """Sorted ids of the points in the open ball ``b``."""
    return np.nonzero(space.distances_from(b.center) < b.radius)[0]


def pushforward_ball_measure(space: FiniteMetricSpace, q: QuotientStructure,
                             section: SectionSample, b: Ball) -> float:
    """Pushforward mass of the ball intersected with the section image."""
    if b.center not in set(section.assignment.tolist()):
        raise DomainError("ball center is not on the section image")
    d = space.distances_from(b.center, section.assignment)
    return float(q.measure[d < b.radius].sum())


def project_ball(space: FiniteMetricSpace, q: QuotientStructure, b: Ball,
                 restrict_to=None) -> np.ndarray:
    """Sorted base ids hit by the ball, optionally restricted to a point set."""
    pts = ball_points(space, b)
    if restrict_to is not None:
        pts = np.intersect1d(pts, np.asarray(list(restrict_to), dtype=np.int64))
    return np.unique(q.fiber_of[pts])


def _lower_triangular(values: Sequence[float], n: int) -> np.ndarray:
    # Row-major strict lower triangle: (1,0), (2,0), (2,1), ...
    values = np.asarray(values, dtype=float)
    if len(values) != n * (n - 1) // 2:
        raise DomainError(f"explicit metric needs {n * (n - 1) // 2} entries, got {len(values)}")
    D = np.zeros((n, n))
    D[np.tril_indices(n, -1)] = values
    return D + D.T


def structure_from_document(doc: Mapping):
    """Build ``(space, quotient, section_or_None, ids)`` from a JSON document.

    ``ids`` maps internal indices back to the document's point and base ids.
    """
    try:
        point_ids = [int(p) for p in doc["points"]]
        fibers_doc = {int(k): [int(p) for p in v] for k, v in doc["fibers"].items()}
        metric = doc["metric"]
        kind = metric["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed structure document: {exc}") from None
    if len(set(point_ids)) != len(point_ids):
        raise DomainError("duplicate point ids")
    pindex = {p: i for i, p in enumerate(point_ids)}
    base_ids = sorted(fibers_doc)
    bindex = {b: i for i, b in enumerate(base_ids)}
    n = len(point_ids)
    if kind == "explicit":
        space = FiniteMetricSpace(matrix=_lower_triangular(metric["lower"], n))
    else:
        coords = metric["coords"]
        if len(coords) != n:
            raise DomainError("metric.coords must align with points")
        space = FiniteMetricSpace(coords=coords, metric=kind)
    try:
        fibers = {bindex[b]: [pindex[p] for p in pts] for b, pts in fibers_doc.items()}
        measure = None
        if "measure" in doc:
            measure = {bindex[int(k)]: float(v) for k, v in doc["measure"].items()}
            if len(measure) != len(base_ids):
                raise DomainError("measure must cover every base")
    except KeyError as exc:
        raise DomainError(f"unknown id {exc}") from None
    q = QuotientStructure.from_fibers(fibers, n, measure)
    section = None
    if "section" in doc:
        assign = np.full(len(base_ids), -1)
        for b, p in doc["section"].items():
            assign[bindex[int(b)]] = pindex[int(p)]
        section = SectionSample(assign).validate(q)
    return space, q, section, {"points": point_ids, "bases": base_ids}
