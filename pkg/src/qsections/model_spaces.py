"""Concrete quotient structures and section generators.

Two models are shipped: vertical-line foliations of Euclidean space over a
finite base grid, and the first Heisenberg group with the Koranyi gauge,
fibered by cosets of the center.  Point ``base_index * n_fiber + k`` is the
``k``-th fiber sample over base ``base_index`` in both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Union

import numpy as np

from .metric_core import (
    DomainError,
    FiniteMetricSpace,
    QuotientStructure,
    SectionSample,
    register_metric,
)

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64"


# -- Heisenberg group -------------------------------------------------------

def heisenberg_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Group law ``(x,y,t)(x',y',t') = (x+x', y+y', t+t'+(xy'-yx')/2)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    x, y, t = p[..., 0], p[..., 1], p[..., 2]
    u, v, s = q[..., 0], q[..., 1], q[..., 2]
    return np.stack([x + u, y + v, t + s + (x * v - y * u) / 2], axis=-1)


def heisenberg_inv(p: np.ndarray) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def koranyi_gauge(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    r2 = p[..., 0] ** 2 + p[..., 1] ** 2
    return (r2 * r2 + p[..., 2] ** 2) ** 0.25


def koranyi_rows(origin: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # d(p, q) = |q^{-1} p| with p = origin; the twist is written so that
    # swapping p and q negates every component exactly.
    dx = origin[0] - targets[:, 0]
    dy = origin[1] - targets[:, 1]
    dt = origin[2] - targets[:, 2] + (origin[0] * targets[:, 1] - targets[:, 0] * origin[1]) / 2
    r2 = dx * dx + dy * dy
    return (r2 * r2 + dt * dt) ** 0.25


def koranyi_distance(p, q) -> float:
    return float(koranyi_rows(np.asarray(p, dtype=float), np.asarray(q, dtype=float)[None, :])[0])


register_metric("koranyi", koranyi_rows)


# -- models -----------------------------------------------------------------

def _grid(values, name: str, vector: bool = False) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if vector:
        if arr.ndim == 1:
            arr = arr[:, None]
    elif arr.ndim != 1:
        raise DomainError(f"{name} must be a list of reals")
    return arr


@dataclass(frozen=True, eq=False)
class EuclideanGraphFoliation:
    """Vertical lines ``{(y, t)}`` over a base grid in ``R^d``, inside ``R^(d+1)``."""

    base_grid: np.ndarray
    fiber_grid: np.ndarray
    space: FiniteMetricSpace
    quotient: QuotientStructure
    kind: str = field(default="euclidean", init=False)

    @property
    def n_fiber(self) -> int:
        return len(self.fiber_grid)

    def point_index(self, base: int, k: int) -> int:
        return base * self.n_fiber + k


@dataclass(frozen=True, eq=False)
class HeisenbergKoranyi:
    """Heisenberg group sampled on ``{(a, b, s)}`` with center-coset fibers."""

    base_grid: np.ndarray
    fiber_grid: np.ndarray
    space: FiniteMetricSpace
    quotient: QuotientStructure
    kind: str = field(default="heisenberg", init=False)

    @property
    def n_fiber(self) -> int:
        return len(self.fiber_grid)

    def point_index(self, base: int, k: int) -> int:
        return base * self.n_fiber + k


Model = Union[EuclideanGraphFoliation, HeisenbergKoranyi]


def _product_coords(base: np.ndarray, fiber: np.ndarray) -> np.ndarray:
    nb, nf = len(base), len(fiber)
    coords = np.empty((nb * nf, base.shape[1] + 1))
    coords[:, :-1] = np.repeat(base, nf, axis=0)
    coords[:, -1] = np.tile(fiber, nb)
    return coords


def _vertical_oracle(coords: np.ndarray, base: np.ndarray, fiber: np.ndarray):
    """Exact point-to-vertical-line distance over a sorted fiber grid.

    The squared distance is horizontal offset plus height offset, so the
    nearest sampled height is the minimizer.  Sums follow the coordinate
    order of :func:`euclidean_rows`, which makes the result agree with a full
    scan bit-for-bit.
    """
    heights = np.sort(fiber)
    nf = len(heights)

    def oracle(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        pts = coords[xs]
        t = pts[:, -1]
        hi = np.clip(np.searchsorted(heights, t), 0, nf - 1)
        lo = np.clip(hi - 1, 0, nf - 1)
        horiz = (base[ys, 0][None, :] - pts[:, 0][:, None]) ** 2
        for k in range(1, base.shape[1]):
            horiz += (base[ys, k][None, :] - pts[:, k][:, None]) ** 2
        d_lo = horiz + ((heights[lo] - t) ** 2)[:, None]
        d_hi = horiz + ((heights[hi] - t) ** 2)[:, None]
        return np.sqrt(np.minimum(d_lo, d_hi))

    return oracle


def build_euclidean_foliation(base_grid, fiber_grid) -> EuclideanGraphFoliation:
    """Product sample of base grid and fiber heights with the Euclidean metric."""
    base = _grid(base_grid, "base_grid", vector=True)
    fiber = _grid(fiber_grid, "fiber_grid")
    coords = _product_coords(base, fiber)
    space = FiniteMetricSpace(coords=coords, metric="euclidean")
    fiber_of = np.repeat(np.arange(len(base)), len(fiber))
    q = QuotientStructure(fiber_of, np.ones(len(base)), base_coords=base,
                          fiber_oracle=_vertical_oracle(space.coords, base, fiber))
    return EuclideanGraphFoliation(base, fiber, space, q)


def _coset_oracle(coords: np.ndarray, base: np.ndarray, center: np.ndarray):
    nf = len(center)
    fibers = np.array([[a, b, s] for a, b in base for s in center]).reshape(len(base), nf, 3)
    ends = {float(center.min()), float(center.max())}

    def oracle(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        out = np.empty((len(xs), len(ys)))
        boundary = 0
        targets = fibers[ys].reshape(-1, 3)
        for k, x in enumerate(xs):
            d = koranyi_rows(coords[x], targets).reshape(len(ys), nf)
            arg = np.argmin(d, axis=1)
            out[k] = d[np.arange(len(ys)), arg]
            if nf > 1:
                boundary += int(np.isin(center[arg], list(ends)).sum())
        if boundary:
            log.warning("center-coset minimum on the grid boundary for %d (point, fiber) "
                        "pairs; fiber distances may be truncated", boundary)
        return out

    return oracle


def build_heisenberg(base_grid, center_grid) -> HeisenbergKoranyi:
    """Points ``(a, b, s)`` with the Koranyi distance and center-coset fibers."""
    base = _grid(base_grid, "base_grid", vector=True)
    if base.shape[1] != 2:
        raise DomainError("Heisenberg base grid must consist of (a, b) pairs")
    center = _grid(center_grid, "center_grid")
    coords = _product_coords(base, center)
    space = FiniteMetricSpace(coords=coords, metric="koranyi")
    fiber_of = np.repeat(np.arange(len(base)), len(center))
    q = QuotientStructure(fiber_of, np.ones(len(base)), base_coords=base,
                          fiber_oracle=_coset_oracle(space.coords, base, center))
    return HeisenbergKoranyi(base, center, space, q)


# -- sections ---------------------------------------------------------------

def _named_function(spec: Mapping[str, Any]) -> Callable[[np.ndarray], np.ndarray]:
    name = spec.get("function", "zero")
    if name == "zero":
        return lambda b: np.zeros(len(b))
    if name == "abs":
        return lambda b: np.linalg.norm(b, axis=1)
    if name == "linear":
        slope = np.atleast_1d(np.asarray(spec.get("slope", 1.0), dtype=float))
        offset = float(spec.get("offset", 0.0))
        return lambda b: b @ np.broadcast_to(slope, (b.shape[1],)) + offset
    if name == "sine":
        amp, freq = float(spec.get("amplitude", 1.0)), float(spec.get("frequency", 1.0))
        return lambda b: amp * np.sin(freq * b[:, 0])
    raise DomainError(f"unknown section function {name!r}")


@dataclass(frozen=True)
class SectionFamilySpec:
    """How to pick one fiber sample per base.

    ``kind`` is ``graph_of_function`` (named function or explicit table),
    ``perturbed`` (a function graph plus seeded uniform noise of width
    ``scale``) or ``random`` (a seeded uniform choice of fiber sample).
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], seed: Optional[int] = None) -> "SectionFamilySpec":
        doc = dict(doc)
        kind = doc.pop("kind", "graph_of_function")
        return cls(kind, doc, doc.pop("seed", seed))


def _heights(model: Model, spec: SectionFamilySpec) -> np.ndarray:
    params = spec.params
    nb = model.quotient.n_bases
    if "table" in params:
        table = params["table"]
        if isinstance(table, Mapping):
            table = {int(k): float(v) for k, v in table.items()}
            extra = [k for k in table if not 0 <= k < nb]
            if extra:
                raise DomainError(f"section table references unknown base {extra[0]}")
            missing = [y for y in range(nb) if y not in table]
            if missing:
                raise DomainError(f"section table misses base {missing[0]}")
            return np.array([table[y] for y in range(nb)])
        table = np.asarray(table, dtype=float)
        if table.shape != (nb,):
            raise DomainError(f"section table must have {nb} entries")
        return table
    return _named_function(params)(model.base_grid)


def generate_section(model: Model, spec: SectionFamilySpec) -> SectionSample:
    """Produce a section over ``model``; deterministic for a fixed seed.

    Heights off the fiber grid snap to the nearest sample; the largest
    snapping error is kept in ``section.meta``.
    """
    nb = model.quotient.n_bases
    grid = model.fiber_grid
    meta: dict[str, Any] = {"kind": spec.kind}
    if spec.kind == "random":
        if spec.seed is None:
            raise DomainError("random sections need a seed")
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        k = rng.integers(0, len(grid), size=nb)
        meta.update(seed=spec.seed, rng=RNG_ALGORITHM, snap_error=0.0)
    elif spec.kind in ("graph_of_function", "perturbed"):
        target = _heights(model, spec)
        if spec.kind == "perturbed":
            if spec.seed is None:
                raise DomainError("perturbed sections need a seed")
            scale = float(spec.params.get("scale", 0.5))
            rng = np.random.Generator(np.random.PCG64(spec.seed))
            target = target + rng.uniform(-scale, scale, size=nb)
            meta.update(seed=spec.seed, rng=RNG_ALGORITHM, scale=scale)
        # argmin keeps the first (lowest-index) sample on ties
        k = np.argmin(np.abs(grid[None, :] - target[:, None]), axis=1)
        meta["snap_error"] = float(np.max(np.abs(grid[k] - target)))
    else:
        raise DomainError(f"unknown section kind {spec.kind!r}")
    assignment = np.arange(nb) * model.n_fiber + k
    return SectionSample(assignment, meta).validate(model.quotient)


def section_heights(model: Model, section: SectionSample) -> np.ndarray:
    return model.space.coords[section.assignment, -1]
