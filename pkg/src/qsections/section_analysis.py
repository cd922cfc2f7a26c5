"""Verifiers for quasi-symmetric, Lipschitz, Holder and quasi-conformal sections.

All scans work from two dense matrices attached to a section over ``m``
bases: ``D[i, j] = d(phi(i), phi(j))`` and ``F[i, j] = d(phi(i), fiber(j))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Protocol, Sequence

import numpy as np

from .metric_core import (
    DENOMINATOR_FLOOR,
    DomainError,
    FiniteMetricSpace,
    QuotientStructure,
    SectionSample,
    fiber_distances,
)

DEFAULT_SLACK = 1e-9

# Upper bound on probe rows handled at once by the probe scans.
_PROBE_CHUNK = 2048


class Modulus(Protocol):
    def __call__(self, t) -> np.ndarray: ...

    def to_dict(self) -> dict: ...


@dataclass(frozen=True, eq=False)
class MonotoneModulus:
    """Nondecreasing piecewise-linear modulus, constant outside its breakpoints."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.shape != v.shape or len(bp) == 0:
            raise DomainError("breakpoints and values must be equal-length, nonempty")
        if np.any(bp <= 0) or np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be positive and strictly increasing")
        if np.any(v <= 0) or np.any(np.diff(v) < 0):
            raise DomainError("values must be positive and nondecreasing")
        bp.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.breakpoints, self.values)

    def __len__(self) -> int:
        return len(self.breakpoints)

    def lowered(self, i: int, factor: float) -> "MonotoneModulus":
        """The largest monotone modulus below this one with ``eta(t_i) = factor * v_i``."""
        cap = self.values[i] * factor
        v = self.values.copy()
        v[: i + 1] = np.minimum(v[: i + 1], cap)
        return MonotoneModulus(self.breakpoints, v)

    def to_dict(self) -> dict:
        return {"kind": "envelope", "breakpoints": self.breakpoints.tolist(),
                "values": self.values.tolist()}


@dataclass(frozen=True)
class PowerModulus:
    """``eta(t) = coefficient * t**exponent``."""

    coefficient: float
    exponent: float = 1.0

    def __post_init__(self):
        if not (self.coefficient > 0 and self.exponent > 0):
            raise DomainError("power modulus needs positive coefficient and exponent")

    def __call__(self, t) -> np.ndarray:
        if self.exponent == 1.0:
            return self.coefficient * np.asarray(t, dtype=float)
        return self.coefficient * np.power(t, self.exponent)

    def to_dict(self) -> dict:
        return {"kind": "power", "coefficient": self.coefficient, "exponent": self.exponent}


def modulus_from_dict(doc: dict) -> Modulus:
    if doc.get("kind", "envelope") == "power":
        return PowerModulus(float(doc["coefficient"]), float(doc.get("exponent", 1.0)))
    return MonotoneModulus(doc["breakpoints"], doc["values"])


# -- section geometry ----------------------------------------------------------

class SectionGeometry(NamedTuple):
    points: np.ndarray
    D: np.ndarray
    F: np.ndarray


def section_geometry(space: FiniteMetricSpace, q: QuotientStructure,
                     section: SectionSample) -> SectionGeometry:
    pts = section.assignment
    return SectionGeometry(pts, space.matrix(pts), fiber_distances(space, q, pts))


# -- triples -------------------------------------------------------------------

class TripleRecord(NamedTuple):
    y1: int
    y2: int
    y3: int
    t: float
    R: float


@dataclass(frozen=True, eq=False)
class TripleSet:
    """Ordered triples of distinct bases with fiber ratio ``t`` and distance ratio ``R``."""

    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    t: np.ndarray
    R: np.ndarray
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[TripleRecord]:
        for row in zip(self.y1.tolist(), self.y2.tolist(), self.y3.tolist(),
                       self.t.tolist(), self.R.tolist()):
            yield TripleRecord(*row)

    def __getitem__(self, i: int) -> TripleRecord:
        return TripleRecord(int(self.y1[i]), int(self.y2[i]), int(self.y3[i]),
                            float(self.t[i]), float(self.R[i]))

    def subset(self, mask: np.ndarray) -> "TripleSet":
        return TripleSet(self.y1[mask], self.y2[mask], self.y3[mask], self.t[mask], self.R[mask])

    @classmethod
    def concat(cls, sets: Sequence["TripleSet"]) -> "TripleSet":
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in ("y1", "y2", "y3", "t", "R")),
                   skipped=sum(s.skipped for s in sets))


def _triples_at(geo: SectionGeometry, y1: int):
    """Ratio matrices over usable ``(y2, y3)`` for a fixed first base.

    Returns the usable base indices ``idx`` (rows and columns of ``t`` and
    ``R``), the ratio matrices with their diagonal still present, and the
    number of ordered pairs skipped for vanishing denominators.
    """
    m = len(geo.points)
    fd = geo.F[:, y1]
    dd = geo.D[y1]
    others = np.arange(m) != y1
    idx = np.nonzero(others & (fd > DENOMINATOR_FLOOR) & (dd > DENOMINATOR_FLOOR))[0]
    k = len(idx)
    skipped = (m - 1) * (m - 2) - k * (k - 1)
    f, d = fd[idx], dd[idx]
    return idx, f[:, None] / f[None, :], d[:, None] / d[None, :], skipped


def enumerate_triples(space: FiniteMetricSpace, q: QuotientStructure,
                      section: SectionSample, geometry: Optional[SectionGeometry] = None) -> TripleSet:
    """All ordered triples of distinct bases with positive denominators.

    Triples whose denominators fall below the numerical floor are counted in
    ``skipped`` rather than returned.
    """
    if q.n_bases < 3:
        raise DomainError("need at least three bases to form triples")
    geo = geometry or section_geometry(space, q, section)
    parts = []
    for y1 in range(q.n_bases):
        idx, t, R, skipped = _triples_at(geo, y1)
        a, b = np.nonzero(~np.eye(len(idx), dtype=bool))
        parts.append(TripleSet(np.full(len(a), y1), idx[a], idx[b], t[a, b], R[a, b], skipped))
    return TripleSet.concat(parts)


MAX_LISTED = 100


@dataclass
class QuasiSymmetryVerdict:
    passed: bool
    violations: list = field(default_factory=list)
    violation_count: int = 0
    skipped: int = 0
    checked: int = 0

    def to_dict(self) -> dict:
        return {"pass": self.passed, "violations": self.violations,
                "violation_count": self.violation_count, "skipped": self.skipped,
                "checked": self.checked}


def _violation_rows(y1, y2, y3, t, R, eta_t, room: int) -> list:
    return [{"triple": [int(a), int(b), int(c)], "t": float(u), "R": float(v), "eta_t": float(w)}
            for a, b, c, u, v, w in zip(y1[:room], y2[:room], y3[:room], t[:room], R[:room], eta_t[:room])]


def check_quasi_symmetry(records: TripleSet, eta: Modulus,
                         slack: float = DEFAULT_SLACK) -> QuasiSymmetryVerdict:
    """Pass iff ``R <= eta(t) * (1 + slack)`` on every record."""
    eta_t = eta(records.t)
    bad = records.R > eta_t * (1 + slack)
    idx = np.nonzero(bad)[0]
    rows = _violation_rows(records.y1[idx], records.y2[idx], records.y3[idx],
                           records.t[idx], records.R[idx], eta_t[idx], MAX_LISTED)
    return QuasiSymmetryVerdict(not len(idx), rows, len(idx), records.skipped, len(records))


def check_section_quasi_symmetry(space: FiniteMetricSpace, q: QuotientStructure,
                                 section: SectionSample, eta: Modulus,
                                 slack: float = DEFAULT_SLACK,
                                 geometry: Optional[SectionGeometry] = None) -> QuasiSymmetryVerdict:
    """Streaming version of ``check_quasi_symmetry(enumerate_triples(...))``.

    Scans one first base at a time and never materializes the triple list,
    so it scales to sections over a thousand bases.
    """
    if q.n_bases < 3:
        raise DomainError("need at least three bases to form triples")
    geo = geometry or section_geometry(space, q, section)
    verdict = QuasiSymmetryVerdict(True)
    for y1 in range(q.n_bases):
        idx, t, R, skipped = _triples_at(geo, y1)
        verdict.skipped += skipped
        verdict.checked += len(idx) * (len(idx) - 1)
        bound = eta(t)
        bound *= 1 + slack
        bad = R > bound
        np.fill_diagonal(bad, False)
        if bad.any():
            a, b = np.nonzero(bad)
            verdict.violation_count += len(a)
            room = MAX_LISTED - len(verdict.violations)
            if room > 0:
                verdict.violations += _violation_rows(np.full(len(a), y1), idx[a], idx[b], t[a, b],
                                                      R[a, b], eta(t[a, b]), room)
    verdict.passed = verdict.violation_count == 0
    return verdict


def fit_eta(records: TripleSet) -> MonotoneModulus:
    """Least nondecreasing envelope over the observed ``(t, R)`` pairs.

    Per-``t`` maxima are taken first (equal ``t`` merge), then a running
    maximum in increasing ``t``.
    """
    if len(records) == 0:
        raise DomainError("cannot fit a modulus to an empty record set")
    ts, inverse = np.unique(records.t, return_inverse=True)
    peak = np.full(len(ts), -np.inf)
    np.maximum.at(peak, inverse, records.R)
    return MonotoneModulus(ts, np.maximum.accumulate(peak))


# -- Lipschitz and Holder --------------------------------------------------------

@dataclass
class LipschitzEstimate:
    value: float
    witness: tuple
    flagged: int = 0

    @property
    def modulus(self) -> PowerModulus:
        return PowerModulus(self.value, 1.0)

    def to_dict(self) -> dict:
        return {"L": self.value, "witness": list(self.witness), "flagged_pairs": self.flagged}


@dataclass
class HolderEstimate:
    L: float
    epsilon: float
    alpha: float
    witness: tuple
    flagged: int = 0

    @property
    def modulus(self) -> PowerModulus:
        return PowerModulus(self.L * self.epsilon ** (self.alpha - 1), self.alpha)

    def to_dict(self) -> dict:
        return {"L": self.L, "epsilon": self.epsilon, "alpha": self.alpha,
                "witness": list(self.witness), "flagged_pairs": self.flagged,
                "eta": self.modulus.to_dict()}


def _pair_ratios(geo: SectionGeometry, alpha: float):
    m = len(geo.points)
    off = ~np.eye(m, dtype=bool)
    flagged = off & (geo.F <= DENOMINATOR_FLOOR)
    ok = off & ~flagged
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ok, geo.D / geo.F ** alpha, -np.inf)
    return ratio, int(flagged.sum())


def minimal_lipschitz_constant(space: FiniteMetricSpace, q: QuotientStructure,
                               section: SectionSample,
                               geometry: Optional[SectionGeometry] = None) -> LipschitzEstimate:
    """Smallest ``L`` with ``d(phi(y1), phi(y2)) <= L d(phi(y1), fiber(y2))`` on all pairs."""
    if q.n_bases < 2:
        raise DomainError("need at least two bases")
    geo = geometry or section_geometry(space, q, section)
    ratio, flagged = _pair_ratios(geo, 1.0)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    return LipschitzEstimate(float(ratio[i, j]), (int(i), int(j)), flagged)


def minimal_holder_constant(space: FiniteMetricSpace, q: QuotientStructure,
                            section: SectionSample, alpha: float,
                            geometry: Optional[SectionGeometry] = None) -> HolderEstimate:
    """Smallest ``L`` for the ``(L, alpha)`` Holder bound, plus the separation ``epsilon``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if q.n_bases < 2:
        raise DomainError("need at least two bases")
    geo = geometry or section_geometry(space, q, section)
    ratio, flagged = _pair_ratios(geo, alpha)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    off = ~np.eye(len(geo.points), dtype=bool)
    eps = float(geo.D[off].min())
    return HolderEstimate(float(ratio[i, j]), eps, alpha, (int(i), int(j)), flagged)


# -- ell_eta ---------------------------------------------------------------------

@dataclass
class EllEta:
    value: float
    witness: Optional[tuple]
    literal: float
    per_base: np.ndarray
    diverged: bool = False
    skipped: int = 0
    probes: int = 0

    def to_dict(self) -> dict:
        return {"ell_eta": self.value, "witness": None if self.witness is None else list(self.witness),
                "literal_eta_of_1": self.literal,
                "per_base": [float(v) if np.isfinite(v) else None for v in self.per_base],
                "diverged": self.diverged, "skipped": self.skipped, "probes": self.probes}


def compute_ell_eta(space: FiniteMetricSpace, q: QuotientStructure, section: SectionSample,
                    eta: Modulus, probe_points, ceiling: float = 1e12,
                    geometry: Optional[SectionGeometry] = None) -> EllEta:
    """Sup of ``eta(d(g, fiber(y)) / d(p, fiber(y)))`` with ``g = phi(pi(p))``.

    ``p`` runs over the probe points and ``y`` over every base other than
    ``pi(p)``.  The witness is ``(p, y)``; ``literal`` is ``eta(1)``, the
    value obtained when both points are required to lie on the section.
    """
    probes = np.unique(np.asarray(list(probe_points), dtype=np.int64))
    if not len(probes):
        raise DomainError("probe set is empty")
    geo = geometry or section_geometry(space, q, section)
    m = q.n_bases
    best, witness, skipped = -np.inf, None, 0
    per_base = np.full(m, -np.inf)
    for lo in range(0, len(probes), _PROBE_CHUNK):
        chunk = probes[lo:lo + _PROBE_CHUNK]
        home = q.fiber_of[chunk]
        Fp = fiber_distances(space, q, chunk)
        Fg = geo.F[home]
        admissible = np.arange(m)[None, :] != home[:, None]
        good = admissible & (Fp > DENOMINATOR_FLOOR) & (Fg > DENOMINATOR_FLOOR)
        skipped += int((admissible & ~good).sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(good, eta(np.where(good, Fg / Fp, 1.0)), -np.inf)
        per_base = np.maximum(per_base, vals.max(axis=0, initial=-np.inf))
        k = np.argmax(vals)
        if vals.flat[k] > best:
            i, y = np.unravel_index(k, vals.shape)
            best, witness = float(vals[i, y]), (int(chunk[i]), int(y))
    literal = float(eta(1.0))
    if witness is None:
        best = literal
    diverged = not np.isfinite(best) or best > ceiling
    return EllEta(best, witness, literal, per_base, diverged, skipped, len(probes))


# -- eccentricity ----------------------------------------------------------------

@dataclass
class EccentricityRecord:
    base: int
    radius: float
    L: Optional[float]
    ell: Optional[float]
    H: Optional[float]
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"base": self.base, "radius": self.radius, "L_phi": self.L,
                "ell_phi": self.ell, "H_phi": self.H, "flags": self.flags}


def eccentricity(space: FiniteMetricSpace, q: QuotientStructure, section: SectionSample,
                 base: int, r: float, geometry: Optional[SectionGeometry] = None) -> EccentricityRecord:
    """Intrinsic ``L_phi``, ``ell_phi`` and their ratio at one base and radius."""
    if not r > 0:
        raise DomainError("radius must be positive")
    base = q.check_base(base)
    geo = geometry or section_geometry(space, q, section)
    others = np.arange(q.n_bases) != base
    fd = geo.F[base]
    dd = geo.D[base]
    inner = others & (fd <= r)
    outer = others & (fd >= r)
    flags = []
    L = float(dd[inner].max()) if inner.any() else None
    ell = float(dd[outer].min()) if outer.any() else None
    if L is None:
        flags.append("empty_inner_set")
    if ell is None:
        flags.append("empty_outer_set")
    H = None
    if L is not None and ell is not None:
        if ell > DENOMINATOR_FLOOR:
            H = L / ell
        else:
            flags.append("zero_ell")
    return EccentricityRecord(base, float(r), L, ell, H, flags)


# -- quasi-conformality ----------------------------------------------------------

@dataclass
class QuasiConformalVerdict:
    passed: bool
    complete: bool
    delta: float
    H: float
    sup_per_base: list
    unsampled_fibers: list
    violations: list = field(default_factory=list)
    violation_count: int = 0
    bound_violations: list = field(default_factory=list)
    skipped: int = 0

    def to_dict(self) -> dict:
        return {"pass": self.passed, "complete": self.complete, "delta": self.delta, "H": self.H,
                "sup_per_base": self.sup_per_base, "unsampled_fibers": self.unsampled_fibers,
                "violations": self.violations, "violation_count": self.violation_count,
                "bound_violations": self.bound_violations, "skipped": self.skipped}


def _probe_pairs(space: FiniteMetricSpace, q: QuotientStructure, probes: np.ndarray, delta: float):
    home = q.fiber_of[probes]
    pairs, unsampled = [], []
    for y in range(q.n_bases):
        local = np.nonzero(home == y)[0]
        found = False
        if len(local) > 1:
            D = space.matrix(probes[local])
            i, j = np.nonzero((D > 0) & (D <= delta))
            if len(i):
                found = True
                pairs.append(np.stack([local[i], local[j]], axis=1))
        if not found:
            unsampled.append(y)
    pairs = np.concatenate(pairs) if pairs else np.empty((0, 2), dtype=np.int64)
    return pairs, unsampled


def check_quasi_conformal(space: FiniteMetricSpace, q: QuotientStructure, section: SectionSample,
                          eta: Modulus, H: float, delta: float, probe_points,
                          slack: float = DEFAULT_SLACK,
                          records: Optional[TripleSet] = None) -> QuasiConformalVerdict:
    """Discrete surrogate of the limsup condition at scale ``delta``.

    For each base ``y1`` the limsup is replaced by the sup ``S(y1)`` of
    ``eta(d(x, fiber(y1)) / d(x', fiber(y1)))`` over probe pairs on a common
    fiber other than ``y1`` with ``0 < d(x, x') <= delta``.  The verdict
    passes iff ``R <= S(y1)`` for every triple and ``S(y1) <= H``, both up to
    the relative slack.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    if not H > 0:
        raise DomainError("H must be positive")
    probes = np.unique(np.asarray(list(probe_points), dtype=np.int64))
    if records is None:
        records = enumerate_triples(space, q, section)
    pairs, unsampled = _probe_pairs(space, q, probes, delta)
    m = q.n_bases
    sup = np.full(m, -np.inf)
    skipped = 0
    if len(pairs):
        used = np.unique(pairs)
        pos = np.searchsorted(used, pairs)
        Fp = fiber_distances(space, q, probes[used])
        home = q.fiber_of[probes[used]][pos[:, 0]]
        for lo in range(0, len(pairs), _PROBE_CHUNK):
            a, b = pos[lo:lo + _PROBE_CHUNK, 0], pos[lo:lo + _PROBE_CHUNK, 1]
            num, den = Fp[a], Fp[b]
            admissible = np.arange(m)[None, :] != home[lo:lo + _PROBE_CHUNK, None]
            good = admissible & (num > DENOMINATOR_FLOOR) & (den > DENOMINATOR_FLOOR)
            skipped += int((admissible & ~good).sum())
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(good, eta(np.where(good, num / den, 1.0)), -np.inf)
            sup = np.maximum(sup, vals.max(axis=0))
    S = sup[records.y1]
    bad = records.R > S * (1 + slack)
    idx = np.nonzero(bad)[0]
    rows = _violation_rows(records.y1[idx], records.y2[idx], records.y3[idx],
                           records.t[idx], records.R[idx], S[idx], MAX_LISTED)
    for row in rows:
        row["S"] = row.pop("eta_t")
    over = [int(y) for y in np.nonzero(sup > H * (1 + slack))[0]]
    complete = not unsampled
    passed = complete and not len(idx) and not over
    listed = [None if not np.isfinite(s) else float(s) for s in sup]
    return QuasiConformalVerdict(passed, complete, float(delta), float(H), listed, unsampled,
                                 rows, len(idx), over, skipped + records.skipped)
