"""Empirical Ahlfors-David regularity of section images.

Ball measures are taken in the pushforward of the base measure under the
section, and exponents are fitted by pooled least squares in log-log space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .metric_core import (
    Ball,
    DomainError,
    FiniteMetricSpace,
    QuotientStructure,
    SectionSample,
    fiber_distances,
    project_ball,
)
from .section_analysis import (
    DEFAULT_SLACK,
    Modulus,
    check_section_quasi_symmetry,
    compute_ell_eta,
    section_geometry,
)

log = logging.getLogger(__name__)

CHAIN_TOLERANCE = 0.05


class PreconditionError(DomainError):
    """A hypothesis of the checked statement does not hold on the sample."""


def geometric_radii(r_min: float, r_max: float, count: int = 16) -> np.ndarray:
    if not 0 < r_min < r_max or count < 2:
        raise DomainError("need 0 < r_min < r_max and at least two radii")
    return np.geomspace(r_min, r_max, count)


def _radii(radius_grid) -> np.ndarray:
    radii = np.unique(np.asarray(radius_grid, dtype=float))
    if len(radii) < 2:
        raise DomainError("a log-log slope needs at least two distinct radii")
    if radii[0] <= 0:
        raise DomainError("radii must be positive")
    if len(radii) < 8:
        log.warning("radius grid has only %d points; the exponent fit is coarse", len(radii))
    return radii


def measure_profile(space: FiniteMetricSpace, q: QuotientStructure, section: SectionSample,
                    base: int, radii: np.ndarray) -> np.ndarray:
    """Pushforward measure of ``B(phi(base), r)`` for every ``r`` in ``radii``."""
    d = space.distances_from(section.point(base), section.assignment)
    order = np.argsort(d, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(q.measure[order])])
    # open balls: count distances strictly below r
    return cum[np.searchsorted(d[order], radii, side="left")]


def projected_profile(space: FiniteMetricSpace, q: QuotientStructure, x: int,
                      radii: np.ndarray) -> np.ndarray:
    """``mu(pi(B(x, r)))`` for every ``r``; a base is hit iff its fiber is closer than ``r``."""
    fd = fiber_distances(space, q, [x])[0]
    order = np.argsort(fd, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(q.measure[order])])
    return cum[np.searchsorted(fd[order], radii, side="left")]


@dataclass
class Comparability:
    C: float
    witness: Optional[dict]

    def to_dict(self) -> dict:
        return {"C": self.C, "witness": self.witness}


def comparability_constant(space: FiniteMetricSpace, q: QuotientStructure,
                           fiber_pairs: Sequence[tuple], radii) -> Comparability:
    """Largest two-sided ratio of projected ball measures over fiber-mate pairs."""
    radii = np.unique(np.asarray(radii, dtype=float))
    if not len(radii) or radii[0] <= 0:
        raise DomainError("radii must be positive")
    best, witness = 1.0, None
    for x, x2 in fiber_pairs:
        x, x2 = int(x), int(x2)
        if q.fiber_of[x] != q.fiber_of[x2]:
            raise DomainError(f"points {x} and {x2} do not share a fiber")
        a = projected_profile(space, q, x, radii)
        b = projected_profile(space, q, x2, radii)
        ratio = np.maximum(a / b, b / a)
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            witness = {"pair": [x, x2], "radius": float(radii[k])}
    return Comparability(best, witness)


@dataclass
class CenterFit:
    base: int
    slope: float
    c_lower: float
    c_upper: float

    def to_dict(self) -> dict:
        return {"base": self.base, "slope": self.slope, "c_lower": self.c_lower,
                "c_upper": self.c_upper}


@dataclass
class RegularityReport:
    Q: float
    c_lower: float
    c_upper: float
    r_window: tuple
    r0: float
    intercept: float
    residual: float
    per_center: list
    excluded_centers: list = field(default_factory=list)
    dropped: int = 0
    samples: list = field(default_factory=list)

    def constants_for(self, Q: float) -> tuple:
        """Tightest ``(c_lower, c_upper)`` over the stored samples at a given exponent."""
        ratios = [m / r ** Q for _, r, m in self.samples]
        return min(ratios), max(ratios)

    def to_dict(self) -> dict:
        return {"Q": self.Q, "c_lower": self.c_lower, "c_upper": self.c_upper,
                "r_window": list(self.r_window), "r0": self.r0, "intercept": self.intercept,
                "residual": self.residual, "per_center": [c.to_dict() for c in self.per_center],
                "excluded_centers": self.excluded_centers, "dropped": self.dropped}


def boundary_distance(q: QuotientStructure, bases) -> np.ndarray:
    """Distance in base coordinates to the edge of the base grid's bounding box.

    In the shipped models ambient distance dominates the horizontal offset,
    so a ball of radius ``r`` stays inside the sample when this is ``>= r``.
    """
    bases = np.asarray(bases, dtype=np.int64)
    if q.base_coords is None:
        return np.full(len(bases), np.inf)
    lo, hi = q.base_coords.min(axis=0), q.base_coords.max(axis=0)
    pts = q.base_coords[bases]
    return np.minimum(pts - lo, hi - pts).min(axis=1)


def fit_regularity(space: FiniteMetricSpace, q: QuotientStructure, section: SectionSample,
                   centers, radius_grid) -> RegularityReport:
    """Fit ``c_lower r^Q <= measure(B(phi(y), r)) <= c_upper r^Q`` over centers and radii.

    Centers closer to the sample boundary than the largest radius are
    excluded and listed; ``r0`` is the smallest boundary distance among the
    retained ones.
    """
    radii = _radii(radius_grid)
    centers = np.unique(np.asarray(list(centers), dtype=np.int64))
    if not len(centers):
        raise DomainError("no centers given")
    bdist = boundary_distance(q, centers)
    keep = bdist >= radii[-1]
    excluded = [int(c) for c in centers[~keep]]
    centers, bdist = centers[keep], bdist[keep]
    if not len(centers):
        raise DomainError("every center lies within the largest radius of the sample boundary")
    samples, dropped = [], 0
    for c in centers:
        prof = measure_profile(space, q, section, int(c), radii)
        for r, mval in zip(radii, prof):
            if mval > 0:
                samples.append((int(c), float(r), float(mval)))
            else:
                dropped += 1
    if len({r for _, r, _ in samples}) < 2:
        raise DomainError("fewer than two radii carry positive measure")
    lr = np.log([s[1] for s in samples])
    lm = np.log([s[2] for s in samples])
    Q, intercept = np.polyfit(lr, lm, 1)
    if not Q > 0:
        raise DomainError(f"fitted exponent {Q:.4g} is not positive")
    ratios = np.array([s[2] for s in samples]) / np.array([s[1] for s in samples]) ** Q
    residual = float(np.max(np.abs(lm - (intercept + Q * lr))))
    per_center = []
    by_center = np.array([s[0] for s in samples])
    for c in centers:
        sel = by_center == c
        if sel.sum() >= 2 and len(np.unique(lr[sel])) >= 2:
            slope = float(np.polyfit(lr[sel], lm[sel], 1)[0])
        else:
            slope = float("nan")
        per_center.append(CenterFit(int(c), slope, float(ratios[sel].min()), float(ratios[sel].max())))
    return RegularityReport(float(Q), float(ratios.min()), float(ratios.max()),
                            (float(radii[0]), float(radii[-1])), float(bdist.min()),
                            float(intercept), residual, per_center, excluded, dropped, samples)


@dataclass
class InclusionVerdict:
    passed: bool
    checked: int
    ell_eta: float
    first_violations: list = field(default_factory=list)
    second_violations: list = field(default_factory=list)
    equalities: int = 0

    def to_dict(self) -> dict:
        return {"pass": self.passed, "checked": self.checked, "ell_eta": self.ell_eta,
                "first_inclusion_violations": self.first_violations,
                "second_inclusion_violations": self.second_violations,
                "equal_sets": self.equalities}


def check_ball_inclusion(space: FiniteMetricSpace, q: QuotientStructure, section: SectionSample,
                         ell_eta: float, centers, radii,
                         slack: float = DEFAULT_SLACK) -> InclusionVerdict:
    """Check ``pi(B(p,r)) <= pi(B(p, l r) & phi(Y)) <= pi(B(p, l r))`` as finite sets.

    ``centers`` are bases; ``p = phi(center)``.  The inflated radius carries
    the relative slack to absorb rounding.
    """
    image = section.assignment
    verdict = InclusionVerdict(True, 0, float(ell_eta))
    for c in centers:
        p = section.point(int(c))
        for r in radii:
            big = ell_eta * r * (1 + slack)
            A = project_ball(space, q, Ball(p, float(r)))
            B = project_ball(space, q, Ball(p, big), restrict_to=image)
            C = project_ball(space, q, Ball(p, big))
            verdict.checked += 1
            miss1 = np.setdiff1d(A, B)
            miss2 = np.setdiff1d(B, C)
            if len(miss1):
                verdict.first_violations.append({"center": int(c), "radius": float(r),
                                                 "bases": miss1.tolist()})
            if len(miss2):
                verdict.second_violations.append({"center": int(c), "radius": float(r),
                                                  "bases": miss2.tolist()})
            if len(A) == len(B) == len(C) and not len(miss1) and not len(miss2):
                verdict.equalities += 1
    verdict.passed = not verdict.first_violations and not verdict.second_violations
    return verdict


@dataclass
class ChainVerdict:
    C: float
    ell_eta: float
    Q: float
    c1: float
    c2: float
    c3: float
    c4: float
    c3_empirical: float
    c4_empirical: float
    Q_test: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("C", "ell_eta", "Q", "c1", "c2", "c3", "c4",
                                              "c3_empirical", "c4_empirical", "Q_test",
                                              "tolerance")}
        out["pass"] = self.passed
        out.update(self.details)
        return out


def check_theorem_chain(space: FiniteMetricSpace, q: QuotientStructure, phi: SectionSample,
                        psi: SectionSample, eta: Modulus, radius_grid, centers,
                        probe_points=None, tolerance: float = CHAIN_TOLERANCE,
                        slack: float = DEFAULT_SLACK) -> ChainVerdict:
    """Predict the regularity constants of ``psi`` from those of ``phi`` and compare.

    The prediction is ``c3 = c1 / (C l^Q)`` and ``c4 = c2 C l^Q``, with ``C``
    the comparability constant over the pairs ``(phi(y), psi(y))`` and ``l``
    the larger of the two sections' ``ell_eta``.  Empirical constants of
    ``psi`` are measured at the exponent fitted on ``phi``.
    """
    geo_phi = section_geometry(space, q, phi)
    geo_psi = section_geometry(space, q, psi)
    for name, sec, geo in (("phi", phi, geo_phi), ("psi", psi, geo_psi)):
        qs = check_section_quasi_symmetry(space, q, sec, eta, slack, geometry=geo)
        if not qs.passed:
            raise PreconditionError(f"{name} is not quasi-symmetric under the given modulus "
                                    f"({qs.violation_count} violating triples)")
    ref = fit_regularity(space, q, phi, centers, radius_grid)
    test = fit_regularity(space, q, psi, centers, radius_grid)
    used = [c.base for c in ref.per_center]
    pairs = [(phi.point(y), psi.point(y)) for y in used]
    comp = comparability_constant(space, q, pairs, radius_grid)
    if probe_points is None:
        probe_points = np.arange(space.size)
    ells = [compute_ell_eta(space, q, sec, eta, probe_points, geometry=geo)
            for sec, geo in ((phi, geo_phi), (psi, geo_psi))]
    if any(e.diverged for e in ells):
        raise PreconditionError("ell_eta diverges")
    ell = max(e.value for e in ells)
    Q = ref.Q
    c3 = ref.c_lower / comp.C * ell ** (-Q)
    c4 = ref.c_upper * comp.C * ell ** Q
    c3e, c4e = test.constants_for(Q)
    passed = c3 <= c3e * (1 + tolerance) and c4e <= c4 * (1 + tolerance)
    details = {"comparability_witness": comp.witness,
               "ell_eta_phi": ells[0].to_dict(), "ell_eta_psi": ells[1].to_dict(),
               "reference_fit": ref.to_dict(), "test_fit": test.to_dict(),
               "centers": used}
    return ChainVerdict(comp.C, ell, Q, ref.c_lower, ref.c_upper, c3, c4, c3e, c4e,
                        test.Q, tolerance, passed, details)
