"""Finite-sample verification of intrinsically quasi-symmetric sections."""

__version__ = "0.1.0"

from .metric_core import (  # noqa: F401
    Ball,
    DomainError,
    FiniteMetricSpace,
    QuotientStructure,
    SectionSample,
    ball_points,
    fiber_distance,
    fiber_distances,
    project_ball,
    pushforward_ball_measure,
    structure_from_document,
    validate_metric,
)
from .model_spaces import (  # noqa: F401
    SectionFamilySpec,
    build_euclidean_foliation,
    build_heisenberg,
    generate_section,
)
from .section_analysis import (  # noqa: F401
    MonotoneModulus,
    PowerModulus,
    check_quasi_conformal,
    check_quasi_symmetry,
    compute_ell_eta,
    eccentricity,
    enumerate_triples,
    fit_eta,
    minimal_holder_constant,
    minimal_lipschitz_constant,
)
from .regularity import (  # noqa: F401
    PreconditionError,
    check_ball_inclusion,
    check_theorem_chain,
    comparability_constant,
    fit_regularity,
)
