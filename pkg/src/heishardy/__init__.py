"""Numerical toolkit for Hardy inequalities with boundary-distance weights on the Heisenberg group."""
__version__ = "0.1.0"

from .heis_core import (  # noqa: E402
    ScalarField, bracket, commutator_check, dilate, frame_at, group_compose, horizontal_gradient, inverse,
    lam_matrix, left_translate_field,
)
from .metrics import (  # noqa: E402
    SolverConfig, bilipschitz_scan, cc_distance, cc_distance_to_set, kaplan_distance, kaplan_gauge,
    reduced_distance,
)
from .domains import (  # noqa: E402
    HalfSpace, Polytope, WeightSpec, characteristic_point, cube, hardy_weight, load_polytope, nearest_facet,
    random_polytope, simplex, slab, weight_identity_check,
)
from .quadrature import Box, QuadratureSpec, integrate, make_bump, make_separable  # noqa: E402
from .hardy import (  # noqa: E402
    QuotientReport, boundary_sign_terms, c_alpha, evaluate_quotient, evaluate_quotient_l2, jensen_split,
    optimal_alpha, polytope_interface_audit, sharp_constant, superadditivity_gap, verify_translation_reduction,
)
