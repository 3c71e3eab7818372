"""Approximate counting and near-uniform sampling of CSP solutions.

Counts satisfying assignments of general constraint satisfaction problems
deterministically, and samples them near-uniformly, via guiding partial
assignments, truncated coupling decision trees, and certified linear-program
feasibility; includes a brute-force oracle for desk-scale verification.
"""

from .depgraph import (
    LineGraph,
    Tree23,
    build_line_graph,
    enumerate_23_trees,
    extract_23_tree,
    frozen_components,
    is_tree23,
)
from .errors import (
    CspcountError,
    InternalError,
    ParseError,
    RegimeError,
    ResourceError,
    UnsatError,
)
from .formats import detect_format, load_file, parse, serialize
from .guide import (
    GuideResult,
    check_event_bound,
    derandomized_guide,
    greedy_randomized,
    potential_refined,
    potential_simple,
    verify_guide_invariants,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .marginal import (
    MarginalEstimator,
    RatioGrid,
    RatioInterval,
    build_tree,
    certify_ratio,
    estimate_marginal,
    leaf_counts,
    leaf_ratio,
)
from .model import (
    Caps,
    Constraint,
    CSPInstance,
    DEFAULT_CAPS,
    Params,
    PartialAssignment,
    check_conditions,
    compute_eta,
    cond_violation_prob,
    default_params,
)
from .oracle import (
    CouplingDistribution,
    brute_count,
    brute_coupling,
    brute_marginal,
    brute_sample,
    maximal_coupling,
)
from .pipeline import (
    CountResult,
    SampleResult,
    Sampler,
    count_approx,
    count_residual_exact,
    moser_tardos,
    sample_approx,
)
from .verify import verify_instance

__version__ = "0.1.0"

__all__ = [
    "Caps",
    "Constraint",
    "CSPInstance",
    "CouplingDistribution",
    "CountResult",
    "CspcountError",
    "DEFAULT_CAPS",
    "GuideResult",
    "InternalError",
    "KERNEL_BACKEND",
    "LineGraph",
    "MarginalEstimator",
    "Params",
    "ParseError",
    "PartialAssignment",
    "RatioGrid",
    "RatioInterval",
    "RegimeError",
    "ResourceError",
    "SampleResult",
    "Sampler",
    "Tree23",
    "UnsatError",
    "brute_count",
    "brute_coupling",
    "brute_marginal",
    "brute_sample",
    "build_line_graph",
    "build_tree",
    "certify_ratio",
    "check_conditions",
    "check_event_bound",
    "compute_eta",
    "cond_violation_prob",
    "count_approx",
    "count_residual_exact",
    "default_params",
    "derandomized_guide",
    "detect_format",
    "enumerate_23_trees",
    "estimate_marginal",
    "extract_23_tree",
    "frozen_components",
    "greedy_randomized",
    "is_tree23",
    "leaf_counts",
    "leaf_ratio",
    "load_file",
    "maximal_coupling",
    "moser_tardos",
    "parse",
    "potential_refined",
    "potential_simple",
    "sample_approx",
    "serialize",
    "verify_guide_invariants",
    "verify_instance",
]
