"""Verification and synthesis for k-step obviously strategyproof mechanisms."""

from .cmon import (
    ClassPartition,
    EquivalenceReport,
    NegativeCycleWitness,
    OspGraph,
    ProfileClass,
    StickyResult,
    SynthesisResult,
    build_k_osp_graph,
    build_profile_classes,
    has_negative_cycle,
    k_vs_infinity_equivalence,
    sticky_edges_check,
    synthesize_payments,
)
from .fixtures import appendix_b, fixture_names, materialize
from .greedy import (
    GreedyResult,
    NeedAnswer,
    PSystem,
    QueryRecord,
    SearchResult,
    TwoWayReport,
    approx_ratio,
    as_cost_tree,
    compress,
    english_auction_tree,
    extract_tree,
    forward_greedy_solution,
    is_k_limitable,
    is_revealable,
    is_two_way_greedy,
    rank_quotient,
    removable,
    reverse_greedy_solution,
    run_two_way_greedy,
    search_two_way_greedy,
    serialize,
    surviving_solutions,
    unremovable,
)
from .io import (
    MechanismFormatError,
    dump_mechanism,
    dumps_mechanism,
    graph_to_data,
    instance_data_for,
    instance_to_data,
    load_instance,
    load_mechanism,
    loads_instance,
    loads_mechanism,
    mechanism_to_data,
    parse_horizon,
    render_csv,
    render_report,
    write_report,
)
from .model import (
    ImplementationTree,
    LeafNode,
    MechanismError,
    QueryNode,
    equivalence_class,
    first_divergence,
    k_step_neighborhood,
    leaf_of,
    normalize_horizon,
    query_count,
    random_k_limited_tree,
    scale_guard,
    tree_from_nested,
    validate_tree,
)
from .rational import Rat, format_rational, parse_rational
from .verifier import (
    AlmostOrderedResult,
    CheckResult,
    Constraint,
    KLimitedResult,
    PoolingFinding,
    QueryClass,
    TaxationFinding,
    check_k_step_osp,
    classify_query,
    commitment_types,
    is_almost_ordered,
    is_k_limited,
    require_binary_outcomes,
    reveal_at_k2,
    strong_ineffectiveness_check,
    taxation_diagnostics,
)

__all__ = [
    "AlmostOrderedResult",
    "CheckResult",
    "ClassPartition",
    "Constraint",
    "EquivalenceReport",
    "GreedyResult",
    "ImplementationTree",
    "KLimitedResult",
    "LeafNode",
    "MechanismError",
    "MechanismFormatError",
    "NeedAnswer",
    "NegativeCycleWitness",
    "OspGraph",
    "PSystem",
    "PoolingFinding",
    "ProfileClass",
    "QueryClass",
    "QueryNode",
    "QueryRecord",
    "Rat",
    "SearchResult",
    "StickyResult",
    "SynthesisResult",
    "TaxationFinding",
    "TwoWayReport",
    "approx_ratio",
    "as_cost_tree",
    "build_k_osp_graph",
    "build_profile_classes",
    "check_k_step_osp",
    "classify_query",
    "commitment_types",
    "compress",
    "dump_mechanism",
    "dumps_mechanism",
    "english_auction_tree",
    "equivalence_class",
    "extract_tree",
    "first_divergence",
    "appendix_b",
    "fixture_names",
    "format_rational",
    "forward_greedy_solution",
    "graph_to_data",
    "has_negative_cycle",
    "instance_data_for",
    "instance_to_data",
    "is_almost_ordered",
    "is_k_limitable",
    "is_k_limited",
    "is_revealable",
    "is_two_way_greedy",
    "k_step_neighborhood",
    "k_vs_infinity_equivalence",
    "leaf_of",
    "load_instance",
    "load_mechanism",
    "loads_instance",
    "loads_mechanism",
    "materialize",
    "mechanism_to_data",
    "normalize_horizon",
    "parse_horizon",
    "parse_rational",
    "query_count",
    "random_k_limited_tree",
    "rank_quotient",
    "removable",
    "render_csv",
    "render_report",
    "require_binary_outcomes",
    "reveal_at_k2",
    "reverse_greedy_solution",
    "run_two_way_greedy",
    "scale_guard",
    "search_two_way_greedy",
    "serialize",
    "sticky_edges_check",
    "strong_ineffectiveness_check",
    "surviving_solutions",
    "synthesize_payments",
    "taxation_diagnostics",
    "tree_from_nested",
    "unremovable",
    "validate_tree",
    "write_report",
]

__version__ = "0.1.0"
