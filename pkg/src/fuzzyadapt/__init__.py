"""Fuzzy-requirements-driven self-adaptation engine.

Models contexts, tasks, and softgoals as fuzzy uncertain entities, derives
Mamdani rule sets from elicited weight matrices, and runs four adaptation
and evolution schemas (naive, optimized, gray-box, black-box) over
synthetic context traces.
"""

__version__ = "0.1.0"

from .adaptation_schemas import (  # noqa: F401
    AdaptationDecision,
    AdaptationEngine,
    KnowledgeBase,
    find_nearest,
    weighted_deviation,
)
from .domain_model import (  # noqa: F401
    MergedTaskGroup,
    SpaceBox,
    SystemModel,
    UncertainEntity,
    WeightedRelation,
    build_space,
    decode_merged_task,
    load_fixture,
    load_model,
)
from .fuzzy_core import (  # noqa: F401
    Flags,
    LinguisticVariable,
    MamdaniRule,
    MembershipFunction,
    TSRule,
    defuzzify_centroid,
    evaluate_mf,
    fuzzify,
    mamdani_infer,
    ts_infer,
)
from .rule_generation import (  # noqa: F401
    BoundaryMatrix,
    assign_consequent,
    boundary_matrix,
    generate_ruleset,
    numeric_map,
)
