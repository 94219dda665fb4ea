"""Joint event and temporal-relation extraction.

Local scorers give per-token event scores and per-pair relation scores;
an exact 0-1 ILP assigns every label at once under event-relation
consistency and transitivity; training runs a cross-entropy pipeline
stage followed by a structured hinge stage.
"""

from .algebra import compose, composition_table, inverse
from .core import (
    CandidateSet,
    ContractViolation,
    Document,
    EventLabel,
    JointAssignment,
    RelationLabel,
    Token,
    generate_candidates,
    gold_assignment,
    hamming_distance,
)
from .inference import brute_force_map, build_ilp, check_validity, solve_exact, solve_local

__all__ = [
    "CandidateSet",
    "ContractViolation",
    "Document",
    "EventLabel",
    "JointAssignment",
    "RelationLabel",
    "Token",
    "brute_force_map",
    "build_ilp",
    "check_validity",
    "compose",
    "composition_table",
    "generate_candidates",
    "gold_assignment",
    "hamming_distance",
    "inverse",
    "solve_exact",
    "solve_local",
]
