"""
Cooperation package initialization.
"""
from cooperation.candidates import (
    CandidateStep,
    CooperationSet,
    W0Estimate,
    estimate_W0,
    estimate_lipschitz,
    project,
    projected_gradient_candidate,
)
from cooperation.objectives import (
    OBJECTIVES,
    CircleFormationObjective,
    ConsensusObjective,
    CooperationObjective,
    CoopVector,
    LeaderFollowObjective,
    PseudoHuberTargetObjective,
    SatellitePhaseObjective,
    assemble_hessian,
    build_objective,
    eval_coop_cost,
    eval_coop_gradient,
    flatten,
    pack,
    pseudo_huber,
    shift_invariance_gap,
    split,
    unpack,
)
from cooperation.penalties import ChangePenalty, Scaling, eval_change_penalty

__all__ = [
    "CandidateStep",
    "CooperationSet",
    "W0Estimate",
    "estimate_W0",
    "estimate_lipschitz",
    "project",
    "projected_gradient_candidate",
    "OBJECTIVES",
    "CircleFormationObjective",
    "ConsensusObjective",
    "CooperationObjective",
    "CoopVector",
    "LeaderFollowObjective",
    "PseudoHuberTargetObjective",
    "SatellitePhaseObjective",
    "assemble_hessian",
    "build_objective",
    "eval_coop_cost",
    "eval_coop_gradient",
    "flatten",
    "pack",
    "pseudo_huber",
    "shift_invariance_gap",
    "split",
    "unpack",
    "ChangePenalty",
    "Scaling",
    "eval_change_penalty",
]
