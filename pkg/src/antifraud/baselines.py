"""Deterministic-policy rule systems: Flat Rule and Hierarchical Rule.

Hierarchical Rule doubles as the pre-training teacher for the hierarchical
neural variants; Flat Rule teaches the flat one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dialogue import DialogueGraph
from .episodes import Actor, Trajectory, run_episode
from .kg.types import CATEGORIES, Triplet
from .policy import FRAUD, N_PERSONAL, NON_FRAUD

FLAT_RULE_QUESTIONS = 10


class RuleFlatActor(Actor):
    """Asks 10 distinct random questions (all, if fewer exist), then votes:
    Fraud only when strictly more questions were missed than answered."""

    hierarchical = False
    mp_min_questions = FLAT_RULE_QUESTIONS

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def flat_action(self, g, ep, pairs, mask):
        asks = np.flatnonzero(mask[: len(pairs)])
        if ep.questions_total < FLAT_RULE_QUESTIONS and asks.size:
            return int(asks[self.rng.integers(0, asks.size)]), None
        n_crt = sum(g.n_correct)
        n_wrg = sum(g.n_incorrect)
        return len(pairs) + (0 if n_crt < n_wrg else 1), None


class RuleHierarchicalActor(Actor):
    """Random worker order without repetition; each worker asks random
    unexplored nodes until |n_crt - n_wrg| >= 3 or it runs out, then votes
    n_crt < n_wrg; any Fraud verdict ends the dialogue as Fraud."""

    hierarchical = True

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def manager_action(self, g, ep, mask):
        if ep.any_fraud():
            return N_PERSONAL, None  # Fraud
        if ep.all_decided():
            return N_PERSONAL + 1, None  # NonFraud
        selectable = np.flatnonzero(mask[:N_PERSONAL])
        if not selectable.size:  # budget exhaustion under custom caps
            return N_PERSONAL + 1, None
        return int(selectable[self.rng.integers(0, selectable.size)]), None

    def worker_action(self, g, ep, p, mask):
        n_cands = len(g.candidates[p])
        asks = np.flatnonzero(mask[:n_cands])
        margin = abs(g.n_correct[p] - g.n_incorrect[p])
        must_decide = (
            margin >= 3
            or not asks.size
            or g.worker_turns[p] >= ep.max_worker_turns
        )
        if must_decide:
            fraud = g.n_correct[p] < g.n_incorrect[p]
            return n_cands + (0 if fraud else 1), None
        return int(asks[self.rng.integers(0, asks.size)]), None


@dataclass
class RuleDecision:
    decision: str
    per_item_decisions: dict[str, Optional[str]]
    questions_asked: int
    transcript: list[tuple[Triplet, bool]] = field(default_factory=list)


def _to_rule_decision(traj: Trajectory) -> RuleDecision:
    return RuleDecision(
        decision=traj.decision,
        per_item_decisions=dict(traj.per_item_decisions),
        questions_asked=traj.questions_asked,
        transcript=list(traj.transcript),
    )


def flat_rule_episode(g: DialogueGraph, applicant, seed: int, max_system_turns: int = 40) -> RuleDecision:
    rng = np.random.Generator(np.random.PCG64(seed))
    traj = run_episode(
        RuleFlatActor(rng), g, applicant, "flat_rule", max_system_turns, record_features=False
    )
    return _to_rule_decision(traj)


def hierarchical_rule_episode(
    g: DialogueGraph, applicant, seed: int, max_system_turns: int = 40
) -> RuleDecision:
    rng = np.random.Generator(np.random.PCG64(seed))
    traj = run_episode(
        RuleHierarchicalActor(rng), g, applicant, "hier_rule", max_system_turns, record_features=False
    )
    return _to_rule_decision(traj)


def rule_actor_for(variant: str, rng: np.random.Generator) -> Actor:
    """The pre-training teacher for a neural variant: the rule system that
    shares its policy shape (flat teaches flat, hierarchical teaches hierarchical)."""
    if variant == "mp":
        return RuleFlatActor(rng)
    return RuleHierarchicalActor(rng)


def teacher_trajectory(
    g: DialogueGraph, applicant, variant: str, seed: int, max_system_turns: int = 40
) -> Trajectory:
    """One recorded rule episode, feature snapshots included, for supervised
    pre-training."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return run_episode(
        rule_actor_for(variant, rng), g, applicant, variant, max_system_turns, record_features=True
    )
