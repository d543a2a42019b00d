"""Heuristic applicant simulator.

Identity and fake items are sampled first, then per-triplet knowledge bits are
drawn from spread-degree curves and calibrated so that no triangle of facts is
known on exactly two edges (knowing two sides of a closed loop implies the
third).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dialogue import spread_bin
from .kg.personal import personal_kg
from .kg.types import ABSTAIN_TEXT, CATEGORIES, KGError, PersonalProfile, Question, Triplet, World
from .policy import FRAUD, NON_FRAUD

N_BINS = 8
CONTEXT = "Context"


class SimulatorError(KGError):
    pass


@dataclass(frozen=True)
class KnowledgeCurves:
    """P(know | log10-freq bin) for genuine and fake governing items."""

    genuine: tuple[float, ...]
    fake: tuple[float, ...]

    def __post_init__(self):
        if len(self.genuine) != N_BINS or len(self.fake) != N_BINS:
            raise SimulatorError(f"curves must have {N_BINS} bins")
        for name, curve in (("genuine", self.genuine), ("fake", self.fake)):
            if any(not (0.0 <= v <= 1.0) for v in curve):
                raise SimulatorError(f"{name} curve values must lie in [0, 1]")
            if any(curve[i] > curve[i + 1] for i in range(N_BINS - 1)):
                raise SimulatorError(f"{name} curve must be monotone nondecreasing")
        if any(g < f for g, f in zip(self.genuine, self.fake)):
            raise SimulatorError("genuine curve must dominate the fake curve in every bin")

    @classmethod
    def default(cls) -> "KnowledgeCurves":
        genuine = tuple(min(0.95, max(0.0, 0.35 + 0.09 * b)) for b in range(N_BINS))
        fake = tuple(min(0.70, max(0.0, 0.02 + 0.065 * b)) for b in range(N_BINS))
        return cls(genuine=genuine, fake=fake)


@dataclass
class SimConfig:
    p_fraud: float = 0.5
    fake_count_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    item_weights: dict[str, float] = field(
        default_factory=lambda: {"School": 2.0, "Company": 2.0, "Residence": 1.0, "BirthPlace": 1.0}
    )
    curves: KnowledgeCurves = field(default_factory=KnowledgeCurves.default)

    def __post_init__(self):
        if not (0.0 <= self.p_fraud <= 1.0):
            raise SimulatorError("p_fraud must lie in [0, 1]")
        if abs(sum(self.fake_count_probs) - 1.0) > 1e-9:
            raise SimulatorError("fake_count_probs must sum to 1")
        for c in CATEGORIES:
            if self.item_weights.get(c, 0.0) <= 0.0:
                raise SimulatorError(f"item weight for {c} must be positive")


@dataclass
class SimApplicant:
    profile: PersonalProfile
    identity: str  # Fraud | NonFraud
    fake_items: frozenset[str]
    kg: list[Triplet]
    knowledge: dict[tuple[int, int, int], bool]

    def item_truth(self, category: str) -> str:
        return FRAUD if category in self.fake_items else NON_FRAUD

    def knows(self, triplet: Triplet) -> bool:
        key = triplet.key()
        if key not in self.knowledge:
            raise SimulatorError(f"triplet {key} is not in this applicant's personal KG")
        return self.knowledge[key]


@dataclass(frozen=True)
class AnswerResult:
    label: str  # chosen option label; D abstains
    correct: bool

    @property
    def abstained(self) -> bool:
        return self.label == "D"


def _tails_by_item(world: World, profile: PersonalProfile, kg: list[Triplet]) -> dict[str, set[int]]:
    out = {}
    for c in CATEGORIES:
        eid = profile.items[c]
        out[c] = {t.tail for t in kg if t.head == eid}
    return out


def _supporters(
    world: World, profile: PersonalProfile, tails: dict[str, set[int]], triplet: Triplet
) -> list[str]:
    both = [c for c in CATEGORIES if triplet.head in tails[c] and triplet.tail in tails[c]]
    if both:
        return both
    return [c for c in CATEGORIES if triplet.head in tails[c] or triplet.tail in tails[c]]


def governing_item(
    world: World, profile: PersonalProfile, kg: list[Triplet], triplet: Triplet
) -> str:
    """The category whose claim a triplet verifies.

    Askable triplets map to their head's category. Context triplets map to the
    geometrically nearest supporting item.
    """
    items = set(profile.entity_ids())
    if triplet.head in items:
        return world.entity(triplet.head).category
    tails = _tails_by_item(world, profile, kg)
    supporters = _supporters(world, profile, tails, triplet)
    if not supporters:
        raise SimulatorError(f"context triplet {triplet.key()} has no supporting item")
    if len(supporters) == 1:
        return supporters[0]
    positions = [
        world.entity(e).position
        for e in (triplet.head, triplet.tail)
        if world.entity(e).position is not None
    ]
    if not positions:
        return supporters[0]
    mid = (
        sum(p[0] for p in positions) / len(positions),
        sum(p[1] for p in positions) / len(positions),
    )
    def dist(c: str) -> float:
        pos = world.entity(profile.items[c]).position
        return math.hypot(pos[0] - mid[0], pos[1] - mid[1])
    return min(supporters, key=lambda c: (dist(c), CATEGORIES.index(c)))


def _is_fake_fact(
    world: World,
    profile: PersonalProfile,
    tails: dict[str, set[int]],
    triplet: Triplet,
    fake_items: frozenset[str],
) -> bool:
    """A fact is sampled from the fake curve only when every item it supports
    is fake: a real-world fact does not become unknown because one claim is."""
    items = set(profile.entity_ids())
    if triplet.head in items:
        return world.entity(triplet.head).category in fake_items
    supporters = _supporters(world, profile, tails, triplet)
    return bool(supporters) and all(c in fake_items for c in supporters)


def calibrate(
    knowledge: dict[tuple[int, int, int], bool], kg: list[Triplet]
) -> dict[tuple[int, int, int], bool]:
    """Closed-loop fixpoint: any triangle (edges taken undirected, parallel
    triplets collapsed) with exactly two known edges gets its third edge
    upgraded to known, repeatedly. Upgrades only, so the fixpoint is unique and
    independent of visit order."""
    parallel: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for t in kg:
        edge = (min(t.head, t.tail), max(t.head, t.tail))
        parallel.setdefault(edge, []).append(t.key())
    known = {edge for edge, keys in parallel.items() if any(knowledge[k] for k in keys)}
    neighbors: dict[int, set[int]] = {}
    for (u, v) in parallel:
        neighbors.setdefault(u, set()).add(v)
        neighbors.setdefault(v, set()).add(u)

    changed = True
    while changed:
        changed = False
        for (u, v) in parallel:
            for w in neighbors[u] & neighbors[v]:
                e1, e2, e3 = (
                    (min(u, v), max(u, v)),
                    (min(u, w), max(u, w)),
                    (min(v, w), max(v, w)),
                )
                tri = [e1, e2, e3]
                n_known = sum(e in known for e in tri)
                if n_known == 2:
                    for e in tri:
                        if e not in known:
                            known.add(e)
                            changed = True
    out = dict(knowledge)
    for edge in known:
        for key in parallel[edge]:
            out[key] = True
    return out


class ApplicantSampler:
    """Per-profile sampler with the KG, supporter sets, freq bins and triangle
    structure precomputed once; sampling a fresh applicant is then cheap."""

    def __init__(self, world: World, profile: PersonalProfile, cfg: SimConfig):
        self.world = world
        self.profile = profile
        self.cfg = cfg
        self.kg = personal_kg(world, profile)
        tails = _tails_by_item(world, profile, self.kg)
        items = set(profile.entity_ids())
        # Per triplet: the categories whose fakeness governs its curve.
        self._governors: list[tuple[str, ...]] = []
        for t in self.kg:
            if t.head in items:
                self._governors.append((world.entity(t.head).category,))
            else:
                self._governors.append(tuple(_supporters(world, profile, tails, t)))
        self._bins = np.array([spread_bin(t.freq) for t in self.kg], dtype=np.int64)
        self._keys = [t.key() for t in self.kg]

        # Triangle closure plan over collapsed undirected edges.
        edge_ids: dict[tuple[int, int], int] = {}
        self._triplet_edge = np.empty(len(self.kg), dtype=np.int64)
        for i, t in enumerate(self.kg):
            edge = (min(t.head, t.tail), max(t.head, t.tail))
            self._triplet_edge[i] = edge_ids.setdefault(edge, len(edge_ids))
        self._n_edges = len(edge_ids)
        neighbors: dict[int, set[int]] = {}
        for (u, v) in edge_ids:
            neighbors.setdefault(u, set()).add(v)
            neighbors.setdefault(v, set()).add(u)
        triangles = set()
        for (u, v), eid in edge_ids.items():
            for w in neighbors[u] & neighbors[v]:
                e2 = edge_ids[(min(u, w), max(u, w))]
                e3 = edge_ids[(min(v, w), max(v, w))]
                triangles.add(tuple(sorted((eid, e2, e3))))
        self._triangles = (
            np.array(sorted(triangles), dtype=np.int64)
            if triangles
            else np.empty((0, 3), dtype=np.int64)
        )

    def _sample_fakes(self, rng: np.random.Generator) -> frozenset[str]:
        cfg = self.cfg
        count = int(rng.choice(4, p=cfg.fake_count_probs)) + 1
        remaining = list(CATEGORIES)
        picked = []
        for _ in range(count):
            weights = np.array([cfg.item_weights[c] for c in remaining])
            weights = weights / weights.sum()
            choice = remaining[int(rng.choice(len(remaining), p=weights))]
            picked.append(choice)
            remaining.remove(choice)
        return frozenset(picked)

    def _close_triangles(self, bits: np.ndarray) -> np.ndarray:
        known = np.zeros(self._n_edges, dtype=bool)
        np.logical_or.at(known, self._triplet_edge, bits)
        tri = self._triangles
        if tri.size:
            while True:
                two_known = known[tri].sum(axis=1) == 2
                if not two_known.any():
                    break
                known[tri[two_known].reshape(-1)] = True
        return bits | known[self._triplet_edge]

    def sample(self, seed: int) -> SimApplicant:
        cfg = self.cfg
        rng = np.random.Generator(np.random.PCG64(seed))
        identity = FRAUD if rng.random() < cfg.p_fraud else NON_FRAUD
        fake_items = self._sample_fakes(rng) if identity == FRAUD else frozenset()
        probs = np.empty(len(self.kg))
        for i, governors in enumerate(self._governors):
            fake = bool(governors) and all(c in fake_items for c in governors)
            curve = cfg.curves.fake if fake else cfg.curves.genuine
            probs[i] = curve[self._bins[i]]
        draws = rng.random(len(self.kg))
        bits = self._close_triangles(draws < probs)
        knowledge = {key: bool(b) for key, b in zip(self._keys, bits)}
        return SimApplicant(
            profile=self.profile,
            identity=identity,
            fake_items=fake_items,
            kg=self.kg,
            knowledge=knowledge,
        )


def sample_applicant(
    world: World, profile: PersonalProfile, cfg: SimConfig, seed: int
) -> SimApplicant:
    """Sampling-and-calibration: identity, fake items (School/Company twice as
    likely), independent per-triplet knowledge bits, then triangle closure."""
    return ApplicantSampler(world, profile, cfg).sample(seed)


def answer(applicant: SimApplicant, q: Question) -> AnswerResult:
    """Known fact: the correct option. Unknown: the literal abstain option D.
    Never a wrong A-C choice."""
    if applicant.knows(q.triplet):
        return AnswerResult(label=q.correct_label, correct=True)
    return AnswerResult(label="D", correct=False)
