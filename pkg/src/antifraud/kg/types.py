"""Core knowledge-graph data model: relations, entities, triplets, worlds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

# Personal-information categories, in canonical order. The order is load-bearing:
# masks, feature one-hots and action indices all use it.
CATEGORIES = ("School", "Company", "Residence", "BirthPlace")

POI_CATEGORY = "POI"
VALUE_CATEGORY = "AttributeValue"

RELATION_KIND_POI = "poi"
RELATION_KIND_ADJACENCY = "adjacency"
RELATION_KIND_ATTRIBUTE = "attribute"

ABSTAIN_TEXT = "I am not quite clear."


class KGError(ValueError):
    """Raised on malformed or inconsistent KG structures."""


@dataclass(frozen=True)
class Relation:
    id: int
    name: str
    template: str  # question text with a {head} placeholder
    kind: str  # poi | adjacency | attribute
    inverse_id: int  # adjacency relations pair up; self-inverse allowed

    def __post_init__(self):
        if self.kind not in (RELATION_KIND_POI, RELATION_KIND_ADJACENCY, RELATION_KIND_ATTRIBUTE):
            raise KGError(f"unknown relation kind {self.kind!r}")
        if "{head}" not in self.template:
            raise KGError(f"relation {self.name!r} template lacks {{head}} placeholder")


@dataclass(frozen=True)
class Entity:
    id: int
    name: str
    category: str  # School | Company | Residence | BirthPlace | POI | AttributeValue
    position: Optional[tuple[float, float]] = None  # meters; POI and personal entities only
    poi_type: Optional[str] = None  # relation name of the POI type, POI entities only

    def __post_init__(self):
        if self.category in CATEGORIES or self.category == POI_CATEGORY:
            if self.position is None:
                raise KGError(f"entity {self.name!r} ({self.category}) requires a position")

    @property
    def is_personal(self) -> bool:
        return self.category in CATEGORIES


@dataclass(frozen=True)
class Triplet:
    head: int
    relation: int
    tail: int
    freq: int  # search-result-count proxy for spread degree

    def __post_init__(self):
        if self.head == self.tail:
            raise KGError(f"self-loop triplet on entity {self.head}")
        if self.freq < 1:
            raise KGError(f"triplet freq must be >= 1, got {self.freq}")

    def key(self) -> tuple[int, int, int]:
        return (self.head, self.relation, self.tail)


@dataclass
class World:
    relations: list[Relation]
    entities: list[Entity]
    triplets: list[Triplet]
    rng_seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self._relation_by_id = {r.id: r for r in self.relations}
        self._entity_by_id = {e.id: e for e in self.entities}
        if len(self._relation_by_id) != len(self.relations):
            raise KGError("duplicate relation ids")
        if len(self._entity_by_id) != len(self.entities):
            raise KGError("duplicate entity ids")
        for t in self.triplets:
            if t.relation not in self._relation_by_id:
                raise KGError(f"triplet references unknown relation {t.relation}")
            if t.head not in self._entity_by_id or t.tail not in self._entity_by_id:
                raise KGError(f"triplet references unknown entity: {t.key()}")

    def relation(self, rid: int) -> Relation:
        return self._relation_by_id[rid]

    def entity(self, eid: int) -> Entity:
        return self._entity_by_id[eid]

    def entities_in_category(self, category: str) -> list[Entity]:
        return [e for e in self.entities if e.category == category]

    def head_triplets(self, eid: int) -> list[Triplet]:
        return [t for t in self.triplets if t.head == eid]

    def triplet_kind(self, t: Triplet) -> str:
        return self.relation(t.relation).kind


@dataclass(frozen=True)
class PersonalProfile:
    applicant_id: int
    items: dict[str, int]  # category -> entity id

    def __post_init__(self):
        if tuple(sorted(self.items)) != tuple(sorted(CATEGORIES)):
            raise KGError(f"profile must have exactly one item per category, got {sorted(self.items)}")

    def entity_ids(self) -> list[int]:
        return [self.items[c] for c in CATEGORIES]


@dataclass(frozen=True)
class Question:
    triplet: Triplet
    text: str
    options: dict[str, str]  # labels A-D; D is always the abstain option
    correct_label: str  # one of A-C

    def __post_init__(self):
        if sorted(self.options) != ["A", "B", "C", "D"]:
            raise KGError("question must have options A-D")
        if self.options["D"] != ABSTAIN_TEXT:
            raise KGError("option D must be the literal abstain option")
        if self.correct_label not in ("A", "B", "C"):
            raise KGError("correct label must be one of A-C")
        abc = [self.options[k] for k in ("A", "B", "C")]
        if len(set(abc)) != 3:
            raise KGError("options A-C must be pairwise distinct")
