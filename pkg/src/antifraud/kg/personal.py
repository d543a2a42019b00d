"""Per-applicant KG extraction and the spread-degree statistic."""

from __future__ import annotations

from .types import (
    RELATION_KIND_ADJACENCY,
    RELATION_KIND_ATTRIBUTE,
    KGError,
    PersonalProfile,
    Triplet,
    World,
)


def personal_kg(world: World, profile: PersonalProfile) -> list[Triplet]:
    """All triplets headed by a profile entity (askable), plus adjacency and
    attribute triplets among the tails of those (context)."""
    item_ids = set(profile.entity_ids())
    for eid in item_ids:
        if eid not in {e.id for e in world.entities}:
            raise KGError(f"profile references unknown entity {eid}")
    askable = [t for t in world.triplets if t.head in item_ids]
    tails = {t.tail for t in askable}
    context = [
        t
        for t in world.triplets
        if t.head in tails
        and t.tail in tails
        and t.head not in item_ids
        and world.triplet_kind(t) in (RELATION_KIND_ADJACENCY, RELATION_KIND_ATTRIBUTE)
    ]
    return askable + context


def askable_triplets(world: World, profile: PersonalProfile, kg: list[Triplet]) -> list[Triplet]:
    item_ids = set(profile.entity_ids())
    return [t for t in kg if t.head in item_ids]


def spread_degree(world: World, answer_entity: int, kg: list[Triplet], items=None) -> float:
    """Mean triplet frequency over askable triplets whose tail is the answer
    entity; multiple keywords for one answer node average out.

    `items` narrows the askable heads to the profile's entities; without it any
    personal entity counts as an askable head, which only differs on worlds
    where a foreign personal entity slips into the context set.
    """
    if items is None:
        is_head = lambda eid: world.entity(eid).is_personal
    else:
        item_set = set(items)
        is_head = lambda eid: eid in item_set
    freqs = [t.freq for t in kg if t.tail == answer_entity and is_head(t.head)]
    if not freqs:
        raise KGError(f"entity {answer_entity} is not the tail of any askable triplet")
    return sum(freqs) / len(freqs)
