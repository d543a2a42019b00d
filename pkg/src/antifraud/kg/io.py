"""World and profile file formats: versioned, stable-field-order JSON."""

from __future__ import annotations

import json
from pathlib import Path

from .types import Entity, KGError, PersonalProfile, Relation, Triplet, World

WORLD_FORMAT_VERSION = 1
PROFILES_FORMAT_VERSION = 1


def world_to_dict(world: World) -> dict:
    return {
        "format_version": WORLD_FORMAT_VERSION,
        "kind": "world",
        "rng_seed": world.rng_seed,
        "config": world.config,
        "relations": [
            {
                "id": r.id,
                "name": r.name,
                "template": r.template,
                "kind": r.kind,
                "inverse_id": r.inverse_id,
            }
            for r in world.relations
        ],
        "entities": [
            {
                "id": e.id,
                "name": e.name,
                "category": e.category,
                "position": list(e.position) if e.position is not None else None,
                "poi_type": e.poi_type,
            }
            for e in world.entities
        ],
        "triplets": [
            {"head": t.head, "relation": t.relation, "tail": t.tail, "freq": t.freq}
            for t in world.triplets
        ],
    }


def world_from_dict(doc: dict) -> World:
    if doc.get("kind") != "world":
        raise KGError(f"not a world document (kind={doc.get('kind')!r})")
    if doc.get("format_version") != WORLD_FORMAT_VERSION:
        raise KGError(f"unsupported world format_version {doc.get('format_version')!r}")
    relations = [
        Relation(
            id=r["id"],
            name=r["name"],
            template=r["template"],
            kind=r["kind"],
            inverse_id=r["inverse_id"],
        )
        for r in doc["relations"]
    ]
    entities = [
        Entity(
            id=e["id"],
            name=e["name"],
            category=e["category"],
            position=tuple(e["position"]) if e["position"] is not None else None,
            poi_type=e["poi_type"],
        )
        for e in doc["entities"]
    ]
    triplets = [
        Triplet(head=t["head"], relation=t["relation"], tail=t["tail"], freq=t["freq"])
        for t in doc["triplets"]
    ]
    return World(
        relations=relations,
        entities=entities,
        triplets=triplets,
        rng_seed=doc["rng_seed"],
        config=doc.get("config", {}),
    )


def save_world(world: World, path: str | Path) -> None:
    Path(path).write_text(json.dumps(world_to_dict(world), indent=1), encoding="utf-8")


def load_world(path: str | Path) -> World:
    return world_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def profiles_to_dict(profiles: list[PersonalProfile], world_seed: int | None = None) -> dict:
    return {
        "format_version": PROFILES_FORMAT_VERSION,
        "kind": "profiles",
        "world_seed": world_seed,
        "profiles": [
            {"applicant_id": p.applicant_id, "items": dict(p.items)} for p in profiles
        ],
    }


def profiles_from_dict(doc: dict) -> list[PersonalProfile]:
    if doc.get("kind") != "profiles":
        raise KGError(f"not a profiles document (kind={doc.get('kind')!r})")
    if doc.get("format_version") != PROFILES_FORMAT_VERSION:
        raise KGError(f"unsupported profiles format_version {doc.get('format_version')!r}")
    return [
        PersonalProfile(applicant_id=p["applicant_id"], items=dict(p["items"]))
        for p in doc["profiles"]
    ]


def save_profiles(profiles: list[PersonalProfile], path: str | Path, world_seed: int | None = None) -> None:
    Path(path).write_text(json.dumps(profiles_to_dict(profiles, world_seed), indent=1), encoding="utf-8")


def load_profiles(path: str | Path) -> list[PersonalProfile]:
    return profiles_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
