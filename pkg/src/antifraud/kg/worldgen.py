"""Synthetic world generation.

Reproduces the construction rules of the production KG pipeline on synthetic
geometry: nearest-POI-per-type triplets within 1 km, bidirectional adjacency
triplets under 100 m, attribute triplets, and a log-uniform spread-degree
frequency on every triplet.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import vocab
from .types import (
    CATEGORIES,
    POI_CATEGORY,
    RELATION_KIND_ADJACENCY,
    RELATION_KIND_ATTRIBUTE,
    RELATION_KIND_POI,
    VALUE_CATEGORY,
    Entity,
    KGError,
    PersonalProfile,
    Relation,
    Triplet,
    World,
)

POI_DISTANCE_M = 1000.0  # nearest-POI rule: within one kilometer
ADJACENCY_DISTANCE_M = 100.0  # adjacency rule: strictly closer than 100 m


class WorldGenError(KGError):
    """Raised when generation cannot satisfy the world invariants."""


@dataclass
class WorldGenConfig:
    entities_per_category: int = 12
    extent_m: float = 12000.0
    poi_radius_m: float = 950.0
    min_poi_types: int = 4
    max_poi_types: int = 9
    max_poi_copies: int = 2
    cluster_fraction: float = 0.25
    cluster_radius_m: float = 80.0
    min_attributes: int = 2
    max_attributes: int = 3
    freq_min: int = 10
    freq_max: int = 10_000_000
    min_head_triplets: int = 4
    max_retries: int = 8

    def validate(self) -> None:
        if self.entities_per_category < 1:
            raise WorldGenError("entities_per_category must be >= 1")
        if not (0 < self.min_poi_types <= self.max_poi_types <= len(vocab.POI_TYPES)):
            raise WorldGenError("poi type bounds out of range")
        if not (0 <= self.min_attributes <= self.max_attributes):
            raise WorldGenError("attribute bounds out of range")
        if self.max_attributes > min(len(v) for v in vocab.CATEGORY_ATTRIBUTES.values()):
            raise WorldGenError("max_attributes exceeds per-category attribute vocabulary")
        if not (1 <= self.freq_min <= self.freq_max):
            raise WorldGenError("freq bounds must satisfy 1 <= freq_min <= freq_max")
        if self.max_retries < 0:
            raise WorldGenError("max_retries must be >= 0")
        # The mask rule needs >= 4 askable triplets per item; a config whose
        # densest placement cannot reach that is rejected up front.
        if self.max_poi_types + self.max_attributes < self.min_head_triplets:
            raise WorldGenError(
                "config cannot satisfy the minimum head-triplet count: "
                f"max_poi_types + max_attributes < {self.min_head_triplets}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class _Builder:
    def __init__(self, config: WorldGenConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.relations = vocab.default_relations()
        self.rel_by_name = {r.name: r for r in self.relations}
        self.entities: list[Entity] = []
        self.used_names: set[str] = set()
        self.value_entities: dict[str, int] = {}

    def unique_name(self, base: str) -> str:
        name = base
        serial = 2
        while name in self.used_names:
            name = f"{base} No.{serial}"
            serial += 1
        self.used_names.add(name)
        return name

    def add_entity(self, name: str, category: str, position=None, poi_type=None) -> int:
        eid = len(self.entities)
        self.entities.append(
            Entity(id=eid, name=name, category=category, position=position, poi_type=poi_type)
        )
        return eid

    def value_entity(self, value: str) -> int:
        if value not in self.value_entities:
            self.value_entities[value] = self.add_entity(self.unique_name(value), VALUE_CATEGORY)
        return self.value_entities[value]

    def place_personal_entities(self) -> list[int]:
        cfg = self.config
        ids = []
        for category in CATEGORIES:
            nouns = vocab.CATEGORY_NOUNS[category]
            for _ in range(cfg.entities_per_category):
                word = self.rng.choice(vocab.PLACE_WORDS)
                noun = nouns[int(self.rng.integers(0, len(nouns)))]
                xy = self.rng.uniform(0.0, cfg.extent_m, size=2)
                pos = (float(xy[0]), float(xy[1]))
                ids.append(self.add_entity(self.unique_name(f"{word} {noun}"), category, pos))
        return ids

    def place_pois(self, personal_ids: list[int]) -> list[int]:
        cfg = self.config
        poi_ids: list[int] = []
        phrase_by_type = dict(vocab.POI_TYPES)
        for pid in personal_ids:
            center = self.entities[pid].position
            disc_pois: list[int] = []
            n_types = int(self.rng.integers(cfg.min_poi_types, cfg.max_poi_types + 1))
            type_idx = self.rng.choice(len(vocab.POI_TYPES), size=n_types, replace=False)
            for ti in sorted(int(i) for i in type_idx):
                poi_type = vocab.POI_TYPES[ti][0]
                copies = int(self.rng.integers(1, cfg.max_poi_copies + 1))
                for _ in range(copies):
                    if disc_pois and self.rng.random() < cfg.cluster_fraction:
                        # Commercial-street effect: drop some POIs right next to an
                        # existing one so the <100 m adjacency rule has material.
                        anchor = self.entities[disc_pois[int(self.rng.integers(0, len(disc_pois)))]]
                        theta = self.rng.uniform(0.0, 2.0 * math.pi)
                        radius = self.rng.uniform(10.0, cfg.cluster_radius_m)
                        origin = anchor.position
                    else:
                        theta = self.rng.uniform(0.0, 2.0 * math.pi)
                        radius = cfg.poi_radius_m * math.sqrt(self.rng.random())
                        origin = center
                    pos = (
                        float(origin[0] + radius * math.cos(theta)),
                        float(origin[1] + radius * math.sin(theta)),
                    )
                    word = self.rng.choice(vocab.PLACE_WORDS)
                    base = f"{word} {phrase_by_type[poi_type].title()}"
                    eid = self.add_entity(self.unique_name(base), POI_CATEGORY, pos, poi_type)
                    disc_pois.append(eid)
                    poi_ids.append(eid)
        return poi_ids

    def nearest_poi_triplets(self, personal_ids: list[int], poi_ids: list[int]) -> list[tuple[int, int, int]]:
        """Global nearest-per-type scan: one triplet per (personal entity, POI type)
        pair with any POI of that type within 1 km, tail = geometric nearest."""
        by_type: dict[str, list[Entity]] = {}
        for eid in poi_ids:
            ent = self.entities[eid]
            by_type.setdefault(ent.poi_type, []).append(ent)
        out = []
        for pid in personal_ids:
            p = self.entities[pid]
            for type_name, _ in vocab.POI_TYPES:
                best = None
                best_dist = math.inf
                for ent in by_type.get(type_name, ()):
                    d = _distance(p.position, ent.position)
                    if d <= POI_DISTANCE_M and d < best_dist:
                        best, best_dist = ent, d
                if best is not None:
                    out.append((pid, self.rel_by_name[type_name].id, best.id))
        return out

    def attribute_triplets(self, personal_ids: list[int]) -> list[tuple[int, int, int]]:
        cfg = self.config
        out = []
        for pid in personal_ids:
            category = self.entities[pid].category
            choices = vocab.CATEGORY_ATTRIBUTES[category]
            n_attrs = int(self.rng.integers(cfg.min_attributes, cfg.max_attributes + 1))
            idx = self.rng.choice(len(choices), size=n_attrs, replace=False)
            for ai in sorted(int(i) for i in idx):
                rel = self.rel_by_name[choices[ai]]
                value = vocab.attribute_value_pool(rel.name, self.rng)
                out.append((pid, rel.id, self.value_entity(value)))
        return out

    def adjacency_triplets(self, connected: set[tuple[int, int]]) -> list[tuple[int, int, int]]:
        """Bidirectional adjacency for every positioned pair under 100 m.

        Pairs already linked by a POI or attribute triplet are skipped so a
        (personal node, answer node) pair never carries two askable facts.
        """
        positioned = [e for e in self.entities if e.position is not None]
        adj = self.rel_by_name[vocab.ADJACENT_RELATION].id
        coords = np.array([e.position for e in positioned])
        out = []
        for i in range(len(positioned)):
            delta = coords[i + 1 :] - coords[i]
            close = np.flatnonzero((delta * delta).sum(axis=1) < ADJACENCY_DISTANCE_M**2)
            for j in close:
                a, b = positioned[i].id, positioned[int(i + 1 + j)].id
                if (a, b) in connected or (b, a) in connected:
                    continue
                out.append((a, adj, b))
                out.append((b, adj, a))
        return out

    def build(self) -> tuple[list[Entity], list[Relation], list[tuple[int, int, int]]]:
        personal_ids = self.place_personal_entities()
        poi_ids = self.place_pois(personal_ids)
        raw = self.nearest_poi_triplets(personal_ids, poi_ids)
        raw += self.attribute_triplets(personal_ids)
        connected = {(h, t) for h, _, t in raw}
        raw += self.adjacency_triplets(connected)
        return self.entities, self.relations, raw


def _draw_freqs(raw: list[tuple[int, int, int]], cfg: WorldGenConfig, rng: np.random.Generator) -> list[Triplet]:
    lo, hi = math.log10(cfg.freq_min), math.log10(cfg.freq_max)
    exps = rng.uniform(lo, hi, size=len(raw))
    return [
        Triplet(head=h, relation=r, tail=t, freq=max(1, int(round(10.0**e))))
        for (h, r, t), e in zip(raw, exps)
    ]


def generate_world(config: WorldGenConfig, seed: int) -> World:
    """Generate a world obeying the KG construction rules; deterministic per (config, seed)."""
    config.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    cfg = config
    for attempt in range(config.max_retries + 1):
        builder = _Builder(cfg, rng)
        entities, relations, raw = builder.build()
        triplets = _draw_freqs(raw, cfg, rng)
        heads: dict[int, int] = {}
        for t in triplets:
            heads[t.head] = heads.get(t.head, 0) + 1
        thin = [
            e.id
            for e in entities
            if e.is_personal and heads.get(e.id, 0) < config.min_head_triplets
        ]
        if not thin:
            return World(
                relations=relations,
                entities=entities,
                triplets=triplets,
                rng_seed=seed,
                config=config.to_dict(),
            )
        # Densify and retry: more POI types per entity makes the floor reachable.
        denser = cfg.to_dict()
        denser["min_poi_types"] = min(cfg.min_poi_types + 1, len(vocab.POI_TYPES))
        denser["max_poi_types"] = min(max(cfg.max_poi_types, denser["min_poi_types"]) + 1, len(vocab.POI_TYPES))
        cfg = WorldGenConfig(**denser)
    raise WorldGenError(
        f"could not give every personal entity >= {config.min_head_triplets} head triplets "
        f"after {config.max_retries + 1} attempts"
    )


def sample_profiles(world: World, n: int, seed: int) -> list[PersonalProfile]:
    """Sample n applicant profiles, one entity per category, uniform with replacement."""
    pools = {c: world.entities_in_category(c) for c in CATEGORIES}
    for c, pool in pools.items():
        if not pool:
            raise KGError(f"world has no {c} entities")
    rng = np.random.Generator(np.random.PCG64(seed))
    profiles = []
    for i in range(n):
        items = {c: pools[c][int(rng.integers(0, len(pools[c])))].id for c in CATEGORIES}
        profiles.append(PersonalProfile(applicant_id=i, items=items))
    return profiles
