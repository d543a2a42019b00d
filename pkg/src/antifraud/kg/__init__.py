from .types import (
    ABSTAIN_TEXT,
    CATEGORIES,
    POI_CATEGORY,
    VALUE_CATEGORY,
    Entity,
    KGError,
    PersonalProfile,
    Question,
    Relation,
    Triplet,
    World,
)
from .worldgen import WorldGenConfig, WorldGenError, generate_world, sample_profiles
from .personal import personal_kg, askable_triplets, spread_degree
from .questions import render_question
from .io import (
    load_profiles,
    load_world,
    save_profiles,
    save_world,
    world_from_dict,
    world_to_dict,
)

__all__ = [
    "ABSTAIN_TEXT",
    "CATEGORIES",
    "POI_CATEGORY",
    "VALUE_CATEGORY",
    "Entity",
    "KGError",
    "PersonalProfile",
    "Question",
    "Relation",
    "Triplet",
    "World",
    "WorldGenConfig",
    "WorldGenError",
    "generate_world",
    "sample_profiles",
    "personal_kg",
    "askable_triplets",
    "spread_degree",
    "render_question",
    "load_profiles",
    "load_world",
    "save_profiles",
    "save_world",
    "world_from_dict",
    "world_to_dict",
]
