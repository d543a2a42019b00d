"""Default 40-relation vocabulary, question templates and synthetic name pools."""

from __future__ import annotations

from .types import (
    RELATION_KIND_ADJACENCY,
    RELATION_KIND_ATTRIBUTE,
    RELATION_KIND_POI,
    Relation,
)

# 25 POI types + 1 adjacency + 14 attributes = 40 relations.
POI_TYPES = (
    ("SubwayStation", "subway station"),
    ("BusStop", "bus stop"),
    ("Park", "park"),
    ("SuperMarket", "supermarket"),
    ("ConvenienceStore", "convenience store"),
    ("FruitShop", "fruit shop"),
    ("PetMarket", "pet market"),
    ("DigitalMall", "digital mall"),
    ("Hospital", "hospital"),
    ("Pharmacy", "pharmacy"),
    ("Bank", "bank"),
    ("Restaurant", "restaurant"),
    ("CoffeeShop", "coffee shop"),
    ("Cinema", "cinema"),
    ("Gym", "gym"),
    ("Hotel", "hotel"),
    ("Library", "library"),
    ("PostOffice", "post office"),
    ("GasStation", "gas station"),
    ("Bakery", "bakery"),
    ("Bookstore", "bookstore"),
    ("Kindergarten", "kindergarten"),
    ("PoliceStation", "police station"),
    ("Museum", "museum"),
    ("FlowerShop", "flower shop"),
)

ADJACENT_RELATION = "Adjacent"

ATTRIBUTE_TEMPLATES = {
    "FoundedDate": "When was {head} founded?",
    "LocatedIn": "In which city is {head} located?",
    "PostalCode": "What is the postal code of {head}?",
    "StreetName": "On which street is {head}?",
    "DistrictName": "In which district is {head}?",
    "FloorCount": "How many floors does the main building of {head} have?",
    "ArchitectureStyle": "What is the architectural style of {head}?",
    "AnnualFestival": "Which festival is held at {head} every year?",
    "FamousAlumnus": "Who is a famous alumnus of {head}?",
    "IndustryField": "In which industry does {head} operate?",
    "LocalNickname": "What do locals call {head}?",
    "YearRenovated": "In which year was {head} last renovated?",
    "PopulationClass": "Roughly how many people live in {head}?",
    "HistoricEvent": "Which historic event took place at {head}?",
}

# Attributes each personal-information category may carry.
CATEGORY_ATTRIBUTES = {
    "School": ("FoundedDate", "LocatedIn", "FamousAlumnus", "ArchitectureStyle", "AnnualFestival"),
    "Company": ("FoundedDate", "LocatedIn", "IndustryField", "FloorCount", "YearRenovated"),
    "Residence": ("PostalCode", "StreetName", "DistrictName", "FloorCount", "LocalNickname"),
    "BirthPlace": ("LocatedIn", "DistrictName", "PopulationClass", "HistoricEvent", "AnnualFestival"),
}

# Value pools for attribute tails. Pools are deliberately larger than the
# distractor count so same-relation distractors always exist.
CITY_NAMES = (
    "Nanjing", "Shanghai", "Hangzhou", "Suzhou", "Wuhan", "Chengdu",
    "Changsha", "Xiamen", "Qingdao", "Dalian", "Kunming", "Harbin",
)
STREET_WORDS = (
    "Maple", "Gulou", "Willow", "Harbor", "Granite", "Meridian",
    "Lotus", "Juniper", "Beacon", "Orchard", "Cedar", "Pagoda",
)
DISTRICT_WORDS = (
    "Gulou", "Xuanwu", "Qinhuai", "Jianye", "Yuhua", "Qixia",
    "Pukou", "Lishui", "Jiangning", "Liuhe",
)
ARCH_STYLES = (
    "Neo-Classical", "Brutalist", "Republican-era", "Modernist",
    "Tang-revival", "Art-Deco", "Bauhaus", "Postmodern",
)
FESTIVALS = (
    "Lantern Fair", "Spring Sports Meet", "Ginkgo Festival", "Open Campus Day",
    "Harvest Market", "Plum Blossom Week", "Riverside Carnival", "Anniversary Gala",
)
PERSON_NAMES = (
    "Wei Chen", "Lan Zhou", "Ming Gao", "Hua Sun", "Jun Xu", "Yan Qin",
    "Bo Jiang", "Rui Tang", "Fang Luo", "Kai Shen",
)
INDUSTRIES = (
    "logistics", "textiles", "semiconductors", "publishing", "catering",
    "biotech", "shipping", "software", "ceramics", "machinery",
)
NICKNAME_WORDS = (
    "Old Gate", "Red Roof", "Twin Towers", "Little Bund", "Stone Yard",
    "Green Corner", "North Court", "River Block",
)
HISTORIC_EVENTS = (
    "the 1937 evacuation", "the first provincial fair", "the 1954 flood relief",
    "the railway inauguration", "the 1979 reopening ceremony", "the centennial parade",
    "the old-town restoration", "the first electric tram run",
)

PLACE_WORDS = (
    "Gulou", "Maple", "Harbor", "Willow", "Lotus", "Granite", "Cedar",
    "Meridian", "Beacon", "Orchard", "Pagoda", "Juniper", "Summit", "Crane",
    "Bamboo", "Plum", "Anchor", "Compass", "Lantern", "Magnolia",
)

CATEGORY_NOUNS = {
    "School": ("University", "College", "High School", "Institute", "Academy"),
    "Company": ("Technologies", "Trading Co.", "Industries", "Logistics", "Holdings"),
    "Residence": ("Garden Estate", "Riverside Apartments", "Court", "Mansion", "Towers"),
    "BirthPlace": ("Town", "Old Town", "Village", "County Seat", "Harbor Town"),
}


def default_relations() -> list[Relation]:
    """Build the fixed 40-relation vocabulary with one template per relation."""
    relations = []
    rid = 0
    for name, phrase in POI_TYPES:
        relations.append(
            Relation(
                id=rid,
                name=name,
                template=f"Which is the nearest {phrase} to {{head}}?",
                kind=RELATION_KIND_POI,
                inverse_id=rid,
            )
        )
        rid += 1
    # The adjacency relation is symmetric, i.e. its own inverse.
    relations.append(
        Relation(
            id=rid,
            name=ADJACENT_RELATION,
            template="Which place is right next to {head}?",
            kind=RELATION_KIND_ADJACENCY,
            inverse_id=rid,
        )
    )
    rid += 1
    for name, template in ATTRIBUTE_TEMPLATES.items():
        relations.append(
            Relation(id=rid, name=name, template=template, kind=RELATION_KIND_ATTRIBUTE, inverse_id=rid)
        )
        rid += 1
    assert len(relations) == 40
    return relations


def attribute_value_pool(relation_name: str, rng) -> str:
    """Draw a printable value for an attribute relation."""
    if relation_name == "FoundedDate":
        return str(int(rng.integers(1880, 2016)))
    if relation_name == "YearRenovated":
        return str(int(rng.integers(1990, 2024)))
    if relation_name == "LocatedIn":
        return str(rng.choice(CITY_NAMES))
    if relation_name == "PostalCode":
        return f"2{int(rng.integers(10000, 99999))}"
    if relation_name == "StreetName":
        return f"{rng.choice(STREET_WORDS)} Road"
    if relation_name == "DistrictName":
        return f"{rng.choice(DISTRICT_WORDS)} District"
    if relation_name == "FloorCount":
        return str(int(rng.integers(3, 41)))
    if relation_name == "ArchitectureStyle":
        return str(rng.choice(ARCH_STYLES))
    if relation_name == "AnnualFestival":
        return str(rng.choice(FESTIVALS))
    if relation_name == "FamousAlumnus":
        return str(rng.choice(PERSON_NAMES))
    if relation_name == "IndustryField":
        return str(rng.choice(INDUSTRIES))
    if relation_name == "LocalNickname":
        return f"the {rng.choice(NICKNAME_WORDS)}"
    if relation_name == "PopulationClass":
        return f"about {int(rng.integers(1, 90))}0,000 people"
    if relation_name == "HistoricEvent":
        return str(rng.choice(HISTORIC_EVENTS))
    raise KeyError(relation_name)
