"""Per-applicant dialogue graph: reversed personal KG plus a User node, with
static and dialogue features maintained incrementally as the episode unfolds.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .kg.personal import spread_degree
from .kg.types import CATEGORIES, KGError, PersonalProfile, Triplet, World

# Feature layout. One shared width for every node so weight matrices are shared;
# groups that do not apply to a node stay all-zero.
DEGREE_BUCKETS = ((1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 10), (11, 20), (21, None))
N_DEGREE = len(DEGREE_BUCKETS)  # 8
N_TYPE = len(CATEGORIES) + 1  # 5, personal categories + AnswerNode
N_SPREAD = 8  # log10-freq bins <1, 1-2, ..., 6-7, >=7
MAX_WORKER_TURNS = 10

OFF_DEGREE = 0
OFF_TYPE = OFF_DEGREE + N_DEGREE
OFF_SPREAD = OFF_TYPE + N_TYPE
STATIC_WIDTH = OFF_SPREAD + N_SPREAD  # 21

OFF_EXPLORED = STATIC_WIDTH
OFF_LAST_ACTION = OFF_EXPLORED + 1
OFF_TURNS = OFF_LAST_ACTION + 1
OFF_CORRECT = OFF_TURNS + (MAX_WORKER_TURNS + 1)
OFF_INCORRECT = OFF_CORRECT + (MAX_WORKER_TURNS + 1)
OFF_STATUS = OFF_INCORRECT + (MAX_WORKER_TURNS + 1)
STATUS_NOT_ASKED, STATUS_CORRECT, STATUS_UNKNOWN = 0, 1, 2
FEATURE_WIDTH = OFF_STATUS + 3  # 59


class DialogueGraphError(KGError):
    pass


def degree_bucket(degree: int) -> Optional[int]:
    for i, (lo, hi) in enumerate(DEGREE_BUCKETS):
        if degree >= lo and (hi is None or degree <= hi):
            return i
    return None  # degree 0: group inapplicable


def spread_bin(freq: float) -> int:
    return min(N_SPREAD - 1, max(0, int(math.floor(math.log10(freq)))))


class DialogueGraph:
    """Reversed directed graph over one personal KG.

    Non-User nodes are indexed 0..n-1 with the four personal nodes first, in
    canonical category order; the User node is implicit (its in-neighbors are
    the personal nodes, and it carries no feature vector).
    """

    def __init__(self, kg: list[Triplet], profile: PersonalProfile, world: World):
        self.profile = profile
        self.world = world
        self.kg = list(kg)
        if not self.kg:
            raise DialogueGraphError("empty personal KG")

        item_ids = profile.entity_ids()
        entity_ids = set(item_ids)
        for t in self.kg:
            entity_ids.add(t.head)
            entity_ids.add(t.tail)
        answer_entities = sorted(entity_ids - set(item_ids))
        self.node_entity = list(item_ids) + answer_entities
        self.node_of = {eid: i for i, eid in enumerate(self.node_entity)}
        self.n = len(self.node_entity)
        self.personal_nodes = {c: i for i, c in enumerate(CATEGORIES)}

        item_set = set(item_ids)
        self.askable: dict[tuple[int, int], Triplet] = {}
        per_item_counts = {c: 0 for c in CATEGORIES}
        for t in self.kg:
            if t.head in item_set:
                pair = (self.node_of[t.head], self.node_of[t.tail])
                if pair in self.askable:
                    raise DialogueGraphError(f"duplicate askable pair for entities {t.head}->{t.tail}")
                self.askable[pair] = t
        for c in CATEGORIES:
            p = self.personal_nodes[c]
            count = sum(1 for (pp, _) in self.askable if pp == p)
            per_item_counts[c] = count
            if count < 4:
                raise DialogueGraphError(
                    f"profile item {c} has {count} askable triplets; need >= 4 for the decision mask"
                )

        # Candidate answer nodes per worker, fixed order (action index space).
        self.candidates: list[list[int]] = [[] for _ in range(len(CATEGORIES))]
        for (p, a) in sorted(self.askable):
            self.candidates[p].append(a)

        # Reversed edges: original triplet (h, r, t) becomes message edge t -> h.
        edges = [(self.node_of[t.head], self.node_of[t.tail]) for t in self.kg]
        edges.sort()
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        self.src = np.empty(len(edges), dtype=np.int64)
        for k, (dst, src) in enumerate(edges):
            self.indptr[dst + 1] += 1
            self.src[k] = src
        np.cumsum(self.indptr, out=self.indptr)

        self.is_answer = np.zeros(self.n, dtype=bool)
        for (_, a) in self.askable:
            self.is_answer[a] = True

        self.features = np.zeros((self.n, FEATURE_WIDTH), dtype=np.float64)
        # Flat-policy episodes have no workers, so the per-worker turn cap is
        # lifted there; feature buckets still saturate at 10 either way.
        self.enforce_worker_cap = True
        self._init_static()
        self.reset_dialogue_features()

    # -- static features ---------------------------------------------------

    def _init_static(self) -> None:
        items = set(self.profile.entity_ids())
        in_degree = np.diff(self.indptr)
        for v in range(self.n):
            bucket = degree_bucket(int(in_degree[v]))
            if bucket is not None:
                self.features[v, OFF_DEGREE + bucket] = 1.0
            if v < len(CATEGORIES):
                self.features[v, OFF_TYPE + v] = 1.0
            else:
                self.features[v, OFF_TYPE + len(CATEGORIES)] = 1.0
            if self.is_answer[v] and v >= len(CATEGORIES):
                mean_freq = spread_degree(self.world, self.node_entity[v], self.kg, items)
                self.features[v, OFF_SPREAD + spread_bin(mean_freq)] = 1.0

    # -- dialogue features ---------------------------------------------------

    def reset_dialogue_features(self) -> None:
        """Zero all dialogue state; idempotent, leaves static features intact."""
        self.features[:, STATIC_WIDTH:] = 0.0
        for p in range(len(CATEGORIES)):
            self.features[p, OFF_TURNS + 0] = 1.0
            self.features[p, OFF_CORRECT + 0] = 1.0
            self.features[p, OFF_INCORRECT + 0] = 1.0
        for v in np.flatnonzero(self.is_answer):
            self.features[v, OFF_STATUS + STATUS_NOT_ASKED] = 1.0
        self.explored = np.zeros(self.n, dtype=bool)
        self.worker_turns = [0] * len(CATEGORIES)
        self.n_correct = [0] * len(CATEGORIES)
        self.n_incorrect = [0] * len(CATEGORIES)
        self.last_pair: Optional[tuple[int, int]] = None
        self.pending: Optional[tuple[int, int]] = None

    def _set_count(self, v: int, offset: int, value: int) -> None:
        self.features[v, offset : offset + MAX_WORKER_TURNS + 1] = 0.0
        self.features[v, offset + min(value, MAX_WORKER_TURNS)] = 1.0

    def record_worker_selected(self, p: int) -> None:
        if p not in range(len(CATEGORIES)):
            raise DialogueGraphError(f"node {p} is not a personal node")
        self.explored[p] = True
        self.features[p, OFF_EXPLORED] = 1.0

    def record_question_asked(self, p: int, a: int) -> None:
        if (p, a) not in self.askable:
            raise DialogueGraphError(f"({p}, {a}) is not an askable pair")
        if self.pending is not None:
            raise DialogueGraphError("previous question is still awaiting an answer")
        if self.explored[a]:
            raise DialogueGraphError(f"answer node {a} was already explored")
        if self.enforce_worker_cap and self.worker_turns[p] >= MAX_WORKER_TURNS:
            raise DialogueGraphError(f"worker {p} exhausted its {MAX_WORKER_TURNS}-turn cap")
        self.explored[a] = True
        self.features[a, OFF_EXPLORED] = 1.0
        self.worker_turns[p] += 1
        self._set_count(p, OFF_TURNS, self.worker_turns[p])
        if self.last_pair is not None:
            for v in self.last_pair:
                self.features[v, OFF_LAST_ACTION] = 0.0
        self.features[p, OFF_LAST_ACTION] = 1.0
        self.features[a, OFF_LAST_ACTION] = 1.0
        self.last_pair = (p, a)
        self.pending = (p, a)

    def record_answer(self, a: int, correct: bool) -> None:
        if self.pending is None or self.pending[1] != a:
            raise DialogueGraphError(f"no pending question for answer node {a}")
        p, _ = self.pending
        self.pending = None
        status = STATUS_CORRECT if correct else STATUS_UNKNOWN
        self.features[a, OFF_STATUS : OFF_STATUS + 3] = 0.0
        self.features[a, OFF_STATUS + status] = 1.0
        if correct:
            self.n_correct[p] += 1
            self._set_count(p, OFF_CORRECT, self.n_correct[p])
        else:
            self.n_incorrect[p] += 1
            self._set_count(p, OFF_INCORRECT, self.n_incorrect[p])

    def encode(self, v: int) -> np.ndarray:
        """Feature vector of node v; the User node has no depth-0 embedding."""
        if not (0 <= v < self.n):
            raise DialogueGraphError(f"unknown node {v} (the User node is not encodable)")
        return self.features[v].copy()

    # -- introspection -------------------------------------------------------

    def explored_count(self, p: int) -> int:
        return sum(1 for a in self.candidates[p] if self.explored[a])

    def unexplored_count(self, p: int) -> int:
        return sum(1 for a in self.candidates[p] if not self.explored[a])

    def dump(self) -> dict:
        """Structured snapshot for the inspector UI and golden tests."""
        nodes = []
        for v in range(self.n):
            eid = self.node_entity[v]
            nodes.append(
                {
                    "node": v,
                    "entity": eid,
                    "name": self.world.entity(eid).name,
                    "personal_category": CATEGORIES[v] if v < len(CATEGORIES) else None,
                    "is_answer_node": bool(self.is_answer[v]),
                    "explored": bool(self.explored[v]),
                    "features": self.features[v].astype(int).tolist(),
                }
            )
        edges = [
            {"src": int(self.src[k]), "dst": dst}
            for dst in range(self.n)
            for k in range(self.indptr[dst], self.indptr[dst + 1])
        ]
        return {
            "user_in_neighbors": list(range(len(CATEGORIES))),
            "nodes": nodes,
            "edges": edges,
            "askable": [
                {"personal": p, "answer": a, "triplet": list(t.key()) + [t.freq]}
                for (p, a), t in sorted(self.askable.items())
            ],
        }


def build_graph(kg: list[Triplet], profile: PersonalProfile, world: World) -> DialogueGraph:
    return DialogueGraph(kg, profile, world)


def record_event(g: DialogueGraph, event: tuple) -> None:
    """Event-tuple dispatcher: ('worker_selected', p) | ('question_asked', p, a)
    | ('answer_received', a, correct)."""
    kind = event[0]
    if kind == "worker_selected":
        g.record_worker_selected(event[1])
    elif kind == "question_asked":
        g.record_question_asked(event[1], event[2])
    elif kind == "answer_received":
        g.record_answer(event[1], bool(event[2]))
    else:
        raise DialogueGraphError(f"unknown event kind {kind!r}")
