"""Dialogue state tracking and the manager/worker policies.

State tracking runs depth-K message passing over the reversed personal KG
(element-wise max aggregation of tanh-transformed predecessor embeddings,
depth outputs concatenated). Policy heads score candidates with a shared
scalar-producing row per agent; domain rules enter only through action masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dialogue import FEATURE_WIDTH, MAX_WORKER_TURNS, DialogueGraph
from .kg.types import CATEGORIES
from .nn.params import ParamStore, ParamTensor, uniform_init
from .nn.tape import Tape, Value

FRAUD = "Fraud"
NON_FRAUD = "NonFraud"
DECISIONS = (FRAUD, NON_FRAUD)

VARIANT_FULL = "full"  # K=2, hierarchical policy
VARIANT_HP = "hp"  # hierarchical policy, no message passing (K=0)
VARIANT_MP = "mp"  # message passing, flat policy
VARIANTS = (VARIANT_FULL, VARIANT_HP, VARIANT_MP)
VARIANT_LABELS = {VARIANT_FULL: "Full-S", VARIANT_HP: "HP-S", VARIANT_MP: "MP-S"}

N_PERSONAL = len(CATEGORIES)


class PolicyError(ValueError):
    pass


class MaskError(PolicyError):
    """An episode reached a state with no legal action."""


@dataclass(frozen=True)
class PolicyConfig:
    variant: str = VARIANT_FULL
    depth: int = 2  # K; forced to 0 for the no-message-passing ablation
    hidden: int = 64  # d
    value_hidden: int = 64
    feature_width: int = FEATURE_WIDTH  # d0
    mp_decision_min_questions: int = 10  # flat variant: decisions unlock after this many

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PolicyError(f"unknown variant {self.variant!r}")
        if self.variant == VARIANT_HP and self.depth != 0:
            raise PolicyError("the hp variant requires depth=0")
        if self.depth < 0:
            raise PolicyError("depth must be >= 0")

    @property
    def hierarchical(self) -> bool:
        return self.variant != VARIANT_MP

    @property
    def state_width(self) -> int:
        """Width of E(v): features plus one hidden block per depth."""
        return self.feature_width + self.depth * self.hidden

    @classmethod
    def for_variant(cls, variant: str, depth: int = 2, **kw) -> "PolicyConfig":
        if variant == VARIANT_HP:
            depth = 0
        return cls(variant=variant, depth=depth, **kw)


def make_params(cfg: PolicyConfig, seed: int) -> ParamStore:
    """Fresh parameter store for a policy variant, seeded uniform init."""
    rng = np.random.Generator(np.random.PCG64(seed))
    store = ParamStore()
    width = cfg.feature_width
    for k in range(1, cfg.depth + 1):
        store.add(uniform_init(f"W{k}", (cfg.hidden, width), rng))
        width = cfg.hidden
    D = cfg.state_width
    store.add(uniform_init("Wp", (cfg.hidden, D), rng))
    store.add(uniform_init("Wm", (cfg.hidden + D,), rng))
    store.add(uniform_init("bm", (1,), rng))
    store.add(uniform_init("Edm_fraud", (D,), rng))
    store.add(uniform_init("Edm_nonfraud", (D,), rng))
    if cfg.hierarchical:
        store.add(uniform_init("Ww", (2 * D,), rng))
        store.add(uniform_init("bw", (1,), rng))
        store.add(uniform_init("Edw_fraud", (D,), rng))
        store.add(uniform_init("Edw_nonfraud", (D,), rng))
    store.add(uniform_init("Vm_W1", (cfg.value_hidden, cfg.hidden), rng))
    store.add(uniform_init("Vm_b1", (cfg.value_hidden,), rng))
    store.add(uniform_init("Vm_w2", (cfg.value_hidden,), rng))
    store.add(uniform_init("Vm_b2", (1,), rng))
    if cfg.hierarchical:
        store.add(uniform_init("Vw_W1", (cfg.value_hidden, D), rng))
        store.add(uniform_init("Vw_b1", (cfg.value_hidden,), rng))
        store.add(uniform_init("Vw_w2", (cfg.value_hidden,), rng))
        store.add(uniform_init("Vw_b2", (1,), rng))
    return store


def policy_param_names(store: ParamStore) -> list[str]:
    return [n for n in store.names() if not n.startswith("Vm_") and not n.startswith("Vw_")]


def value_param_names(store: ParamStore) -> list[str]:
    return [n for n in store.names() if n.startswith("Vm_") or n.startswith("Vw_")]


@dataclass
class StateEmbeddings:
    """Per-node dialogue states E(v) plus the manager state E(v_u)."""

    E: Value  # (n, state_width)
    user: Value  # (hidden,)
    tape: Tape

    def node(self, v: int) -> np.ndarray:
        return self.E.data[v]


def message_passing(
    tape: Tape,
    indptr: np.ndarray,
    src: np.ndarray,
    features: np.ndarray,
    params: ParamStore,
    cfg: PolicyConfig,
) -> StateEmbeddings:
    """Depth-K embeddings over arbitrary feature snapshots.

    Nodes with no predecessors aggregate to the zero vector at every depth;
    the User embedding is the max over the four personal-node projections.
    """
    F = tape.const(features)
    blocks = [F]
    prev = F
    for k in range(1, cfg.depth + 1):
        H = tape.rows_affine_tanh(tape.param(params[f"W{k}"]), prev)
        prev = tape.segment_max(H, indptr, src)
        blocks.append(prev)
    E = tape.hstack(blocks) if len(blocks) > 1 else F
    personal = tape.rows_pick(E, np.arange(N_PERSONAL))
    Hu = tape.rows_affine_tanh(tape.param(params["Wp"]), personal)
    user = tape.rows_max(Hu)
    return StateEmbeddings(E=E, user=user, tape=tape)


def graph_states(tape: Tape, g: DialogueGraph, params: ParamStore, cfg: PolicyConfig) -> StateEmbeddings:
    return message_passing(tape, g.indptr, g.src, g.features, params, cfg)


# -- policy heads --------------------------------------------------------------


def manager_logits(tape: Tape, states: StateEmbeddings, params: ParamStore) -> Value:
    """Scores for [4 personal nodes..., Fraud, NonFraud]."""
    cands = tape.vstack(
        [
            tape.rows_pick(states.E, np.arange(N_PERSONAL)),
            tape.param(params["Edm_fraud"]),
            tape.param(params["Edm_nonfraud"]),
        ]
    )
    n = N_PERSONAL + 2
    X = tape.hstack([tape.tile_row(states.user, n), cands])
    return tape.rows_dot_bias(X, tape.param(params["Wm"]), tape.param(params["bm"]))


def worker_logits(
    tape: Tape, states: StateEmbeddings, g: DialogueGraph, p: int, params: ParamStore
) -> Value:
    """Scores for [candidate answer nodes of worker p..., Fraud, NonFraud]."""
    idx = np.asarray(g.candidates[p], dtype=np.int64)
    cands = tape.vstack(
        [
            tape.rows_pick(states.E, idx),
            tape.param(params["Edw_fraud"]),
            tape.param(params["Edw_nonfraud"]),
        ]
    )
    X = tape.hstack([tape.tile_row(tape.row(states.E, p), len(idx) + 2), cands])
    return tape.rows_dot_bias(X, tape.param(params["Ww"]), tape.param(params["bw"]))


def flat_logits(
    tape: Tape, states: StateEmbeddings, g: DialogueGraph, pairs: list[tuple[int, int]], params: ParamStore
) -> Value:
    """Flat-policy scores: one per askable pair, then Fraud, NonFraud."""
    idx = np.asarray([a for (_, a) in pairs], dtype=np.int64)
    cands = tape.vstack(
        [
            tape.rows_pick(states.E, idx),
            tape.param(params["Edm_fraud"]),
            tape.param(params["Edm_nonfraud"]),
        ]
    )
    X = tape.hstack([tape.tile_row(states.user, len(pairs) + 2), cands])
    return tape.rows_dot_bias(X, tape.param(params["Wm"]), tape.param(params["bm"]))


def manager_distribution(
    tape: Tape, states: StateEmbeddings, mask: np.ndarray, params: ParamStore
) -> Value:
    return tape.masked_softmax(manager_logits(tape, states, params), mask)


def worker_distribution(
    tape: Tape,
    states: StateEmbeddings,
    g: DialogueGraph,
    p: int,
    mask: np.ndarray,
    params: ParamStore,
) -> Value:
    return tape.masked_softmax(worker_logits(tape, states, g, p, params), mask)


def value(tape: Tape, states: StateEmbeddings, agent: str, params: ParamStore, p: Optional[int] = None) -> Value:
    """Scalar baseline for an agent; the state vector enters detached so value
    regression never leaks gradients into the policy stack."""
    if agent == "manager":
        x = tape.const(np.array(states.user.data, dtype=np.float64, copy=True))
        prefix = "Vm"
    elif agent == "worker":
        if p is None:
            raise PolicyError("worker value needs the personal node index")
        x = tape.const(np.array(states.E.data[p], dtype=np.float64, copy=True))
        prefix = "Vw"
    else:
        raise PolicyError(f"unknown agent {agent!r}")
    h = tape.tanh(tape.affine(tape.param(params[f"{prefix}_W1"]), x, tape.param(params[f"{prefix}_b1"])))
    return tape.add_bias0(tape.dot(tape.param(params[f"{prefix}_w2"]), h), tape.param(params[f"{prefix}_b2"]))


# -- episode bookkeeping and action masks ---------------------------------------


@dataclass
class EpisodeState:
    """Episode-scoped bookkeeping the masks read; graph features carry the rest."""

    max_system_turns: int = 40
    max_worker_turns: int = MAX_WORKER_TURNS
    questions_total: int = 0
    decided: list[Optional[str]] = field(default_factory=lambda: [None] * N_PERSONAL)
    active_worker: Optional[int] = None

    def __post_init__(self):
        if not (1 <= self.max_worker_turns <= MAX_WORKER_TURNS):
            raise PolicyError(f"max_worker_turns must lie in [1, {MAX_WORKER_TURNS}]")

    @property
    def budget_left(self) -> int:
        return self.max_system_turns - self.questions_total

    def all_decided(self) -> bool:
        return all(d is not None for d in self.decided)

    def any_fraud(self) -> bool:
        return any(d == FRAUD for d in self.decided)


def _needed_questions(g: DialogueGraph, p: int) -> int:
    """Questions worker p still must ask before its decisions can unlock."""
    return min(max(0, 3 - g.explored_count(p)), g.unexplored_count(p))


def manager_mask(g: DialogueGraph, ep: EpisodeState) -> np.ndarray:
    mask = np.zeros(N_PERSONAL + 2, dtype=bool)
    budget = ep.budget_left
    if budget > 0:
        for p in range(N_PERSONAL):
            # A worker is selectable only if the remaining budget lets it reach
            # decision eligibility; inert at the paper's 40/10 caps, a guard
            # against deadlock under smaller custom budgets.
            if ep.decided[p] is None and budget >= _needed_questions(g, p):
                mask[p] = True
    if ep.all_decided() or ep.any_fraud() or budget == 0:
        mask[N_PERSONAL] = True
        mask[N_PERSONAL + 1] = True
    if not mask.any():
        raise MaskError("manager has no legal action")
    return mask


def worker_mask(g: DialogueGraph, ep: EpisodeState, p: int) -> np.ndarray:
    cands = g.candidates[p]
    mask = np.zeros(len(cands) + 2, dtype=bool)
    budget = ep.budget_left
    can_ask = g.worker_turns[p] < ep.max_worker_turns and budget > 0
    if can_ask:
        for i, a in enumerate(cands):
            if not g.explored[a]:
                mask[i] = True
    if (
        g.explored_count(p) >= 3
        or g.unexplored_count(p) == 0
        or g.worker_turns[p] >= ep.max_worker_turns
        or budget == 0
    ):
        mask[len(cands)] = True
        mask[len(cands) + 1] = True
    if not mask.any():
        raise MaskError(f"worker {p} has no legal action")
    return mask


def flat_pairs(g: DialogueGraph) -> list[tuple[int, int]]:
    return sorted(g.askable)


def flat_mask(
    g: DialogueGraph, ep: EpisodeState, pairs: list[tuple[int, int]], min_questions: int = 10
) -> np.ndarray:
    mask = np.zeros(len(pairs) + 2, dtype=bool)
    budget = ep.budget_left
    if budget > 0:
        for i, (_, a) in enumerate(pairs):
            if not g.explored[a]:
                mask[i] = True
    asked_all = not mask[: len(pairs)].any()
    if ep.questions_total >= min_questions or asked_all or budget == 0:
        mask[len(pairs)] = True
        mask[len(pairs) + 1] = True
    if not mask.any():
        raise MaskError("flat policy has no legal action")
    return mask


def compute_masks(g: DialogueGraph, ep: EpisodeState) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """(manager mask, mask of the active worker if any) for hierarchical policies."""
    wmask = worker_mask(g, ep, ep.active_worker) if ep.active_worker is not None else None
    return manager_mask(g, ep), wmask


# -- tape-free forward pass for rollouts and greedy evaluation ------------------
#
# Same kernels and same math as the taped path (the heads expand the shared
# score row onto [state, candidate] without materializing the concatenation);
# gradients always go through the taped path.


class FastStates:
    __slots__ = ("E", "user")

    def __init__(self, E: np.ndarray, user: np.ndarray):
        self.E = E
        self.user = user


def states_forward(
    indptr: np.ndarray,
    src: np.ndarray,
    features: np.ndarray,
    params: ParamStore,
    cfg: PolicyConfig,
    kernels,
) -> FastStates:
    prev = features
    blocks = [features]
    for k in range(1, cfg.depth + 1):
        H = kernels.rows_affine_tanh_fwd(prev, params[f"W{k}"].values)
        prev, _ = kernels.segment_max_fwd(H, indptr, src)
        blocks.append(prev)
    E = np.concatenate(blocks, axis=1) if len(blocks) > 1 else features
    Hu = kernels.rows_affine_tanh_fwd(E[:N_PERSONAL], params["Wp"].values)
    return FastStates(E=E, user=Hu.max(axis=0))


def _head_probs(
    state: np.ndarray, cands: np.ndarray, w: np.ndarray, b: float, mask: np.ndarray
) -> np.ndarray:
    d = state.shape[0]
    logits = cands @ w[d:] + (state @ w[:d] + b)
    shifted = np.where(mask, logits, -np.inf)
    shifted = shifted - shifted.max()
    expl = np.exp(shifted)
    return expl / expl.sum()


def manager_probs_fast(states: FastStates, mask: np.ndarray, params: ParamStore) -> np.ndarray:
    cands = np.vstack(
        [states.E[:N_PERSONAL], params["Edm_fraud"].values, params["Edm_nonfraud"].values]
    )
    return _head_probs(states.user, cands, params["Wm"].values, params["bm"].values[0], mask)


def worker_probs_fast(
    states: FastStates, g: DialogueGraph, p: int, mask: np.ndarray, params: ParamStore
) -> np.ndarray:
    cands = np.vstack(
        [
            states.E[np.asarray(g.candidates[p], dtype=np.int64)],
            params["Edw_fraud"].values,
            params["Edw_nonfraud"].values,
        ]
    )
    return _head_probs(states.E[p], cands, params["Ww"].values, params["bw"].values[0], mask)


def flat_probs_fast(
    states: FastStates,
    g: DialogueGraph,
    pairs: list[tuple[int, int]],
    mask: np.ndarray,
    params: ParamStore,
) -> np.ndarray:
    idx = np.asarray([a for (_, a) in pairs], dtype=np.int64)
    cands = np.vstack(
        [states.E[idx], params["Edm_fraud"].values, params["Edm_nonfraud"].values]
    )
    return _head_probs(states.user, cands, params["Wm"].values, params["bm"].values[0], mask)
