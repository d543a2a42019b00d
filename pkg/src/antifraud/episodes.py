"""Episode engine.

One dialogue loop drives every consumer: training rollouts, rule baselines,
evaluation, the terminal player and the HTTP service. The loop is a generator
that yields questions and receives answer correctness, so the same semantics
apply whether the answers come from the simulator, a transcript replay, or a
human.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .dialogue import DialogueGraph
from .kg.types import CATEGORIES, Triplet
from .nn.backend import kernels as default_kernels
from .nn.params import ParamStore
from .policy import (
    FRAUD,
    N_PERSONAL,
    NON_FRAUD,
    EpisodeState,
    PolicyConfig,
    flat_mask,
    flat_pairs,
    flat_probs_fast,
    manager_mask,
    manager_probs_fast,
    states_forward,
    worker_mask,
    worker_probs_fast,
)

MODE_SAMPLE = "sample"
MODE_GREEDY = "greedy"


class EpisodeError(RuntimeError):
    pass


@dataclass
class Step:
    agent: str  # manager | worker | flat
    worker: Optional[int]  # personal node index for worker steps
    n_actions: int
    mask: np.ndarray
    action: int
    features: Optional[np.ndarray] = None  # uint8 snapshot taken before acting
    probs: Optional[np.ndarray] = None  # recorded only when inspection is on
    reward: float = 0.0
    ret: float = 0.0

    @property
    def is_decision(self) -> bool:
        return self.action >= self.n_actions - 2

    @property
    def decision(self) -> Optional[str]:
        if not self.is_decision:
            return None
        return FRAUD if self.action == self.n_actions - 2 else NON_FRAUD


@dataclass
class Trajectory:
    variant: str
    manager_steps: list[Step] = field(default_factory=list)
    worker_subepisodes: list[list[Step]] = field(default_factory=list)
    events: list[tuple] = field(default_factory=list)
    transcript: list[tuple[Triplet, bool]] = field(default_factory=list)
    decision: Optional[str] = None
    per_item_decisions: dict[str, Optional[str]] = field(
        default_factory=lambda: {c: None for c in CATEGORIES}
    )
    truth: Optional[str] = None
    item_truths: Optional[dict[str, str]] = None

    @property
    def questions_asked(self) -> int:
        return len(self.transcript)

    def all_steps(self) -> list[Step]:
        out = list(self.manager_steps)
        for sub in self.worker_subepisodes:
            out.extend(sub)
        return out


class Actor:
    """Chooses actions at decision points; neural and rule actors share it."""

    hierarchical = True
    mp_min_questions = 10  # flat policies: decisions unlock after this many

    def begin_episode(self, g: DialogueGraph) -> None:
        pass

    def manager_action(self, g, ep, mask) -> tuple[int, Optional[np.ndarray]]:
        raise NotImplementedError

    def worker_action(self, g, ep, p, mask) -> tuple[int, Optional[np.ndarray]]:
        raise NotImplementedError

    def flat_action(self, g, ep, pairs, mask) -> tuple[int, Optional[np.ndarray]]:
        raise NotImplementedError


def _draw(probs: np.ndarray, mode: str, rng: Optional[np.random.Generator]) -> int:
    if mode == MODE_GREEDY:
        return int(np.argmax(probs))
    if rng is None:
        raise EpisodeError("sampling mode needs an rng")
    return int(rng.choice(len(probs), p=probs / probs.sum()))


class NeuralActor(Actor):
    def __init__(
        self,
        params: ParamStore,
        cfg: PolicyConfig,
        mode: str = MODE_SAMPLE,
        rng: Optional[np.random.Generator] = None,
        kernels=None,
    ):
        self.params = params
        self.cfg = cfg
        self.mode = mode
        self.rng = rng
        self.kernels = kernels or default_kernels
        self.hierarchical = cfg.hierarchical
        self.mp_min_questions = cfg.mp_decision_min_questions

    def _states(self, g: DialogueGraph):
        return states_forward(g.indptr, g.src, g.features, self.params, self.cfg, self.kernels)

    def manager_action(self, g, ep, mask):
        probs = manager_probs_fast(self._states(g), mask, self.params)
        return _draw(probs, self.mode, self.rng), probs

    def worker_action(self, g, ep, p, mask):
        probs = worker_probs_fast(self._states(g), g, p, mask, self.params)
        return _draw(probs, self.mode, self.rng), probs

    def flat_action(self, g, ep, pairs, mask):
        probs = flat_probs_fast(self._states(g), g, pairs, mask, self.params)
        return _draw(probs, self.mode, self.rng), probs


def dialogue_stream(
    actor: Actor,
    g: DialogueGraph,
    ep: EpisodeState,
    variant: str,
    record_features: bool = True,
    traj: Optional[Trajectory] = None,
) -> Iterator[tuple]:
    """Generator yielding ('ask', p, a, triplet); resumed with the answer's
    correctness (bool). Returns the finished Trajectory via StopIteration; a
    caller-supplied `traj` is filled in place, so live observers can watch it."""
    g.reset_dialogue_features()
    g.enforce_worker_cap = actor.hierarchical
    actor.begin_episode(g)
    if traj is None:
        traj = Trajectory(variant=variant)

    def snap() -> Optional[np.ndarray]:
        return g.features.astype(np.uint8) if record_features else None

    if not actor.hierarchical:
        pairs = flat_pairs(g)
        while True:
            mask = flat_mask(g, ep, pairs, actor.mp_min_questions)
            shot = snap()
            action, probs = actor.flat_action(g, ep, pairs, mask)
            step = Step(
                agent="flat",
                worker=None,
                n_actions=len(mask),
                mask=mask,
                action=action,
                features=shot,
                probs=probs,
            )
            traj.manager_steps.append(step)
            if step.is_decision:
                traj.decision = step.decision
                traj.events.append(("manager_decide", step.decision))
                return traj
            p, a = pairs[action]
            triplet = g.askable[(p, a)]
            g.record_question_asked(p, a)
            ep.questions_total += 1
            correct = yield ("ask", p, a, triplet)
            g.record_answer(a, bool(correct))
            traj.transcript.append((triplet, bool(correct)))
            traj.events.append(("ask", p, a, triplet, bool(correct)))

    while True:
        mask = manager_mask(g, ep)
        shot = snap()
        action, probs = actor.manager_action(g, ep, mask)
        step = Step(
            agent="manager",
            worker=None,
            n_actions=len(mask),
            mask=mask,
            action=action,
            features=shot,
            probs=probs,
        )
        traj.manager_steps.append(step)
        if step.is_decision:
            traj.decision = step.decision
            traj.events.append(("manager_decide", step.decision))
            return traj

        p = action
        category = CATEGORIES[p]
        traj.events.append(("select", p))
        g.record_worker_selected(p)
        ep.active_worker = p
        sub: list[Step] = []
        traj.worker_subepisodes.append(sub)
        while True:
            wmask = worker_mask(g, ep, p)
            wshot = snap()
            waction, wprobs = actor.worker_action(g, ep, p, wmask)
            wstep = Step(
                agent="worker",
                worker=p,
                n_actions=len(wmask),
                mask=wmask,
                action=waction,
                features=wshot,
                probs=wprobs,
            )
            sub.append(wstep)
            if wstep.is_decision:
                ep.decided[p] = wstep.decision
                traj.per_item_decisions[category] = wstep.decision
                traj.events.append(("worker_decide", p, wstep.decision))
                break
            a = g.candidates[p][waction]
            triplet = g.askable[(p, a)]
            g.record_question_asked(p, a)
            ep.questions_total += 1
            correct = yield ("ask", p, a, triplet)
            g.record_answer(a, bool(correct))
            traj.transcript.append((triplet, bool(correct)))
            traj.events.append(("ask", p, a, triplet, bool(correct)))
        ep.active_worker = None


def run_episode(
    actor: Actor,
    g: DialogueGraph,
    applicant,
    variant: str,
    max_system_turns: int = 40,
    max_worker_turns: int = 10,
    record_features: bool = True,
) -> Trajectory:
    """Drive one full episode against a simulated applicant."""
    ep = EpisodeState(max_system_turns=max_system_turns, max_worker_turns=max_worker_turns)
    gen = dialogue_stream(actor, g, ep, variant, record_features)
    try:
        msg = next(gen)
        while True:
            _, _, _, triplet = msg
            msg = gen.send(applicant.knows(triplet))
    except StopIteration as stop:
        traj: Trajectory = stop.value
    traj.truth = applicant.identity
    traj.item_truths = {c: applicant.item_truth(c) for c in CATEGORIES}
    return traj
