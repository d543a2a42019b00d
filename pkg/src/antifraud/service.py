"""HTTP session service: a human plays the applicant against a trained policy.

Episode semantics are exactly `dialogue_stream` in greedy mode; the service
only renders questions, relays answers and tracks per-session state, so any
recorded transcript replays to the identical decision.

(No `from __future__ import annotations` here: FastAPI cannot resolve
stringified annotations of the closure-local request models.)
"""

import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dialogue import DialogueGraph
from .episodes import MODE_GREEDY, NeuralActor, Trajectory, dialogue_stream
from .kg.personal import personal_kg
from .kg.questions import render_question
from .kg.types import CATEGORIES, PersonalProfile, Question, World
from .nn.params import ParamStore
from .policy import FRAUD, EpisodeState, PolicyConfig
from .training import derive_seed

API_PREFIX = "/v1"


class SessionError(RuntimeError):
    pass


@dataclass
class SessionConfig:
    max_system_turns: int = 40
    max_worker_turns: int = 10
    idle_timeout_s: float = 1800.0
    max_sessions: int = 1024


class PolicySession:
    """One live dialogue: greedy policy on one side, a human on the other."""

    def __init__(
        self,
        world: World,
        profile: PersonalProfile,
        params: ParamStore,
        pcfg: PolicyConfig,
        seed: int,
        cfg: SessionConfig,
        fake_items: Optional[list[str]] = None,
        inspect: bool = False,
    ):
        self.session_id = secrets.token_hex(16)
        self.world = world
        self.profile = profile
        self.inspect = inspect
        self.seed = seed
        self.fake_items = sorted(fake_items or [])
        for item in self.fake_items:
            if item not in CATEGORIES:
                raise SessionError(f"unknown personal-information item {item!r}")
        self.lock = threading.Lock()
        self.last_access = time.monotonic()
        self.cfg = cfg

        kg = personal_kg(world, profile)
        self.graph = DialogueGraph(kg, profile, world)
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "actor")))
        actor = NeuralActor(params, pcfg, mode=MODE_GREEDY, rng=rng)
        ep = EpisodeState(
            max_system_turns=cfg.max_system_turns, max_worker_turns=cfg.max_worker_turns
        )
        self.trajectory = Trajectory(variant=pcfg.variant)
        self._gen = dialogue_stream(
            actor, self.graph, ep, pcfg.variant, record_features=False, traj=self.trajectory
        )
        self._step_watermark = 0
        self.transcript: list[dict] = []
        self.status = "awaiting_answer"
        self.pending: Optional[Question] = None
        self.result: Optional[dict] = None
        self._advance(first=True)

    # -- episode driving -------------------------------------------------------

    def _new_policy_steps(self) -> list[dict]:
        steps = self.trajectory.all_steps()
        fresh = steps[self._step_watermark :]
        self._step_watermark = len(steps)
        out = []
        for s in fresh:
            entry = {"agent": s.agent, "action": int(s.action)}
            if s.worker is not None:
                entry["worker"] = CATEGORIES[s.worker]
            if s.probs is not None:
                entry["probs"] = [round(float(p), 6) for p in s.probs]
            out.append(entry)
        return out

    def _advance(self, answer: Optional[bool] = None, first: bool = False) -> None:
        try:
            msg = next(self._gen) if first else self._gen.send(answer)
        except StopIteration as stop:
            traj = stop.value
            self.status = "finished"
            self.pending = None
            declared_identity = FRAUD if self.fake_items else "NonFraud"
            self.result = {
                "decision": traj.decision,
                "per_item_decisions": dict(traj.per_item_decisions),
                "questions_asked": traj.questions_asked,
                "declared_fake_items": self.fake_items,
                "declared_identity": declared_identity,
                "system_correct": traj.decision == declared_identity,
            }
            if self.inspect:
                self.result["policy_steps"] = self._new_policy_steps()
            return
        _, _, _, triplet = msg
        q = render_question(self.world, triplet, derive_seed(self.seed, "q", len(self.transcript)))
        self.pending = q
        self.status = "awaiting_answer"

    def question_payload(self) -> dict:
        q = self.pending
        payload = {
            "index": len(self.transcript),
            "text": q.text,
            "options": dict(q.options),
            "progress": {
                "questions_asked": len(self.transcript),
                "max_questions": self.cfg.max_system_turns,
            },
        }
        if self.inspect:
            payload["policy_steps"] = self._new_policy_steps()
            payload["correct_label"] = q.correct_label
        return payload

    def submit_answer(self, label: str) -> None:
        if self.status != "awaiting_answer" or self.pending is None:
            raise SessionError("no question is pending")
        label = label.strip().upper()
        if label not in ("A", "B", "C", "D"):
            raise ValueError(f"label must be one of A-D, got {label!r}")
        q = self.pending
        correct = label == q.correct_label
        self.transcript.append(
            {
                "index": len(self.transcript),
                "text": q.text,
                "options": dict(q.options),
                "answer": label,
                "correct": correct,
            }
        )
        self.pending = None
        self._advance(answer=correct)

    def view(self) -> dict:
        out = {
            "session_id": self.session_id,
            "status": self.status,
            "profile": {
                "applicant_id": self.profile.applicant_id,
                "items": {c: self.world.entity(self.profile.items[c]).name for c in CATEGORIES},
            },
            "declared_fake_items": self.fake_items,
            "transcript": list(self.transcript),
            "progress": {
                "questions_asked": len(self.transcript),
                "max_questions": self.cfg.max_system_turns,
            },
        }
        if self.status == "awaiting_answer":
            out["question"] = self.question_payload()
        if self.result is not None:
            out["result"] = self.result
        return out


class SessionStore:
    """Bounded, thread-safe session registry with idle expiry."""

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self._lock = threading.Lock()
        self._sessions: dict[str, PolicySession] = {}

    def _sweep(self) -> None:
        now = time.monotonic()
        expired = [
            sid
            for sid, s in self._sessions.items()
            if now - s.last_access > self.cfg.idle_timeout_s
        ]
        for sid in expired:
            del self._sessions[sid]
        while len(self._sessions) >= self.cfg.max_sessions:
            oldest = min(self._sessions, key=lambda sid: self._sessions[sid].last_access)
            del self._sessions[oldest]

    def add(self, session: PolicySession) -> None:
        with self._lock:
            self._sweep()
            self._sessions[session.session_id] = session

    def get(self, sid: str) -> PolicySession:
        with self._lock:
            self._sweep()
            if sid not in self._sessions:
                raise KeyError(sid)
            session = self._sessions[sid]
            session.last_access = time.monotonic()
            return session

    def delete(self, sid: str) -> None:
        with self._lock:
            if sid not in self._sessions:
                raise KeyError(sid)
            del self._sessions[sid]

    def __len__(self) -> int:
        return len(self._sessions)


def create_app(
    world: World,
    profiles: list[PersonalProfile],
    params: ParamStore,
    pcfg: PolicyConfig,
    cfg: Optional[SessionConfig] = None,
):
    """FastAPI app exposing the versioned session API."""
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    cfg = cfg or SessionConfig()
    store = SessionStore(cfg)
    profile_by_id = {p.applicant_id: p for p in profiles}
    app = FastAPI(title="antifraud dialogue service", version="1")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    class CreateSession(BaseModel):
        profile_id: Optional[int] = None
        fake_items: Optional[list[str]] = None
        seed: Optional[int] = None
        inspect: bool = False

    class AnswerBody(BaseModel):
        label: str

    def _session(sid: str) -> PolicySession:
        try:
            return store.get(sid)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")

    @app.post(API_PREFIX + "/sessions", status_code=201)
    def create_session(body: CreateSession):
        seed = body.seed if body.seed is not None else secrets.randbits(48)
        if body.profile_id is not None:
            if body.profile_id not in profile_by_id:
                raise HTTPException(status_code=404, detail=f"unknown profile {body.profile_id}")
            profile = profile_by_id[body.profile_id]
        else:
            rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "profile")))
            profile = profiles[int(rng.integers(0, len(profiles)))]
        try:
            session = PolicySession(
                world,
                profile,
                params,
                pcfg,
                seed,
                cfg,
                fake_items=body.fake_items,
                inspect=body.inspect,
            )
        except SessionError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        store.add(session)
        return session.view()

    @app.get(API_PREFIX + "/sessions/{sid}")
    def get_session(sid: str):
        session = _session(sid)
        with session.lock:
            return session.view()

    @app.get(API_PREFIX + "/sessions/{sid}/question")
    def get_question(sid: str):
        session = _session(sid)
        with session.lock:
            if session.status != "awaiting_answer":
                raise HTTPException(status_code=409, detail="session is finished")
            return session.question_payload()

    @app.post(API_PREFIX + "/sessions/{sid}/answer")
    def post_answer(sid: str, body: AnswerBody):
        session = _session(sid)
        with session.lock:
            try:
                session.submit_answer(body.label)
            except SessionError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            return session.view()

    @app.get(API_PREFIX + "/sessions/{sid}/result")
    def get_result(sid: str):
        session = _session(sid)
        with session.lock:
            if session.result is None:
                raise HTTPException(status_code=409, detail="session is not finished")
            return session.result

    @app.delete(API_PREFIX + "/sessions/{sid}", status_code=204)
    def delete_session(sid: str):
        try:
            store.delete(sid)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")

    app.state.store = store
    return app


def serve(world, profiles, params, pcfg, host: str, port: int, cfg: Optional[SessionConfig] = None):
    import uvicorn

    app = create_app(world, profiles, params, pcfg, cfg)
    uvicorn.run(app, host=host, port=port, log_level="info")
