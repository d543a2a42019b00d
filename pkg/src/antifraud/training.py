"""Reward assignment, supervised pre-training, REINFORCE with value baselines,
and the full training loop with metrics logging and checkpointing."""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import rule_actor_for
from .dialogue import DialogueGraph, MAX_WORKER_TURNS
from .episodes import MODE_GREEDY, MODE_SAMPLE, NeuralActor, Step, Trajectory, run_episode
from .kg.types import CATEGORIES, PersonalProfile, World
from .nn.params import ParamStore, save_checkpoint, load_checkpoint
from .nn.tape import Tape
from .policy import (
    FRAUD,
    N_PERSONAL,
    PolicyConfig,
    flat_logits,
    flat_pairs,
    make_params,
    manager_logits,
    message_passing,
    value,
    worker_logits,
)
from .simulator import ApplicantSampler, SimConfig

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class RewardConfig:
    r_crt_m: float = 3.0
    r_wrg_m: float = 3.0
    r_crt_w: float = 1.0
    r_wrg_w: float = 1.0
    r_turn: float = 0.1
    gamma_m: float = 0.999
    gamma_w: float = 0.99

    def __post_init__(self):
        for name in ("r_crt_m", "r_wrg_m", "r_crt_w", "r_wrg_w", "r_turn"):
            if getattr(self, name) <= 0:
                raise TrainingError(f"{name} must be positive")
        for name in ("gamma_m", "gamma_w"):
            if not (0.0 < getattr(self, name) <= 1.0):
                raise TrainingError(f"{name} must lie in (0, 1]")


@dataclass
class TrainConfig:
    batch_applicants: int = 32
    max_system_turns: int = 40
    max_worker_turns: int = MAX_WORKER_TURNS
    depth: int = 2  # message-passing iterations K
    hidden: int = 64
    value_hidden: int = 64
    sl_epochs: int = 20
    rl_epochs: int = 300
    lr_policy: float = 0.01
    lr_value: float = 0.01
    clip_norm: float = 5.0
    eval_repeats: int = 10
    dev_eval_episodes: Optional[int] = None  # cap dev profiles per epoch; None = all

    def __post_init__(self):
        for name in ("batch_applicants", "max_system_turns", "max_worker_turns", "hidden", "value_hidden"):
            if getattr(self, name) < 1:
                raise TrainingError(f"{name} must be >= 1")
        if self.depth < 0:
            raise TrainingError("depth must be >= 0")

    def policy_config(self, variant: str) -> PolicyConfig:
        return PolicyConfig.for_variant(
            variant, depth=self.depth, hidden=self.hidden, value_hidden=self.value_hidden
        )


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from heterogeneous parts (ints and strings)."""
    ints = [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(ints).generate_state(1, dtype=np.uint64)[0] >> 1)


# -- rewards and returns ---------------------------------------------------------


def _suffix_returns(steps: list[Step], gamma: float) -> None:
    ret = 0.0
    for step in reversed(steps):
        ret = step.reward + gamma * ret
        step.ret = ret


def assign_rewards(traj: Trajectory, cfg: RewardConfig) -> Trajectory:
    """Fill per-step rewards and discounted returns at each agent's timescale.

    Manager: -n_questions * r_turn per worker selection, +-r_crt_m/r_wrg_m at
    the final decision. Worker: -r_turn per question, +-r_crt_w/r_wrg_w at its
    verdict, judged against that item's fake/genuine truth. Flat episodes use
    the manager scheme with one question per step.
    """
    if traj.decision is None:
        raise TrainingError("cannot assign rewards to an incomplete episode")
    if traj.truth is None or traj.item_truths is None:
        raise TrainingError("trajectory lacks ground truth")

    is_flat = bool(traj.manager_steps) and traj.manager_steps[0].agent == "flat"
    if is_flat:
        for step in traj.manager_steps:
            if step.is_decision:
                correct = step.decision == traj.truth
                step.reward = cfg.r_crt_m if correct else -cfg.r_wrg_m
            else:
                step.reward = -cfg.r_turn
        _suffix_returns(traj.manager_steps, cfg.gamma_m)
        return traj

    sub_iter = iter(traj.worker_subepisodes)
    for step in traj.manager_steps:
        if step.is_decision:
            correct = step.decision == traj.truth
            step.reward = cfg.r_crt_m if correct else -cfg.r_wrg_m
        else:
            sub = next(sub_iter)
            n_questions = sum(1 for s in sub if not s.is_decision)
            step.reward = -n_questions * cfg.r_turn
    _suffix_returns(traj.manager_steps, cfg.gamma_m)

    for sub in traj.worker_subepisodes:
        category = CATEGORIES[sub[-1].worker]
        for s in sub:
            if s.is_decision:
                correct = s.decision == traj.item_truths[category]
                s.reward = cfg.r_crt_w if correct else -cfg.r_wrg_w
            else:
                s.reward = -cfg.r_turn
        _suffix_returns(sub, cfg.gamma_w)
    return traj


# -- gradient accumulation --------------------------------------------------------


def step_terms(
    tape: Tape, g: DialogueGraph, step: Step, params: ParamStore, pcfg: PolicyConfig
) -> tuple:
    """Taped loss pieces for one recorded step: log pi(a|state), the value MSE
    term, and the current baseline value (a float, already detached)."""
    feats = step.features.astype(np.float64)
    states = message_passing(tape, g.indptr, g.src, feats, params, pcfg)
    if step.agent == "manager":
        logits = manager_logits(tape, states, params)
        v = value(tape, states, "manager", params)
    elif step.agent == "worker":
        logits = worker_logits(tape, states, g, step.worker, params)
        v = value(tape, states, "worker", params, p=step.worker)
    else:  # flat
        logits = flat_logits(tape, states, g, flat_pairs(g), params)
        v = value(tape, states, "manager", params)
    logp = tape.log_masked_softmax_pick(logits, step.mask, step.action)
    value_term = tape.square(tape.sub_const(v, step.ret))
    masked = np.where(step.mask, logits.data, -np.inf)
    greedy_match = int(np.argmax(masked) == step.action)
    return logp, value_term, float(v.data), greedy_match


def accumulate_gradients(
    params: ParamStore,
    pcfg: PolicyConfig,
    batch: list[tuple[Trajectory, DialogueGraph]],
    rl: bool,
) -> dict:
    """Sum gradients over a batch (no normalization: two identical trajectories
    contribute exactly twice the gradient). Grads land in params[...].grad.

    RL weights each -log pi by the advantage R - V with the baseline treated
    as a constant; supervised mode is plain cross-entropy (weight 1).
    """
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "steps": 0, "matches": 0}
    for traj, g in batch:
        tape = Tape()
        terms: list = []
        coeffs: list[float] = []
        for step in traj.all_steps():
            if step.features is None:
                raise TrainingError("trajectory lacks feature snapshots; re-run with recording on")
            logp, vterm, v_now, match = step_terms(tape, g, step, params, pcfg)
            pc = -(step.ret - v_now) if rl else -1.0
            terms.extend([logp, vterm])
            coeffs.extend([pc, 1.0])
            totals["policy_loss"] += pc * float(logp.data)
            totals["value_loss"] += float(vterm.data)
            totals["steps"] += 1
            totals["matches"] += match
        if terms:
            loss = tape.scale_add(terms, coeffs)
            tape.backward(loss)
    return totals


def _partition_norm(params: ParamStore, names: list[str]) -> float:
    total = 0.0
    for n in names:
        g = params[n].grad
        total += float((g * g).sum())
    return float(np.sqrt(total))


def sgd_step(params: ParamStore, cfg: TrainConfig) -> dict:
    """Clipped SGD with separate step sizes for policy and value partitions.

    A non-finite gradient aborts the update (gradients are cleared, parameters
    untouched) and reports via the returned stats.
    """
    from .policy import policy_param_names, value_param_names

    policy_names = policy_param_names(params)
    value_names = value_param_names(params)
    for n in policy_names + value_names:
        if not np.all(np.isfinite(params[n].grad)):
            log.warning("non-finite gradient in %s; skipping optimizer step", n)
            params.zero_grad()
            return {"skipped": True, "param": n}
    stats = {"skipped": False}
    for names, lr, key in ((policy_names, cfg.lr_policy, "policy"), (value_names, cfg.lr_value, "value")):
        norm = _partition_norm(params, names)
        scale = 1.0 if norm <= cfg.clip_norm or norm == 0.0 else cfg.clip_norm / norm
        for n in names:
            t = params[n]
            t.values -= lr * scale * t.grad
        stats[f"{key}_grad_norm"] = norm
    params.zero_grad()
    return stats


def reinforce_update(
    params: ParamStore,
    pcfg: PolicyConfig,
    batch: list[tuple[Trajectory, DialogueGraph]],
    cfg: TrainConfig,
) -> dict:
    """One policy-gradient update: accumulate (R - V) * grad log pi plus the
    value regression over the batch, then a clipped SGD step."""
    if not batch:
        raise TrainingError("empty batch")
    totals = accumulate_gradients(params, pcfg, batch, rl=True)
    totals.update(sgd_step(params, cfg))
    return totals


# -- data plumbing ----------------------------------------------------------------


class ProfileWorkspace:
    """Per-profile reusable state: applicant sampler plus a dialogue graph that
    is reset (never rebuilt) between episodes."""

    def __init__(self, world: World, profile: PersonalProfile, sim_cfg: SimConfig):
        self.profile = profile
        self.sampler = ApplicantSampler(world, profile, sim_cfg)
        self.graph = DialogueGraph(self.sampler.kg, profile, world)


def build_workspaces(world: World, profiles: list[PersonalProfile], sim_cfg: SimConfig) -> list[ProfileWorkspace]:
    return [ProfileWorkspace(world, p, sim_cfg) for p in profiles]


def teacher_trajectories(
    world: World,
    profiles: list[PersonalProfile],
    sim_cfg: SimConfig,
    reward_cfg: RewardConfig,
    variant: str,
    n_episodes: int,
    seed: int,
    max_system_turns: int = 40,
    max_worker_turns: int = MAX_WORKER_TURNS,
    workspaces: Optional[list[ProfileWorkspace]] = None,
) -> list[tuple[Trajectory, DialogueGraph]]:
    """Recorded rule-system episodes with realized discounted returns."""
    if workspaces is None:
        workspaces = build_workspaces(world, profiles, sim_cfg)
    out = []
    for i in range(n_episodes):
        ws = workspaces[i % len(workspaces)]
        applicant = ws.sampler.sample(derive_seed(seed, "applicant", i))
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "teacher", i)))
        traj = run_episode(
            rule_actor_for(variant, rng),
            ws.graph,
            applicant,
            variant,
            max_system_turns,
            max_worker_turns,
            record_features=True,
        )
        assign_rewards(traj, reward_cfg)
        out.append((traj, ws.graph))
    return out


def run_policy_episode(
    params: ParamStore,
    pcfg: PolicyConfig,
    g: DialogueGraph,
    applicant,
    seed: int,
    mode: str = MODE_SAMPLE,
    max_system_turns: int = 40,
    max_worker_turns: int = MAX_WORKER_TURNS,
    record_features: bool = True,
) -> Trajectory:
    rng = np.random.Generator(np.random.PCG64(seed))
    actor = NeuralActor(params, pcfg, mode=mode, rng=rng)
    return run_episode(
        actor, g, applicant, pcfg.variant, max_system_turns, max_worker_turns, record_features
    )


# -- the training loop --------------------------------------------------------------


def _dev_eval(
    params: ParamStore,
    pcfg: PolicyConfig,
    workspaces: list[ProfileWorkspace],
    cfg: TrainConfig,
    seed: int,
) -> tuple[float, float]:
    """One greedy pass over dev profiles with freshly sampled applicants."""
    subset = workspaces
    if cfg.dev_eval_episodes is not None:
        subset = workspaces[: cfg.dev_eval_episodes]
    correct = 0
    turns = 0
    for i, ws in enumerate(subset):
        applicant = ws.sampler.sample(derive_seed(seed, "dev_app", i))
        traj = run_policy_episode(
            params,
            pcfg,
            ws.graph,
            applicant,
            derive_seed(seed, "dev_ep", i),
            mode=MODE_GREEDY,
            max_system_turns=cfg.max_system_turns,
            max_worker_turns=cfg.max_worker_turns,
            record_features=False,
        )
        correct += int(traj.decision == applicant.identity)
        turns += traj.questions_asked
    n = len(subset)
    return correct / n, turns / n


@dataclass
class TrainResult:
    variant: str
    params: ParamStore
    best_params: ParamStore
    metrics: list[dict]
    best_dev_accuracy: float
    checkpoint_path: Optional[Path] = None
    best_checkpoint_path: Optional[Path] = None
    metrics_path: Optional[Path] = None


def _batches(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def train(
    variant: str,
    world: World,
    train_profiles: list[PersonalProfile],
    dev_profiles: list[PersonalProfile],
    sim_cfg: SimConfig,
    reward_cfg: RewardConfig,
    cfg: TrainConfig,
    seed: int,
    out_dir: Optional[str | Path] = None,
    resume_from: Optional[str | Path] = None,
) -> TrainResult:
    """Supervised pre-training from the matching rule system, then REINFORCE.

    Every epoch appends one metrics row (phase, dev accuracy, dev turns, loss
    terms); the best-dev checkpoint is retained alongside the last one. Fully
    deterministic given (config, seed): resuming from the epoch-k checkpoint
    reproduces the remaining epochs exactly.
    """
    pcfg = cfg.policy_config(variant)
    train_ws = build_workspaces(world, train_profiles, sim_cfg)
    dev_ws = build_workspaces(world, dev_profiles, sim_cfg)

    start_phase, start_epoch = "sl", 0
    metrics: list[dict] = []
    best_dev = -1.0
    best_params_snapshot: Optional[dict] = None
    if resume_from is not None:
        params, meta = load_checkpoint(resume_from)
        if meta.get("variant") != variant:
            raise TrainingError(f"checkpoint variant {meta.get('variant')!r} != {variant!r}")
        start_phase = meta["next_phase"]
        start_epoch = meta["next_epoch"]
        best_dev = meta.get("best_dev", -1.0)
        metrics = meta.get("metrics", [])
    else:
        params = make_params(pcfg, derive_seed(seed, "init"))

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / f"{variant}_metrics.jsonl" if out_dir else None
    last_path = out_dir / f"{variant}_last.ckpt.npz" if out_dir else None
    best_path = out_dir / f"{variant}_best.ckpt.npz" if out_dir else None

    def snapshot_params() -> dict:
        return {n: params[n].values.copy() for n in params.names()}

    def params_from_snapshot(snap: dict) -> ParamStore:
        fresh = make_params(pcfg, 0)
        for n in fresh.names():
            fresh[n].values[:] = snap[n]
        return fresh

    def log_row(row: dict) -> None:
        metrics.append(row)
        if metrics_path is not None:
            with metrics_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(row) + "\n")

    def save_state(phase: str, next_epoch: int) -> None:
        if last_path is None:
            return
        meta = {
            "variant": variant,
            "seed": seed,
            "next_phase": phase,
            "next_epoch": next_epoch,
            "best_dev": best_dev,
            "metrics": metrics,
            "policy_config": asdict(pcfg),
        }
        save_checkpoint(last_path, params, meta)

    def run_epoch(phase: str, epoch: int) -> None:
        nonlocal best_dev, best_params_snapshot
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, phase, "order", epoch)))
        order = rng.permutation(len(train_ws))
        batch_stats = {"policy_loss": 0.0, "value_loss": 0.0, "steps": 0, "matches": 0, "skipped": 0}
        for b, batch_idx in enumerate(_batches(list(order), cfg.batch_applicants)):
            batch: list[tuple[Trajectory, DialogueGraph]] = []
            for j, wi in enumerate(batch_idx):
                ws = train_ws[int(wi)]
                app_seed = derive_seed(seed, phase, "app", epoch, b, j)
                applicant = ws.sampler.sample(app_seed)
                if phase == "sl":
                    actor_rng = np.random.Generator(
                        np.random.PCG64(derive_seed(seed, "teacher", epoch, b, j))
                    )
                    traj = run_episode(
                        rule_actor_for(variant, actor_rng),
                        ws.graph,
                        applicant,
                        variant,
                        cfg.max_system_turns,
                        cfg.max_worker_turns,
                        record_features=True,
                    )
                else:
                    traj = run_policy_episode(
                        params,
                        pcfg,
                        ws.graph,
                        applicant,
                        derive_seed(seed, "rollout", epoch, b, j),
                        mode=MODE_SAMPLE,
                        max_system_turns=cfg.max_system_turns,
                        max_worker_turns=cfg.max_worker_turns,
                        record_features=True,
                    )
                assign_rewards(traj, reward_cfg)
                batch.append((traj, ws.graph))
            totals = accumulate_gradients(params, pcfg, batch, rl=(phase == "rl"))
            step_stats = sgd_step(params, cfg)
            for k in ("policy_loss", "value_loss", "steps", "matches"):
                batch_stats[k] += totals[k]
            batch_stats["skipped"] += int(step_stats.get("skipped", False))
        dev_acc, dev_turns = _dev_eval(params, pcfg, dev_ws, cfg, derive_seed(seed, "dev", phase, epoch))
        steps = max(1, batch_stats["steps"])
        row = {
            "variant": variant,
            "phase": phase,
            "epoch": epoch,
            "dev_accuracy": dev_acc,
            "dev_avg_turns": dev_turns,
            "policy_loss": batch_stats["policy_loss"] / steps,
            "value_loss": batch_stats["value_loss"] / steps,
            "action_match": batch_stats["matches"] / steps,
            "skipped_steps": batch_stats["skipped"],
        }
        log_row(row)
        if dev_acc > best_dev:
            best_dev = dev_acc
            best_params_snapshot = snapshot_params()
            if best_path is not None:
                save_checkpoint(
                    best_path,
                    params,
                    {
                        "variant": variant,
                        "seed": seed,
                        "phase": phase,
                        "epoch": epoch,
                        "dev_accuracy": dev_acc,
                        "policy_config": asdict(pcfg),
                    },
                )

    if start_phase == "sl":
        for epoch in range(start_epoch, cfg.sl_epochs):
            run_epoch("sl", epoch)
            if epoch + 1 < cfg.sl_epochs:
                save_state("sl", epoch + 1)
            else:
                save_state("rl", 0)
        start_epoch = 0
    for epoch in range(start_epoch, cfg.rl_epochs):
        run_epoch("rl", epoch)
        save_state("rl", epoch + 1)

    if best_params_snapshot is None:
        best_params_snapshot = snapshot_params()
    best_params = params_from_snapshot(best_params_snapshot)
    return TrainResult(
        variant=variant,
        params=params,
        best_params=best_params,
        metrics=metrics,
        best_dev_accuracy=best_dev,
        checkpoint_path=last_path,
        best_checkpoint_path=best_path,
        metrics_path=metrics_path,
    )


def pretrain(
    params: ParamStore,
    pcfg: PolicyConfig,
    teacher_batch: list[tuple[Trajectory, DialogueGraph]],
    cfg: TrainConfig,
    epochs: Optional[int] = None,
) -> list[dict]:
    """Cross-entropy + value regression on a fixed set of teacher trajectories.

    The full training loop samples fresh teacher episodes per batch; this
    fixed-set variant is the spec surface used for unit-level verification.
    """
    rows = []
    for epoch in range(epochs if epochs is not None else cfg.sl_epochs):
        totals = accumulate_gradients(params, pcfg, teacher_batch, rl=False)
        stats = sgd_step(params, cfg)
        steps = max(1, totals["steps"])
        rows.append(
            {
                "epoch": epoch,
                "ce_loss": totals["policy_loss"] / steps,
                "value_loss": totals["value_loss"] / steps,
                "action_match": totals["matches"] / steps,
                "skipped": stats.get("skipped", False),
            }
        )
    return rows
