"""Test-time metrics, policy-analysis statistics, and the ablation driver."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .baselines import RuleFlatActor, RuleHierarchicalActor
from .episodes import MODE_GREEDY, Actor, NeuralActor, Trajectory, run_episode
from .kg.types import CATEGORIES, PersonalProfile, World
from .nn.params import ParamStore, load_checkpoint
from .policy import FRAUD, NON_FRAUD, PolicyConfig
from .simulator import SimConfig
from .training import (
    ProfileWorkspace,
    RewardConfig,
    TrainConfig,
    build_workspaces,
    derive_seed,
    train,
)

RULE_SYSTEMS = ("flat_rule", "hier_rule")
SYSTEM_LABELS = {
    "flat_rule": "Flat Rule",
    "hier_rule": "Hierarchical Rule",
    "mp": "MP-S",
    "hp": "HP-S",
    "full": "Full-S",
}


@dataclass
class EvalReport:
    system: str
    accuracy: float
    avg_turns: float
    repeats: list[dict]
    confusion: dict[str, int]
    rule_stats: Optional[dict] = None
    manager_curves: Optional[list[dict]] = None

    def to_dict(self) -> dict:
        return asdict(self)


def actor_factory_for(
    system: str, params: Optional[ParamStore] = None, pcfg: Optional[PolicyConfig] = None
) -> Callable[[np.random.Generator], Actor]:
    """Uniform construction of rule and neural (greedy) actors for evaluation."""
    if system == "flat_rule":
        return lambda rng: RuleFlatActor(rng)
    if system == "hier_rule":
        return lambda rng: RuleHierarchicalActor(rng)
    if params is None or pcfg is None:
        raise ValueError(f"system {system!r} needs params and a policy config")
    return lambda rng: NeuralActor(params, pcfg, mode=MODE_GREEDY, rng=rng)


def run_eval_episodes(
    actor_factory: Callable[[np.random.Generator], Actor],
    workspaces: list[ProfileWorkspace],
    repeats: int,
    seed: int,
    variant: str,
    max_system_turns: int = 40,
    max_worker_turns: int = 10,
) -> tuple[list[Trajectory], list[dict]]:
    """`repeats` independent passes over the profiles with freshly sampled
    applicants; greedy/deterministic given seeds."""
    all_trajs: list[Trajectory] = []
    per_repeat = []
    for r in range(repeats):
        correct = 0
        turns = 0
        for i, ws in enumerate(workspaces):
            applicant = ws.sampler.sample(derive_seed(seed, "eval_app", r, i))
            rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "eval_actor", r, i)))
            traj = run_episode(
                actor_factory(rng),
                ws.graph,
                applicant,
                variant,
                max_system_turns,
                max_worker_turns,
                record_features=False,
            )
            traj.truth = applicant.identity
            traj.item_truths = {c: applicant.item_truth(c) for c in CATEGORIES}
            all_trajs.append(traj)
            correct += int(traj.decision == applicant.identity)
            turns += traj.questions_asked
        n = len(workspaces)
        per_repeat.append({"repeat": r, "accuracy": correct / n, "avg_turns": turns / n})
    return all_trajs, per_repeat


def confusion_counts(trajs: list[Trajectory]) -> dict[str, int]:
    counts = {f"{t}|{d}": 0 for t in (FRAUD, NON_FRAUD) for d in (FRAUD, NON_FRAUD)}
    for traj in trajs:
        counts[f"{traj.truth}|{traj.decision}"] += 1
    return counts


def manager_action_curves(trajs: list[Trajectory]) -> list[dict]:
    """Empirical manager action distribution per decision step, averaged over
    all dialogues still active at that step."""
    max_steps = max((len(t.manager_steps) for t in trajs), default=0)
    rows = []
    for s in range(max_steps):
        counts = {c: 0 for c in CATEGORIES}
        counts["Decide"] = 0
        n = 0
        for t in trajs:
            if s >= len(t.manager_steps):
                continue
            step = t.manager_steps[s]
            n += 1
            if step.is_decision:
                counts["Decide"] += 1
            else:
                counts[CATEGORIES[step.action]] += 1
        if n == 0:
            break
        row = {"step": s + 1, "n": n}
        row.update({k: v / n for k, v in counts.items()})
        rows.append(row)
    return rows


def rule_consistency(trajs: list[Trajectory]) -> dict:
    """How often the manager adopts worker verdicts.

    Cond1: some worker said Fraud; RS1: the manager immediately decided Fraud
    with no further worker selections. Cond2: all four workers said NonFraud;
    RS2: the manager decided NonFraud. Absent conditions report None.
    """
    n_cond1 = n_rs1 = n_cond2 = n_rs2 = 0
    for t in trajs:
        verdicts = []
        for sub in t.worker_subepisodes:
            verdicts.append(sub[-1].decision)
        fraud_at = next((j for j, v in enumerate(verdicts) if v == FRAUD), None)
        if fraud_at is not None:
            n_cond1 += 1
            no_more_selects = fraud_at == len(verdicts) - 1
            if no_more_selects and t.decision == FRAUD:
                n_rs1 += 1
        elif len(verdicts) == len(CATEGORIES) and all(v == NON_FRAUD for v in verdicts):
            n_cond2 += 1
            if t.decision == NON_FRAUD:
                n_rs2 += 1
    return {
        "p_rs1_cond1": (n_rs1 / n_cond1) if n_cond1 else None,
        "p_rs2_cond2": (n_rs2 / n_cond2) if n_cond2 else None,
        "n_cond1": n_cond1,
        "n_cond2": n_cond2,
    }


def evaluate(
    system: str,
    world: World,
    profiles: list[PersonalProfile],
    sim_cfg: SimConfig,
    seed: int,
    repeats: int = 10,
    params: Optional[ParamStore] = None,
    pcfg: Optional[PolicyConfig] = None,
    checkpoint: Optional[str | Path] = None,
    max_system_turns: int = 40,
    max_worker_turns: int = 10,
    with_analysis: bool = True,
    workspaces: Optional[list[ProfileWorkspace]] = None,
) -> EvalReport:
    """Greedy evaluation: `repeats` passes over the profiles, averaged."""
    if checkpoint is not None:
        params, meta = load_checkpoint(checkpoint)
        pcfg = PolicyConfig(**meta["policy_config"])
        system = meta.get("variant", system)
    if workspaces is None:
        workspaces = build_workspaces(world, profiles, sim_cfg)
    factory = actor_factory_for(system, params, pcfg)
    trajs, per_repeat = run_eval_episodes(
        factory, workspaces, repeats, seed, system, max_system_turns, max_worker_turns
    )
    accuracy = float(np.mean([r["accuracy"] for r in per_repeat]))
    avg_turns = float(np.mean([r["avg_turns"] for r in per_repeat]))
    hierarchical = system not in ("flat_rule", "mp")
    return EvalReport(
        system=system,
        accuracy=accuracy,
        avg_turns=avg_turns,
        repeats=per_repeat,
        confusion=confusion_counts(trajs),
        rule_stats=rule_consistency(trajs) if (with_analysis and hierarchical) else None,
        manager_curves=manager_action_curves(trajs) if (with_analysis and hierarchical) else None,
    )


# -- ablation -------------------------------------------------------------------


@dataclass
class AblationJob:
    variant: str
    seed: int


def _run_ablation_job(args) -> dict:
    (job, world, splits, sim_cfg, reward_cfg, train_cfg, out_dir) = args
    run_dir = Path(out_dir) / f"{job.variant}_seed{job.seed}" if out_dir else None
    result = train(
        job.variant,
        world,
        splits["train"],
        splits["dev"],
        sim_cfg,
        reward_cfg,
        train_cfg,
        job.seed,
        out_dir=run_dir,
    )
    report = evaluate(
        job.variant,
        world,
        splits["test"],
        sim_cfg,
        seed=derive_seed(job.seed, "test_eval"),
        repeats=train_cfg.eval_repeats,
        params=result.best_params,
        pcfg=train_cfg.policy_config(job.variant),
        max_system_turns=train_cfg.max_system_turns,
        max_worker_turns=train_cfg.max_worker_turns,
    )
    return {
        "variant": job.variant,
        "seed": job.seed,
        "metrics": result.metrics,
        "report": report.to_dict(),
        "best_dev_accuracy": result.best_dev_accuracy,
    }


def ablation_suite(
    world: World,
    splits: dict[str, list[PersonalProfile]],
    sim_cfg: SimConfig,
    reward_cfg: RewardConfig,
    train_cfg: TrainConfig,
    seeds: list[int],
    out_dir: Optional[str | Path] = None,
    variants: tuple[str, ...] = ("mp", "hp", "full"),
    workers: int = 1,
) -> dict:
    """Train the neural variants, evaluate all five systems on the test split,
    and emit the comparison table plus learning-curve data."""
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [AblationJob(v, s) for v in variants for s in seeds]
    args = [(j, world, splits, sim_cfg, reward_cfg, train_cfg, out_dir) for j in jobs]
    if workers > 1 and len(jobs) > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.map(_run_ablation_job, args)
    else:
        results = [_run_ablation_job(a) for a in args]
    results.sort(key=lambda r: (r["variant"], r["seed"]))

    systems: dict[str, dict] = {}
    for system in RULE_SYSTEMS:
        reports = []
        for s in seeds:
            rep = evaluate(
                system,
                world,
                splits["test"],
                sim_cfg,
                seed=derive_seed(s, "test_eval"),
                repeats=train_cfg.eval_repeats,
                max_system_turns=train_cfg.max_system_turns,
                max_worker_turns=train_cfg.max_worker_turns,
            )
            reports.append({"seed": s, "report": rep.to_dict()})
        systems[system] = {
            "per_seed": reports,
            "accuracy_median": float(np.median([r["report"]["accuracy"] for r in reports])),
            "avg_turns_median": float(np.median([r["report"]["avg_turns"] for r in reports])),
        }
    for variant in variants:
        rows = [r for r in results if r["variant"] == variant]
        systems[variant] = {
            "per_seed": [{"seed": r["seed"], "report": r["report"]} for r in rows],
            "accuracy_median": float(np.median([r["report"]["accuracy"] for r in rows])),
            "avg_turns_median": float(np.median([r["report"]["avg_turns"] for r in rows])),
        }

    suite = {
        "systems": systems,
        "runs": results,
        "seeds": list(seeds),
        "config": {
            "train": asdict(train_cfg),
            "reward": asdict(reward_cfg),
        },
    }
    if out_dir is not None:
        (out_dir / "ablation_report.json").write_text(json.dumps(suite, indent=1), encoding="utf-8")
        write_ablation_table(out_dir / "ablation_table.csv", suite)
        write_learning_curves(out_dir / "learning_curves.csv", results)
    return suite


def write_ablation_table(path: str | Path, suite: dict) -> None:
    """One row per system: median accuracy and turns across seeds."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system", "label", "accuracy_median", "avg_turns_median"])
        for system in ("flat_rule", "hier_rule", "mp", "hp", "full"):
            if system not in suite["systems"]:
                continue
            info = suite["systems"][system]
            writer.writerow(
                [
                    system,
                    SYSTEM_LABELS.get(system, system),
                    f"{info['accuracy_median']:.4f}",
                    f"{info['avg_turns_median']:.4f}",
                ]
            )


def write_learning_curves(path: str | Path, results: list[dict]) -> None:
    """Flat per-epoch rows for external plotting: variant, seed, phase, epoch,
    dev accuracy, dev turns."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "phase", "epoch", "dev_accuracy", "dev_avg_turns"])
        for r in results:
            for row in r["metrics"]:
                writer.writerow(
                    [
                        r["variant"],
                        r["seed"],
                        row["phase"],
                        row["epoch"],
                        f"{row['dev_accuracy']:.4f}",
                        f"{row['dev_avg_turns']:.4f}",
                    ]
                )
