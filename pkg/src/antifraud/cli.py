"""Command-line entry points for the full pipeline."""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, ExperimentConfig, default_config_dict, load_config
from .dialogue import DialogueGraph
from .episodes import MODE_GREEDY
from .evaluation import (
    ablation_suite,
    evaluate,
    manager_action_curves,
    rule_consistency,
    write_ablation_table,
    write_learning_curves,
)
from .kg import io as kg_io
from .kg.types import CATEGORIES, KGError
from .kg.worldgen import generate_world, sample_profiles
from .nn.params import ParamError, load_checkpoint
from .policy import PolicyConfig
from .service import PolicySession, SessionConfig, serve as run_server
from .simulator import sample_applicant
from .training import RewardConfig, TrainingError, derive_seed, train


class CliError(click.ClickException):
    exit_code = 2


def _load_cfg(config: str | None, overrides: tuple[str, ...]) -> ExperimentConfig:
    try:
        if config is None:
            from .config import apply_overrides, config_from_dict

            return config_from_dict(apply_overrides(default_config_dict(), list(overrides)))
        return load_config(config, list(overrides))
    except ConfigError as exc:
        raise CliError(str(exc))


def _load_world(path: str):
    try:
        return kg_io.load_world(path)
    except FileNotFoundError:
        raise CliError(f"world file not found: {path}")
    except (KGError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: {exc}")


def _load_profiles(path: str):
    try:
        return kg_io.load_profiles(path)
    except FileNotFoundError:
        raise CliError(f"profiles file not found: {path}")
    except (KGError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: {exc}")


def _load_ckpt(path: str):
    try:
        params, meta = load_checkpoint(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {path}")
    except ParamError as exc:
        raise CliError(str(exc))
    if "policy_config" not in meta:
        raise CliError(f"{path}: checkpoint has no policy_config metadata")
    return params, PolicyConfig(**meta["policy_config"]), meta


def _split_profiles(cfg: ExperimentConfig, profiles):
    tr, dv, te = cfg.split_indices()
    need = te.stop
    if len(profiles) < need:
        raise CliError(f"profiles file has {len(profiles)} entries; split needs {need}")
    return {
        "train": [profiles[i] for i in tr],
        "dev": [profiles[i] for i in dv],
        "test": [profiles[i] for i in te],
    }


@click.group()
def main():
    """Dialogue-based identity fraud detection: generate worlds, train
    policies, evaluate, play, serve."""


@main.command("init-config")
@click.option("--out", type=click.Path(dir_okay=False), default="experiment.json", show_default=True)
def init_config(out):
    """Write the default experiment config to a file."""
    Path(out).write_text(json.dumps(default_config_dict(), indent=1), encoding="utf-8")
    click.echo(f"wrote {out}")


@main.command("gen-world")
@click.option("--config", "config_path", type=click.Path(), default=None, help="Experiment config file.")
@click.option("--set", "overrides", multiple=True, help="Override config entries: dotted.path=value.")
@click.option("--seed", type=int, default=None, help="World seed (overrides config).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output world file.")
def gen_world(config_path, overrides, seed, out):
    """Generate a synthetic world and write the world file."""
    cfg = _load_cfg(config_path, overrides)
    seed = seed if seed is not None else cfg.world_seed
    out = out or cfg.paths.world
    try:
        world = generate_world(cfg.world, seed)
    except KGError as exc:
        raise CliError(f"world generation failed: {exc}")
    kg_io.save_world(world, out)
    click.echo(f"wrote {out}: {len(world.entities)} entities, {len(world.triplets)} triplets")


@main.command("gen-profiles")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True)
@click.option("--world", "world_path", type=click.Path(), default=None)
@click.option("--n", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def gen_profiles(config_path, overrides, world_path, n, seed, out):
    """Sample applicant profiles from a world."""
    cfg = _load_cfg(config_path, overrides)
    world = _load_world(world_path or cfg.paths.world)
    n = n if n is not None else cfg.profiles.n
    seed = seed if seed is not None else cfg.profiles.seed
    out = out or cfg.paths.profiles
    profiles = sample_profiles(world, n, seed)
    kg_io.save_profiles(profiles, out, world_seed=world.rng_seed)
    click.echo(f"wrote {out}: {n} profiles")


@main.command("simulate")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True)
@click.option("--n", type=int, default=20, show_default=True, help="Applicants to sample.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def simulate(config_path, overrides, n, seed, out):
    """Sample simulated applicants and dump a fixture file."""
    cfg = _load_cfg(config_path, overrides)
    world = _load_world(cfg.paths.world)
    profiles = _load_profiles(cfg.paths.profiles)
    records = []
    for i in range(n):
        profile = profiles[i % len(profiles)]
        app = sample_applicant(world, profile, cfg.sim, derive_seed(seed, "sim", i))
        records.append(
            {
                "applicant_id": profile.applicant_id,
                "identity": app.identity,
                "fake_items": sorted(app.fake_items),
                "knowledge": {str(list(k)): v for k, v in sorted(app.knowledge.items())},
            }
        )
    Path(out).write_text(
        json.dumps({"format_version": 1, "kind": "applicants", "records": records}, indent=1),
        encoding="utf-8",
    )
    click.echo(f"wrote {out}: {n} sampled applicants")


def _run_training(cfg: ExperimentConfig, variant, resume, sl_only: bool):
    world = _load_world(cfg.paths.world)
    profiles = _load_profiles(cfg.paths.profiles)
    splits = _split_profiles(cfg, profiles)
    tcfg = cfg.train
    if sl_only:
        tcfg = dataclasses.replace(tcfg, rl_epochs=0)
    try:
        result = train(
            variant or cfg.variant,
            world,
            splits["train"],
            splits["dev"],
            cfg.sim,
            cfg.reward,
            tcfg,
            cfg.train_seed,
            out_dir=cfg.paths.out_dir,
            resume_from=resume,
        )
    except (TrainingError, ParamError) as exc:
        raise CliError(str(exc))
    click.echo(
        f"{result.variant}: best dev accuracy {result.best_dev_accuracy:.3f}; "
        f"checkpoints in {cfg.paths.out_dir}"
    )
    return result


@main.command("pretrain")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("--variant", type=click.Choice(["full", "hp", "mp"]), default=None)
def pretrain_cmd(config_path, overrides, variant):
    """Supervised pre-training only (the RL stage is skipped)."""
    cfg = _load_cfg(config_path, overrides)
    _run_training(cfg, variant, None, sl_only=True)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("--variant", type=click.Choice(["full", "hp", "mp"]), default=None)
@click.option("--resume", type=click.Path(), default=None, help="Resume from a checkpoint.")
def train_cmd(config_path, overrides, variant, resume):
    """Pre-train then train with REINFORCE; writes checkpoints and metrics."""
    cfg = _load_cfg(config_path, overrides)
    _run_training(cfg, variant, resume, sl_only=False)


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--system", type=click.Choice(["flat_rule", "hier_rule"]), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def eval_cmd(config_path, overrides, checkpoint, system, out):
    """Evaluate a checkpoint (or a rule system) on the test split."""
    if (checkpoint is None) == (system is None):
        raise CliError("provide exactly one of --checkpoint or --system")
    cfg = _load_cfg(config_path, overrides)
    world = _load_world(cfg.paths.world)
    profiles = _load_profiles(cfg.paths.profiles)
    splits = _split_profiles(cfg, profiles)
    kwargs = {}
    name = system
    if checkpoint is not None:
        params, pcfg, meta = _load_ckpt(checkpoint)
        kwargs = {"params": params, "pcfg": pcfg}
        name = meta.get("variant", "full")
    report = evaluate(
        name,
        world,
        splits["test"],
        cfg.sim,
        seed=cfg.eval.seed,
        repeats=cfg.eval.repeats,
        max_system_turns=cfg.train.max_system_turns,
        max_worker_turns=cfg.train.max_worker_turns,
        **kwargs,
    )
    doc = report.to_dict()
    text = json.dumps(doc, indent=1)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    click.echo(f"{name}: accuracy={report.accuracy:.3f} avg_turns={report.avg_turns:.2f}")


@main.command("analyze")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--dump-dialogues", type=int, default=5, show_default=True)
def analyze_cmd(config_path, overrides, checkpoint, out_dir, dump_dialogues):
    """Policy analysis: manager action curves, rule-consistency statistics and
    sample dialogue transcripts."""
    import csv

    cfg = _load_cfg(config_path, overrides)
    world = _load_world(cfg.paths.world)
    profiles = _load_profiles(cfg.paths.profiles)
    splits = _split_profiles(cfg, profiles)
    params, pcfg, meta = _load_ckpt(checkpoint)
    report = evaluate(
        meta.get("variant", "full"),
        world,
        splits["test"],
        cfg.sim,
        seed=cfg.eval.seed,
        repeats=cfg.eval.repeats,
        params=params,
        pcfg=pcfg,
        max_system_turns=cfg.train.max_system_turns,
        max_worker_turns=cfg.train.max_worker_turns,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "analysis.json").write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    if report.manager_curves:
        with (out / "manager_curves.csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "n", *CATEGORIES, "Decide"])
            for row in report.manager_curves:
                writer.writerow(
                    [row["step"], row["n"]]
                    + [f"{row[c]:.4f}" for c in CATEGORIES]
                    + [f"{row['Decide']:.4f}"]
                )
    # A few rendered transcripts for qualitative inspection.
    dumps = []
    for i in range(dump_dialogues):
        profile = splits["test"][i % len(splits["test"])]
        session = PolicySession(
            world,
            profile,
            params,
            pcfg,
            seed=derive_seed(cfg.eval.seed, "dump", i),
            cfg=SessionConfig(
                max_system_turns=cfg.train.max_system_turns,
                max_worker_turns=cfg.train.max_worker_turns,
            ),
        )
        app = sample_applicant(world, profile, cfg.sim, derive_seed(cfg.eval.seed, "dump_app", i))
        while session.status == "awaiting_answer":
            q = session.pending
            from .simulator import answer as sim_answer

            session.submit_answer(sim_answer(app, q).label)
        dumps.append(
            {
                "applicant_id": profile.applicant_id,
                "identity": app.identity,
                "fake_items": sorted(app.fake_items),
                "transcript": session.transcript,
                "result": session.result,
            }
        )
    (out / "dialogues.json").write_text(json.dumps(dumps, indent=1), encoding="utf-8")
    stats = report.rule_stats or {}
    click.echo(
        f"accuracy={report.accuracy:.3f} "
        f"p(RS1|Cond1)={stats.get('p_rs1_cond1')} p(RS2|Cond2)={stats.get('p_rs2_cond2')}"
    )
    click.echo(f"analysis written to {out}")


@main.command("ablation")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("--seeds", default="1,2,3", show_default=True, help="Comma-separated training seeds.")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def ablation_cmd(config_path, overrides, seeds, out_dir, workers):
    """Train all neural variants and compare the five systems."""
    cfg = _load_cfg(config_path, overrides)
    world = _load_world(cfg.paths.world)
    profiles = _load_profiles(cfg.paths.profiles)
    splits = _split_profiles(cfg, profiles)
    seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    suite = ablation_suite(
        world, splits, cfg.sim, cfg.reward, cfg.train, seed_list, out_dir=out_dir, workers=workers
    )
    for system, info in suite["systems"].items():
        click.echo(
            f"{system:10s} accuracy={info['accuracy_median']:.3f} turns={info['avg_turns_median']:.2f}"
        )


@main.command("play")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--set", "overrides", multiple=True)
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--world", "world_path", type=click.Path(), default=None)
@click.option("--profiles", "profiles_path", type=click.Path(), default=None)
@click.option("--profile", "profile_id", type=int, default=None, help="Applicant id; random if omitted.")
@click.option("--fake", multiple=True, type=click.Choice(list(CATEGORIES)), help="Items to roleplay as faked.")
@click.option("--seed", type=int, default=None)
def play_cmd(config_path, overrides, checkpoint, world_path, profiles_path, profile_id, fake, seed):
    """Terminal dialogue against a trained policy: you are the applicant."""
    cfg = _load_cfg(config_path, overrides)
    world = _load_world(world_path or cfg.paths.world)
    profiles = _load_profiles(profiles_path or cfg.paths.profiles)
    params, pcfg, _ = _load_ckpt(checkpoint)
    if profile_id is None:
        rng = np.random.Generator(np.random.PCG64(seed if seed is not None else 0))
        profile = profiles[int(rng.integers(0, len(profiles)))]
    else:
        matches = [p for p in profiles if p.applicant_id == profile_id]
        if not matches:
            raise CliError(f"no profile with applicant_id {profile_id}")
        profile = matches[0]
    session = PolicySession(
        world,
        profile,
        params,
        pcfg,
        seed=seed if seed is not None else derive_seed("play", profile.applicant_id),
        cfg=SessionConfig(
            max_system_turns=cfg.train.max_system_turns,
            max_worker_turns=cfg.train.max_worker_turns,
        ),
        fake_items=list(fake),
    )
    click.echo("Your claimed personal information:")
    for c in CATEGORIES:
        marker = "  (faked!)" if c in fake else ""
        click.echo(f"  {c:10s} {world.entity(profile.items[c]).name}{marker}")
    click.echo("Answer with A, B, C or D.\n")
    while session.status == "awaiting_answer":
        q = session.question_payload()
        click.echo(f"[{q['index'] + 1}] {q['text']}")
        for label in ("A", "B", "C", "D"):
            click.echo(f"   {label}. {q['options'][label]}")
        label = click.prompt("Your answer", type=click.Choice(["A", "B", "C", "D"], case_sensitive=False))
        session.submit_answer(label.upper())
    result = session.result
    click.echo(f"\nDecision: {result['decision']} after {result['questions_asked']} questions")
    click.echo(f"Per-item verdicts: {result['per_item_decisions']}")
    return 0


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True)
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve_cmd(config_path, overrides, checkpoint, host, port):
    """Run the HTTP session service."""
    cfg = _load_cfg(config_path, overrides)
    world = _load_world(cfg.paths.world)
    profiles = _load_profiles(cfg.paths.profiles)
    params, pcfg, _ = _load_ckpt(checkpoint)
    run_server(
        world,
        profiles,
        params,
        pcfg,
        host=host or cfg.serve.host,
        port=port or cfg.serve.port,
        cfg=cfg.serve.session_config(cfg.train),
    )


if __name__ == "__main__":
    sys.exit(main())
