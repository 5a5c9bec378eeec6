# pipeline.py
"""
Pipeline - Orchestrates data generation, training, evaluation and reporting.
Each stage returns a result dictionary instead of raising, so the command
line can map failures to exit codes.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from .agents.diffusion_agent import (
    DiffusionPolicy,
    DiffusionPolicyAgent,
    PolicyConfig,
    build_training_pairs,
    get_variant,
    sidecar_path,
    train,
    validation_loss,
)
from .agents.expert_agent import (
    ControllerGains,
    ExpertAgent,
    ExpertConfig,
    GenerationConfig,
    generate_demonstrations,
)
from .core.catalog import evaluation_catalog, load_catalog, sample_object_catalog, save_catalog
from .core.checkpoint import CheckpointError, read_header
from .core.config import ConfigError, build_dataclass, get_settings, load_config_file
from .core.dataset import (
    compute_norm_stats,
    episodes_frame,
    grasp_only,
    read_episodes,
    split,
    write_episodes,
)
from .core.logger import get_logger
from .core.physics import SimConfig
from .core.rng import make_rng
from .evaluation.harness import EvalConfig, EvalReport, run_trials
from .evaluation.plots import write_trace_plots
from .evaluation.report import check_paired, find_pair, format_comparison, format_report, write_tables
from .evaluation.summary import summarize

log = get_logger("Pipeline")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2
EXIT_SKIP_RATE = 3

COMMANDS = ("gen-data", "train", "eval", "report", "inspect")

CATALOG_FILE = "catalog.json"
EPISODES_FILE = "episodes.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass
class RunConfig:
    """One invocation: command, paths, seed and the config sections."""

    command: str
    out: Path = Path("runs")
    seed: int = 0
    jobs: int = 1
    variant: str = "forceful"
    config_path: Optional[Path] = None
    dataset: Optional[Path] = None
    checkpoint: Optional[Path] = None
    reports: List[Path] = field(default_factory=list)
    target: Optional[Path] = None
    expert: bool = False
    steps: Optional[int] = None
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{self.command}', expected one of {', '.join(COMMANDS)}")
        if self.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {self.jobs}")
        if self.steps is not None and self.steps < 1:
            raise ConfigError(f"--steps must be >= 1, got {self.steps}")
        get_variant(self.variant)
        self.out = Path(self.out)
        if not self.sections:
            self.sections = load_config_file(self.config_path)

    def check_inputs(self):
        """Every referenced input must exist before any work starts."""
        inputs = [p for p in (self.dataset, self.checkpoint, self.target) if p is not None] + list(self.reports)
        for path in inputs:
            if not Path(path).exists():
                raise ConfigError(f"Input not found: {path}")

    def sim(self) -> SimConfig:
        return build_dataclass(SimConfig, self.sections.get("sim", {}), "sim")

    def gains(self) -> ControllerGains:
        return build_dataclass(ControllerGains, self.sections.get("gains", {}), "gains")

    def expert_config(self) -> ExpertConfig:
        return build_dataclass(ExpertConfig, self.sections.get("expert", {}), "expert")

    def generation(self) -> GenerationConfig:
        return build_dataclass(GenerationConfig, self.sections.get("generation", {}), "generation")

    def policy(self) -> PolicyConfig:
        cfg = build_dataclass(PolicyConfig, self.sections.get("policy", {}), "policy")
        if self.steps is not None:
            cfg = replace(cfg, train_steps=self.steps)
        return cfg

    def evaluation(self) -> EvalConfig:
        return build_dataclass(EvalConfig, self.sections.get("eval", {}), "eval")


def _result(**fields) -> Dict[str, Any]:
    result = {"success": False, "error": None, "exit_code": EXIT_RUNTIME}
    result.update(fields)
    return result


def _guarded(stage: Callable[[RunConfig], Dict[str, Any]], run: RunConfig) -> Dict[str, Any]:
    """Run one stage, converting exceptions into a failed result."""
    try:
        run.check_inputs()
        return stage(run)
    except ValueError as e:
        log.error(f"{run.command} failed validation: {e}")
        return _result(error=str(e), exit_code=EXIT_VALIDATION)
    except (RuntimeError, OSError) as e:
        log.error(f"{run.command} failed: {e}")
        return _result(error=str(e), exit_code=EXIT_RUNTIME)


def _episodes_path(path: Path) -> Path:
    path = Path(path)
    return path / EPISODES_FILE if path.is_dir() else path


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _training_record_path(checkpoint: Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".train.json")


# ---------------------------------------------------------------------------
# Stages

def _gen_data(run: RunConfig) -> Dict[str, Any]:
    sim = run.sim()
    gen = run.generation()
    run.out.mkdir(parents=True, exist_ok=True)
    log.info(f"Writing demonstrations to {run.out}")

    catalog = sample_object_catalog(gen.n_objects, make_rng(run.seed, "catalog"))
    episodes, manifest = generate_demonstrations(
        catalog, sim, run.seed, run.gains(), run.expert_config(), gen, jobs=run.jobs
    )
    if not episodes:
        raise RuntimeError("No demonstration was kept")

    paths = {
        "catalog": run.out / CATALOG_FILE,
        "episodes": run.out / EPISODES_FILE,
        "manifest": run.out / MANIFEST_FILE,
    }
    save_catalog(catalog, paths["catalog"])
    write_episodes(episodes, paths["episodes"])
    manifest.save(paths["manifest"])

    result = _result(
        success=True,
        exit_code=EXIT_OK,
        episodes=len(episodes),
        objects=len(catalog),
        skip_rate=manifest.skip_rate,
        median_grasp_ticks=manifest.median_grasp_ticks,
        paths={k: str(v) for k, v in paths.items()},
    )
    if manifest.skip_rate > gen.max_skip_rate:
        result.update(
            success=False,
            exit_code=EXIT_SKIP_RATE,
            error=f"{manifest.infeasible_count} of {len(catalog)} objects skipped "
                  f"({manifest.skip_rate:.0%} > {gen.max_skip_rate:.0%})",
        )
        log.error(result["error"])
    return result


def _train(run: RunConfig) -> Dict[str, Any]:
    if run.dataset is None:
        raise ConfigError("train needs --dataset")
    cfg = run.policy()
    variant = get_variant(run.variant)
    dataset = _episodes_path(run.dataset)

    episodes = grasp_only(read_episodes(dataset))
    if not episodes:
        raise ValueError(f"{dataset} has no usable grasp episodes")
    train_set, val_set = split(episodes, cfg.split_ratio, run.seed)
    norm_stats = compute_norm_stats(train_set)
    pairs = build_training_pairs(train_set, cfg, variant, norm_stats)
    log.info(f"Split {len(episodes)} episodes into {len(train_set)} train / {len(val_set)} validation")

    outcome = train(pairs, cfg, variant, norm_stats, run.seed)
    val_loss = None
    if val_set:
        val_pairs = build_training_pairs(val_set, cfg, variant, norm_stats)
        val_loss = validation_loss(outcome.policy, val_pairs, run.seed)
        log.info(f"Validation loss {val_loss:.4f}")

    run.out.mkdir(parents=True, exist_ok=True)
    checkpoint = outcome.policy.save(run.out / f"{variant.tag}.ckpt")
    loss_path = run.out / f"{variant.tag}_loss.csv"
    pd.DataFrame({"step": range(1, len(outcome.losses) + 1), "loss": outcome.losses}).to_csv(loss_path, index=False)

    decile = max(1, len(outcome.losses) // 10)
    record = {
        "variant": variant.tag,
        "seed": run.seed,
        "dataset": str(dataset),
        "dataset_sha256": _digest(dataset),
        "train_episodes": len(train_set),
        "validation_episodes": len(val_set),
        "pairs": len(pairs),
        "steps": len(outcome.losses),
        "first_decile_loss": float(sum(outcome.losses[:decile]) / decile),
        "final_decile_loss": float(sum(outcome.losses[-decile:]) / decile),
        "validation_loss": val_loss,
    }
    _training_record_path(checkpoint).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    return _result(
        success=True,
        exit_code=EXIT_OK,
        checkpoint=str(checkpoint),
        loss_trace=str(loss_path),
        **{k: record[k] for k in ("steps", "first_decile_loss", "final_decile_loss", "validation_loss")},
    )


def _check_dataset(checkpoint: Path, dataset: Path):
    """Refuse to evaluate a policy against a corpus it was not trained on."""
    record_path = _training_record_path(checkpoint)
    if not record_path.exists():
        raise CheckpointError(f"{checkpoint} has no training record to compare against {dataset}")
    record = json.loads(record_path.read_text(encoding="utf-8"))
    if record.get("dataset_sha256") != _digest(_episodes_path(dataset)):
        raise CheckpointError(f"{checkpoint} was trained on {record.get('dataset')}, not {dataset}")


def _eval(run: RunConfig) -> Dict[str, Any]:
    sim = run.sim()
    eval_cfg = run.evaluation()

    if run.expert:
        agent = ExpertAgent(run.gains(), param_noise_std=eval_cfg.expert_param_noise,
                            slip_margin=run.expert_config().slip_margin,
                            gravity=sim.gravity, pads=sim.friction_pads)
    else:
        if run.checkpoint is None:
            raise ConfigError("eval needs --checkpoint (or --expert)")
        if run.dataset is not None:
            _check_dataset(run.checkpoint, run.dataset)
        policy = DiffusionPolicy.load(run.checkpoint, expected_variant=run.variant)
        agent = DiffusionPolicyAgent(policy, max_aperture=sim.max_aperture)

    report = run_trials(agent, evaluation_catalog(), sim, eval_cfg, run.seed, jobs=run.jobs)
    run.out.mkdir(parents=True, exist_ok=True)
    path = report.save(run.out / f"eval_{report.variant}.json")

    summary = report.summary()
    return _result(
        success=True,
        exit_code=EXIT_OK,
        report=str(path),
        variant=report.variant,
        success_rate=summary["success"]["overall"]["rate"],
        counts=summary["counts"],
    )


def _report(run: RunConfig) -> Dict[str, Any]:
    if not run.reports:
        raise ConfigError("report needs --reports")
    reports = [EvalReport.load(p) for p in run.reports]
    pair = find_pair(reports)
    if pair is not None:
        check_paired(*pair)

    run.out.mkdir(parents=True, exist_ok=True)
    tables = write_tables(reports, run.out)
    traces = pd.concat([r.traces() for r in reports], ignore_index=True)
    plots = write_trace_plots(traces, run.out / "plots")

    lines: List[str] = []
    for report in reports:
        lines.extend(format_report(report))
        lines.append("")
    if pair is not None:
        lines.extend(format_comparison(*pair))
        lines.append("")
        lines.append(summarize(pair[0], pair[1]))
    else:
        lines.extend(summarize(r) for r in reports)
    text = "\n".join(lines).rstrip() + "\n"
    text_path = run.out / "report.txt"
    text_path.write_text(text, encoding="utf-8")

    return _result(
        success=True,
        exit_code=EXIT_OK,
        text=text,
        tables={k: str(v) for k, v in tables.items()},
        plots=[str(p) for p in plots],
    )


def _inspect_dataset(path: Path) -> List[str]:
    episodes = read_episodes(path)
    lines = [f"Dataset {path}: {len(episodes)} episodes, {sum(len(e) for e in episodes)} steps"]
    if not episodes:
        return lines

    frame = episodes_frame(episodes)
    lengths = frame.groupby("episode").size()
    lines.append(f"  steps per episode: min {lengths.min()}, median {lengths.median():.0f}, max {lengths.max()}")
    lines.append(f"  subtasks: {frame['subtask'].value_counts().sort_index().to_dict()}")
    grasp = frame[frame["subtask"] == "grasp"]
    if not grasp.empty:
        lines.append(
            f"  final grasp force: {grasp.groupby('episode')['action.gripper_force'].last().min():.2f}-"
            f"{grasp.groupby('episode')['action.gripper_force'].last().max():.2f} N"
        )

    histogram = pd.Series([e.object_name for e in episodes]).value_counts().sort_index()
    seen = {e.object_name: e.seen for e in episodes}
    lines.append(f"  objects: {len(histogram)}")
    for name, count in histogram.items():
        lines.append(f"    {name:<32} {count:3d}{'  (eval seen)' if seen[name] else ''}")

    catalog_path = path.parent / CATALOG_FILE
    if catalog_path.exists():
        masses = [spec.mass for spec in load_catalog(catalog_path)]
        lines.append(f"  mass range: {1000 * min(masses):.1f} g to {1000 * max(masses):.1f} g")
    return lines


def _inspect_checkpoint(path: Path) -> List[str]:
    header = read_header(path)
    lines = [f"Checkpoint {path}: seed {header['seed']}, step {header['step']}"]
    extra = header.get("extra", {})
    if extra:
        lines.append(f"  variant {extra.get('variant')}, obs_dim {extra.get('obs_dim')}, act_dim {extra.get('act_dim')}")
    total = 0
    for entry in header["tensors"]:
        size = 1
        for dim in entry["shape"]:
            size *= dim
        total += size
        lines.append(f"    {entry['name']:<16} {tuple(entry['shape'])}")
    lines.append(f"  parameters: {total}")

    record_path = _training_record_path(path)
    if record_path.exists():
        record = json.loads(record_path.read_text(encoding="utf-8"))
        lines.append(f"  trained on {record['dataset']} ({record['train_episodes']} train episodes)")
        lines.append(f"  loss {record['first_decile_loss']:.4f} -> {record['final_decile_loss']:.4f}")
    return lines


def _inspect(run: RunConfig) -> Dict[str, Any]:
    if run.target is None:
        raise ConfigError("inspect needs a path")
    target = Path(run.target)
    if target.is_dir():
        target = target / EPISODES_FILE
    if sidecar_path(target).exists() or target.suffix == ".ckpt":
        lines = _inspect_checkpoint(target)
    else:
        lines = _inspect_dataset(target)
    return _result(success=True, exit_code=EXIT_OK, text="\n".join(lines) + "\n")


STAGES = {
    "gen-data": _gen_data,
    "train": _train,
    "eval": _eval,
    "report": _report,
    "inspect": _inspect,
}


def run_pipeline(run: RunConfig) -> Dict[str, Any]:
    """
    Execute one command.

    Args:
        run: Invocation settings

    Returns:
        Dictionary with:
        - success: bool
        - error: str (if failed)
        - exit_code: 0 success, 1 runtime, 2 validation, 3 skip rate
        - stage-specific fields (paths, rates, text)
    """
    log.info(f"Running {run.command} (seed {run.seed}, jobs {run.jobs})")
    return _guarded(STAGES[run.command], run)


def default_jobs() -> int:
    """Worker count from the environment."""
    return get_settings().jobs
