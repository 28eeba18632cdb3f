"""Experiment drivers: pretrain once, adapt per mode, write CSV artifacts.

A plan names a task (inline spec or a serialized task file), a pretraining
recipe, and a list of adaptation runs.  Executing a plan writes, into one
output directory: the pretraining metrics CSV, both encoder checkpoints, one
metrics CSV per adaptation run, and a summary CSV.  Given the same plan and
seed, two executions produce byte-identical trees.

Config files are JSON with up to five sections: ``task`` (task spec fields),
``task_file`` (path to a serialized task, exclusive with ``task``),
``pretrain`` (pretraining fields), ``adapt`` (defaults applied to every run),
and ``runs`` (run list, ``run`` command only).  Unknown keys anywhere are
hard errors.
"""

import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .encoders import LinearEncoder
from .exceptions import ConfigError, PestError
from .metrics import write_pretrain_metrics, write_run_metrics, write_summary
from .pretrain import PretrainConfig, pretrain_vlm
from .selftrain import AdaptConfig, adapt
from .synthbench import SyntheticTask, TaskSpec, generate_task, load_task

# Desk-scale overrides applied by the harness on top of the config defaults;
# everything else keeps its dataclass default.
DESK_ADAPT_DEFAULTS = {"learning_rate": 1e-3, "epochs": 10}

DEFAULT_RUN_MODES = ("zero_shot", "st", "pest")
ABLATION_MODES = ("zero_shot", "st", "st_vpe", "st_lpe", "st_vpe_lpe", "pest")
BASELINE_MODES = ("baseline_uniform", "baseline_weighted", "baseline_vote", "pest")
LAMBDA_SWEEP = (0.9, 0.99, 0.999, 0.9999)

TOP_LEVEL_KEYS = ("task", "task_file", "pretrain", "adapt", "runs")

TASK_FILE_NAME = "task.pesttask"


@dataclass
class ExperimentRun:
    """One named adaptation run inside a plan."""

    name: str
    cfg: AdaptConfig


def log(message: str) -> None:
    """Diagnostics go to the error stream; stdout stays clean."""
    print(message, file=sys.stderr)


def load_config(path) -> dict:
    """Read and structurally validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(config, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(config) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    if "task" in config and "task_file" in config:
        raise ConfigError("config sections task and task_file are mutually exclusive")
    return config


def resolve_task(config: dict, seed: int, task_path=None) -> SyntheticTask:
    """Build or load the plan's task.

    An explicit ``task_path`` wins over the config sections.  When the task is
    generated from spec fields, the command seed fills in unless the config
    pins its own.
    """
    if task_path is not None:
        return load_task(task_path)
    if "task_file" in config:
        return load_task(config["task_file"])
    spec_fields = dict(config.get("task", {}))
    spec_fields.setdefault("seed", seed)
    return generate_task(TaskSpec.from_dict(spec_fields))


def resolve_pretrain_config(config: dict) -> PretrainConfig:
    return PretrainConfig.from_dict(config.get("pretrain", {}))


def base_adapt_settings(config: dict) -> dict:
    """Harness desk defaults overlaid with the config's adapt section."""
    section = config.get("adapt", {})
    if not isinstance(section, dict):
        raise ConfigError("adapt section must be a mapping")
    merged = dict(DESK_ADAPT_DEFAULTS)
    merged.update(section)
    return merged


def make_adapt_config(base: dict, **overrides) -> AdaptConfig:
    merged = dict(base)
    merged.update(overrides)
    return AdaptConfig.from_dict(merged)


def runs_from_config(config: dict, base: dict) -> list:
    """Materialize the ``runs`` section; absent section means no runs."""
    section = config.get("runs")
    if section is None:
        return []
    if not isinstance(section, list):
        raise ConfigError("runs section must be a list")
    runs = []
    for position, entry in enumerate(section):
        if not isinstance(entry, dict):
            raise ConfigError(f"runs[{position}] must be a mapping")
        entry = dict(entry)
        if "mode" not in entry:
            raise ConfigError(f"runs[{position}] needs a mode")
        name = entry.pop("name", None) or entry["mode"]
        runs.append(ExperimentRun(name=str(name), cfg=make_adapt_config(base, **entry)))
    return runs


def prepare_out_dir(out_dir) -> Path:
    """Create the output directory and prove it is writable before any work."""
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as err:
        raise ConfigError(f"output directory {out_dir} is not writable: {err}") from err
    return path


def run_plan(
    out_dir,
    task: SyntheticTask,
    pretrain_cfg: PretrainConfig,
    runs,
    *,
    seed: int,
    eq4_raw_weights: bool = False,
    eq7_raw_product: bool = False,
    include_pretrain_row: bool = False,
    save_adapted: bool = False,
) -> list:
    """Execute a full plan into ``out_dir`` and return the summary entries.

    The caller writes the summary CSV so it can append command-specific rows.
    """
    names = [run.name for run in runs]
    if len(set(names)) != len(names):
        raise ConfigError(f"run names must be unique, got {names}")
    out = prepare_out_dir(out_dir)

    log(f"pretraining for {pretrain_cfg.epochs} epochs (seed {seed})")
    image_encoder, text_encoder, pretrain_rows = pretrain_vlm(task, pretrain_cfg, seed)
    write_pretrain_metrics(out / "pretrain_metrics.csv", pretrain_rows)
    image_encoder.save(out / "image_encoder.json")
    text_encoder.save(out / "text_encoder.json")
    source_acc = pretrain_rows[-1]["source_zero_shot_acc"]
    log(f"pretrain done: loss {pretrain_rows[-1]['loss']:.4f}, source zero-shot {source_acc:.4f}")

    text_hash = text_encoder.param_hash()
    entries = []
    if include_pretrain_row:
        entries.append(
            {
                "run": "pretrain",
                "mode": "pretrain",
                "lambda": "",
                "final_target_accuracy": source_acc,
                "final_pseudo_label_accuracy": "",
            }
        )
    for run in runs:
        result = adapt(
            task,
            image_encoder,
            text_encoder,
            run.cfg,
            seed=seed,
            eq4_raw_weights=eq4_raw_weights,
            eq7_raw_product=eq7_raw_product,
        )
        if text_encoder.param_hash() != text_hash:
            raise PestError("text encoder changed during adaptation")
        write_run_metrics(out / f"{run.name}_metrics.csv", result.rows)
        if save_adapted:
            result.image_encoder.save(out / f"{run.name}_image_encoder.json")
        final = result.rows[-1]
        log(
            f"run {run.name} ({run.cfg.mode}, text features {result.text_feature_source}): "
            f"target accuracy {final.target_accuracy:.4f}"
        )
        entries.append(
            {
                "run": run.name,
                "mode": run.cfg.mode,
                "lambda": run.cfg.lam,
                "final_target_accuracy": final.target_accuracy,
                "final_pseudo_label_accuracy": final.pseudo_label_accuracy,
            }
        )
    return entries


def finish_summary(out_dir, entries) -> None:
    write_summary(Path(out_dir) / "summary.csv", entries)


# -- command bodies -------------------------------------------------------

def cmd_gen_task(config: dict, seed: int, out_dir) -> Path:
    from .synthbench import save_task

    out = prepare_out_dir(out_dir)
    task = resolve_task(config, seed)
    path = out / TASK_FILE_NAME
    save_task(task, path)
    log(f"wrote {path}")
    return path


def cmd_pretrain(config: dict, seed: int, out_dir, task_path=None) -> None:
    out = prepare_out_dir(out_dir)
    task = resolve_task(config, seed, task_path)
    cfg = resolve_pretrain_config(config)
    image_encoder, text_encoder, rows = pretrain_vlm(task, cfg, seed)
    write_pretrain_metrics(out / "pretrain_metrics.csv", rows)
    image_encoder.save(out / "image_encoder.json")
    text_encoder.save(out / "text_encoder.json")
    log(
        f"pretrain done: loss {rows[-1]['loss']:.4f}, "
        f"source zero-shot {rows[-1]['source_zero_shot_acc']:.4f}"
    )


def cmd_adapt(
    config: dict,
    seed: int,
    out_dir,
    mode: str,
    *,
    task_path=None,
    image_encoder_path=None,
    text_encoder_path=None,
    eq4_raw_weights: bool = False,
    eq7_raw_product: bool = False,
) -> None:
    if (image_encoder_path is None) != (text_encoder_path is None):
        raise ConfigError("provide both encoder checkpoints or neither")
    out = prepare_out_dir(out_dir)
    task = resolve_task(config, seed, task_path)
    base = base_adapt_settings(config)
    cfg = make_adapt_config(base, mode=mode)
    if image_encoder_path is not None:
        image_encoder = LinearEncoder.load(image_encoder_path)
        text_encoder = LinearEncoder.load(text_encoder_path)
    else:
        log("no encoder checkpoints given; pretraining first")
        pretrain_cfg = resolve_pretrain_config(config)
        image_encoder, text_encoder, rows = pretrain_vlm(task, pretrain_cfg, seed)
        write_pretrain_metrics(out / "pretrain_metrics.csv", rows)
        image_encoder.save(out / "image_encoder.json")
        text_encoder.save(out / "text_encoder.json")
    result = adapt(
        task,
        image_encoder,
        text_encoder,
        cfg,
        seed=seed,
        eq4_raw_weights=eq4_raw_weights,
        eq7_raw_product=eq7_raw_product,
    )
    write_run_metrics(out / f"{mode}_metrics.csv", result.rows)
    result.image_encoder.save(out / f"{mode}_image_encoder.json")
    final = result.rows[-1]
    log(
        f"adapt {mode} done (text features {result.text_feature_source}): "
        f"target accuracy {final.target_accuracy:.4f}"
    )


def cmd_run(config: dict, seed: int, out_dir, **flags) -> None:
    base = base_adapt_settings(config)
    runs = runs_from_config(config, base)
    if not runs and "runs" not in config:
        runs = [
            ExperimentRun(name=mode, cfg=make_adapt_config(base, mode=mode))
            for mode in DEFAULT_RUN_MODES
        ]
    task = resolve_task(config, seed)
    entries = run_plan(
        out_dir,
        task,
        resolve_pretrain_config(config),
        runs,
        seed=seed,
        include_pretrain_row=True,
        **flags,
    )
    finish_summary(out_dir, entries)


def cmd_ablation(config: dict, seed: int, out_dir, **flags) -> None:
    if "runs" in config:
        raise ConfigError("the runs section is only valid for the run command")
    base = base_adapt_settings(config)
    runs = [
        ExperimentRun(name=mode, cfg=make_adapt_config(base, mode=mode))
        for mode in ABLATION_MODES
    ]
    task = resolve_task(config, seed)
    entries = run_plan(out_dir, task, resolve_pretrain_config(config), runs, seed=seed, **flags)
    finish_summary(out_dir, entries)


def cmd_baselines(config: dict, seed: int, out_dir, **flags) -> None:
    if "runs" in config:
        raise ConfigError("the runs section is only valid for the run command")
    base = base_adapt_settings(config)
    runs = [
        ExperimentRun(name=mode, cfg=make_adapt_config(base, mode=mode))
        for mode in BASELINE_MODES
    ]
    task = resolve_task(config, seed)
    entries = run_plan(out_dir, task, resolve_pretrain_config(config), runs, seed=seed, **flags)
    finish_summary(out_dir, entries)


def cmd_lambda_sweep(config: dict, seed: int, out_dir, lambdas=None, **flags) -> None:
    if "runs" in config:
        raise ConfigError("the runs section is only valid for the run command")
    values = tuple(LAMBDA_SWEEP if lambdas is None else lambdas)
    for value in values:
        if not 0.0 <= float(value) <= 1.0:
            raise ConfigError(f"lambda values must lie in [0, 1], got {value!r}")
    base = base_adapt_settings(config)
    runs = [
        ExperimentRun(
            name=f"pest_lambda_{value!r}",
            cfg=make_adapt_config(base, mode="pest", lam=float(value)),
        )
        for value in values
    ]
    task = resolve_task(config, seed)
    entries = run_plan(out_dir, task, resolve_pretrain_config(config), runs, seed=seed, **flags)
    accuracies = [entry["final_target_accuracy"] for entry in entries]
    spread = max(accuracies) - min(accuracies)
    log(f"lambda sweep spread: {spread:.4f}")
    entries.append(
        {
            "run": "spread",
            "mode": "",
            "lambda": "",
            "final_target_accuracy": spread,
            "final_pseudo_label_accuracy": "",
        }
    )
    finish_summary(out_dir, entries)
