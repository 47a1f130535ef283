"""Command-line interface: batch pipeline stages driven by one config file.

    beamtrack gen-data      --config cfg.yaml [--seed N] [--out DIR]
    beamtrack train-teacher --config cfg.yaml [--modality vision|radar|both]
    beamtrack train-student --config cfg.yaml [--no-kd]
    beamtrack evaluate      --config cfg.yaml
    beamtrack report        --config cfg.yaml
    beamtrack plot          --config cfg.yaml

All stages share the config's ``workdir`` (override with --out): gen-data
writes ``dataset/``; training writes one checkpoint directory per model
(teacher, teacher_vision, teacher_radar, student_kd, student_nokd);
evaluate writes ``metrics_<name>.json`` for the checkpoint named by
``evaluation.checkpoint``; report and plot merge whatever metric records
exist. Exit codes: 0 success, 2 invalid config/usage, 3 missing artifact,
4 training abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, StoreError, TrainingDivergedError
from .metrics import MetricsReport, build_metrics_report
from .models import batched_logits, load_checkpoint, load_checkpoint_metadata
from .report import make_plots, render_report
from .store import class_histogram, load_dataset, save_dataset, split
from .synthesis import generate_samples, generate_streams
from .training import save_training_result, train_student_kd, train_teacher

_ORACLE_KIND = "oracle"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamtrack",
        description="Multimodal sensing-aided beam tracking workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, extra in (
        ("gen-data", ()),
        ("train-teacher", ("modality",)),
        ("train-student", ("no_kd",)),
        ("evaluate", ()),
        ("report", ()),
        ("plot", ()),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="run-config YAML (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the stage seed (scenario seed for "
                            "gen-data, training seed for train-*)")
        p.add_argument("--out", type=Path, default=None,
                       help="override the workdir")
        if "modality" in extra:
            p.add_argument("--modality", choices=("vision", "radar", "both"),
                           default="both")
        if "no_kd" in extra:
            p.add_argument("--no-kd", action="store_true",
                           help="train the student on the task loss alone")
    return parser


def _load(args, seed_path: tuple[str, str] | None) -> RunConfig:
    overrides: dict = {}
    if args.seed is not None and seed_path is not None:
        section, key = seed_path
        overrides[section] = {key: args.seed}
    if args.out is not None:
        overrides["workdir"] = str(args.out)
    return load_config(args.config, overrides)


def _load_split(cfg: RunConfig, which: str):
    samples = load_dataset(cfg.workdir / "dataset")
    train, val = split(samples, cfg.split_spec)
    if which == "train":
        return train
    if which == "val":
        return val
    if which == "all":
        return samples
    raise ConfigError(f"evaluation.split must be train/val/all, got {which!r}")


def _cmd_gen_data(args) -> int:
    cfg = _load(args, ("scenario", "rng_seed"))
    scenario = cfg.build_scenario()
    streams = generate_streams(scenario, cfg.geometry, cfg.codebook, cfg.radar,
                               cfg.scene, cfg.clutter)
    samples = generate_samples(streams, cfg.window, cfg.horizon)
    out = cfg.workdir / "dataset"
    save_dataset(samples, out, cfg.codebook_size)
    stats = class_histogram(samples, cfg.codebook_size)
    meta = {
        "num_slots": int(len(streams.labels)),
        "num_samples": len(samples),
        "window": cfg.window,
        "horizon": cfg.horizon,
        "codebook_size": cfg.codebook_size,
        "occlusion_episodes": cfg.scenario_params["occlusion_episodes"],
        "clutter_episodes": cfg.scenario_params["clutter_episodes"],
        "label_counts": stats.counts.tolist(),
        "config_digest": cfg.digest,
    }
    (cfg.workdir / "dataset_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"gen-data: wrote {len(samples)} samples to {out} "
          f"(digest {cfg.digest})")
    return 0


def _train_common(cfg: RunConfig, spec, name: str, teacher=None) -> int:
    train_set, val_set = split(load_dataset(cfg.workdir / "dataset"),
                               cfg.split_spec)
    result = (train_student_kd(train_set, val_set, teacher, spec, cfg.training)
              if spec.role == "student" else
              train_teacher(train_set, val_set, spec, cfg.training))
    out = cfg.workdir / name
    save_training_result(out, result, cfg.training,
                         extra_meta={"model_name": name,
                                     "config_digest": cfg.digest})
    print(f"{name}: best val loss {result.best_val_loss:.4f} at epoch "
          f"{result.best_epoch} ({len(result.logs)} epochs run) -> {out}")
    return 0


def _cmd_train_teacher(args) -> int:
    cfg = _load(args, ("training", "seed"))
    spec = cfg.teacher_spec
    name = "teacher"
    if args.modality == "vision":
        spec = replace(spec, use_radar=False)
        name = "teacher_vision"
    elif args.modality == "radar":
        spec = replace(spec, use_vision=False)
        name = "teacher_radar"
    return _train_common(cfg, spec, name)


def _cmd_train_student(args) -> int:
    cfg = _load(args, ("training", "seed"))
    if args.no_kd:
        cfg = replace(cfg, training=replace(cfg.training, beta=0.0))
        return _train_common(cfg, cfg.student_spec, "student_nokd", teacher=None)
    teacher, _ = load_checkpoint(cfg.workdir / "teacher")
    return _train_common(cfg, cfg.student_spec, "student_kd", teacher=teacher)


def _oracle_logits(samples) -> np.ndarray:
    horizon = samples[0].horizon + 1
    c = 0
    for s in samples:
        c = max(c, int(s.labels.max()))
    labels = np.stack([s.labels for s in samples])
    logits = np.zeros((len(samples), horizon, max(c, 2)))
    for i in range(len(samples)):
        for j in range(horizon):
            logits[i, j, labels[i, j] - 1] = 1.0
    return logits


def _cmd_evaluate(args) -> int:
    cfg = _load(args, None)
    name = cfg.evaluation["checkpoint"]
    samples = _load_split(cfg, cfg.evaluation["split"])
    ckpt_dir = cfg.workdir / name
    meta = load_checkpoint_metadata(ckpt_dir)
    if meta.get("kind") == _ORACLE_KIND:
        logits = _oracle_logits(samples)
    else:
        model, _ = load_checkpoint(ckpt_dir)
        logits = batched_logits(model, samples)
    labels = np.stack([s.labels for s in samples])
    report = build_metrics_report(
        logits, labels, model_id=name, config_digest=cfg.digest,
        ks=tuple(cfg.evaluation["topk"]), dba_top_k=cfg.evaluation["dba_top_k"],
        dba_delta=cfg.evaluation["dba_delta"])
    out = cfg.workdir / f"metrics_{name}.json"
    report.save(out)
    tops = "  ".join(f"ATop-{k} {v * 100:.2f}%" for k, v in sorted(report.atopk.items()))
    print(f"evaluate[{name}] on {len(samples)} samples: {tops}  "
          f"ADBA {report.adba * 100:.2f}%  -> {out}")
    return 0


def _collect_reports(cfg: RunConfig) -> dict:
    reports = {}
    for path in sorted(cfg.workdir.glob("metrics_*.json")):
        name = path.stem[len("metrics_"):]
        reports[name] = MetricsReport.load(path)
    return reports


def _cmd_report(args) -> int:
    cfg = _load(args, None)
    text = render_report(_collect_reports(cfg), cfg.teacher_spec,
                         cfg.student_spec, cfg.window,
                         (cfg.scene.out_height, cfg.scene.out_width),
                         (cfg.radar.map_height, cfg.radar.map_width))
    (cfg.workdir / "report.txt").write_text(text)
    print(text, end="")
    return 0


def _cmd_plot(args) -> int:
    cfg = _load(args, None)
    written = make_plots(_collect_reports(cfg), cfg.workdir / "plots")
    for path in written:
        print(f"plot: wrote {path}")
    if not written:
        print("plot: no metric records found")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-teacher": _cmd_train_teacher,
    "train-student": _cmd_train_student,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StoreError, FileNotFoundError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
