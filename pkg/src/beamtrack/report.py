"""Result and complexity tables plus per-slot figures.

Tables are plain text, rebuilt purely from stored metric records and model
specs, so re-running the report command is idempotent. Percentages print
with two decimals.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import MetricsReport
from .models import ModelSpec, count_flops, count_params

__all__ = [
    "MODEL_DISPLAY_ORDER",
    "PARAM_RATIO_TARGET",
    "FLOP_RATIO_TARGET",
    "render_results_table",
    "render_complexity_table",
    "render_report",
    "make_plots",
]

MODEL_DISPLAY_ORDER = [
    ("teacher_radar", "Radar-only"),
    ("teacher_vision", "Vision-only"),
    ("teacher", "Teacher"),
    ("student_nokd", "Student (No KD)"),
    ("student_kd", "Student (KD)"),
    ("oracle", "Oracle"),
]

PARAM_RATIO_TARGET = 20.0
FLOP_RATIO_TARGET = 3.5
PARAM_RATIO_REFERENCE = 27.0   # published design point these targets relax
FLOP_RATIO_REFERENCE = 4.0


def _ordered(reports: dict) -> list[tuple[str, MetricsReport]]:
    known = [name for name, _ in MODEL_DISPLAY_ORDER]
    ordered = [(name, reports[name]) for name, _ in MODEL_DISPLAY_ORDER
               if name in reports]
    ordered += [(name, rep) for name, rep in sorted(reports.items())
                if name not in known]
    return ordered


def _display(name: str) -> str:
    for key, label in MODEL_DISPLAY_ORDER:
        if key == name:
            return label
    return name


def render_results_table(reports: dict) -> str:
    """Averaged metrics (%) per model, one column each, Table-style."""
    if not reports:
        return "No evaluation records found.\n"
    cols = _ordered(reports)
    ks = sorted({k for _, rep in cols for k in rep.atopk})
    header = ["Metric"] + [_display(name) for name, _ in cols]
    rows = []
    for k in ks:
        rows.append([f"ATop-{k}"] + [f"{rep.atopk.get(k, float('nan')) * 100:.2f}"
                                     for _, rep in cols])
    rows.append(["ADBA"] + [f"{rep.adba * 100:.2f}" for _, rep in cols])
    rows.append(["samples"] + [str(rep.n_samples) for _, rep in cols])

    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(cell.ljust(w) for cell, w in zip(row, widths))
              for row in rows]

    lines.append("")
    lines.append("Per-slot Top-3 / Top-5 / DBA (%):")
    for name, rep in cols:
        slots = len(rep.per_slot_dba)
        for j in range(slots):
            t3 = rep.per_slot_topk.get(3, [float('nan')] * slots)[j] * 100
            t5 = rep.per_slot_topk.get(5, [float('nan')] * slots)[j] * 100
            d = rep.per_slot_dba[j] * 100
            lines.append(f"  {_display(name):16s} t+{j}:  "
                         f"Top-3 {t3:6.2f}  Top-5 {t5:6.2f}  DBA {d:6.2f}")
    return "\n".join(lines) + "\n"


def render_complexity_table(teacher: ModelSpec, student: ModelSpec,
                            window: int = 8,
                            vision_hw: tuple = (64, 64),
                            radar_hw: tuple = (64, 64)) -> str:
    """Absolute counts and teacher/student reduction ratios with targets."""
    tp, sp = count_params(teacher), count_params(student)
    tf = count_flops(teacher, window, vision_hw, radar_hw)
    sf = count_flops(student, window, vision_hw, radar_hw)
    param_ratio = tp / sp
    flop_ratio = tf / sf
    lines = [
        "Model complexity:",
        f"  {'Model':10s} {'Params':>12s} {'FLOPs':>14s}",
        f"  {'Teacher':10s} {tp:12,d} {tf:14,d}",
        f"  {'Student':10s} {sp:12,d} {sf:14,d}",
        f"  Parameter reduction: {param_ratio:6.2f}x  "
        f"(target >= {PARAM_RATIO_TARGET:.1f}x, reference {PARAM_RATIO_REFERENCE:.0f}x)  "
        f"{'PASS' if param_ratio >= PARAM_RATIO_TARGET else 'FAIL'}",
        f"  FLOP reduction:      {flop_ratio:6.2f}x  "
        f"(target >= {FLOP_RATIO_TARGET:.1f}x, reference {FLOP_RATIO_REFERENCE:.0f}x)  "
        f"{'PASS' if flop_ratio >= FLOP_RATIO_TARGET else 'FAIL'}",
    ]
    return "\n".join(lines) + "\n"


def render_report(reports: dict, teacher: ModelSpec, student: ModelSpec,
                  window: int, vision_hw: tuple, radar_hw: tuple) -> str:
    return (render_results_table(reports) + "\n"
            + render_complexity_table(teacher, student, window, vision_hw, radar_hw))


def make_plots(reports: dict, out_dir: Path) -> list[Path]:
    """Per-slot stacked Top-3/Top-5 bars and DBA lines as PNG files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = _ordered(reports)
    if not cols:
        return []
    slots = len(cols[0][1].per_slot_dba)
    x = list(range(slots))
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(cols), 1)
    for i, (name, rep) in enumerate(cols):
        offs = [xi + (i - (len(cols) - 1) / 2) * width for xi in x]
        top3 = [v * 100 for v in rep.per_slot_topk.get(3, [0.0] * slots)]
        top5 = [v * 100 for v in rep.per_slot_topk.get(5, [0.0] * slots)]
        gain = [t5 - t3 for t3, t5 in zip(top3, top5)]
        ax.bar(offs, top3, width=width, label=_display(name))
        ax.bar(offs, gain, width=width, bottom=top3, alpha=0.45)
    ax.set_xticks(x)
    ax.set_xticklabels([f"t+{j}" for j in x])
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Per-slot Top-3 (solid) and Top-3..Top-5 gain (light)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "topk_per_slot.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    for name, rep in cols:
        ax.plot(x, [v * 100 for v in rep.per_slot_dba], marker="o",
                label=_display(name))
    ax.set_xticks(x)
    ax.set_xticklabels([f"t+{j}" for j in x])
    ax.set_ylabel("DBA (%)")
    ax.set_title("Per-slot distance-based accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "dba_per_slot.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
