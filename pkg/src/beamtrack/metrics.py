"""Top-k and distance-based accuracy metrics over the prediction horizon.

All metrics score one horizon slot at a time over a sample list and are then
averaged across the J+1 slots (the "A" variants). DBA gives partial credit
that decays linearly with the beam-index distance between the closest of the
top-K predictions and the ground truth, so it upper-bounds top-K accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "MetricsReport",
    "topk_indices",
    "topk_accuracy",
    "dba",
    "averaged_metrics",
    "build_metrics_report",
]

_RECORD_VERSION = 1


def _as_logits_array(series_list) -> np.ndarray:
    """Stack BeamProbSeries or raw logits into (N, J+1, C) float64."""
    rows = [np.asarray(s.logits if hasattr(s, "logits") else s, dtype=np.float64)
            for s in series_list]
    return np.stack(rows)


def topk_indices(logits_row: np.ndarray, k: int) -> np.ndarray:
    """1-based indices of the k largest logits, ties to the smaller index."""
    order = np.argsort(-np.asarray(logits_row), kind="stable")
    return order[:k] + 1


def topk_accuracy(series_list, labels_list, k: int, slot: int) -> float:
    """Fraction of samples whose slot-j label is among the top-k predictions."""
    logits = _as_logits_array(series_list)
    labels = np.asarray([lab.b_star if hasattr(lab, "b_star") else lab
                         for lab in labels_list])
    if k < 1 or k > logits.shape[2]:
        raise ConfigError(f"k must be in 1..{logits.shape[2]}, got {k}")
    if logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"{logits.shape[0]} series vs {labels.shape[0]} labels")
    hits = sum(int(labels[i][slot] in topk_indices(logits[i, slot], k))
               for i in range(logits.shape[0]))
    return hits / logits.shape[0]


def dba(series_list, labels_list, slot: int, top_k: int = 3,
        delta: float | None = None) -> float:
    """Mean clamped distance score of the best of the top-K predictions.

    Per sample: max(0, 1 - min_{k<=K} |b_hat_(k) - b*| / delta); an exact
    top-K hit scores 1. ``delta`` defaults to C - 1.
    """
    logits = _as_logits_array(series_list)
    labels = np.asarray([lab.b_star if hasattr(lab, "b_star") else lab
                         for lab in labels_list])
    c = logits.shape[2]
    if top_k > c:
        raise ConfigError(f"top_k {top_k} exceeds codebook size {c}")
    if delta is None:
        delta = float(c - 1)
    if delta <= 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    scores = []
    for i in range(logits.shape[0]):
        preds = topk_indices(logits[i, slot], top_k)
        dist = np.min(np.abs(preds - labels[i][slot]))
        scores.append(max(0.0, 1.0 - dist / delta))
    return float(np.mean(scores))


def averaged_metrics(per_slot) -> float:
    """Arithmetic mean over the J+1 horizon slots."""
    return float(np.mean(np.asarray(per_slot, dtype=np.float64)))


@dataclass(frozen=True)
class MetricsReport:
    """Per-slot and horizon-averaged metrics for one model on one split."""

    model_id: str
    config_digest: str
    n_samples: int
    per_slot_topk: dict            # {k: [J+1 floats]}
    per_slot_dba: list
    atopk: dict                    # {k: float}
    adba: float
    record_version: int = field(default=_RECORD_VERSION)

    def __post_init__(self):
        for k, values in self.per_slot_topk.items():
            if any(not 0 <= v <= 1 for v in values):
                raise ConfigError(f"top-{k} values outside [0,1]")
            if abs(self.atopk[k] - float(np.mean(values))) > 1e-12:
                raise ConfigError(f"atop-{k} is not the mean of its slots")
        if any(not 0 <= v <= 1 for v in self.per_slot_dba):
            raise ConfigError("DBA values outside [0,1]")
        if abs(self.adba - float(np.mean(self.per_slot_dba))) > 1e-12:
            raise ConfigError("adba is not the mean of its slots")
        if 3 in self.per_slot_topk:
            for d, t3 in zip(self.per_slot_dba, self.per_slot_topk[3]):
                if d < t3 - 1e-12:
                    raise ConfigError("per-slot DBA must dominate top-3 accuracy")

    def to_dict(self) -> dict:
        return {
            "record_version": self.record_version,
            "model_id": self.model_id,
            "config_digest": self.config_digest,
            "n_samples": self.n_samples,
            "per_slot_topk": {str(k): list(v) for k, v in self.per_slot_topk.items()},
            "per_slot_dba": list(self.per_slot_dba),
            "atopk": {str(k): v for k, v in self.atopk.items()},
            "adba": self.adba,
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        return MetricsReport(
            model_id=d["model_id"],
            config_digest=d["config_digest"],
            n_samples=d["n_samples"],
            per_slot_topk={int(k): list(v) for k, v in d["per_slot_topk"].items()},
            per_slot_dba=list(d["per_slot_dba"]),
            atopk={int(k): v for k, v in d["atopk"].items()},
            adba=d["adba"],
            record_version=d.get("record_version", _RECORD_VERSION),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @staticmethod
    def load(path: Path) -> "MetricsReport":
        return MetricsReport.from_dict(json.loads(Path(path).read_text()))


def build_metrics_report(logits: np.ndarray, labels: np.ndarray, *,
                         model_id: str = "", config_digest: str = "",
                         ks: tuple = (1, 3, 5), dba_top_k: int = 3,
                         dba_delta: float | None = None) -> MetricsReport:
    """Score (N, J+1, C) logits against (N, J+1) 1-based labels."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.shape[:2] != labels.shape:
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    horizon_slots = logits.shape[1]
    series = list(logits)
    labs = list(labels)
    per_topk = {k: [topk_accuracy(series, labs, k, j) for j in range(horizon_slots)]
                for k in ks}
    per_dba = [dba(series, labs, j, top_k=dba_top_k, delta=dba_delta)
               for j in range(horizon_slots)]
    return MetricsReport(
        model_id=model_id,
        config_digest=config_digest,
        n_samples=logits.shape[0],
        per_slot_topk=per_topk,
        per_slot_dba=per_dba,
        atopk={k: averaged_metrics(v) for k, v in per_topk.items()},
        adba=averaged_metrics(per_dba),
    )
