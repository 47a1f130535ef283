"""Losses and the teacher/student training loops.

The student minimizes a blend of two terms: a focal task loss against the
ground-truth beams and a temperature-softened KL distillation loss against
the frozen teacher, scaled by the squared temperature to keep gradient
magnitudes comparable across temperatures:

    L = (1 - beta) * L_task + beta * L_distill
    L_task    = sum_slots  -alpha_b (1 - p_b)^gamma log p_b
    L_distill = Gamma^2 * sum_slots KL( soft(teacher/Gamma) || soft(student/Gamma) )

The teacher trains on the task loss alone (beta = 0). Each epoch evaluates
the same objective on the validation set; the best parameters are kept on
strict improvement and training stops early once the best validation loss
has not decreased for ``patience`` consecutive epochs.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DomainError, ShapeError, TrainingDivergedError
from .models import BeamTrackNet, ModelSpec, batch_tensors, build_model, save_checkpoint
from .store import SequenceSample, class_histogram

__all__ = [
    "TrainConfig",
    "LossBreakdown",
    "EpochLog",
    "TrainResult",
    "focal_loss",
    "task_loss",
    "kl_divergence",
    "distill_loss",
    "overall_loss",
    "lr_schedule",
    "train_teacher",
    "train_student_kd",
    "save_training_result",
]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``focal_alpha`` is a scalar weight, an explicit per-class list, or the
    string "balanced" to derive inverse-frequency weights from the training
    split's label histogram.
    """

    beta: float = 0.5                 # distillation blend
    temperature: float = 2.0          # softmax temperature for distillation
    focal_gamma: float = 2.0
    focal_alpha: object = 1.0
    lr_init: float = 1e-4
    lr_min_ratio: float = 0.01        # lr_min = lr_init * ratio
    cycle_epochs: int = 25            # cosine annealing restart period
    max_epochs: int = 100
    batch_size: int = 32
    patience: int = 20
    seed: int = 0
    grad_clip: float = 5.0
    optimizer: str = "adam"           # declared for reproducibility

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0,1], got {self.beta}")
        if self.temperature <= 0:
            raise DomainError(f"temperature must be > 0, got {self.temperature}")
        if self.focal_gamma < 0:
            raise ConfigError(f"focal_gamma must be >= 0, got {self.focal_gamma}")
        if self.lr_init <= 0 or self.cycle_epochs < 1:
            raise ConfigError("lr_init must be > 0 and cycle_epochs >= 1")
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("max_epochs, batch_size and patience must be >= 1")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")

    @property
    def lr_min(self) -> float:
        return self.lr_init * self.lr_min_ratio


@dataclass(frozen=True)
class LossBreakdown:
    """Task/distillation components and their blend."""

    task: float
    distill: float
    total: float

    def __post_init__(self):
        if self.task < 0 or self.distill < 0:
            raise DomainError("loss components must be nonnegative")


@dataclass(frozen=True)
class EpochLog:
    """One line of the training log."""

    epoch: int
    train_task: float
    train_distill: float
    train_total: float
    val_loss: float
    lr: float
    is_best: bool


@dataclass
class TrainResult:
    """Best model (weights restored) plus the full epoch history."""

    model: BeamTrackNet
    logs: list
    best_epoch: int
    best_val_loss: float


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def focal_loss(probs, label: int, alpha=1.0, gamma: float = 2.0) -> torch.Tensor:
    """-alpha_b (1 - p_b)^gamma log(p_b) for one probability row.

    ``label`` is a 1-based beam index; ``alpha`` may be a scalar or a
    per-class vector. The probability is clamped to 1e-12 before the log.
    """
    p = _as_tensor(probs)
    c = p.shape[-1]
    if not 1 <= int(label) <= c:
        raise IndexError(f"label {label} outside 1..{c}")
    p_true = torch.clamp(p[int(label) - 1], min=1e-12)
    a = _as_tensor(alpha)
    a_true = a[int(label) - 1] if a.ndim > 0 else a
    return -a_true * (1.0 - p_true) ** gamma * torch.log(p_true)


def task_loss(probs, labels, alpha=1.0, gamma: float = 2.0) -> torch.Tensor:
    """Sum of per-slot focal losses over the J+1 horizon rows."""
    p = _as_tensor(probs)
    lab = np.asarray(labels.b_star if hasattr(labels, "b_star") else labels)
    if p.ndim != 2 or p.shape[0] != len(lab):
        raise ShapeError(f"{p.shape} probability rows vs {len(lab)} labels")
    return sum(focal_loss(p[j], int(lab[j]), alpha, gamma) for j in range(len(lab)))


def kl_divergence(p_teacher, p_student) -> torch.Tensor:
    """KL(p_teacher || p_student); zero teacher mass contributes zero."""
    p_t = _as_tensor(p_teacher)
    p_s = torch.clamp(_as_tensor(p_student), min=1e-12)
    terms = torch.where(p_t > 0, p_t * (torch.log(torch.clamp(p_t, min=1e-30))
                                        - torch.log(p_s)), torch.zeros_like(p_t))
    return terms.sum(dim=-1)


def distill_loss(teacher_logits, student_logits, temperature: float) -> torch.Tensor:
    """Gamma^2-scaled summed KL between tempered teacher/student softmaxes."""
    if temperature <= 0:
        raise DomainError(f"temperature must be > 0, got {temperature}")
    t = _as_tensor(teacher_logits)
    s = _as_tensor(student_logits)
    if t.shape != s.shape:
        raise ShapeError(f"teacher {tuple(t.shape)} vs student {tuple(s.shape)}")
    p_t = torch.softmax(t / temperature, dim=-1)
    log_p_t = torch.log_softmax(t / temperature, dim=-1)
    log_p_s = torch.log_softmax(s / temperature, dim=-1)
    kl = (p_t * (log_p_t - log_p_s)).sum(dim=-1)
    return temperature ** 2 * kl.sum()


def overall_loss(task: float, distill: float, beta: float) -> LossBreakdown:
    """Blend the components: total = (1 - beta) * task + beta * distill."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must be in [0,1], got {beta}")
    return LossBreakdown(task=task, distill=distill,
                         total=(1.0 - beta) * task + beta * distill)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Cosine annealing with warm restarts every ``cycle_epochs`` epochs."""
    phase = epoch % config.cycle_epochs
    cos = (1.0 + math.cos(math.pi * phase / config.cycle_epochs)) / 2.0
    return config.lr_min + (config.lr_init - config.lr_min) * cos


# ---------------------------------------------------------------------------
# batched loss internals (float32 training path)
# ---------------------------------------------------------------------------

def _focal_batch(logits: torch.Tensor, labels0: torch.Tensor, alpha,
                 gamma: float) -> torch.Tensor:
    """Per-sample task loss, (B,), from (B, J+1, C) logits and 0-based labels."""
    probs = torch.softmax(logits, dim=-1)
    p_true = torch.clamp(probs.gather(-1, labels0.unsqueeze(-1)).squeeze(-1), min=1e-12)
    if isinstance(alpha, torch.Tensor) and alpha.ndim > 0:
        a_true = alpha[labels0]
    else:
        a_true = torch.as_tensor(float(alpha), dtype=logits.dtype)
    per_slot = -a_true * (1.0 - p_true) ** gamma * torch.log(p_true)
    return per_slot.sum(dim=-1)


def _distill_batch(teacher_logits: torch.Tensor, student_logits: torch.Tensor,
                   temperature: float) -> torch.Tensor:
    """Per-sample distillation loss, (B,)."""
    p_t = torch.softmax(teacher_logits / temperature, dim=-1)
    log_p_t = torch.log_softmax(teacher_logits / temperature, dim=-1)
    log_p_s = torch.log_softmax(student_logits / temperature, dim=-1)
    kl = (p_t * (log_p_t - log_p_s)).sum(dim=-1)
    return temperature ** 2 * kl.sum(dim=-1)


def _resolve_alpha(config: TrainConfig, train: list[SequenceSample],
                   codebook_size: int):
    if isinstance(config.focal_alpha, str):
        if config.focal_alpha != "balanced":
            raise ConfigError(f"focal_alpha string must be 'balanced', got "
                              f"{config.focal_alpha!r}")
        stats = class_histogram(train, codebook_size)
        return torch.from_numpy(stats.alpha.astype(np.float32))
    if isinstance(config.focal_alpha, (list, tuple, np.ndarray)):
        arr = np.asarray(config.focal_alpha, dtype=np.float32)
        if arr.shape != (codebook_size,):
            raise ConfigError(f"per-class alpha needs {codebook_size} entries, "
                              f"got {arr.shape}")
        return torch.from_numpy(arr)
    return float(config.focal_alpha)


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _mean_losses(model: BeamTrackNet, samples: list[SequenceSample],
                 config: TrainConfig, alpha, teacher: BeamTrackNet | None,
                 use_distill: bool) -> LossBreakdown:
    """Mean per-sample losses over a sample list (no gradients)."""
    model.eval()
    task_sum = 0.0
    distill_sum = 0.0
    with torch.no_grad():
        for i in range(0, len(samples), config.batch_size):
            vision, radar, labels0 = batch_tensors(samples[i:i + config.batch_size])
            logits = model(vision, radar)
            task_sum += float(_focal_batch(logits, labels0, alpha,
                                           config.focal_gamma).sum())
            if use_distill:
                t_logits = teacher(vision, radar)
                distill_sum += float(_distill_batch(t_logits, logits,
                                                    config.temperature).sum())
    n = len(samples)
    return overall_loss(task_sum / n, distill_sum / n, config.beta if use_distill else 0.0)


def _train_loop(spec: ModelSpec, train: list[SequenceSample],
                val: list[SequenceSample], config: TrainConfig,
                teacher: BeamTrackNet | None = None,
                val_loss_fn=None) -> TrainResult:
    """Mini-batch loop with validation checkpointing and early stopping.

    ``val_loss_fn`` overrides the validation evaluation (testing hook).
    """
    if not train or not val:
        raise ConfigError("train and validation sets must be nonempty")
    use_distill = teacher is not None and config.beta > 0.0
    if use_distill:
        if teacher.spec.codebook_size != spec.codebook_size:
            raise ConfigError("teacher/student codebook sizes differ")
        if teacher.spec.horizon != spec.horizon:
            raise ConfigError("teacher/student horizons differ")
        teacher.eval()
        for p in teacher.parameters():
            p.requires_grad_(False)

    torch.manual_seed(config.seed)
    model = build_model(spec, seed=config.seed)
    alpha = _resolve_alpha(config, train, spec.codebook_size)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr_init)
    order_rng = np.random.default_rng(config.seed)

    best_state = None
    best_val = math.inf
    best_epoch = 0
    epochs_since_best = 0
    logs: list[EpochLog] = []

    for epoch in range(1, config.max_epochs + 1):
        lr = lr_schedule(epoch - 1, config)
        for group in opt.param_groups:
            group["lr"] = lr

        model.train()
        perm = order_rng.permutation(len(train))
        task_sum = distill_sum = total_sum = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in perm[start:start + config.batch_size]]
            vision, radar, labels0 = batch_tensors(batch)
            logits = model(vision, radar)
            task = _focal_batch(logits, labels0, alpha, config.focal_gamma).mean()
            if use_distill:
                with torch.no_grad():
                    t_logits = teacher(vision, radar)
                distill = _distill_batch(t_logits, logits, config.temperature).mean()
                total = (1.0 - config.beta) * task + config.beta * distill
            else:
                distill = torch.zeros(())
                total = task
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (task={task.item()}, "
                    f"distill={distill.item()})")
            opt.zero_grad()
            total.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            nb = len(batch)
            task_sum += task.item() * nb
            distill_sum += distill.item() * nb
            total_sum += total.item() * nb

        n = len(train)
        if val_loss_fn is not None:
            val_loss = float(val_loss_fn(model, epoch))
        else:
            val_loss = _mean_losses(model, val, config, alpha, teacher,
                                    use_distill).total
        improved = val_loss < best_val
        if improved:
            best_val = val_loss
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        logs.append(EpochLog(epoch=epoch, train_task=task_sum / n,
                             train_distill=distill_sum / n,
                             train_total=total_sum / n, val_loss=val_loss,
                             lr=lr, is_best=improved))
        if epochs_since_best >= config.patience:
            break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model=model, logs=logs, best_epoch=best_epoch,
                       best_val_loss=best_val)


def train_teacher(train: list[SequenceSample], val: list[SequenceSample],
                  spec: ModelSpec, config: TrainConfig,
                  val_loss_fn=None) -> TrainResult:
    """Task-loss-only training (no distillation term)."""
    return _train_loop(spec, train, val, config, teacher=None,
                       val_loss_fn=val_loss_fn)


def train_student_kd(train: list[SequenceSample], val: list[SequenceSample],
                     teacher: BeamTrackNet | None, spec: ModelSpec,
                     config: TrainConfig, val_loss_fn=None) -> TrainResult:
    """Distillation training against a frozen teacher.

    With beta = 0 the teacher is never queried and the trajectory is
    identical to ``train_teacher`` on the student spec.
    """
    if config.beta > 0 and teacher is None:
        raise ConfigError("beta > 0 requires a teacher model")
    return _train_loop(spec, train, val, config, teacher=teacher,
                       val_loss_fn=val_loss_fn)


def save_training_result(directory: Path, result: TrainResult,
                         config: TrainConfig, extra_meta: dict | None = None) -> None:
    """Write the best checkpoint plus a JSONL epoch log."""
    directory = Path(directory)
    meta = {
        "seed": config.seed,
        "epoch": result.best_epoch,
        "val_loss": result.best_val_loss,
        "train_config": asdict(config),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(directory, result.model, meta)
    lines = [json.dumps(asdict(log)) for log in result.logs]
    (directory / "train_log.jsonl").write_text("\n".join(lines) + "\n")
