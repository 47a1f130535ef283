"""Loss, schedule and training-loop contract tests."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from beamtrack.errors import ConfigError, DomainError, TrainingDivergedError
from beamtrack.models import build_model, load_checkpoint, tempered_softmax
from beamtrack.store import SequenceSample
from beamtrack.training import (EpochLog, LossBreakdown, TrainConfig,
                                distill_loss, focal_loss, kl_divergence,
                                lr_schedule, overall_loss,
                                save_training_result, task_loss,
                                train_student_kd, train_teacher)
from conftest import make_random_samples, tiny_model_spec

FAST = TrainConfig(max_epochs=3, batch_size=8, patience=10, lr_init=1e-3,
                   cycle_epochs=5, seed=0)


# -- focal loss --------------------------------------------------------------

def test_focal_perfect_prediction_zero():
    p = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)
    assert float(focal_loss(p, 2, alpha=1.0, gamma=2.0)) == 0.0


def test_focal_reduces_to_cross_entropy():
    p = torch.tensor([0.2, 0.5, 0.3], dtype=torch.float64)
    assert abs(float(focal_loss(p, 2, alpha=1.0, gamma=0.0))
               - (-math.log(0.5))) < 1e-12


def test_focal_half_probability_value():
    # independent evaluation: 1.0 * (1-0.5)^2 * ln 2 = 0.25 ln 2
    p = torch.tensor([0.5, 0.5], dtype=torch.float64)
    expected = 0.25 * math.log(2.0)
    assert abs(float(focal_loss(p, 1, alpha=1.0, gamma=2.0)) - expected) < 1e-9


def test_focal_per_class_alpha_and_bad_label():
    p = torch.tensor([0.5, 0.5], dtype=torch.float64)
    alpha = torch.tensor([2.0, 3.0], dtype=torch.float64)
    plain = float(focal_loss(p, 2, alpha=1.0, gamma=2.0))
    weighted = float(focal_loss(p, 2, alpha=alpha, gamma=2.0))
    assert abs(weighted - 3.0 * plain) < 1e-12
    with pytest.raises(IndexError):
        focal_loss(p, 3)


def test_task_loss_sums_slots():
    probs = torch.tensor([[0.7, 0.3], [0.4, 0.6], [0.9, 0.1]],
                         dtype=torch.float64)
    labels = np.array([1, 2, 1])
    expected = sum(-1.0 * (1 - p) ** 2 * math.log(p) for p in (0.7, 0.6, 0.9))
    assert abs(float(task_loss(probs, labels, 1.0, 2.0)) - expected) < 1e-9
    # J = 0 reduces to a single focal term
    single = task_loss(probs[:1], labels[:1], 1.0, 2.0)
    assert abs(float(single) - float(focal_loss(probs[0], 1, 1.0, 2.0))) < 1e-15
    perfect = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    assert float(task_loss(perfect, np.array([1, 2]), 1.0, 2.0)) == 0.0


# -- KL and distillation -----------------------------------------------------

def test_kl_identical_rows_zero():
    p = torch.tensor([0.25, 0.25, 0.5], dtype=torch.float64)
    assert abs(float(kl_divergence(p, p))) < 1e-15


def test_kl_ln2_example():
    p_t = torch.tensor([1.0, 0.0], dtype=torch.float64)
    p_s = torch.tensor([0.5, 0.5], dtype=torch.float64)
    assert abs(float(kl_divergence(p_t, p_s)) - math.log(2.0)) < 1e-9


def test_kl_nonnegative_random():
    rng = np.random.default_rng(2)
    for _ in range(30):
        p = rng.dirichlet(np.ones(6))
        q = rng.dirichlet(np.ones(6))
        assert float(kl_divergence(p, q)) >= -1e-12


def test_distill_equal_logits_zero():
    logits = torch.randn(3, 5, dtype=torch.float64)
    for temp in (0.5, 1.0, 2.0, 8.0):
        assert abs(float(distill_loss(logits, logits, temp))) < 1e-12


def test_distill_unit_temperature_matches_composition():
    # independent route: numpy tempered softmax + the KL formula
    rng = np.random.default_rng(4)
    t = rng.standard_normal((4, 6))
    s = rng.standard_normal((4, 6))
    expected = 0.0
    for j in range(4):
        pt = tempered_softmax(t[j], 1.0)
        ps = tempered_softmax(s[j], 1.0)
        expected += float(np.sum(pt * (np.log(pt) - np.log(ps))))
    assert abs(float(distill_loss(t, s, 1.0)) - expected) < 1e-9


def test_distill_temperature_scaling_matches_composition():
    rng = np.random.default_rng(5)
    t = rng.standard_normal((2, 4))
    s = rng.standard_normal((2, 4))
    gamma = 3.0
    expected = 0.0
    for j in range(2):
        pt = tempered_softmax(t[j], gamma)
        ps = tempered_softmax(s[j], gamma)
        expected += float(np.sum(pt * (np.log(pt) - np.log(ps))))
    assert abs(float(distill_loss(t, s, gamma)) - gamma ** 2 * expected) < 1e-9


def _central_difference(fn, x, eps=1e-5):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        grad[idx] = (fn(xp) - fn(xm)) / (2 * eps)
    return grad


def test_focal_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    for trial in range(5):
        c = int(rng.integers(2, 9))
        logits = rng.standard_normal(c)
        label = int(rng.integers(1, c + 1))

        def loss_of(z):
            probs = tempered_softmax(z, 1.0)
            return float(focal_loss(torch.as_tensor(probs), label, 1.0, 2.0))

        t = torch.tensor(logits, requires_grad=True)
        focal_loss(torch.softmax(t, dim=-1), label, 1.0, 2.0).backward()
        analytic = t.grad.numpy()
        fd = _central_difference(loss_of, logits)
        assert np.linalg.norm(analytic - fd) / np.linalg.norm(analytic) < 1e-4


def test_distill_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for temp in (1.0, 2.0):
        t_logits = rng.standard_normal((2, 6))
        s_logits = rng.standard_normal((2, 6))

        def loss_of(z):
            return float(distill_loss(torch.as_tensor(t_logits),
                                      torch.as_tensor(z), temp))

        s = torch.tensor(s_logits, requires_grad=True)
        distill_loss(torch.as_tensor(t_logits), s, temp).backward()
        analytic = s.grad.numpy()
        fd = _central_difference(loss_of, s_logits)
        assert np.linalg.norm(analytic - fd) / np.linalg.norm(analytic) < 1e-4


def test_distill_temperature_compensation():
    # near-zero logits: gradients agree across temperatures within 5%
    rng = np.random.default_rng(8)
    t_logits = 0.01 * rng.uniform(-1, 1, size=(2, 6))
    s_logits = 0.01 * rng.uniform(-1, 1, size=(2, 6))
    grads = {}
    for temp in (1.0, 2.0, 4.0):
        s = torch.tensor(s_logits, requires_grad=True)
        distill_loss(torch.as_tensor(t_logits), s, temp).backward()
        grads[temp] = s.grad.numpy().ravel()
    for a in (1.0, 2.0, 4.0):
        for b in (1.0, 2.0, 4.0):
            rel = (np.linalg.norm(grads[a] - grads[b])
                   / np.linalg.norm(grads[a]))
            assert rel < 0.05


# -- blended loss and schedule -----------------------------------------------

def test_overall_loss_blending():
    assert overall_loss(2.0, 4.0, 0.0).total == 2.0
    assert overall_loss(2.0, 4.0, 1.0).total == 4.0
    assert overall_loss(2.0, 4.0, 0.5).total == 3.0
    breakdown = overall_loss(1.3, 0.9, 0.25)
    assert abs(breakdown.total - ((1 - 0.25) * 1.3 + 0.25 * 0.9)) < 1e-9
    with pytest.raises(DomainError):
        LossBreakdown(task=-1.0, distill=0.0, total=0.0)


def test_lr_schedule_shape():
    cfg = TrainConfig(lr_init=1e-3, lr_min_ratio=0.01, cycle_epochs=10)
    assert lr_schedule(0, cfg) == cfg.lr_init
    mid = lr_schedule(5, cfg)
    assert abs(mid - (cfg.lr_init + cfg.lr_min) / 2) < 1e-12
    assert lr_schedule(10, cfg) == cfg.lr_init          # warm restart
    assert abs(lr_schedule(9, cfg) - lr_schedule(19, cfg)) < 1e-15


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(beta=1.5)
    with pytest.raises(DomainError):
        TrainConfig(temperature=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(focal_gamma=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="sgd")


# -- training loops ----------------------------------------------------------

def test_single_epoch_contract(tiny_sets):
    train, val = tiny_sets
    cfg = replace(FAST, max_epochs=1)
    result = train_teacher(train, val, tiny_model_spec(), cfg)
    assert len(result.logs) == 1
    assert result.best_epoch == 1
    assert result.logs[0].val_loss == result.best_val_loss
    assert result.logs[0].is_best


def test_best_selection_contract(tiny_sets):
    train, val = tiny_sets
    result = train_teacher(train, val, tiny_model_spec(), FAST)
    assert result.best_val_loss <= min(log.val_loss for log in result.logs)


def test_training_deterministic(tiny_sets):
    train, val = tiny_sets
    r1 = train_teacher(train, val, tiny_model_spec(), FAST)
    r2 = train_teacher(train, val, tiny_model_spec(), FAST)
    assert r1.logs == r2.logs
    for a, b in zip(r1.model.state_dict().values(), r2.model.state_dict().values()):
        assert torch.equal(a, b)


def test_early_stop_after_patience(tiny_sets):
    train, val = tiny_sets
    cfg = replace(FAST, max_epochs=50, patience=1)
    result = train_teacher(train, val, tiny_model_spec(), cfg,
                           val_loss_fn=lambda model, epoch: 1.0)
    assert len(result.logs) == 2             # first epoch sets best, one extra
    assert result.best_epoch == 1


def test_monotone_checkpointing(tiny_sets):
    train, val = tiny_sets
    sequence = [5.0, 4.0, 6.0, 3.0, 7.0, 7.0, 2.0]
    cfg = replace(FAST, max_epochs=len(sequence), patience=10)
    result = train_teacher(train, val, tiny_model_spec(), cfg,
                           val_loss_fn=lambda model, epoch: sequence[epoch - 1])
    bests = [log.val_loss for log in result.logs if log.is_best]
    assert bests == [5.0, 4.0, 3.0, 2.0]
    assert all(a > b for a, b in zip(bests, bests[1:]))
    assert result.best_epoch == 7


def test_loss_breakdown_identity_on_logs(tiny_sets):
    train, val = tiny_sets
    teacher = build_model(tiny_model_spec(), seed=1)
    cfg = replace(FAST, beta=0.3)
    result = train_student_kd(train, val, teacher,
                              tiny_model_spec(role="student"), cfg)
    for log in result.logs:
        blended = overall_loss(log.train_task, log.train_distill, cfg.beta)
        assert abs(blended.total - log.train_total) < 1e-6


def test_zero_beta_matches_teacher_training(tiny_sets):
    train, val = tiny_sets
    spec = tiny_model_spec(role="student")
    teacher = build_model(tiny_model_spec(), seed=2)
    cfg = replace(FAST, beta=0.0)
    kd = train_student_kd(train, val, teacher, spec, cfg)
    plain = train_teacher(train, val, spec, cfg)
    assert kd.logs == plain.logs
    for a, b in zip(kd.model.state_dict().values(),
                    plain.model.state_dict().values()):
        assert torch.equal(a, b)


def test_teacher_frozen_during_kd(tiny_sets):
    train, val = tiny_sets
    teacher = build_model(tiny_model_spec(), seed=3)
    before = {k: v.clone() for k, v in teacher.state_dict().items()}
    train_student_kd(train, val, teacher, tiny_model_spec(role="student"),
                     replace(FAST, beta=0.7))
    after = teacher.state_dict()
    for key in before:
        assert torch.equal(before[key], after[key])


def test_kd_mismatch_rejected(tiny_sets):
    train, val = tiny_sets
    teacher = build_model(tiny_model_spec(codebook_size=6), seed=0)
    with pytest.raises(ConfigError):
        train_student_kd(train, val, teacher, tiny_model_spec(role="student"),
                         FAST)
    with pytest.raises(ConfigError):
        train_student_kd(train, val, None, tiny_model_spec(role="student"),
                         replace(FAST, beta=0.5))


def test_divergence_aborts():
    samples = make_random_samples(num_slots=12, seed=1)
    poisoned = []
    for s in samples:
        vision = s.vision.copy()
        vision[0, 0, 0, 0] = np.nan
        poisoned.append(SequenceSample(vision=vision, radar=s.radar,
                                       labels=s.labels,
                                       anchor_slot=s.anchor_slot))
    with pytest.raises(TrainingDivergedError):
        train_teacher(poisoned[:6], poisoned[6:], tiny_model_spec(), FAST)


def test_balanced_alpha_and_bad_alpha(tiny_sets):
    train, val = tiny_sets
    cfg = replace(FAST, max_epochs=1, focal_alpha="balanced")
    result = train_teacher(train, val, tiny_model_spec(), cfg)
    assert len(result.logs) == 1
    with pytest.raises(ConfigError):
        train_teacher(train, val, tiny_model_spec(),
                      replace(FAST, focal_alpha=[1.0, 2.0]))


def test_save_training_result(tmp_path, tiny_sets):
    train, val = tiny_sets
    cfg = replace(FAST, max_epochs=2)
    result = train_teacher(train, val, tiny_model_spec(), cfg)
    save_training_result(tmp_path / "run", result, cfg,
                         extra_meta={"model_name": "teacher"})
    loaded, meta = load_checkpoint(tmp_path / "run")
    assert meta["model_name"] == "teacher"
    assert meta["epoch"] == result.best_epoch
    lines = (tmp_path / "run" / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == len(result.logs)
    first = json.loads(lines[0])
    assert first["epoch"] == 1 and "val_loss" in first
    from beamtrack.models import batch_tensors
    vision, radar, _ = batch_tensors(val)
    with torch.no_grad():
        assert torch.equal(result.model(vision, radar), loaded(vision, radar))
