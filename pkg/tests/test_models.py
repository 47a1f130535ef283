"""Model architecture, tempered softmax and complexity-accounting tests."""

import math
from dataclasses import replace

import numpy as np
import pytest
import torch

from beamtrack.errors import ConfigError, DomainError
from beamtrack.models import (BeamProbSeries, ModelSpec, batched_logits,
                              build_model, complexity, conv_flops, conv_params,
                              count_flops, count_params, default_student_spec,
                              default_teacher_spec, flop_breakdown,
                              linear_flops, linear_params, load_checkpoint,
                              load_checkpoint_metadata, param_breakdown,
                              save_checkpoint, save_oracle_checkpoint,
                              tempered_softmax)
from beamtrack.store import SequenceSample

TINY = ModelSpec(role="teacher", vision_channels=(4, 8), radar_channels=(4, 8),
                 d0=16, d1=16, fused_dim=16, gru_layers=1, gru_hidden=16,
                 mha_heads=2, horizon=2, codebook_size=6)


def _inputs(batch=2, window=3, hw=16, seed=0):
    gen = torch.Generator().manual_seed(seed)
    vision = torch.rand(batch, window, 1, hw, hw, generator=gen)
    radar = torch.rand(batch, window, 2, hw, hw, generator=gen)
    return vision, radar


# -- spec validation ---------------------------------------------------------

def test_spec_invariants():
    with pytest.raises(ConfigError):
        replace(TINY, gru_layers=3)
    with pytest.raises(ConfigError):
        replace(TINY, mha_heads=3)          # does not divide gru_hidden
    with pytest.raises(ConfigError):
        replace(TINY, use_vision=False, use_radar=False)
    with pytest.raises(ConfigError):
        replace(TINY, conv_kind="dilated")


def test_spec_dict_roundtrip():
    spec = default_student_spec(codebook_size=16, horizon=2)
    assert ModelSpec.from_dict(spec.to_dict()) == spec


# -- tempered softmax --------------------------------------------------------

def test_tempered_softmax_is_softmax_at_unit_temperature():
    logits = np.array([0.3, -1.2, 2.0, 0.0])
    expected = np.exp(logits) / np.exp(logits).sum()
    assert np.max(np.abs(tempered_softmax(logits, 1.0) - expected)) < 1e-12


def test_tempered_softmax_ln2_example():
    p = tempered_softmax(np.array([math.log(2.0), 0.0]), 1.0)
    assert abs(p[0] - 2 / 3) < 1e-9 and abs(p[1] - 1 / 3) < 1e-9


def test_tempered_softmax_high_temperature_uniform():
    logits = np.array([3.0, -2.0, 1.0, 0.5])
    p = tempered_softmax(logits, 1000.0)
    assert np.max(np.abs(p - 0.25)) < 1e-2


def test_tempered_softmax_argmax_invariant():
    rng = np.random.default_rng(1)
    for _ in range(20):
        logits = rng.standard_normal(8)
        for temp in (0.1, 1.0, 7.0, 300.0):
            assert np.argmax(tempered_softmax(logits, temp)) == np.argmax(logits)


def test_tempered_softmax_domain_error():
    with pytest.raises(DomainError):
        tempered_softmax(np.zeros(3), 0.0)


def test_prob_series_contract():
    rng = np.random.default_rng(0)
    series = BeamProbSeries.from_logits(rng.standard_normal((3, 6)))
    assert np.max(np.abs(series.probs.sum(axis=1) - 1)) < 1e-6
    assert np.all(series.probs >= 0)
    assert np.array_equal(series.predicted_beams(),
                          np.argmax(series.logits, axis=1) + 1)


# -- extractors --------------------------------------------------------------

def test_zero_input_zero_embedding():
    model = build_model(TINY, seed=0)
    vision = torch.zeros(1, 3, 1, 16, 16)
    out = model.embed_vision(vision)
    assert out.shape == (1, 3, 16)
    assert torch.all(out == 0)          # biases are zero-initialized


def test_embedding_shapes():
    model = build_model(TINY, seed=0)
    vision, radar = _inputs()
    assert model.embed_vision(vision).shape == (2, 3, TINY.d0)
    assert model.embed_radar(radar).shape == (2, 3, TINY.d1)


def test_slot_permutation_equivariance():
    model = build_model(TINY, seed=1)
    vision, _ = _inputs()
    perm = torch.tensor([2, 0, 1])
    out = model.embed_vision(vision)
    out_perm = model.embed_vision(vision[:, perm])
    assert torch.equal(out_perm, out[:, perm])


# -- temporal encoder --------------------------------------------------------

def test_single_step_gru_reduction():
    model = build_model(TINY, seed=2)
    f0 = torch.randn(1, 1, TINY.d0)
    f1 = torch.randn(1, 1, TINY.d1)
    hidden = model.fuse_and_encode(f0, f1)

    # manual GRU step from the zero state using the layer weights
    fused = model.fusion(torch.cat([f0, f1], dim=-1))[0, 0]
    w_ih = model.gru.weight_ih_l0
    w_hh = model.gru.weight_hh_l0
    b_ih = model.gru.bias_ih_l0
    b_hh = model.gru.bias_hh_l0
    h = TINY.gru_hidden
    gi = w_ih @ fused + b_ih
    gh = b_hh.clone()                   # hidden state starts at zero
    r = torch.sigmoid(gi[:h] + gh[:h])
    z = torch.sigmoid(gi[h:2 * h] + gh[h:2 * h])
    n = torch.tanh(gi[2 * h:] + r * gh[2 * h:])
    expected = (1 - z) * n
    assert torch.allclose(hidden[0, 0], expected, atol=1e-6)


def test_encoder_causality():
    model = build_model(TINY, seed=3)
    f0 = torch.randn(1, 5, TINY.d0)
    f1 = torch.randn(1, 5, TINY.d1)
    base = model.fuse_and_encode(f0, f1)
    f0_mod = f0.clone()
    f0_mod[:, -1] += 1.0
    perturbed = model.fuse_and_encode(f0_mod, f1)
    assert torch.equal(base[:, :-1], perturbed[:, :-1])
    assert not torch.equal(base[:, -1], perturbed[:, -1])


def test_modality_mask_exact_invariance():
    spec = replace(TINY, use_vision=False)
    model = build_model(spec, seed=4)
    _, radar = _inputs()
    v1 = torch.rand(2, 3, 1, 16, 16)
    v2 = torch.rand(2, 3, 1, 16, 16)
    assert torch.equal(model(v1, radar), model(v2, radar))

    spec_r = replace(TINY, use_radar=False)
    model_r = build_model(spec_r, seed=4)
    vision, _ = _inputs()
    r1 = torch.rand(2, 3, 2, 16, 16)
    r2 = torch.rand(2, 3, 2, 16, 16)
    assert torch.equal(model_r(vision, r1), model_r(vision, r2))


# -- prediction heads --------------------------------------------------------

def test_prediction_rows_normalized():
    model = build_model(TINY, seed=5)
    vision, radar = _inputs()
    logits = model(vision, radar)
    assert logits.shape == (2, TINY.horizon + 1, TINY.codebook_size)
    probs = torch.softmax(logits, dim=-1)
    assert torch.max(torch.abs(probs.sum(-1) - 1)) < 1e-6


def test_constant_hidden_states_identical_rows():
    model = build_model(TINY, seed=6)
    hidden = torch.randn(1, 1, TINY.gru_hidden).repeat(1, 5, 1)
    logits = model.predict_heads(hidden)
    for j in range(1, TINY.horizon + 1):
        assert torch.allclose(logits[0, j], logits[0, 0], atol=1e-6)


def test_forward_deterministic_and_role_parity():
    vision, radar = _inputs()
    for spec in (TINY, replace(default_student_spec(codebook_size=6, horizon=2),
                               d0=16, d1=16, fused_dim=16, gru_hidden=16)):
        model = build_model(spec, seed=7)
        model.eval()
        with torch.no_grad():
            a = model(vision, radar)
            b = model(vision, radar)
        assert torch.equal(a, b)
        assert a.shape == (2, 3, 6)


def test_predict_sample_interface():
    model = build_model(TINY, seed=8)
    sample = SequenceSample(
        vision=np.random.default_rng(0).uniform(0, 1, (3, 1, 16, 16)).astype(np.float32),
        radar=np.random.default_rng(1).uniform(0, 1, (3, 2, 16, 16)).astype(np.float32),
        labels=np.array([1, 2, 3]), anchor_slot=5)
    series = model.predict_sample(sample)
    assert series.logits.shape == (3, 6)
    logits = batched_logits(model, [sample, sample])
    assert logits.shape == (2, 3, 6)
    assert np.allclose(logits[0], series.logits, atol=1e-6)


# -- complexity accounting ---------------------------------------------------

def test_layer_counting_formulas():
    assert conv_params(32, 64) == 18_496
    assert conv_params(32, 64, kind="depthwise") == 2_432
    assert linear_params(128, 64) == 8_256
    assert linear_flops(128, 64) == 2 * 128 * 64
    assert conv_flops(3, 8, (10, 10)) == 2 * 9 * 3 * 8 * 100
    assert conv_flops(3, 8, (10, 10), kind="depthwise") == 2 * 9 * 3 * 100 + 2 * 3 * 8 * 100


def test_param_count_matches_torch_exactly():
    for spec in (default_teacher_spec(), default_student_spec(), TINY,
                 replace(default_teacher_spec(), use_radar=False),
                 replace(default_teacher_spec(), use_vision=False)):
        model = build_model(spec, seed=0)
        assert count_params(spec) == sum(p.numel() for p in model.parameters())


def test_breakdown_sums_to_total():
    spec = default_teacher_spec()
    assert sum(param_breakdown(spec).values()) == count_params(spec)
    assert sum(flop_breakdown(spec).values()) == count_flops(spec)
    rep = complexity(spec)
    assert rep.param_count == count_params(spec)
    assert rep.flop_count == count_flops(spec)


def test_default_specs_hit_reduction_targets():
    teacher, student = default_teacher_spec(), default_student_spec()
    param_ratio = count_params(teacher) / count_params(student)
    flop_ratio = count_flops(teacher) / count_flops(student)
    assert param_ratio >= 20.0
    assert flop_ratio >= 3.5


# -- checkpoints -------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    model = build_model(TINY, seed=9)
    save_checkpoint(tmp_path / "ckpt", model, {"seed": 9, "epoch": 1,
                                               "val_loss": 0.5})
    loaded, meta = load_checkpoint(tmp_path / "ckpt")
    assert meta["seed"] == 9 and meta["kind"] == "model"
    assert ModelSpec.from_dict(meta["spec"]) == TINY
    vision, radar = _inputs()
    with torch.no_grad():
        assert torch.equal(model(vision, radar), loaded(vision, radar))


def test_oracle_checkpoint(tmp_path):
    save_oracle_checkpoint(tmp_path / "oracle")
    meta = load_checkpoint_metadata(tmp_path / "oracle")
    assert meta["kind"] == "oracle"
    from beamtrack.errors import StoreError
    with pytest.raises(StoreError):
        load_checkpoint(tmp_path / "oracle")
