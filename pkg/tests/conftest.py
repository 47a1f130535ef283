"""Shared test helpers: tiny random datasets and model specs."""

import numpy as np
import pytest

from beamtrack.models import ModelSpec
from beamtrack.store import SequenceSample, assemble_samples


def make_random_samples(num_slots=20, window=2, horizon=1, codebook_size=4,
                        hw=8, seed=0):
    """Random but deterministic samples for loop-contract tests."""
    rng = np.random.default_rng(seed)
    vision = rng.uniform(0, 1, size=(num_slots, 1, hw, hw)).astype(np.float32)
    radar = rng.uniform(0, 1, size=(num_slots, 2, hw, hw)).astype(np.float32)
    labels = rng.integers(1, codebook_size + 1, size=num_slots).astype(np.int64)
    return assemble_samples(vision, radar, labels, window, horizon)


def tiny_model_spec(role="teacher", codebook_size=4, horizon=1):
    kind = "standard" if role == "teacher" else "depthwise"
    return ModelSpec(role=role, vision_channels=(4, 8), radar_channels=(4, 8),
                     conv_kind=kind, d0=8, d1=8, fused_dim=8, gru_layers=1,
                     gru_hidden=8, mha_heads=2, horizon=horizon,
                     codebook_size=codebook_size)


@pytest.fixture
def tiny_sets():
    samples = make_random_samples(num_slots=26, seed=3)
    return samples[:16], samples[16:]
