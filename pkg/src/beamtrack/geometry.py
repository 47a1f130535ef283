"""Antenna array geometry, beam codebooks, channel synthesis and beam labels.

The base station carries a uniform linear array (ULA). A beam codebook is a
set of unit-norm steering vectors; the ground-truth label for a slot is the
codebook index with the largest beamforming gain |h^H v|^2 against the slot's
channel. Channels are synthesised from a dominant line-of-sight path toward
the user plus a few weak random paths, which is all the label computation
needs (labels depend only on relative beam gains).

Beam indices are 1-based everywhere (1..C), matching the codebook index set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

__all__ = [
    "ArrayGeometry",
    "BeamCodebook",
    "PathParams",
    "ChannelState",
    "Trajectory",
    "ScenarioConfig",
    "BeamLabels",
    "steering_vector",
    "build_dft_codebook",
    "channel_from_paths",
    "paths_for_slot",
    "synthesize_channel",
    "beam_gain",
    "compute_optimal_beams",
    "snr",
    "spectral_efficiency",
    "make_trajectory",
]


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array at the base station."""

    num_antennas: int
    element_spacing: float = 0.5  # in wavelengths

    def __post_init__(self):
        if self.num_antennas < 2:
            raise ConfigError(f"num_antennas must be >= 2, got {self.num_antennas}")
        if self.element_spacing <= 0:
            raise ConfigError(f"element_spacing must be > 0, got {self.element_spacing}")


@dataclass(frozen=True)
class BeamCodebook:
    """C unit-norm beamforming vectors with 1-based index set."""

    vectors: np.ndarray          # (C, N_t) complex
    angles: np.ndarray           # (C,) steering azimuths, radians

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise ConfigError("codebook needs at least 2 vectors")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ConfigError("codebook vectors must be unit norm")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def index_set(self) -> np.ndarray:
        return np.arange(1, self.size + 1)

    def beam(self, index: int) -> np.ndarray:
        """Return the vector for a 1-based beam index."""
        if not 1 <= index <= self.size:
            raise IndexError(f"beam index {index} outside 1..{self.size}")
        return self.vectors[index - 1]


@dataclass(frozen=True)
class PathParams:
    """One propagation path of the geometric channel."""

    azimuth: float               # radians, in [-pi/2, pi/2]
    complex_gain: complex
    delay_slot_offset: int = 0

    def __post_init__(self):
        if not -math.pi / 2 <= self.azimuth <= math.pi / 2:
            raise DomainError(f"path azimuth {self.azimuth} outside [-pi/2, pi/2]")


@dataclass(frozen=True)
class ChannelState:
    """Complex channel vector h for one time slot."""

    h: np.ndarray                # (N_t,) complex
    slot_index: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.h.real)) or not np.all(np.isfinite(self.h.imag)):
            raise DomainError("channel entries must be finite")


@dataclass(frozen=True)
class Trajectory:
    """Per-slot user kinematics: azimuth (rad), range (m), radial speed (m/s)."""

    azimuth: np.ndarray
    range_m: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        if not (len(self.azimuth) == len(self.range_m) == len(self.speed)):
            raise ShapeError("trajectory arrays must have equal length")

    def __len__(self) -> int:
        return len(self.azimuth)


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical scenario: noise level, user trajectory and path model.

    The matched-beam SNR at `ref_range_m` equals `snr_ref`, which keeps the
    label computation scale-free; ranges shorter/longer than the reference
    scale the line-of-sight gain by the usual power law.
    """

    noise_power: float
    trajectory: Trajectory
    rng_seed: int = 0
    snr_ref: float = 100.0
    ref_range_m: float = 10.0
    pathloss_exp: float = 2.0
    nlos_paths: int = 2
    nlos_relative_gain: float = 0.1
    # slot intervals [start, end) where strong interference degrades the radar
    clutter_episodes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.noise_power <= 0:
            raise DomainError(f"noise_power must be > 0, got {self.noise_power}")
        if self.nlos_paths < 0:
            raise ConfigError("nlos_paths must be >= 0")
        if len(self.trajectory) < 1:
            raise ConfigError("trajectory must be nonempty")

    @property
    def num_slots(self) -> int:
        return len(self.trajectory)


@dataclass(frozen=True)
class BeamLabels:
    """Optimal beam indices for slots t..t+J (1-based)."""

    b_star: np.ndarray           # (J+1,) int
    anchor_slot: int = 0

    def __len__(self) -> int:
        return len(self.b_star)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def steering_vector(azimuth: float, geometry: ArrayGeometry) -> np.ndarray:
    """Unit-norm ULA response a(azimuth), entry m = exp(i 2π d m sinθ)/√N."""
    if not -math.pi / 2 <= azimuth <= math.pi / 2:
        raise DomainError(f"azimuth {azimuth} outside [-pi/2, pi/2]")
    n = geometry.num_antennas
    m = np.arange(n)
    phase = 2.0 * np.pi * geometry.element_spacing * m * math.sin(azimuth)
    return np.exp(1j * phase) / math.sqrt(n)


def build_dft_codebook(geometry: ArrayGeometry, num_beams: int) -> BeamCodebook:
    """Steering vectors at uniformly spaced sine-domain angles.

    Beam c (0-based) points at sin(theta) = -1 + (2c+1)/C, a centred grid over
    (-1, 1). For C == N_t this is the orthogonal DFT codebook.
    """
    if num_beams < 2:
        raise ConfigError(f"codebook size must be >= 2, got {num_beams}")
    sines = -1.0 + (2.0 * np.arange(num_beams) + 1.0) / num_beams
    angles = np.arcsin(sines)
    vectors = np.stack([steering_vector(a, geometry) for a in angles])
    return BeamCodebook(vectors=vectors, angles=angles)


def channel_from_paths(paths: list[PathParams], geometry: ArrayGeometry,
                       slot_index: int = 0) -> ChannelState:
    """h = sum over paths of gain_p * a(theta_p)."""
    h = np.zeros(geometry.num_antennas, dtype=np.complex128)
    for p in paths:
        h = h + p.complex_gain * steering_vector(p.azimuth, geometry)
    return ChannelState(h=h, slot_index=slot_index)


def _slot_rng(seed: int, slot: int, stream: int) -> np.random.Generator:
    """Independent generator per (seed, slot, stream), reproducible under seed."""
    return np.random.default_rng([seed, slot, stream])


def paths_for_slot(scenario: ScenarioConfig, geometry: ArrayGeometry,
                   slot: int) -> list[PathParams]:
    """LoS path toward the user plus weak random NLoS paths for one slot."""
    if not 0 <= slot < scenario.num_slots:
        raise IndexError(f"slot {slot} outside trajectory of length {scenario.num_slots}")
    traj = scenario.trajectory
    rng = _slot_rng(scenario.rng_seed, slot, stream=0)
    los_amp = math.sqrt(scenario.snr_ref * scenario.noise_power) * (
        scenario.ref_range_m / max(traj.range_m[slot], 1e-6)
    ) ** (scenario.pathloss_exp / 2.0)
    los_phase = rng.uniform(0.0, 2.0 * np.pi)
    paths = [PathParams(azimuth=float(traj.azimuth[slot]),
                        complex_gain=los_amp * np.exp(1j * los_phase))]
    for _ in range(scenario.nlos_paths):
        az = rng.uniform(-np.pi / 2, np.pi / 2)
        g = scenario.nlos_relative_gain * los_amp * (
            rng.standard_normal() + 1j * rng.standard_normal()
        ) / math.sqrt(2.0)
        paths.append(PathParams(azimuth=float(az), complex_gain=g))
    return paths


def synthesize_channel(scenario: ScenarioConfig, geometry: ArrayGeometry,
                       slot: int) -> ChannelState:
    """Geometric channel for one slot, deterministic under the scenario seed."""
    return channel_from_paths(paths_for_slot(scenario, geometry, slot),
                              geometry, slot_index=slot)


def beam_gain(channel: ChannelState, beam: np.ndarray) -> float:
    """Beamforming gain |h^H v|^2."""
    if channel.h.shape != beam.shape:
        raise ShapeError(f"channel {channel.h.shape} vs beam {beam.shape}")
    return float(np.abs(np.vdot(channel.h, beam)) ** 2)


def compute_optimal_beams(channels: list[ChannelState],
                          codebook: BeamCodebook) -> BeamLabels:
    """Per-slot argmax of the beamforming gain; ties go to the smaller index.

    The joint objective over the horizon separates across slots, so the
    per-slot argmax equals the exhaustive joint search.
    """
    if codebook.size < 2:
        raise ConfigError("empty or degenerate codebook")
    labels = np.empty(len(channels), dtype=np.int64)
    for j, ch in enumerate(channels):
        gains = np.abs(codebook.vectors.conj() @ ch.h) ** 2
        labels[j] = int(np.argmax(gains)) + 1
    anchor = channels[0].slot_index if channels else 0
    return BeamLabels(b_star=labels, anchor_slot=anchor)


def snr(channel: ChannelState, beam: np.ndarray, noise_power: float) -> float:
    """|h^H v|^2 / sigma_n^2."""
    if noise_power <= 0:
        raise DomainError(f"noise_power must be > 0, got {noise_power}")
    return beam_gain(channel, beam) / noise_power


def spectral_efficiency(channels: list[ChannelState], beams: list[np.ndarray],
                        noise_power: float) -> float:
    """Sum over slots of log2(1 + SNR), bits/s/Hz."""
    if len(channels) != len(beams):
        raise ShapeError(f"{len(channels)} channels vs {len(beams)} beams")
    return float(sum(math.log2(1.0 + snr(ch, v, noise_power))
                     for ch, v in zip(channels, beams)))


# ---------------------------------------------------------------------------
# trajectory synthesis
# ---------------------------------------------------------------------------

def make_trajectory(num_slots: int, seed: int = 0, *,
                    sine_speed: float = 0.02,
                    speed_jitter: float = 0.3,
                    turn_prob: float = 0.03,
                    sine_limit: float = 0.98,
                    range_mean: float = 12.0,
                    range_amplitude: float = 4.0,
                    range_period: float = 400.0,
                    slot_duration: float = 0.1) -> Trajectory:
    """Constant-speed sweep in the sine-angle domain with random turns.

    The user crosses the angular sector at roughly ``sine_speed`` per slot,
    reversing direction at the walls and spontaneously with ``turn_prob``
    per slot. The constant sweep speed keeps the occupancy of a
    sine-uniform codebook close to flat, while turns and speed jitter keep
    the future genuinely uncertain. Range follows a slow sinusoid; radial
    speed is its per-slot derivative.
    """
    rng = np.random.default_rng(seed)
    s = np.empty(num_slots)
    s[0] = rng.uniform(-sine_limit, sine_limit)
    direction = 1.0 if rng.uniform() < 0.5 else -1.0
    for t in range(1, num_slots):
        if rng.uniform() < turn_prob:
            direction = -direction
        nxt = s[t - 1] + direction * sine_speed * (
            1.0 + speed_jitter * rng.standard_normal())
        if nxt > sine_limit:
            nxt, direction = 2 * sine_limit - nxt, -1.0
        elif nxt < -sine_limit:
            nxt, direction = -2 * sine_limit - nxt, 1.0
        s[t] = np.clip(nxt, -sine_limit, sine_limit)
    azimuth = np.arcsin(s)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    tt = np.arange(num_slots)
    range_m = range_mean + range_amplitude * np.sin(2 * np.pi * tt / range_period + phase)
    speed = np.gradient(range_m, slot_duration)
    return Trajectory(azimuth=azimuth, range_m=range_m, speed=speed)
