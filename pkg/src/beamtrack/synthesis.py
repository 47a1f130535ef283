"""End-to-end synthetic scenario generation.

One run builds a single long trajectory and, per slot: the geometric channel
(for the ground-truth beam label), a rendered camera frame, and an FMCW
radar cube reduced to range-angle / range-Doppler maps. Occlusion episodes
hide the user from the camera; clutter episodes swamp the radar with strong
interfering scatterers and noise. The per-slot streams are then windowed
into training samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import (ArrayGeometry, BeamCodebook, ScenarioConfig, Trajectory,
                       build_dft_codebook, compute_optimal_beams,
                       synthesize_channel)
from .radar import RadarConfig, Scatterer, preprocess_radar, synthesize_if_cube
from .store import SequenceSample, assemble_samples
from .vision import Frame, SceneConfig, frame_difference, motion_mask, render_scene
from .imageops import bilinear_resize

__all__ = [
    "ClutterModel",
    "ScenarioStreams",
    "plan_episodes",
    "generate_streams",
    "generate_samples",
    "degraded_anchor_masks",
]


@dataclass(frozen=True)
class ClutterModel:
    """Radar interference during clutter episodes."""

    num_scatterers: int = 6
    amplitude: float = 8.0
    noise_std: float = 3.0
    num_static: int = 2
    static_amplitude: float = 0.25


@dataclass
class ScenarioStreams:
    """Aligned per-slot streams plus episode bookkeeping."""

    vision: np.ndarray           # (T, 1, h, w) float32; slot 0 is a zero pad
    radar: np.ndarray            # (T, 2, h, w) float32
    labels: np.ndarray           # (T,) int64, 1-based
    occluded: np.ndarray         # (T,) bool
    cluttered: np.ndarray        # (T,) bool
    trajectory: Trajectory
    codebook: BeamCodebook


def plan_episodes(num_slots: int, seed: int, num_occlusion: int,
                  occlusion_len: tuple[int, int], num_clutter: int,
                  clutter_len: tuple[int, int],
                  margin: int = 12) -> tuple[tuple, tuple]:
    """Disjoint occlusion and clutter slot intervals, spread over the run.

    Episodes of the two kinds never overlap (a slot is degraded for at most
    one modality) and keep ``margin`` clean slots between consecutive
    episodes.
    """
    rng = np.random.default_rng([seed, 3])
    kinds = ["occ"] * num_occlusion + ["clut"] * num_clutter
    rng.shuffle(kinds)
    lengths = [int(rng.integers(occlusion_len[0], occlusion_len[1] + 1))
               if k == "occ" else
               int(rng.integers(clutter_len[0], clutter_len[1] + 1))
               for k in kinds]
    total = sum(lengths) + margin * (len(kinds) + 1)
    if total > num_slots:
        raise ValueError(f"episodes need {total} slots but the run has {num_slots}")
    slack = num_slots - total
    gaps = rng.multinomial(slack, np.ones(len(kinds) + 1) / (len(kinds) + 1))
    occ, clut = [], []
    cursor = 0
    for kind, length, gap in zip(kinds, lengths, gaps):
        cursor += margin + int(gap)
        interval = (cursor, cursor + length)
        (occ if kind == "occ" else clut).append(interval)
        cursor += length
    return tuple(occ), tuple(clut)


def _radar_scatterers(trajectory: Trajectory, slot: int, cluttered: bool,
                      clutter: ClutterModel, radar_cfg: RadarConfig,
                      seed: int) -> tuple[list[Scatterer], float]:
    """User echo, weak static reflectors, and (if cluttered) interference."""
    scatterers = [Scatterer(
        range_m=float(trajectory.range_m[slot]),
        radial_velocity=float(trajectory.speed[slot]),
        azimuth=float(trajectory.azimuth[slot]),
        amplitude=1.0,
    )]
    static_rng = np.random.default_rng([seed, 4])
    max_range = 0.9 * radar_cfg.unambiguous_range
    for _ in range(clutter.num_static):
        scatterers.append(Scatterer(
            range_m=float(static_rng.uniform(0.3, 1.0) * max_range),
            radial_velocity=0.0,
            azimuth=float(static_rng.uniform(-1.2, 1.2)),
            amplitude=clutter.static_amplitude,
        ))
    noise_std = radar_cfg.noise_std
    if cluttered:
        rng = np.random.default_rng([seed, 5, slot])
        for _ in range(clutter.num_scatterers):
            phase = rng.uniform(0, 2 * np.pi)
            scatterers.append(Scatterer(
                range_m=float(rng.uniform(0.1, 1.0) * max_range),
                radial_velocity=float(rng.uniform(-8.0, 8.0)),
                azimuth=float(rng.uniform(-1.3, 1.3)),
                amplitude=clutter.amplitude * np.exp(1j * phase),
            ))
        noise_std = max(noise_std, clutter.noise_std)
    return scatterers, noise_std


def generate_streams(scenario: ScenarioConfig, geometry: ArrayGeometry,
                     codebook: BeamCodebook, radar_cfg: RadarConfig,
                     scene: SceneConfig,
                     clutter: ClutterModel | None = None) -> ScenarioStreams:
    """Per-slot labels, preprocessed vision and radar maps for one scenario."""
    clutter = clutter or ClutterModel()
    traj = scenario.trajectory
    t_len = len(traj)
    occluded = np.array([scene.occluded(t) for t in range(t_len)])
    cluttered = np.array([any(s <= t < e for s, e in scenario.clutter_episodes)
                          for t in range(t_len)])

    labels = np.empty(t_len, dtype=np.int64)
    for t in range(t_len):
        ch = synthesize_channel(scenario, geometry, t)
        labels[t] = compute_optimal_beams([ch], codebook).b_star[0]

    vision = np.zeros((t_len, 1, scene.out_height, scene.out_width), dtype=np.float32)
    prev_frame: Frame | None = None
    for t in range(t_len):
        frame = render_scene(traj, scene, t)
        if prev_frame is not None:
            diff = frame_difference(frame, prev_frame)
            weighted = motion_mask(diff, scene.mask_threshold) * diff
            resized = bilinear_resize(weighted, (scene.out_height, scene.out_width))
            vision[t, 0] = resized.astype(np.float32)
        prev_frame = frame

    radar = np.empty((t_len, 2, radar_cfg.map_height, radar_cfg.map_width),
                     dtype=np.float32)
    for t in range(t_len):
        scatterers, noise_std = _radar_scatterers(
            traj, t, bool(cluttered[t]), clutter, radar_cfg, scenario.rng_seed)
        cfg = replace(radar_cfg, noise_std=noise_std)
        cube = synthesize_if_cube(scatterers, cfg, rng_seed=scenario.rng_seed,
                                  slot_index=t)
        radar[t] = preprocess_radar(cube, cfg).stacked()

    return ScenarioStreams(vision=vision, radar=radar, labels=labels,
                           occluded=occluded, cluttered=cluttered,
                           trajectory=traj, codebook=codebook)


def generate_samples(streams: ScenarioStreams, window: int,
                     horizon: int) -> list[SequenceSample]:
    return assemble_samples(streams.vision, streams.radar, streams.labels,
                            window, horizon)


def degraded_anchor_masks(samples: list[SequenceSample], occluded: np.ndarray,
                          cluttered: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of samples whose whole observation window is degraded.

    A sample counts as vision-degraded (occluded) or radar-degraded
    (cluttered) only when every slot of its W-slot window lies inside the
    corresponding episodes, which makes that modality uninformative for the
    sample.
    """
    vis_deg = np.zeros(len(samples), dtype=bool)
    rad_deg = np.zeros(len(samples), dtype=bool)
    for i, s in enumerate(samples):
        w = s.window
        slots = range(s.anchor_slot - w + 1, s.anchor_slot + 1)
        vis_deg[i] = all(occluded[t] for t in slots)
        rad_deg[i] = all(cluttered[t] for t in slots)
    return vis_deg, rad_deg
