"""Synthetic camera frames and the motion-based preprocessing chain.

Frames show a static textured background with a bright hard-edged disc at the
pixel position calibrated from the user's azimuth. Preprocessing removes the
static background by adjacent-frame subtraction, thresholds the absolute
difference into a binary motion mask, and feeds the mask-weighted difference
(resized to the model input size) to the network. During occlusion episodes
the disc is simply not drawn, so the user disappears from the vision branch
while the radar still sees it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, WindowingError
from .geometry import Trajectory
from .imageops import bilinear_resize

__all__ = [
    "SceneConfig",
    "Frame",
    "PreprocessedFrame",
    "render_scene",
    "frame_difference",
    "motion_mask",
    "preprocess_vision",
    "blob_support",
]


@dataclass(frozen=True)
class SceneConfig:
    """Camera geometry, calibration and photometric parameters."""

    height: int = 64
    width: int = 64
    background_seed: int = 0
    blob_radius: float = 4.0
    px_per_radian: float = 36.0        # azimuth -> horizontal pixel offset
    blob_row_frac: float = 0.55        # vertical disc centre as fraction of height
    occlusion_episodes: tuple = field(default_factory=tuple)  # [start, end) slots
    noise_std: float = 0.0
    out_height: int = 64
    out_width: int = 64
    mask_threshold: float = 0.1

    def __post_init__(self):
        if self.blob_radius >= min(self.height, self.width) / 2:
            raise ConfigError("blob_radius must be < min(height, width)/2")
        if not 0 < self.mask_threshold < 1:
            raise ConfigError("mask_threshold must be in (0, 1)")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")

    @property
    def center_col(self) -> float:
        """Horizontal pixel that azimuth 0 maps to."""
        return (self.width - 1) / 2.0

    def blob_center(self, azimuth: float) -> tuple[float, float]:
        """(row, col) of the disc centre for a given azimuth."""
        col = self.center_col + self.px_per_radian * azimuth
        row = self.blob_row_frac * (self.height - 1)
        return row, col

    def occluded(self, slot: int) -> bool:
        return any(start <= slot < end for start, end in self.occlusion_episodes)


@dataclass(frozen=True)
class Frame:
    """RGB frame, channels-first (3, H, W), values in [0, 1]."""

    pixels: np.ndarray
    slot_index: int = 0

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise ShapeError(f"frame must be (3, H, W), got {self.pixels.shape}")


@dataclass(frozen=True)
class PreprocessedFrame:
    """Mask-weighted difference image, (1, out_h, out_w), plus mask coverage."""

    channels: np.ndarray
    mask_area_fraction: float
    slot_index: int = 0


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _background(scene: SceneConfig) -> np.ndarray:
    """Static low-frequency RGB texture in [0.05, 0.55], seeded."""
    rng = np.random.default_rng(scene.background_seed)
    coarse = rng.uniform(0.05, 0.55, size=(3, 8, 8))
    return np.stack([bilinear_resize(c, (scene.height, scene.width)) for c in coarse])


def blob_support(scene: SceneConfig, azimuth: float) -> np.ndarray:
    """Boolean mask of pixels inside the hard disc for this azimuth."""
    row, col = scene.blob_center(azimuth)
    yy, xx = np.mgrid[0:scene.height, 0:scene.width]
    return (yy - row) ** 2 + (xx - col) ** 2 <= scene.blob_radius ** 2


def render_scene(trajectory: Trajectory, scene: SceneConfig, slot: int) -> Frame:
    """Background plus (unless occluded) a uniform white disc at the user.

    Per-slot photometric noise is seeded independently of the disc, so an
    occluded frame is bit-identical to a background-only render of that slot.
    """
    if not 0 <= slot < len(trajectory):
        raise IndexError(f"slot {slot} outside trajectory of length {len(trajectory)}")
    img = _background(scene).copy()
    if not scene.occluded(slot):
        img[:, blob_support(scene, float(trajectory.azimuth[slot]))] = 1.0
    if scene.noise_std > 0:
        rng = np.random.default_rng([scene.background_seed, slot, 2])
        img = img + rng.normal(0.0, scene.noise_std, size=img.shape)
    return Frame(pixels=np.clip(img, 0.0, 1.0), slot_index=slot)


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------

def frame_difference(current: Frame, previous: Frame) -> np.ndarray:
    """Absolute difference of the channel-mean grayscale images."""
    if current.pixels.shape != previous.pixels.shape:
        raise ShapeError(f"{current.pixels.shape} vs {previous.pixels.shape}")
    return np.abs(current.pixels.mean(axis=0) - previous.pixels.mean(axis=0))


def motion_mask(diff: np.ndarray, threshold: float) -> np.ndarray:
    """1.0 where the difference exceeds the threshold, else 0.0."""
    return (diff > threshold).astype(diff.dtype)


def preprocess_vision(frames: list[Frame], scene: SceneConfig) -> list[PreprocessedFrame]:
    """Mask-weighted difference images for the last W of W+1 consecutive frames.

    Each output slot tau uses the frame at tau-1 as its subtraction
    reference, so a window of W outputs consumes W+1 raw frames.
    """
    if len(frames) < 2:
        raise WindowingError(f"need at least 2 consecutive frames, got {len(frames)}")
    for prev, cur in zip(frames, frames[1:]):
        if cur.slot_index != prev.slot_index + 1:
            raise WindowingError(
                f"frames not consecutive: slot {prev.slot_index} then {cur.slot_index}")
    out = []
    for prev, cur in zip(frames, frames[1:]):
        diff = frame_difference(cur, prev)
        mask = motion_mask(diff, scene.mask_threshold)
        weighted = mask * diff
        resized = bilinear_resize(weighted, (scene.out_height, scene.out_width))
        out.append(PreprocessedFrame(
            channels=resized[None, :, :].astype(np.float32),
            mask_area_fraction=float(mask.mean()),
            slot_index=cur.slot_index,
        ))
    return out
