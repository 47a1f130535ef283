"""FMCW radar: IF cube synthesis from point scatterers and FFT map processing.

A sensing frame is a complex cube of shape (num_rx, num_fast, num_chirps).
Each scatterer contributes the standard beat model at sample (r, n, c):

    amp * exp(i 2π [ f_b n / f_s  +  f_d c T_c  +  d r sin(az) ])

with beat frequency f_b = 2 * slope * range / c0, Doppler f_d =
2 * velocity * f_carrier / c0 and antenna spacing d in wavelengths.

The processing chain turns a cube into a range-angle map (fast-time FFT,
zero-padded antenna FFT, magnitude, mean over chirps) and a range-Doppler map
(fast-time FFT, chirp FFT with the zero-Doppler column centred, magnitude,
mean over antennas), then compresses both into [0, 1] images of a fixed size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .imageops import bilinear_resize

__all__ = [
    "SPEED_OF_LIGHT",
    "RadarConfig",
    "Scatterer",
    "RadarCube",
    "RadarMaps",
    "synthesize_if_cube",
    "range_angle_map",
    "range_doppler_map",
    "preprocess_radar",
]

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class RadarConfig:
    """FMCW front-end dimensions and waveform parameters."""

    num_rx: int = 4
    num_fast: int = 64
    num_chirps: int = 32
    carrier_freq: float = 60e9
    chirp_slope: float = 30e12          # Hz/s
    sample_rate: float = 10e6
    chirp_period: float = 20e-6
    rx_spacing: float = 0.5             # wavelengths
    noise_std: float = 0.0
    angle_fft_size: int = 64
    map_height: int = 64
    map_width: int = 64

    def __post_init__(self):
        for name in ("num_rx", "num_fast", "num_chirps", "angle_fft_size",
                     "map_height", "map_width"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2, got {getattr(self, name)}")
        if self.angle_fft_size < self.num_rx:
            raise ConfigError("angle_fft_size must be >= num_rx")
        if self.sample_rate * self.chirp_period < self.num_fast:
            raise ConfigError("chirp_period too short for num_fast samples at sample_rate")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")

    @property
    def unambiguous_range(self) -> float:
        """Largest range whose beat frequency stays below the sample rate."""
        return self.sample_rate * SPEED_OF_LIGHT / (2.0 * self.chirp_slope)

    def beat_freq(self, range_m: float) -> float:
        return 2.0 * self.chirp_slope * range_m / SPEED_OF_LIGHT

    def doppler_freq(self, velocity: float) -> float:
        return 2.0 * velocity * self.carrier_freq / SPEED_OF_LIGHT


@dataclass(frozen=True)
class Scatterer:
    """Point reflector with range (m), radial velocity (m/s), azimuth (rad)."""

    range_m: float
    radial_velocity: float = 0.0
    azimuth: float = 0.0
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.range_m <= 0:
            raise ConfigError(f"scatterer range must be > 0, got {self.range_m}")


@dataclass(frozen=True)
class RadarCube:
    """Complex IF samples of one sensing frame, (num_rx, num_fast, num_chirps)."""

    samples: np.ndarray
    slot_index: int = 0
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise ShapeError(f"cube must be 3-D, got shape {self.samples.shape}")


@dataclass(frozen=True)
class RadarMaps:
    """Normalized range-angle and range-Doppler images in [0, 1]."""

    range_angle: np.ndarray
    range_doppler: np.ndarray

    def stacked(self) -> np.ndarray:
        """2-channel model input, shape (2, H, W)."""
        return np.stack([self.range_angle, self.range_doppler])


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def synthesize_if_cube(scatterers: list[Scatterer], config: RadarConfig,
                       rng_seed: int = 0, slot_index: int = 0) -> RadarCube:
    """Superpose the beat-model response of every scatterer, plus noise.

    Linear over scatterers at zero noise; deterministic under the seed.
    Scatterers beyond the unambiguous range alias in fast time and are
    flagged in the cube's warnings.
    """
    r = np.arange(config.num_rx)[:, None, None]
    n = np.arange(config.num_fast)[None, :, None]
    c = np.arange(config.num_chirps)[None, None, :]
    cube = np.zeros((config.num_rx, config.num_fast, config.num_chirps),
                    dtype=np.complex128)
    warnings = []
    for s in scatterers:
        if s.range_m > config.unambiguous_range:
            warnings.append(f"scatterer at {s.range_m:.1f} m beyond unambiguous "
                            f"range {config.unambiguous_range:.1f} m")
        f_b = config.beat_freq(s.range_m)
        f_d = config.doppler_freq(s.radial_velocity)
        phase = 2.0 * np.pi * (f_b * n / config.sample_rate
                               + f_d * c * config.chirp_period
                               + config.rx_spacing * r * np.sin(s.azimuth))
        cube += s.amplitude * np.exp(1j * phase)
    if config.noise_std > 0:
        rng = np.random.default_rng([rng_seed, slot_index, 1])
        noise = rng.standard_normal(cube.shape) + 1j * rng.standard_normal(cube.shape)
        cube += config.noise_std / np.sqrt(2.0) * noise
    return RadarCube(samples=cube, slot_index=slot_index, warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# FFT maps
# ---------------------------------------------------------------------------

def _check_cube(cube: RadarCube, config: RadarConfig) -> None:
    expected = (config.num_rx, config.num_fast, config.num_chirps)
    if cube.samples.shape != expected:
        raise ShapeError(f"cube shape {cube.samples.shape} != config {expected}")


def range_angle_map(cube: RadarCube, config: RadarConfig) -> np.ndarray:
    """|FFT_fast x FFT_antenna| averaged over chirps, (num_fast, angle_fft_size).

    The antenna FFT is zero padded to angle_fft_size and fftshifted so
    broadside (sin = 0) lands in the centre column.
    """
    _check_cube(cube, config)
    rng_fft = np.fft.fft(cube.samples, axis=1)                       # fast time
    ang_fft = np.fft.fft(rng_fft, n=config.angle_fft_size, axis=0)   # antennas
    ang_fft = np.fft.fftshift(ang_fft, axes=0)
    mag = np.abs(ang_fft).mean(axis=2)                               # over chirps
    return mag.T                                                     # (range, angle)


def range_doppler_map(cube: RadarCube, config: RadarConfig) -> np.ndarray:
    """|FFT_fast x FFT_chirp| averaged over antennas, (num_fast, num_chirps).

    The chirp FFT is fftshifted so zero Doppler is the centre column.
    """
    _check_cube(cube, config)
    rng_fft = np.fft.fft(cube.samples, axis=1)
    dop_fft = np.fft.fft(rng_fft, axis=2)
    dop_fft = np.fft.fftshift(dop_fft, axes=2)
    return np.abs(dop_fft).mean(axis=0)                              # (range, doppler)


def _normalize_map(raw: np.ndarray, db_floor: float = -60.0,
                   eps: float = 1e-6) -> np.ndarray:
    """Peak-relative dB compression into [0, 1].

    The map is scaled to its peak, converted to dB, clipped to
    [db_floor, 0] and min-max normalized. A constant map (min == max after
    clipping, e.g. an all-zero cube) maps to all zeros.
    """
    peak = float(raw.max())
    scaled = raw / peak if peak > 0 else raw
    db = 20.0 * np.log10(scaled + eps)
    db = np.clip(db, db_floor, 0.0)
    lo, hi = float(db.min()), float(db.max())
    if hi - lo <= 0:
        return np.zeros_like(db)
    return (db - lo) / (hi - lo)


def preprocess_radar(cube: RadarCube, config: RadarConfig) -> RadarMaps:
    """Both maps -> peak-relative dB -> clip -> [0,1] -> resize to map size."""
    ra = _normalize_map(range_angle_map(cube, config))
    rd = _normalize_map(range_doppler_map(cube, config))
    out_hw = (config.map_height, config.map_width)
    return RadarMaps(
        range_angle=bilinear_resize(ra, out_hw).astype(np.float32),
        range_doppler=bilinear_resize(rd, out_hw).astype(np.float32),
    )
