"""Sliding-window sample assembly and on-disk dataset persistence.

A dataset directory holds one float32 array container per (slot, modality)
artifact plus a ``manifest.csv`` whose header carries the window length W,
horizon J, codebook size C and format version, followed by one row per
sample:

    anchor_slot, vision_path[0..W-1], radar_path[0..W-1], label[0..J]

Overlapping windows reference the same per-slot artifact files, so the store
stays linear in the number of slots. The same manifest schema is the
ingestion contract for externally converted datasets.

Array container layout (little endian): magic ``BTAR``, version byte,
dtype code byte (1 = float32), ndim byte, ndim uint32 dims, raw float32
payload, trailing CRC32 over everything before it.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigError, StoreError

__all__ = [
    "SequenceSample",
    "SplitSpec",
    "DatasetStats",
    "assemble_samples",
    "split",
    "save_dataset",
    "load_dataset",
    "read_manifest_header",
    "class_histogram",
    "write_array",
    "read_array",
]

_MAGIC = b"BTAR"
_VERSION = 1
_DTYPE_F32 = 1
_MANIFEST = "manifest.csv"


# ---------------------------------------------------------------------------
# array container
# ---------------------------------------------------------------------------

def write_array(path: Path, array: np.ndarray) -> None:
    """Write a float32 array in the self-describing container format."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = _MAGIC + struct.pack("<BBB", _VERSION, _DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.tobytes()
    crc = zlib.crc32(header + payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def read_array(path: Path) -> np.ndarray:
    """Read a container file back, verifying magic, version and CRC."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise StoreError(f"missing artifact: {path}") from None
    if len(blob) < 11 or blob[:4] != _MAGIC:
        raise StoreError(f"bad magic in {path}")
    version, dtype_code, ndim = struct.unpack("<BBB", blob[4:7])
    if version != _VERSION:
        raise StoreError(f"unsupported container version {version} in {path}")
    if dtype_code != _DTYPE_F32:
        raise StoreError(f"unsupported dtype code {dtype_code} in {path}")
    dims_end = 7 + 4 * ndim
    shape = struct.unpack(f"<{ndim}I", blob[7:dims_end])
    stored_crc, = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise StoreError(f"checksum failure in {path}")
    data = np.frombuffer(blob[dims_end:-4], dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise StoreError(f"truncated payload in {path}")
    return data.reshape(shape).copy()


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceSample:
    """One training sample: W observation slots plus J+1 beam labels.

    ``vision`` is (W, 1, h, w), ``radar`` is (W, 2, h, w); observation slots
    run anchor-W+1 .. anchor and labels cover anchor .. anchor+J (1-based
    beam indices).
    """

    vision: np.ndarray
    radar: np.ndarray
    labels: np.ndarray
    anchor_slot: int

    @property
    def window(self) -> int:
        return self.vision.shape[0]

    @property
    def horizon(self) -> int:
        return len(self.labels) - 1


def assemble_samples(vision: np.ndarray, radar: np.ndarray, labels: np.ndarray,
                     window: int, horizon: int) -> list[SequenceSample]:
    """Slide a W-observation window with a J+1 label horizon over the streams.

    Streams are aligned by slot index and must share length T. Anchors run
    from W (the vision branch needs one look-back slot before the window) to
    T-1-J, giving T-W-J samples; incomplete boundary windows are dropped.
    """
    t_len = len(labels)
    if not (len(vision) == len(radar) == t_len):
        raise AlignmentError(
            f"stream lengths differ: vision {len(vision)}, radar {len(radar)}, "
            f"labels {t_len}")
    samples = []
    for anchor in range(window, t_len - horizon):
        samples.append(SequenceSample(
            vision=vision[anchor - window + 1:anchor + 1],
            radar=radar[anchor - window + 1:anchor + 1],
            labels=np.asarray(labels[anchor:anchor + horizon + 1], dtype=np.int64),
            anchor_slot=anchor,
        ))
    return samples


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Train/validation partition: random by sample or temporal blocks."""

    train_fraction: float = 0.8
    seed: int = 0
    mode: str = "random"

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.mode not in ("random", "temporal-blocks"):
            raise ConfigError(f"unknown split mode {self.mode!r}")


def split(samples: list[SequenceSample], spec: SplitSpec
          ) -> tuple[list[SequenceSample], list[SequenceSample]]:
    """Disjoint, exhaustive train/validation split, deterministic under seed.

    Random mode permutes samples; temporal-blocks mode carves the validation
    set out as one contiguous run of anchors (seeded offset), which exposes
    leakage from overlapping windows that the random split hides.
    """
    n = len(samples)
    n_train = int(np.floor(n * spec.train_fraction))
    n_val = n - n_train
    if n_train < 1 or n_val < 1:
        raise ConfigError(f"degenerate split: {n_train} train / {n_val} val from {n}")
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "random":
        perm = rng.permutation(n)
        train = [samples[i] for i in perm[:n_train]]
        val = [samples[i] for i in perm[n_train:]]
    else:
        ordered = sorted(samples, key=lambda s: s.anchor_slot)
        start = int(rng.integers(0, n - n_val + 1))
        val = ordered[start:start + n_val]
        train = ordered[:start] + ordered[start + n_val:]
    return train, val


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_dataset(samples: list[SequenceSample], directory: Path,
                 codebook_size: int) -> None:
    """Persist samples as per-slot artifacts plus a manifest.

    Slot artifacts shared by overlapping windows are written once; samples
    that disagree about a shared slot's array are rejected.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: dict[str, np.ndarray] = {}

    def emit(name: str, array: np.ndarray) -> str:
        if name in written:
            if not np.array_equal(written[name], array):
                raise StoreError(f"conflicting data for shared artifact {name}")
        else:
            write_array(directory / name, array)
            written[name] = array
        return name

    rows = []
    for s in samples:
        w = s.window
        vis_paths, rad_paths = [], []
        for i in range(w):
            slot = s.anchor_slot - w + 1 + i
            vis_paths.append(emit(f"vision_{slot:06d}.arr", s.vision[i]))
            rad_paths.append(emit(f"radar_{slot:06d}.arr", s.radar[i]))
        rows.append([str(s.anchor_slot), *vis_paths, *rad_paths,
                     *(str(int(b)) for b in s.labels)])

    window = samples[0].window if samples else 0
    horizon = samples[0].horizon if samples else 0
    header = f"version={_VERSION},W={window},J={horizon},C={codebook_size}"
    lines = [header] + [",".join(r) for r in rows]
    (directory / _MANIFEST).write_text("\n".join(lines) + "\n")


def read_manifest_header(directory: Path) -> dict:
    """Parse the manifest header into {version, W, J, C}."""
    path = Path(directory) / _MANIFEST
    try:
        first = path.read_text().splitlines()[0]
    except FileNotFoundError:
        raise StoreError(f"missing manifest: {path}") from None
    except IndexError:
        raise StoreError(f"empty manifest: {path}") from None
    fields = dict(item.split("=", 1) for item in first.split(","))
    try:
        return {k: int(fields[k]) for k in ("version", "W", "J", "C")}
    except KeyError as missing:
        raise StoreError(f"manifest header missing field {missing}") from None


def load_dataset(directory: Path) -> list[SequenceSample]:
    """Rebuild samples from a dataset directory; bit-exact round trip."""
    directory = Path(directory)
    header = read_manifest_header(directory)
    if header["version"] != _VERSION:
        raise StoreError(f"unsupported manifest version {header['version']}")
    window, horizon, c_size = header["W"], header["J"], header["C"]
    cache: dict[str, np.ndarray] = {}

    def fetch(name: str) -> np.ndarray:
        if name not in cache:
            cache[name] = read_array(directory / name)
        return cache[name]

    samples = []
    lines = (directory / _MANIFEST).read_text().splitlines()[1:]
    for line in lines:
        if not line.strip():
            continue
        cells = line.split(",")
        expected = 1 + 2 * window + horizon + 1
        if len(cells) != expected:
            raise StoreError(f"manifest row has {len(cells)} cells, expected {expected}")
        anchor = int(cells[0])
        vis = np.stack([fetch(p) for p in cells[1:1 + window]])
        rad = np.stack([fetch(p) for p in cells[1 + window:1 + 2 * window]])
        labels = np.asarray([int(x) for x in cells[1 + 2 * window:]], dtype=np.int64)
        if np.any(labels < 1) or np.any(labels > c_size):
            raise StoreError(f"label outside 1..{c_size} in row with anchor {anchor}")
        samples.append(SequenceSample(vision=vis, radar=rad, labels=labels,
                                      anchor_slot=anchor))
    return samples


# ---------------------------------------------------------------------------
# class statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetStats:
    """Per-beam label counts and the derived focal weighting vector."""

    counts: np.ndarray           # (C,) int
    alpha: np.ndarray            # (C,) float

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def class_histogram(samples: list[SequenceSample], codebook_size: int) -> DatasetStats:
    """Label counts over all (J+1) slots of every sample.

    The balanced focal weight is alpha_c = N_total / (C * count_c) with a
    floor of one on the count, so uniform labels give alpha = 1 everywhere.
    """
    counts = np.zeros(codebook_size, dtype=np.int64)
    for s in samples:
        for b in s.labels:
            counts[int(b) - 1] += 1
    total = counts.sum()
    alpha = total / (codebook_size * np.maximum(counts, 1))
    return DatasetStats(counts=counts, alpha=alpha.astype(np.float64))
