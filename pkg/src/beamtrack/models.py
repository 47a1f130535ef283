"""Teacher and student beam-tracking networks plus complexity accounting.

Both roles share one architecture: per-slot CNN extractors embed the vision
and radar inputs, an MLP fuses the concatenated features, a GRU models the
temporal dynamics over the W-slot window, and J+1 learned query vectors
attend over the GRU outputs through multi-head attention before a shared
two-layer classifier emits C beam logits per horizon slot.

The teacher uses standard convolutions and a two-layer GRU; the student
swaps in depthwise-separable convolutions, a single-layer GRU and narrower
widths. Parameter and FLOP counts are computed analytically from the spec
(one multiply-accumulate = 2 FLOPs; activations and pooling ignored) and the
parameter formulas are exact against the built torch module.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, DomainError, ShapeError, StoreError
from .store import SequenceSample, read_array, write_array

__all__ = [
    "ModelSpec",
    "BeamProbSeries",
    "ComplexityReport",
    "default_teacher_spec",
    "default_student_spec",
    "BeamTrackNet",
    "build_model",
    "tempered_softmax",
    "count_params",
    "count_flops",
    "param_breakdown",
    "flop_breakdown",
    "complexity",
    "conv_params",
    "linear_params",
    "conv_flops",
    "linear_flops",
    "save_checkpoint",
    "load_checkpoint",
    "save_oracle_checkpoint",
    "load_checkpoint_metadata",
    "batch_tensors",
    "batched_logits",
]


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters for one model role."""

    role: str = "teacher"
    vision_channels: tuple = (16, 32, 64)
    radar_channels: tuple = (16, 32, 64)
    conv_kind: str = "standard"          # "standard" | "depthwise"
    d0: int = 128                        # vision embedding dim
    d1: int = 128                        # radar embedding dim
    fused_dim: int = 256
    gru_layers: int = 2
    gru_hidden: int = 256
    mha_heads: int = 4
    horizon: int = 3
    codebook_size: int = 32
    use_vision: bool = True
    use_radar: bool = True
    dropout: float = 0.0
    vision_in_channels: int = 1
    radar_in_channels: int = 2

    def __post_init__(self):
        if min(self.d0, self.d1, self.fused_dim, self.gru_hidden) <= 0:
            raise ConfigError("embedding dims must be positive")
        if self.gru_layers not in (1, 2):
            raise ConfigError(f"gru_layers must be 1 or 2, got {self.gru_layers}")
        if self.gru_hidden % self.mha_heads != 0:
            raise ConfigError("mha_heads must divide gru_hidden")
        if self.conv_kind not in ("standard", "depthwise"):
            raise ConfigError(f"unknown conv_kind {self.conv_kind!r}")
        if not (self.use_vision or self.use_radar):
            raise ConfigError("at least one modality must be enabled")
        if self.codebook_size < 2 or self.horizon < 0:
            raise ConfigError("codebook_size >= 2 and horizon >= 0 required")

    @property
    def head_hidden(self) -> int:
        return self.gru_hidden // 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["vision_channels"] = list(self.vision_channels)
        d["radar_channels"] = list(self.radar_channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        d = dict(d)
        d["vision_channels"] = tuple(d["vision_channels"])
        d["radar_channels"] = tuple(d["radar_channels"])
        return ModelSpec(**d)


def default_teacher_spec(codebook_size: int = 32, horizon: int = 3) -> ModelSpec:
    return ModelSpec(role="teacher", codebook_size=codebook_size, horizon=horizon)


def default_student_spec(codebook_size: int = 32, horizon: int = 3) -> ModelSpec:
    """Compact sibling: depthwise convolutions, one GRU layer, narrow widths."""
    return ModelSpec(
        role="student",
        vision_channels=(8, 16, 32),
        radar_channels=(8, 16, 32),
        conv_kind="depthwise",
        d0=48, d1=48, fused_dim=64,
        gru_layers=1, gru_hidden=64, mha_heads=2,
        codebook_size=codebook_size, horizon=horizon,
    )


# ---------------------------------------------------------------------------
# probability series
# ---------------------------------------------------------------------------

def tempered_softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Softmax of logits / temperature along the last axis, max-stabilized."""
    if temperature <= 0:
        raise DomainError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class BeamProbSeries:
    """(J+1) x C logits and row-normalized beam probabilities."""

    logits: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.logits.shape != self.probs.shape or self.logits.ndim != 2:
            raise ShapeError("logits and probs must share a (J+1, C) shape")
        if np.any(self.probs < 0) or np.max(np.abs(self.probs.sum(axis=1) - 1)) > 1e-6:
            raise ShapeError("probability rows must be nonnegative and sum to 1")

    @staticmethod
    def from_logits(logits: np.ndarray) -> "BeamProbSeries":
        logits = np.asarray(logits, dtype=np.float64)
        return BeamProbSeries(logits=logits, probs=tempered_softmax(logits))

    def predicted_beams(self) -> np.ndarray:
        """1-based argmax beam index per horizon slot."""
        return np.argmax(self.probs, axis=1) + 1


# ---------------------------------------------------------------------------
# torch modules
# ---------------------------------------------------------------------------

def _conv_stage(cin: int, cout: int, kind: str) -> nn.Module:
    if kind == "standard":
        return nn.Sequential(nn.Conv2d(cin, cout, 3, stride=2, padding=1), nn.ReLU())
    return nn.Sequential(
        nn.Conv2d(cin, cin, 3, stride=2, padding=1, groups=cin),
        nn.Conv2d(cin, cout, 1),
        nn.ReLU(),
    )


class _Extractor(nn.Module):
    """Shared-weight per-slot CNN: conv stages, global average pool, linear."""

    def __init__(self, cin: int, channels: tuple, kind: str, out_dim: int):
        super().__init__()
        stages = []
        prev = cin
        for ch in channels:
            stages.append(_conv_stage(prev, ch, kind))
            prev = ch
        self.stages = nn.Sequential(*stages)
        self.proj = nn.Linear(prev, out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, W, C, H, W') -> (B, W, out_dim), same weights on every slot."""
        b, w = x.shape[:2]
        y = self.stages(x.reshape(b * w, *x.shape[2:]))
        y = y.mean(dim=(2, 3))
        return self.proj(y).reshape(b, w, -1)


class BeamTrackNet(nn.Module):
    """Multimodal window-to-horizon beam classifier."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.vision_extractor = (
            _Extractor(spec.vision_in_channels, spec.vision_channels,
                       spec.conv_kind, spec.d0)
            if spec.use_vision else None)
        self.radar_extractor = (
            _Extractor(spec.radar_in_channels, spec.radar_channels,
                       spec.conv_kind, spec.d1)
            if spec.use_radar else None)
        self.fusion = nn.Sequential(nn.Linear(spec.d0 + spec.d1, spec.fused_dim),
                                    nn.ReLU())
        self.gru = nn.GRU(spec.fused_dim, spec.gru_hidden,
                          num_layers=spec.gru_layers, batch_first=True)
        self.queries = nn.Parameter(torch.zeros(spec.horizon + 1, spec.gru_hidden))
        self.attention = nn.MultiheadAttention(spec.gru_hidden, spec.mha_heads,
                                               batch_first=True)
        self.classifier = nn.Sequential(
            nn.Linear(spec.gru_hidden, spec.head_hidden),
            nn.ReLU(),
            nn.Linear(spec.head_hidden, spec.codebook_size),
        )
        self.drop = nn.Dropout(spec.dropout) if spec.dropout > 0 else nn.Identity()

    # -- spec operations ----------------------------------------------------

    def embed_vision(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, W, 1, h, w) -> (B, W, d0); zeros when the modality is off."""
        if self.vision_extractor is None:
            b, w = frames.shape[:2]
            return frames.new_zeros(b, w, self.spec.d0)
        return self.vision_extractor(frames)

    def embed_radar(self, maps: torch.Tensor) -> torch.Tensor:
        """(B, W, 2, h, w) -> (B, W, d1); zeros when the modality is off."""
        if self.radar_extractor is None:
            b, w = maps.shape[:2]
            return maps.new_zeros(b, w, self.spec.d1)
        return self.radar_extractor(maps)

    def fuse_and_encode(self, f_vision: torch.Tensor,
                        f_radar: torch.Tensor) -> torch.Tensor:
        """Concatenate, fuse and run the GRU; causal along the window."""
        if f_vision.shape[1] != f_radar.shape[1]:
            raise ShapeError("vision and radar feature sequences differ in length")
        fused = self.fusion(torch.cat([f_vision, f_radar], dim=-1))
        hidden, _ = self.gru(self.drop(fused))
        return hidden

    def predict_heads(self, hidden: torch.Tensor) -> torch.Tensor:
        """Attend J+1 learned queries over the window; logits (B, J+1, C)."""
        b = hidden.shape[0]
        q = self.queries.unsqueeze(0).expand(b, -1, -1)
        attended, _ = self.attention(q, hidden, hidden, need_weights=False)
        return self.classifier(self.drop(attended))

    def forward(self, vision: torch.Tensor, radar: torch.Tensor) -> torch.Tensor:
        return self.predict_heads(
            self.fuse_and_encode(self.embed_vision(vision), self.embed_radar(radar)))

    def predict_sample(self, sample: SequenceSample) -> BeamProbSeries:
        """Inference on one stored sample."""
        self.eval()
        with torch.no_grad():
            vision = torch.from_numpy(np.ascontiguousarray(sample.vision)).unsqueeze(0)
            radar = torch.from_numpy(np.ascontiguousarray(sample.radar)).unsqueeze(0)
            logits = self(vision, radar)[0].double().numpy()
        return BeamProbSeries.from_logits(logits)


def _init_weights(model: BeamTrackNet, seed: int) -> None:
    """Uniform fan-in init for weights, zero biases, deterministic by seed."""
    gen = torch.Generator().manual_seed(seed)
    for name, p in model.named_parameters():
        if p.ndim == 1 and "queries" not in name:      # biases
            with torch.no_grad():
                p.zero_()
            continue
        if p.ndim >= 2:
            fan_in = p.shape[1] * (p.shape[2] * p.shape[3] if p.ndim == 4 else 1)
        else:
            fan_in = p.shape[-1]
        bound = 1.0 / math.sqrt(fan_in)
        with torch.no_grad():
            p.uniform_(-bound, bound, generator=gen)


def build_model(spec: ModelSpec, seed: int = 0) -> BeamTrackNet:
    """Construct and deterministically initialize a network."""
    model = BeamTrackNet(spec)
    _init_weights(model, seed)
    return model


# ---------------------------------------------------------------------------
# batching helpers
# ---------------------------------------------------------------------------

def batch_tensors(samples: list[SequenceSample]
                  ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (vision, radar, labels0) tensors; labels 0-based."""
    vision = torch.from_numpy(np.stack([s.vision for s in samples]))
    radar = torch.from_numpy(np.stack([s.radar for s in samples]))
    labels = torch.from_numpy(np.stack([s.labels for s in samples]) - 1)
    return vision, radar, labels


def batched_logits(model: BeamTrackNet, samples: list[SequenceSample],
                   batch_size: int = 64) -> np.ndarray:
    """Deterministic inference over a sample list, (N, J+1, C) float64."""
    model.eval()
    chunks = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            vision, radar, _ = batch_tensors(samples[i:i + batch_size])
            chunks.append(model(vision, radar).double().numpy())
    return np.concatenate(chunks, axis=0)


# ---------------------------------------------------------------------------
# complexity accounting
# ---------------------------------------------------------------------------

def conv_params(cin: int, cout: int, kernel: int = 3,
                kind: str = "standard") -> int:
    """Biased conv parameter count; depthwise-separable = depthwise + 1x1."""
    if kind == "standard":
        return kernel * kernel * cin * cout + cout
    return (kernel * kernel * cin + cin) + (cin * cout + cout)


def linear_params(d_in: int, d_out: int) -> int:
    return d_in * d_out + d_out


def conv_flops(cin: int, cout: int, out_hw: tuple[int, int], kernel: int = 3,
               kind: str = "standard") -> int:
    """One slot's conv FLOPs at the given output resolution (MAC = 2 FLOPs)."""
    h, w = out_hw
    if kind == "standard":
        return 2 * kernel * kernel * cin * cout * h * w
    return 2 * kernel * kernel * cin * h * w + 2 * cin * cout * h * w


def linear_flops(d_in: int, d_out: int) -> int:
    """FLOPs of one linear application to a single vector (bias ignored)."""
    return 2 * d_in * d_out


def _extractor_params(cin: int, channels: tuple, kind: str, out_dim: int) -> int:
    total = 0
    prev = cin
    for ch in channels:
        total += conv_params(prev, ch, kind=kind)
        prev = ch
    total += linear_params(prev, out_dim)
    return total


def param_breakdown(spec: ModelSpec) -> dict:
    """Exact trainable-parameter count per block."""
    e = spec.gru_hidden
    out = {}
    if spec.use_vision:
        out["vision_extractor"] = _extractor_params(
            spec.vision_in_channels, spec.vision_channels, spec.conv_kind, spec.d0)
    if spec.use_radar:
        out["radar_extractor"] = _extractor_params(
            spec.radar_in_channels, spec.radar_channels, spec.conv_kind, spec.d1)
    out["fusion"] = (spec.d0 + spec.d1) * spec.fused_dim + spec.fused_dim
    gru = 0
    for layer in range(spec.gru_layers):
        cin = spec.fused_dim if layer == 0 else e
        gru += 3 * e * (cin + e) + 6 * e
    out["gru"] = gru
    out["attention"] = 4 * e * e + 4 * e
    out["queries"] = (spec.horizon + 1) * e
    out["classifier"] = (e * spec.head_hidden + spec.head_hidden
                         + spec.head_hidden * spec.codebook_size + spec.codebook_size)
    return out


def count_params(spec: ModelSpec) -> int:
    return sum(param_breakdown(spec).values())


def _extractor_flops(cin: int, channels: tuple, kind: str, out_dim: int,
                     hw: tuple[int, int]) -> int:
    h, w = hw
    total = 0
    prev = cin
    for ch in channels:
        h, w = math.ceil(h / 2), math.ceil(w / 2)
        total += conv_flops(prev, ch, (h, w), kind=kind)
        prev = ch
    total += linear_flops(prev, out_dim)
    return total


def flop_breakdown(spec: ModelSpec, window: int = 8,
                   vision_hw: tuple[int, int] = (64, 64),
                   radar_hw: tuple[int, int] = (64, 64)) -> dict:
    """FLOPs for one forward pass (MAC = 2 FLOPs; activations ignored)."""
    e = spec.gru_hidden
    q = spec.horizon + 1
    out = {}
    if spec.use_vision:
        out["vision_extractor"] = window * _extractor_flops(
            spec.vision_in_channels, spec.vision_channels, spec.conv_kind,
            spec.d0, vision_hw)
    if spec.use_radar:
        out["radar_extractor"] = window * _extractor_flops(
            spec.radar_in_channels, spec.radar_channels, spec.conv_kind,
            spec.d1, radar_hw)
    out["fusion"] = window * 2 * (spec.d0 + spec.d1) * spec.fused_dim
    gru = 0
    for layer in range(spec.gru_layers):
        cin = spec.fused_dim if layer == 0 else e
        gru += window * 2 * 3 * e * (cin + e)
    out["gru"] = gru
    out["attention"] = (2 * e * e * q          # query projection
                        + 2 * 2 * e * e * window  # key/value projections
                        + 2 * q * window * e      # attention scores
                        + 2 * q * window * e      # weighted values
                        + 2 * e * e * q)          # output projection
    out["classifier"] = q * (2 * e * spec.head_hidden
                             + 2 * spec.head_hidden * spec.codebook_size)
    return out


def count_flops(spec: ModelSpec, window: int = 8,
                vision_hw: tuple[int, int] = (64, 64),
                radar_hw: tuple[int, int] = (64, 64)) -> int:
    return sum(flop_breakdown(spec, window, vision_hw, radar_hw).values())


@dataclass(frozen=True)
class ComplexityReport:
    """Totals plus per-block breakdown; totals equal the breakdown sums."""

    param_count: int
    flop_count: int
    params_by_block: dict
    flops_by_block: dict


def complexity(spec: ModelSpec, window: int = 8,
               vision_hw: tuple[int, int] = (64, 64),
               radar_hw: tuple[int, int] = (64, 64)) -> ComplexityReport:
    pb = param_breakdown(spec)
    fb = flop_breakdown(spec, window, vision_hw, radar_hw)
    return ComplexityReport(param_count=sum(pb.values()), flop_count=sum(fb.values()),
                            params_by_block=pb, flops_by_block=fb)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_WEIGHTS_INDEX = "weights_index.txt"
_METADATA = "metadata.json"


def save_checkpoint(directory: Path, model: BeamTrackNet, metadata: dict) -> None:
    """Persist weights as one array container per tensor plus JSON metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index_lines = []
    for name, tensor in model.state_dict().items():
        fname = name.replace(".", "__") + ".arr"
        write_array(directory / fname, tensor.detach().numpy().astype(np.float32))
        index_lines.append(f"{name}={fname}")
    (directory / _WEIGHTS_INDEX).write_text("\n".join(index_lines) + "\n")
    meta = {"kind": "model", "spec": model.spec.to_dict(), **metadata}
    (directory / _METADATA).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint_metadata(directory: Path) -> dict:
    path = Path(directory) / _METADATA
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise StoreError(f"missing checkpoint metadata: {path}") from None


def load_checkpoint(directory: Path) -> tuple[BeamTrackNet, dict]:
    """Rebuild the model from a checkpoint directory."""
    directory = Path(directory)
    meta = load_checkpoint_metadata(directory)
    if meta.get("kind") != "model":
        raise StoreError(f"checkpoint at {directory} is not a model (kind="
                         f"{meta.get('kind')!r})")
    spec = ModelSpec.from_dict(meta["spec"])
    model = BeamTrackNet(spec)
    index_path = directory / _WEIGHTS_INDEX
    try:
        lines = index_path.read_text().splitlines()
    except FileNotFoundError:
        raise StoreError(f"missing weights index: {index_path}") from None
    state = {}
    for line in lines:
        if not line.strip():
            continue
        name, fname = line.split("=", 1)
        weight = read_array(directory / fname)
        state[name] = torch.from_numpy(weight)
    model.load_state_dict(state)
    model.eval()
    return model, meta


def save_oracle_checkpoint(directory: Path) -> None:
    """Stub checkpoint that predicts the ground-truth beam (sanity baseline)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / _METADATA).write_text(json.dumps({"kind": "oracle"}, indent=2) + "\n")
