"""Single run-config file: defaults, strict validation and typed builders.

Every knob of the pipeline lives in one nested mapping with the sections
scenario / radar / scene / dataset / model / training / evaluation. A user
YAML file overrides defaults key by key; unknown keys are rejected with
their full path before any stage runs. The resolved mapping (with episode
lists made concrete) is hashed into a short digest that evaluation reports
carry for provenance.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .geometry import (ArrayGeometry, BeamCodebook, ScenarioConfig,
                       build_dft_codebook, make_trajectory)
from .models import ModelSpec, default_student_spec, default_teacher_spec
from .radar import RadarConfig
from .store import SplitSpec
from .synthesis import ClutterModel, plan_episodes
from .training import TrainConfig
from .vision import SceneConfig

__all__ = ["RunConfig", "default_config_dict", "load_config", "config_digest",
           "write_default_config"]


def default_config_dict() -> dict:
    """Full default configuration (paper hyperparameters where they exist)."""
    return {
        "workdir": "runs/default",
        "scenario": {
            "num_slots": 2011,
            "rng_seed": 0,
            "num_antennas": 32,
            "element_spacing": 0.5,
            "codebook_size": 32,
            "noise_power": 1.0,
            "snr_ref": 100.0,
            "ref_range_m": 12.0,
            "pathloss_exp": 2.0,
            "nlos_paths": 2,
            "nlos_relative_gain": 0.1,
            "slot_duration": 0.1,
            "sine_speed": 0.02,
            "speed_jitter": 0.3,
            "turn_prob": 0.03,
            "sine_limit": 0.98,
            "range_mean": 12.0,
            "range_amplitude": 4.0,
            "range_period": 400.0,
            "num_occlusion_episodes": 6,
            "occlusion_episode_len": [24, 40],
            "num_clutter_episodes": 6,
            "clutter_episode_len": [24, 40],
            "occlusion_episodes": "auto",
            "clutter_episodes": "auto",
            "clutter_scatterers": 6,
            "clutter_amplitude": 8.0,
            "clutter_noise_std": 3.0,
        },
        "radar": {
            "num_rx": 4,
            "num_fast": 64,
            "num_chirps": 32,
            "carrier_freq": 60.0e9,
            "chirp_slope": 30.0e12,
            "sample_rate": 10.0e6,
            "chirp_period": 20.0e-6,
            "rx_spacing": 0.5,
            "noise_std": 0.05,
            "angle_fft_size": 64,
            "map_height": 64,
            "map_width": 64,
        },
        "scene": {
            "height": 64,
            "width": 64,
            "blob_radius": 4.0,
            "px_per_radian": 36.0,
            "blob_row_frac": 0.55,
            "noise_std": 0.01,
            "out_height": 64,
            "out_width": 64,
            "mask_threshold": 0.1,
        },
        "dataset": {
            "window": 8,
            "horizon": 3,
            "train_fraction": 0.8,
            "split_mode": "random",
            "split_seed": 0,
        },
        "model": {
            "teacher": default_teacher_spec().to_dict(),
            "student": default_student_spec().to_dict(),
        },
        "training": {
            "beta": 0.5,
            "temperature": 2.0,
            "focal_gamma": 2.0,
            "focal_alpha": 1.0,
            "lr_init": 1.0e-4,
            "lr_min_ratio": 0.01,
            "cycle_epochs": 25,
            "max_epochs": 100,
            "batch_size": 32,
            "patience": 20,
            "seed": 0,
            "grad_clip": 5.0,
            "optimizer": "adam",
        },
        "evaluation": {
            "split": "val",
            "checkpoint": "teacher",
            "topk": [1, 3, 5],
            "dba_top_k": 3,
            "dba_delta": None,
        },
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    """Deep merge with unknown-key rejection; paths name the offender."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            merged[key] = _merge(base[key], value, here)
        else:
            merged[key] = value
    return merged


def config_digest(resolved: dict) -> str:
    """Short stable hash of the resolved configuration."""
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class RunConfig:
    """Typed view of a resolved run configuration."""

    raw: dict
    workdir: Path
    geometry: ArrayGeometry
    codebook: BeamCodebook
    scenario_params: dict        # scenario section with episodes resolved
    radar: RadarConfig
    scene: SceneConfig
    window: int
    horizon: int
    split_spec: SplitSpec
    teacher_spec: ModelSpec
    student_spec: ModelSpec
    training: TrainConfig
    evaluation: dict
    clutter: ClutterModel

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    @property
    def codebook_size(self) -> int:
        return self.codebook.size

    def build_scenario(self) -> ScenarioConfig:
        """Trajectory plus channel/path parameters for the generator."""
        sp = self.scenario_params
        trajectory = make_trajectory(
            sp["num_slots"], seed=sp["rng_seed"],
            sine_step_std=sp["sine_step_std"], sine_limit=sp["sine_limit"],
            range_mean=sp["range_mean"], range_amplitude=sp["range_amplitude"],
            range_period=sp["range_period"], slot_duration=sp["slot_duration"])
        return ScenarioConfig(
            noise_power=sp["noise_power"], trajectory=trajectory,
            rng_seed=sp["rng_seed"], snr_ref=sp["snr_ref"],
            ref_range_m=sp["ref_range_m"], pathloss_exp=sp["pathloss_exp"],
            nlos_paths=sp["nlos_paths"],
            nlos_relative_gain=sp["nlos_relative_gain"],
            clutter_episodes=tuple(tuple(e) for e in sp["clutter_episodes"]))


def _build(resolved: dict) -> RunConfig:
    sp = resolved["scenario"]
    # make "auto" episode plans concrete so the digest pins them
    if sp["occlusion_episodes"] == "auto" or sp["clutter_episodes"] == "auto":
        occ, clut = plan_episodes(
            sp["num_slots"], sp["rng_seed"],
            sp["num_occlusion_episodes"], tuple(sp["occlusion_episode_len"]),
            sp["num_clutter_episodes"], tuple(sp["clutter_episode_len"]))
        if sp["occlusion_episodes"] == "auto":
            sp["occlusion_episodes"] = [list(e) for e in occ]
        if sp["clutter_episodes"] == "auto":
            sp["clutter_episodes"] = [list(e) for e in clut]

    try:
        geometry = ArrayGeometry(num_antennas=sp["num_antennas"],
                                 element_spacing=sp["element_spacing"])
        codebook = build_dft_codebook(geometry, sp["codebook_size"])
        radar = RadarConfig(**resolved["radar"])
        scene = SceneConfig(
            occlusion_episodes=tuple(tuple(e) for e in sp["occlusion_episodes"]),
            **resolved["scene"])
        ds = resolved["dataset"]
        split_spec = SplitSpec(train_fraction=ds["train_fraction"],
                               seed=ds["split_seed"], mode=ds["split_mode"])
        teacher_spec = ModelSpec.from_dict(resolved["model"]["teacher"])
        student_spec = ModelSpec.from_dict(resolved["model"]["student"])
        training = TrainConfig(**{k: (tuple(v) if isinstance(v, list) else v)
                                  for k, v in resolved["training"].items()})
        clutter = ClutterModel(num_scatterers=sp["clutter_scatterers"],
                               amplitude=sp["clutter_amplitude"],
                               noise_std=sp["clutter_noise_std"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    for spec, name in ((teacher_spec, "teacher"), (student_spec, "student")):
        if spec.codebook_size != codebook.size:
            raise ConfigError(f"model.{name}.codebook_size != scenario.codebook_size")
        if spec.horizon != ds["horizon"]:
            raise ConfigError(f"model.{name}.horizon != dataset.horizon")

    return RunConfig(
        raw=resolved, workdir=Path(resolved["workdir"]), geometry=geometry,
        codebook=codebook, scenario_params=sp, radar=radar, scene=scene,
        window=ds["window"], horizon=ds["horizon"], split_spec=split_spec,
        teacher_spec=teacher_spec, student_spec=student_spec,
        training=training, evaluation=resolved["evaluation"], clutter=clutter)


def load_config(path: Path | str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Read a YAML config file, apply overrides, validate and build."""
    user: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping: {path}")
        user = loaded
    resolved = _merge(default_config_dict(), user)
    if overrides:
        resolved = _merge(resolved, overrides)
    return _build(resolved)


def write_default_config(path: Path) -> None:
    """Dump the full default configuration as a commented-free YAML file."""
    Path(path).write_text(yaml.safe_dump(default_config_dict(), sort_keys=False))
