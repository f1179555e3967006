"""Run configuration: typed fields, flat key=value files, CLI overrides.

A config file holds ``key = value`` lines (``#`` comments allowed); every
key must name a RunConfig field. Command-line overrides win over the file.
Each run writes the fully resolved configuration alongside its outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    """Every knob for data generation, both training stages, and evaluation."""

    seed: int = 0
    out: str = "runs/latest"

    # dataset location and generation
    data_dir: str = "data"
    train_file: str = "train.jsonl"
    val_file: str = "val.jsonl"
    test_file: str = "test.jsonl"
    gen_train_videos: int = 48
    gen_val_videos: int = 16
    gen_test_videos: int = 16
    gen_length: int = 60
    gen_noise: float = 0.05

    # architecture
    model_dim: int = 64
    num_heads: int = 4
    seg_layers: int = 2
    vid_layers: int = 2
    dec_layers: int = 2
    num_queries: int = 14
    window_k: int = 4
    t_max: int = 256
    dropout_p: float = 0.1
    use_segment_memory: bool = True

    # losses
    l1_weight: float = 3.0
    iou_weight: float = 5.0
    no_action_weight: float = 1.0

    # stage-1 training
    stage1_steps: int = 300
    stage1_batch: int = 8
    stage1_lr: float = 1e-3
    stage1_sliding: bool = False
    sliding_stride: int = 1
    include_empty_future: bool = False

    # stage-2 training
    stage2_steps: int = 2000
    stage2_lr: float = 1e-3
    weight_decay: float = 0.0
    matcher: str = "greedy"
    finetune_se: bool = False
    skip_stage1: bool = False

    # evaluation protocols
    beta_obs: tuple = (20.0, 30.0)
    beta_ant: tuple = (10.0, 20.0, 30.0, 50.0)
    alpha_obs: tuple = (25.0, 50.0, 75.0)
    predict_threshold: float = 0.0
    moc_pooling: str = "global"
    freq_threshold: int = 100
    rare_threshold: int = 10

    def validate(self) -> None:
        for name in ("beta_obs", "alpha_obs"):
            for value in getattr(self, name):
                if not 0 < value < 100:
                    raise ConfigError(f"{name} entries must be in (0, 100), got {value}")
        for value in self.beta_ant:
            if not 0 < value <= 100:
                raise ConfigError(f"beta_ant entries must be in (0, 100], got {value}")
        if self.matcher not in ("greedy", "hungarian"):
            raise ConfigError(f"matcher must be greedy or hungarian, got '{self.matcher}'")
        if self.moc_pooling not in ("global", "per_video"):
            raise ConfigError(f"moc_pooling must be global or per_video, got '{self.moc_pooling}'")
        for name in ("gen_train_videos", "gen_val_videos", "gen_test_videos",
                     "gen_length", "stage1_steps", "stage1_batch", "stage2_steps",
                     "sliding_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("stage1_lr", "stage2_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gen_noise < 0 or self.weight_decay < 0 or self.predict_threshold < 0:
            raise ConfigError("gen_noise, weight_decay, predict_threshold must be >= 0")

    # ---- path helpers -----------------------------------------------------

    def split_path(self, which: str) -> Path:
        name = {"train": self.train_file, "val": self.val_file,
                "test": self.test_file}[which]
        return Path(self.data_dir) / name

    def out_dir(self) -> Path:
        return Path(self.out)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean value: {text!r}")
        if kind == "tuple":
            if not text:
                return ()
            return tuple(float(part) for part in text.split(","))
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key}={text!r}: {exc}") from exc


def apply_override(config: RunConfig, key: str, text: str) -> None:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key '{key}'")
    setattr(config, key, _parse_value(key, text))


def load_config_file(config: RunConfig, path) -> None:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                   start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        try:
            apply_override(config, key.strip(), value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{line_no}: {exc}") from exc


def resolved_text(config: RunConfig) -> str:
    lines = []
    for f in sorted(dataclasses.fields(RunConfig), key=lambda f: f.name):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def write_resolved(config: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.txt").write_text(resolved_text(config),
                                                 encoding="utf-8")
