"""Run configuration: one flat `key = value` file with section headers.

Sections map onto the module configs ([audio], [encoder], [decoder],
[train], [decode], [run]); keys are the dataclass field names.  Unknown
sections or keys are rejected so typos cannot silently fall back to
defaults.  Defaults follow the published hyper-parameters wherever a value
is stated; everything else is a documented engineering choice.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

from .audio import AudioConfig
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .inference import DecodeConfig
from .training import TrainConfig

WT_SEED_ENV = "WT_SEED"


@dataclass
class RunPaths:
    data_dir: str = "."
    feature_dir: str = "features"
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "out"


@dataclass
class RunConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder_blocks: int = 3
    decoder_heads: int = 4
    decoder_dropout: float = 0.25
    decoder_max_len: int = 128
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    paths: RunPaths = field(default_factory=RunPaths)
    seed: int = 0
    val_size: int = 100
    rarity_threshold: int = 10

    def decoder_config(self, vocab_size: int) -> DecoderConfig:
        return DecoderConfig(
            vocab_size=vocab_size,
            n_blocks=self.decoder_blocks,
            n_heads=self.decoder_heads,
            d_model=self.encoder.channels,
            dropout=self.decoder_dropout,
            max_len=self.decoder_max_len,
        )


def _parse_value(raw: str, current):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
    if current is None:  # optional float (f_max)
        return float(raw)
    return raw.strip()


def _apply_section(obj, section: str, items) -> None:
    known = {f.name for f in fields(obj)}
    for key, raw in items:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        try:
            value = _parse_value(raw, getattr(obj, key))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
        setattr(obj, key, value)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional file, and overrides.

    The WT_SEED environment variable, when set, wins over both the file
    and the defaults (but not explicit CLI overrides applied later).
    """
    cfg = RunConfig()
    sections = {
        "audio": cfg.audio,
        "encoder": cfg.encoder,
        "train": cfg.train,
        "decode": cfg.decode,
        "paths": cfg.paths,
    }
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        read = parser.read(path, encoding="utf-8")
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section in sections:
                _apply_section(sections[section], section, parser.items(section))
            elif section == "decoder":
                _apply_decoder_section(cfg, parser.items(section))
            elif section == "run":
                _apply_run_section(cfg, parser.items(section))
            else:
                raise ConfigError(f"unknown config section [{section}]")
        # re-validate cross-field invariants after the file edits
        cfg.encoder.__post_init__()
        cfg.train.__post_init__()
        cfg.decode.__post_init__()
    env_seed = os.environ.get(WT_SEED_ENV)
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{WT_SEED_ENV} must be an integer, got {env_seed!r}") from None
        cfg.train.seed = cfg.seed
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            _apply_override(cfg, key, value)
    return cfg


_DECODER_KEYS = {
    "n_blocks": "decoder_blocks",
    "n_heads": "decoder_heads",
    "dropout": "decoder_dropout",
    "max_len": "decoder_max_len",
}

_RUN_KEYS = ("seed", "val_size", "rarity_threshold")


def _apply_decoder_section(cfg: RunConfig, items) -> None:
    for key, raw in items:
        if key not in _DECODER_KEYS:
            raise ConfigError(f"unknown key {key!r} in section [decoder]")
        attr = _DECODER_KEYS[key]
        setattr(cfg, attr, _parse_value(raw, getattr(cfg, attr)))


def _apply_run_section(cfg: RunConfig, items) -> None:
    for key, raw in items:
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in section [run]")
        setattr(cfg, key, _parse_value(raw, getattr(cfg, key)))
    cfg.train.seed = cfg.seed


def _apply_override(cfg: RunConfig, key: str, value) -> None:
    if key == "seed":
        cfg.seed = int(value)
        cfg.train.seed = cfg.seed
    elif key == "mode":
        cfg.encoder.mode = value
        cfg.encoder.__post_init__()
    elif key == "beam":
        cfg.decode.beam_size = int(value)
        cfg.decode.__post_init__()
    elif key == "max_epochs":
        cfg.train.max_epochs = int(value)
    else:
        raise ConfigError(f"unknown override {key!r}")
