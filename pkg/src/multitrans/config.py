"""Run configuration: nested key-value files with documented defaults,
strict unknown-key rejection, and a canonical echo for reproducibility.

Precedence for the seed: command-line flag > MULTITRANS_SEED environment
variable > config file > default.
"""

import copy
import os

import yaml

from . import encoders as enc
from . import fusion
from .training import TrainConfig
from .data import SynthConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "model": {
        "dim": 64,
        "activation": "gelu",  # gelu | relu
        "bias": True,
        "text": {
            "vocab_size": 512,
            "max_seq_len": 32,
            "num_segments": 2,
            "depth": 2,
            "heads": 4,
            "expansion": 4,
            "variant": "base",  # base | large_ff | shared
        },
        "image": {
            "height": 32,
            "width": 32,
            "channels": 1,
            "patch_size": 8,
            "depth": 2,
            "heads": 4,
            "expansion": 4,
            "variant": "standard",  # standard | windowed | distill_token
            "window_size": 4,
        },
        "fusion": {
            "heads": 4,
            "hidden_dim": 0,  # 0 = linear classifier with no hidden layer
        },
    },
    "train": {
        "epochs": 30,
        "batch_size": 16,
        "learning_rate": 3e-4,
        "optimizer": "adam",  # sgd | sgd_momentum | adam
        "momentum": 0.9,
        "class_weights": False,
        "stratify": False,
        "split": [7, 2, 1],
    },
    "synth": {
        "n": 600,
        "unimodal_ceiling": 0.75,
        "noise": 0.02,
        "class_balance": 0.5,
    },
}


def _merge(defaults, override, path=""):
    out = copy.deepcopy(defaults)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {here} must be a mapping")
            out[key] = _merge(defaults[key], val, here)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides=None):
    """Merge defaults <- file <- explicit overrides; unknown keys rejected."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        cfg = _merge(cfg, loaded)
    if "MULTITRANS_SEED" in os.environ:
        cfg["seed"] = int(os.environ["MULTITRANS_SEED"])
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def canonical_text(cfg) -> str:
    """Stable textual form of a config; reloads to an identical run."""
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def parse_config_text(text):
    return _merge(DEFAULTS, yaml.safe_load(text) or {})


def model_config(cfg) -> fusion.ModelConfig:
    m = cfg["model"]
    t, im = m["text"], m["image"]
    variant = t["variant"]
    if variant not in ("base", "large_ff", "shared"):
        raise ConfigError(f"unknown text variant {variant!r}")
    text_cfg = enc.TextEncoderConfig(
        vocab_size=t["vocab_size"],
        max_seq_len=t["max_seq_len"],
        num_segments=t["num_segments"],
        dim=m["dim"],
        depth=t["depth"],
        heads=t["heads"],
        expansion=8 if variant == "large_ff" else t["expansion"],
        share_block_params=(variant == "shared"),
        activation=m["activation"],
        bias=m["bias"],
    )
    image_cfg = enc.ImageEncoderConfig(
        height=im["height"],
        width=im["width"],
        channels=im["channels"],
        patch_size=im["patch_size"],
        dim=m["dim"],
        depth=im["depth"],
        heads=im["heads"],
        expansion=im["expansion"],
        variant=im["variant"],
        window_size=im["window_size"],
        activation=m["activation"],
        bias=m["bias"],
    )
    fusion_cfg = fusion.FusionConfig(
        heads=m["fusion"]["heads"], hidden_dim=m["fusion"]["hidden_dim"], bias=m["bias"]
    )
    return fusion.ModelConfig(dim=m["dim"], text=text_cfg, image=image_cfg, fusion=fusion_cfg)


def train_config(cfg) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        learning_rate=t["learning_rate"],
        optimizer=t["optimizer"],
        momentum=t["momentum"],
        seed=cfg["seed"],
        ratios=tuple(t["split"]),
        class_weights=t["class_weights"],
        stratify=t["stratify"],
    )


def synth_config(cfg) -> SynthConfig:
    s = cfg["synth"]
    m = cfg["model"]
    return SynthConfig(
        n=s["n"],
        seed=cfg["seed"],
        unimodal_ceiling=s["unimodal_ceiling"],
        noise=s["noise"],
        height=m["image"]["height"],
        width=m["image"]["width"],
        channels=m["image"]["channels"],
        vocab_size=m["text"]["vocab_size"],
        max_seq_len=m["text"]["max_seq_len"],
        class_balance=s["class_balance"],
    )
