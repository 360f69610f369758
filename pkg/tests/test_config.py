"""Config loading: defaults, file/env/override precedence, strict unknown-key
rejection, and the canonical echo round trip."""

import pytest

from multitrans import config as cfgmod
from multitrans.config import ConfigError


def test_defaults_load():
    cfg = cfgmod.load_config()
    assert cfg["seed"] == 0
    assert cfg["model"]["dim"] == 64
    assert cfg["train"]["optimizer"] == "adam"


def test_file_overrides_defaults(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("seed: 5\nmodel:\n  dim: 32\n  text:\n    depth: 1\n")
    cfg = cfgmod.load_config(p)
    assert cfg["seed"] == 5
    assert cfg["model"]["dim"] == 32
    assert cfg["model"]["text"]["depth"] == 1
    assert cfg["model"]["text"]["heads"] == 4  # untouched default


def test_env_seed_beats_file_but_not_override(tmp_path, monkeypatch):
    p = tmp_path / "run.yaml"
    p.write_text("seed: 5\n")
    monkeypatch.setenv("MULTITRANS_SEED", "7")
    assert cfgmod.load_config(p)["seed"] == 7
    assert cfgmod.load_config(p, overrides={"seed": 9})["seed"] == 9


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("model:\n  dmi: 32\n")
    with pytest.raises(ConfigError, match="model.dmi"):
        cfgmod.load_config(p)


def test_scalar_for_mapping_rejected(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("model: 3\n")
    with pytest.raises(ConfigError):
        cfgmod.load_config(p)


def test_canonical_text_roundtrip():
    cfg = cfgmod.load_config(overrides={"seed": 3, "model": {"dim": 16}})
    text = cfgmod.canonical_text(cfg)
    assert cfgmod.parse_config_text(text) == cfg
    # canonical form is stable
    assert cfgmod.canonical_text(cfgmod.parse_config_text(text)) == text


def test_model_config_conversion():
    cfg = cfgmod.load_config(
        overrides={"model": {"text": {"variant": "large_ff"}, "image": {"variant": "windowed"}}}
    )
    mc = cfgmod.model_config(cfg)
    assert mc.text.expansion == 8
    assert mc.image.variant == "windowed"
    assert mc.dim == mc.text.dim == mc.image.dim == 64


def test_model_config_shared_variant():
    cfg = cfgmod.load_config(overrides={"model": {"text": {"variant": "shared"}}})
    assert cfgmod.model_config(cfg).text.share_block_params


def test_model_config_bad_variant():
    cfg = cfgmod.load_config()
    cfg["model"]["text"]["variant"] = "electra"
    with pytest.raises(ConfigError):
        cfgmod.model_config(cfg)


def test_train_and_synth_config_conversion():
    cfg = cfgmod.load_config(overrides={"seed": 4, "synth": {"n": 50}})
    tc = cfgmod.train_config(cfg)
    assert tc.seed == 4 and tc.ratios == (7, 2, 1)
    sc = cfgmod.synth_config(cfg)
    assert sc.n == 50 and sc.seed == 4
    assert sc.height == cfg["model"]["image"]["height"]
