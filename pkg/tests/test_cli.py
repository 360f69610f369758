"""End-to-end CLI tests on a miniature configuration: every subcommand, the
documented exit codes, seed precedence, and byte-level determinism."""

import filecmp
import os

import pytest

from multitrans import cli

TINY_CFG = """\
seed: 0
model:
  dim: 8
  text:
    vocab_size: 32
    max_seq_len: 8
    depth: 1
    heads: 2
    expansion: 2
  image:
    height: 8
    width: 8
    patch_size: 4
    depth: 1
    heads: 2
    expansion: 2
    window_size: 2
  fusion:
    heads: 2
train:
  epochs: 2
  batch_size: 8
synth:
  n: 40
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY_CFG)
    return str(p)


@pytest.fixture
def dataset(tmp_path, cfg_path):
    out = str(tmp_path / "data")
    assert cli.main(["gen-data", "--config", cfg_path, "--out", out]) == 0
    return os.path.join(out, "manifest.tsv")


def test_gen_data_outputs(tmp_path, cfg_path, dataset):
    root = os.path.dirname(dataset)
    for name in ("manifest.tsv", "vocab.txt", "generator_log.tsv", "config.yaml"):
        assert os.path.exists(os.path.join(root, name))
    assert len(os.listdir(os.path.join(root, "images"))) == 40
    assert len(os.listdir(os.path.join(root, "texts"))) == 40


def test_gen_data_deterministic(tmp_path, cfg_path):
    for sub in ("d1", "d2"):
        cli.main(["gen-data", "--config", cfg_path, "--out", str(tmp_path / sub)])
    cmp = filecmp.dircmp(tmp_path / "d1", tmp_path / "d2")

    def assert_same(c):
        assert not c.diff_files and not c.left_only and not c.right_only
        for sc in c.subdirs.values():
            assert_same(sc)

    assert_same(cmp)


def test_train_eval_roundtrip(tmp_path, cfg_path, dataset, capsys):
    ckpt = str(tmp_path / "m.ckpt")
    assert cli.main(["train", "--config", cfg_path, "--data", dataset, "--out", ckpt]) == 0
    assert os.path.exists(ckpt)
    history = open(ckpt + ".history.csv").read().splitlines()
    assert len(history) == 1 + 2  # header + one row per epoch

    assert cli.main(["eval", "--checkpoint", ckpt, "--data", dataset, "--split", "test"]) == 0
    out = capsys.readouterr().out
    assert "ACC" in out and "F1-score" in out and "AUC" in out
    results = open(ckpt + ".eval-test.txt").read()
    assert results.startswith("n=")
    assert "acc=" in results and "f1=" in results and "auc=" in results


def test_train_deterministic(tmp_path, cfg_path, dataset):
    ckpts = []
    for name in ("a.ckpt", "b.ckpt"):
        p = str(tmp_path / name)
        cli.main(["train", "--config", cfg_path, "--data", dataset, "--out", p])
        ckpts.append(p)
    assert open(ckpts[0], "rb").read() == open(ckpts[1], "rb").read()
    assert open(ckpts[0] + ".history.csv").read() == open(ckpts[1] + ".history.csv").read()


def test_train_unimodal_modes(tmp_path, cfg_path, dataset):
    for mode in ("text", "image"):
        p = str(tmp_path / f"{mode}.ckpt")
        assert cli.main(
            ["train", "--config", cfg_path, "--data", dataset, "--mode", mode, "--out", p]
        ) == 0
        assert cli.main(["eval", "--checkpoint", p, "--data", dataset]) == 0


def test_seed_flag_beats_env(tmp_path, cfg_path, monkeypatch):
    monkeypatch.setenv("MULTITRANS_SEED", "3")
    out_env = str(tmp_path / "env")
    out_flag = str(tmp_path / "flag")
    cli.main(["gen-data", "--config", cfg_path, "--out", out_env])
    cli.main(["gen-data", "--config", cfg_path, "--seed", "4", "--out", out_flag])
    assert "seed: 3" in open(os.path.join(out_env, "config.yaml")).read()
    assert "seed: 4" in open(os.path.join(out_flag, "config.yaml")).read()


def test_ablate_grid(tmp_path, cfg_path, dataset, capsys):
    table = str(tmp_path / "table.tsv")
    code = cli.main(
        [
            "ablate",
            "--config",
            cfg_path,
            "--data",
            dataset,
            "--grid",
            "vit:bert:multimodal,none:bert:text",
            "--out",
            table,
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "Method" in out and "Multimodal" in out and "Unimodal" in out
    lines = open(table).read().splitlines()
    assert len(lines) == 3  # header + 2 cells


def test_ablate_parallel_matches_sequential(tmp_path, cfg_path, dataset):
    grid = "vit:bert:multimodal,none:bert:text"
    seq = str(tmp_path / "seq.tsv")
    par = str(tmp_path / "par.tsv")
    cli.main(["ablate", "--config", cfg_path, "--data", dataset, "--grid", grid, "--out", seq])
    cli.main(
        ["ablate", "--config", cfg_path, "--data", dataset, "--grid", grid,
         "--out", par, "--jobs", "2"]
    )
    assert open(seq).read() == open(par).read()


def test_grad_check_command(cfg_path, capsys):
    assert cli.main(["grad-check", "--config", cfg_path]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_grad_check_inject_fault_exit_code(cfg_path, capsys):
    assert cli.main(["grad-check", "--config", cfg_path, "--inject-fault"]) == 3
    out = capsys.readouterr().out
    assert "FAIL  faulty_gelu[negative-control]" in out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        cli.main(["train"])  # missing required arguments
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        cli.main(["not-a-command"])
    assert e.value.code == 1


def test_data_error_exit_code(tmp_path, cfg_path):
    missing = str(tmp_path / "nope" / "manifest.tsv")
    assert cli.main(["train", "--config", cfg_path, "--data", missing, "--out", "x"]) == 2


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("modl:\n  dim: 8\n")
    assert cli.main(["gen-data", "--config", str(p), "--out", str(tmp_path / "d")]) == 2


def test_eval_bad_checkpoint_exit_code(tmp_path, dataset):
    p = tmp_path / "junk.ckpt"
    p.write_bytes(b"garbage")
    assert cli.main(["eval", "--checkpoint", str(p), "--data", dataset]) == 2
