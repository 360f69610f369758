"""Command-line entry point: data generation, training, evaluation, ablation
grids, and gradient-check verification runs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
(training divergence or a failed gradient check).
"""

import argparse
import csv
import multiprocessing
import os
import sys

import numpy as np
import yaml

from . import config as cfgmod
from . import data as datamod
from . import fusion
from . import gradcheck
from . import training
from .data import DataError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _load_cfg(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    return cfgmod.load_config(args.config, overrides)


def _write_config_echo(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfgmod.canonical_text(cfg))


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    synth = cfgmod.synth_config(cfg)
    ds, log = datamod.generate_synthetic(synth)
    os.makedirs(args.out, exist_ok=True)
    manifest = datamod.write_dataset(ds, args.out)
    datamod.write_generator_log(log, os.path.join(args.out, "generator_log.tsv"))
    _write_config_echo(cfg, os.path.join(args.out, "config.yaml"))
    print(f"wrote {len(ds)}-sample dataset to {args.out} (manifest {manifest})")
    return EXIT_OK


def _checkpoint_config_text(cfg, mode):
    return yaml.safe_dump({"mode": mode, "run": cfg}, sort_keys=True)


def _parse_checkpoint_config(text):
    doc = yaml.safe_load(text)
    return doc["run"], doc["mode"]


def cmd_train(args):
    cfg = _load_cfg(args)
    mode = training.MODE_ALIASES[args.mode]
    max_len = cfg["model"]["text"]["max_seq_len"]
    ds = datamod.load_dataset(args.data, max_seq_len=max_len)
    model_cfg = cfgmod.model_config(cfg)
    train_cfg = cfgmod.train_config(cfg)
    train_s, val_s, _ = training.split_dataset(
        ds.samples, train_cfg.ratios, train_cfg.seed, train_cfg.stratify
    )
    rng = np.random.default_rng(cfg["seed"])
    model = fusion.build_model(model_cfg, mode, rng)
    history, info = training.train(train_s, val_s, model, train_cfg)

    training.save_checkpoint(
        args.out,
        model.named_parameters(),
        _checkpoint_config_text(cfg, mode),
        info["best_epoch"],
        info["best_val_acc"],
    )
    with open(args.out + ".history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "train_acc", "val_acc"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: f"{v:.8f}" if isinstance(v, float) else v for k, v in row.items()})
    _write_config_echo(cfg, args.out + ".config.yaml")
    print(
        f"trained {args.mode} model for {train_cfg.epochs} epochs; "
        f"best val ACC {info['best_val_acc']:.4f} at epoch {info['best_epoch']} "
        f"-> {args.out}"
    )
    return EXIT_OK


def _format_report_table(rep):
    auc_s = f"{rep.auc:.4f}" if rep.auc is not None else "undefined"
    lines = [
        f"{'ACC':>8}  {'F1-score':>8}  {'AUC':>9}",
        f"{rep.accuracy:8.4f}  {rep.f1:8.4f}  {auc_s:>9}",
    ]
    return "\n".join(lines)


def _write_results_file(rep, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n={rep.n}\n")
        fh.write(f"acc={rep.accuracy:.6f}\n")
        fh.write(f"f1={rep.f1:.6f}\n")
        fh.write("auc=undefined\n" if rep.auc is None else f"auc={rep.auc:.6f}\n")
        fh.write(f"tp={rep.tp}\nfp={rep.fp}\ntn={rep.tn}\nfn={rep.fn}\n")
        fh.write(f"precision={rep.precision:.6f}\nrecall={rep.recall:.6f}\n")
        for fpr, tpr in rep.roc:
            fh.write(f"roc\t{fpr:.6f}\t{tpr:.6f}\n")


def cmd_eval(args):
    ckpt = training.load_checkpoint(args.checkpoint)
    cfg, mode = _parse_checkpoint_config(ckpt.config_text)
    model_cfg = cfgmod.model_config(cfg)
    train_cfg = cfgmod.train_config(cfg)
    ds = datamod.load_dataset(args.data, max_seq_len=cfg["model"]["text"]["max_seq_len"])
    model = fusion.build_model(model_cfg, mode, np.random.default_rng(cfg["seed"]))
    training.restore_parameters(model, ckpt.tensors)
    splits = dict(
        zip(
            ("train", "val", "test"),
            training.split_dataset(ds.samples, train_cfg.ratios, train_cfg.seed, train_cfg.stratify),
        )
    )
    rep = training.evaluate(model, splits[args.split])
    print(f"split={args.split} n={rep.n}")
    print(_format_report_table(rep))
    out = args.out or f"{args.checkpoint}.eval-{args.split}.txt"
    _write_results_file(rep, out)
    print(f"results written to {out}")
    return EXIT_OK


def _ablate_worker(job):
    manifest, cfg, cell = job
    max_len = cfg["model"]["text"]["max_seq_len"]
    ds = datamod.load_dataset(manifest, max_seq_len=max_len)
    rows = training.ablate(
        ds.samples, [cell], cfgmod.model_config(cfg), cfgmod.train_config(cfg)
    )
    return rows[0]


def cmd_ablate(args):
    cfg = _load_cfg(args)
    cells = (
        list(training.TABLE1_CELLS)
        if args.grid.strip() == "table1"
        else [c for c in args.grid.split(",") if c.strip()]
    )
    for c in cells:
        training.parse_cell(c)  # validate before doing any work
    if args.jobs > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(args.jobs) as pool:
            rows = pool.map(_ablate_worker, [(args.data, cfg, c) for c in cells])
        # same deterministic ordering as the sequential path
        rows.sort(key=lambda r: (r["method"], -1.0 if r["acc"] is None else r["acc"]))
    else:
        ds = datamod.load_dataset(args.data, max_seq_len=cfg["model"]["text"]["max_seq_len"])
        rows = training.ablate(ds.samples, cells, cfgmod.model_config(cfg), cfgmod.train_config(cfg))

    header = f"{'Method':<12}{'Image-modal':<14}{'Text-Modal':<12}{'ACC':>8}{'F1-score':>10}{'AUC':>8}"
    print(header)
    out_lines = ["Method\tImage-modal\tText-Modal\tACC\tF1-score\tAUC\terror"]
    for r in rows:
        if r["error"] is None:
            auc_s = "undefined" if r["auc"] is None else f"{r['auc']:.4f}"
            print(
                f"{r['method']:<12}{r['image_modal']:<14}{r['text_modal']:<12}"
                f"{r['acc']:>8.4f}{r['f1']:>10.4f}{auc_s:>8}"
            )
            out_lines.append(
                f"{r['method']}\t{r['image_modal']}\t{r['text_modal']}"
                f"\t{r['acc']:.4f}\t{r['f1']:.4f}\t{auc_s}\t"
            )
        else:
            print(f"{r['method']:<12}{r['image_modal']:<14}{r['text_modal']:<12}  FAILED: {r['error']}")
            out_lines.append(
                f"{r['method']}\t{r['image_modal']}\t{r['text_modal']}\t\t\t\t{r['error']}"
            )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(out_lines) + "\n")
        print(f"table written to {args.out}")
    return EXIT_OK


def cmd_grad_check(args):
    cfg = _load_cfg(args)
    seed = cfg["seed"]
    results = gradcheck.run_op_checks(seed=seed, inject_fault=args.inject_fault)
    results += gradcheck.run_model_check(seed=seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}  {r.name:<40} max_rel_err={r.max_rel_err:.3e}  tol={r.tol:.0e}")
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def build_parser():
    parser = _Parser(prog="multitrans", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file (defaults apply)")
        p.add_argument("--seed", type=int, default=None, help="overrides env and config seed")

    p = sub.add_parser("gen-data", help="generate the synthetic cross-modal dataset")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train one model configuration")
    common(p)
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--mode", choices=("multimodal", "text", "image"), default="multimodal")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", default=None, help="results file (default next to checkpoint)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate a grid of encoder variants")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", default="table1",
                   help="comma-separated image:text:mode cells, or the preset 'table1'")
    p.add_argument("--out", default=None, help="TSV output path")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("grad-check", help="finite-difference verification suite")
    common(p)
    p.add_argument("--inject-fault", action="store_true",
                   help="add a deliberately broken backward rule (negative control)")
    p.set_defaults(fn=cmd_grad_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (DataError, cfgmod.ConfigError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except training.TrainingDiverged as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
