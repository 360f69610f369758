"""Training harness: dataset splitting, minibatch cross-entropy optimization,
evaluation, binary checkpoints, and the ablation grid runner.

Everything is seed-deterministic: (seed, config, dataset) fully determine the
loss history and the final parameters on one platform.
"""

import dataclasses
import struct
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from . import autograd as ag
from . import fusion
from . import metrics
from .autograd import Tensor
from .data import dichotomize_mrs  # re-exported: label derivation lives with the data

__all__ = [
    "TrainConfig", "TrainingDiverged", "dichotomize_mrs", "split_dataset",
    "train", "evaluate", "ablate", "save_checkpoint", "load_checkpoint",
    "Checkpoint", "parse_cell", "TABLE1_CELLS",
]

CKPT_MAGIC = b"MTCKPT"
CKPT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 3e-4
    optimizer: str = "adam"  # sgd | sgd_momentum | adam
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    ratios: Tuple[int, int, int] = (7, 2, 1)
    class_weights: bool = False
    stratify: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.ratios = tuple(self.ratios)
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios) or sum(self.ratios) != 10:
            raise ValueError(f"split ratios must be 3 positive parts summing to 10, got {self.ratios}")
        if self.optimizer not in ("sgd", "sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def split_dataset(samples, ratios=(7, 2, 1), seed=0, stratify=False):
    """Deterministic shuffle then floor/floor/remainder partition.

    Sizes are floor(n*r0/10) train and floor(n*r1/10) val; the remainder is
    test, so the partition is exact and disjoint for any n >= 10.
    """
    samples = list(samples)
    n = len(samples)
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    rng = np.random.default_rng(seed)
    if not stratify:
        order = rng.permutation(n)
        n_train = n * ratios[0] // 10
        n_val = n * ratios[1] // 10
        train = [samples[i] for i in order[:n_train]]
        val = [samples[i] for i in order[n_train : n_train + n_val]]
        test = [samples[i] for i in order[n_train + n_val :]]
        return train, val, test
    train, val, test = [], [], []
    for label in sorted({s.label for s in samples}):
        group = [s for s in samples if s.label == label]
        order = rng.permutation(len(group))
        k = len(group)
        k_train = k * ratios[0] // 10
        k_val = k * ratios[1] // 10
        train += [group[i] for i in order[:k_train]]
        val += [group[i] for i in order[k_train : k_train + k_val]]
        test += [group[i] for i in order[k_train + k_val :]]
    return train, val, test


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, params: Dict[str, Tensor], lr):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params.values():
            if p.grad is not None:
                p.data -= (self.lr * p.grad).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


class SGDMomentum(SGD):
    def __init__(self, params, lr, momentum=0.9):
        super().__init__(params, lr)
        self.momentum = momentum
        self.vel = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        for k, p in self.params.items():
            if p.grad is None:
                continue
            v = self.vel[k]
            v *= self.momentum
            v += p.grad
            p.data -= (self.lr * v).astype(p.data.dtype)


class Adam(SGD):
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)


def make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate)
    if cfg.optimizer == "sgd_momentum":
        return SGDMomentum(params, cfg.learning_rate, cfg.momentum)
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


# ---------------------------------------------------------------------------
# training loop


def _class_weights(samples):
    counts = np.bincount([s.label for s in samples], minlength=2).astype(np.float64)
    counts[counts == 0] = 1.0
    w = counts.sum() / (2.0 * counts)
    return w


def train(train_samples, val_samples, model: fusion.MultitransModel, cfg: TrainConfig):
    """Minibatch training; returns the per-epoch history and leaves the model
    holding the parameters of the best-validation-accuracy epoch."""
    params = model.named_parameters()
    opt = make_optimizer(cfg, params)
    rng = np.random.default_rng(cfg.seed)
    weights = _class_weights(train_samples) if cfg.class_weights else None

    history = []
    best_val = -1.0
    best_epoch = -1
    best_state = None
    n = len(train_samples)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for b0 in range(0, n, cfg.batch_size):
            batch = [train_samples[i] for i in order[b0 : b0 + cfg.batch_size]]
            ag.TAPE.clear()
            opt.zero_grad()
            try:
                logit_rows = [model.forward_logits(s) for s in batch]
            except FloatingPointError as e:
                raise TrainingDiverged(
                    f"non-finite activations at epoch {epoch}, batch {b0 // cfg.batch_size}: {e}"
                ) from e
            labels = [s.label for s in batch]
            logits = logit_rows[0] if len(logit_rows) == 1 else ag.concat(logit_rows, axis=0)
            if weights is None:
                loss = ag.cross_entropy(logits, labels)
            else:
                per = [
                    ag.scale(ag.cross_entropy(r, [y]), float(weights[y]))
                    for r, y in zip(logit_rows, labels)
                ]
                tot = per[0]
                for t in per[1:]:
                    tot = ag.add(tot, t)
                loss = ag.scale(tot, 1.0 / float(sum(weights[y] for y in labels)))
            lval = loss.item()
            if not np.isfinite(lval):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b0 // cfg.batch_size}"
                )
            ag.backward(loss)
            opt.step()
            total_loss += lval * len(batch)
            correct += sum(
                int(np.argmax(r.data[0]) == y) for r, y in zip(logit_rows, labels)
            )
        ag.TAPE.clear()
        train_loss = total_loss / n
        train_acc = correct / n
        val_acc = (
            evaluate(model, val_samples).accuracy if val_samples else train_acc
        )
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc, "val_acc": val_acc}
        )
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_state = {k: p.data.copy() for k, p in params.items()}

    if best_state is not None:
        for k, p in params.items():
            p.data = best_state[k]
    return history, {"best_epoch": best_epoch, "best_val_acc": best_val}


def evaluate(model: fusion.MultitransModel, samples) -> metrics.EvalReport:
    """Score every sample with P(poor), then delegate to the metrics module."""
    if not samples:
        raise ValueError("evaluate: empty split")
    scores, preds, true = [], [], []
    with ag.no_grad():
        for s in samples:
            probs = model.forward(s).data
            scores.append(float(probs[metrics.POOR]))
            preds.append(int(np.argmax(probs)))
            true.append(s.label)
    return metrics.report(scores, preds, true)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config_text: str
    epoch: int
    best_metric: float
    tensors: Dict[str, np.ndarray]


def save_checkpoint(path, tensors: Dict[str, Tensor], config_text: str, epoch: int, best_metric: float):
    """Named-tensor container: versioned header, config snapshot text, then
    per-tensor records with 64-bit little-endian lengths and float32 data."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", CKPT_VERSION))
        fh.write(struct.pack("<qd", epoch, best_metric))
        cfg_bytes = config_text.encode("utf-8")
        fh.write(struct.pack("<Q", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<Q", len(tensors)))
        for name in sorted(tensors):
            arr = tensors[name].data if isinstance(tensors[name], Tensor) else tensors[name]
            nb = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<Q", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(arr.astype("<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(len(CKPT_MAGIC)) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<Q", fh.read(8))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        epoch, best = struct.unpack("<qd", fh.read(16))
        (clen,) = struct.unpack("<Q", fh.read(8))
        config_text = fh.read(clen).decode("utf-8")
        (count,) = struct.unpack("<Q", fh.read(8))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<Q", fh.read(8))
            name = fh.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<Q", fh.read(8))
            dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
            size = int(np.prod(dims)) if dims else 1
            arr = np.frombuffer(fh.read(4 * size), dtype="<f4").reshape(dims)
            tensors[name] = arr.astype(np.float32)
    return Checkpoint(config_text, epoch, best, tensors)


def restore_parameters(model: fusion.MultitransModel, tensors: Dict[str, np.ndarray]):
    params = model.named_parameters()
    missing = set(params) ^ set(tensors)
    if missing:
        raise ValueError(f"checkpoint/model parameter name mismatch: {sorted(missing)}")
    for k, p in params.items():
        if p.data.shape != tensors[k].shape:
            raise ValueError(f"checkpoint tensor {k}: shape {tensors[k].shape} != {p.data.shape}")
        p.data = tensors[k].astype(p.data.dtype)


# ---------------------------------------------------------------------------
# ablation grid

IMAGE_VARIANTS = {"vit": "standard", "deit": "distill_token", "swint": "windowed", "none": None}
TEXT_VARIANTS = {"bert": "base", "roberta": "large_ff", "albert": "shared", "none": None}
_IMAGE_LABELS = {"vit": "ViT", "deit": "DeiT", "swint": "SwinT", "none": "None"}
_TEXT_LABELS = {"bert": "BERT", "roberta": "RoBERTa", "albert": "ALBERT", "none": "None"}
MODE_ALIASES = {"multimodal": "multimodal", "text": "text_only", "image": "image_only"}

# the nine rows of the reference ablation layout
TABLE1_CELLS = [
    "none:bert:text",
    "none:roberta:text",
    "none:albert:text",
    "vit:none:image",
    "deit:none:image",
    "swint:none:image",
    "vit:bert:multimodal",
    "swint:bert:multimodal",
    "swint:roberta:multimodal",
]


def parse_cell(spec: str):
    """Parse an 'image:text:mode' triple like 'swint:bert:multimodal'."""
    parts = spec.strip().lower().split(":")
    if len(parts) != 3:
        raise ValueError(f"cell {spec!r}: expected image:text:mode")
    img, txt, mode = parts
    if img not in IMAGE_VARIANTS:
        raise ValueError(f"cell {spec!r}: unknown image variant {img!r}")
    if txt not in TEXT_VARIANTS:
        raise ValueError(f"cell {spec!r}: unknown text variant {txt!r}")
    if mode not in MODE_ALIASES:
        raise ValueError(f"cell {spec!r}: unknown mode {mode!r}")
    mode = MODE_ALIASES[mode]
    if mode == "multimodal" and (img == "none" or txt == "none"):
        raise ValueError(f"cell {spec!r}: multimodal needs both variants")
    if mode == "text_only" and txt == "none":
        raise ValueError(f"cell {spec!r}: text mode needs a text variant")
    if mode == "image_only" and img == "none":
        raise ValueError(f"cell {spec!r}: image mode needs an image variant")
    return img, txt, mode


def cell_model_config(base: fusion.ModelConfig, img: str, txt: str, mode: str) -> fusion.ModelConfig:
    """Apply variant flags from a grid cell to a copy of the base config."""
    text_cfg = base.text
    image_cfg = base.image
    if mode != "image_only":
        variant = TEXT_VARIANTS[txt]
        text_cfg = dataclasses.replace(
            base.text,
            expansion=8 if variant == "large_ff" else base.text.expansion,
            share_block_params=(variant == "shared"),
        )
    if mode != "text_only":
        image_cfg = dataclasses.replace(base.image, variant=IMAGE_VARIANTS[img])
    return fusion.ModelConfig(
        dim=base.dim, text=text_cfg, image=image_cfg, fusion=base.fusion
    )


def ablate(samples, cells, base_cfg: fusion.ModelConfig, train_cfg: TrainConfig):
    """Train and evaluate every grid cell with a shared seed; failed cells are
    marked and the run continues. Rows are sorted by (method, accuracy)."""
    splits = split_dataset(
        samples, train_cfg.ratios, train_cfg.seed, train_cfg.stratify
    )
    train_s, val_s, test_s = splits
    rows = []
    for spec in cells:
        img, txt, mode = parse_cell(spec)
        row = {
            "cell": spec,
            "method": "Multimodal" if mode == "multimodal" else "Unimodal",
            "image_modal": _IMAGE_LABELS[img] if mode != "text_only" else "None",
            "text_modal": _TEXT_LABELS[txt] if mode != "image_only" else "None",
            "acc": None, "f1": None, "auc": None, "val_acc": None, "error": None,
        }
        try:
            cfg = cell_model_config(base_cfg, img, txt, mode)
            rng = np.random.default_rng(train_cfg.seed)
            model = fusion.build_model(cfg, mode, rng)
            _, info = train(train_s, val_s, model, train_cfg)
            rep = evaluate(model, test_s)
            val_rep = evaluate(model, val_s)
            row.update(
                acc=rep.accuracy, f1=rep.f1, auc=rep.auc, val_acc=val_rep.accuracy
            )
        except Exception as e:  # keep going; the cell is marked failed
            row["error"] = f"{type(e).__name__}: {e}"
        rows.append(row)
    rows.sort(key=lambda r: (r["method"], -1.0 if r["acc"] is None else r["acc"]))
    return rows
