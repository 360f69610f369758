"""Dataset container formats and the synthetic cross-modal generator.

The generator couples the two modalities through an XOR: each sample draws a
hidden bit per modality and the outcome label is their XOR, so neither
modality alone carries label information. A controlled per-modality "leak"
then reveals the label directly with probability 2u-1, which caps the best
achievable unimodal accuracy at exactly u while the bit pair still determines
the label perfectly for a multimodal reader.
"""

import io
import os
import struct
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import encoders as enc
from .autograd import Tensor
from .metrics import GOOD, POOR

IMG_MAGIC = b"MTIMG1"
MANIFEST_NAME = "manifest.tsv"
VOCAB_NAME = "vocab.txt"

# token material for the synthetic reports
_TXT_BIT_WORDS = {0: ["perfusion", "intact"], 1: ["occlusion", "detected"]}
_TXT_LEAK_WORDS = {GOOD: "recovery", POOR: "deficit"}
_FILLERS = [
    "patient", "admitted", "with", "acute", "scan", "report", "the", "on",
    "day", "exam", "status", "noted", "stable", "follow", "up", "imaging",
    "clinical", "history", "review", "findings",
]


class DataError(ValueError):
    pass


@dataclass
class Sample:
    id: str
    image: Tensor  # (H, W, C), values in [0, 1]
    text: str
    tokens: List[int]
    segments: List[int]
    mrs: int
    label: int

    def __post_init__(self):
        if not 0 <= self.mrs <= 6:
            raise DataError(f"sample {self.id}: mRS {self.mrs} out of range 0..6")
        if len(self.tokens) != len(self.segments):
            raise DataError(f"sample {self.id}: token/segment length mismatch")


@dataclass
class Dataset:
    samples: List[Sample]
    vocab: enc.Vocab
    height: int
    width: int
    channels: int

    def __len__(self):
        return len(self.samples)


@dataclass
class SynthConfig:
    n: int = 600
    seed: int = 0
    unimodal_ceiling: float = 0.75  # applied to each modality independently
    noise: float = 0.02
    height: int = 32
    width: int = 32
    channels: int = 1
    vocab_size: int = 512
    max_seq_len: int = 32
    class_balance: float = 0.5  # P(poor outcome)

    def __post_init__(self):
        if not 0.5 < self.unimodal_ceiling < 1.0:
            raise DataError("unimodal_ceiling must lie strictly between 0.5 and 1")
        if self.height % 4 or self.width % 4:
            raise DataError("image dims must be divisible by 4 for the marker layout")


@dataclass
class GenRecord:
    """Ground-truth log entry for one generated sample."""

    id: str
    b_img: int
    b_txt: int
    leak_img: int
    leak_txt: int
    label: int


def default_vocab(size=512) -> enc.Vocab:
    tokens = list(enc.RESERVED_TOKENS)
    tokens += _TXT_BIT_WORDS[0] + _TXT_BIT_WORDS[1]
    tokens += [_TXT_LEAK_WORDS[GOOD], _TXT_LEAK_WORDS[POOR]]
    tokens += _FILLERS
    i = 0
    while len(tokens) < size:
        tokens.append(f"w{i:03d}")
        i += 1
    return enc.Vocab(tokens[:size])


def _paint_square(img, row, col, size):
    img[row : row + size, col : col + size, :] = 1.0


def _make_image(cfg: SynthConfig, b_img, label, leaked, rng) -> np.ndarray:
    h, w = cfg.height, cfg.width
    size, margin = h // 4, h // 8
    img = np.clip(rng.normal(0.0, cfg.noise, size=(h, w, cfg.channels)), 0.0, 1.0)
    # hidden bit: bright square in the top-left or top-right quadrant
    _paint_square(img, margin, margin if b_img == 0 else w - margin - size, size)
    if leaked:
        # label leak: bright square in the bottom-left or bottom-right quadrant
        _paint_square(
            img, h - margin - size, margin if label == GOOD else w - margin - size, size
        )
    return img.astype(np.float32)


def _make_text(cfg: SynthConfig, b_txt, label, leaked) -> str:
    # Fixed report template: the bit keywords and the leak slot sit at stable
    # positions, so position embeddings suffice to locate them. Randomizing the
    # filler words instead buries the two-token bit signal under filler
    # variance and the cross-modal coupling becomes unlearnable at this scale.
    words = ["imaging", "exam", "findings"] + list(_TXT_BIT_WORDS[b_txt])
    words += ["clinical", "status", _TXT_LEAK_WORDS[label] if leaked else "stable"]
    words += ["follow", "up", "review"]
    return " ".join(words)


def generate_synthetic(cfg: SynthConfig) -> Tuple[Dataset, List[GenRecord]]:
    """Deterministic XOR-coupled dataset plus its ground-truth generator log."""
    rng = np.random.default_rng(cfg.seed)
    vocab = default_vocab(cfg.vocab_size)
    leak_p = 2.0 * cfg.unimodal_ceiling - 1.0
    samples, log = [], []
    for i in range(cfg.n):
        label = POOR if rng.random() < cfg.class_balance else GOOD
        b_img = int(rng.integers(0, 2))
        b_txt = b_img ^ (1 if label == POOR else 0)  # XOR(b_img, b_txt) == label
        leak_img = int(rng.random() < leak_p)
        leak_txt = int(rng.random() < leak_p)
        sid = f"s{i:05d}"
        img = _make_image(cfg, b_img, label, leak_img, rng)
        text = _make_text(cfg, b_txt, label, leak_txt)
        mrs = int(rng.integers(0, 3)) if label == GOOD else int(rng.integers(3, 7))
        tokens = enc.tokenize(text, vocab, cfg.max_seq_len)
        samples.append(
            Sample(
                id=sid,
                image=Tensor(img),
                text=text,
                tokens=tokens,
                segments=[0] * len(tokens),
                mrs=mrs,
                label=label,
            )
        )
        log.append(GenRecord(sid, b_img, b_txt, leak_img, leak_txt, label))
    ds = Dataset(samples, vocab, cfg.height, cfg.width, cfg.channels)
    return ds, log


def dichotomize_mrs(score: int) -> int:
    """Good outcome (0) iff mRS <= 2, poor (1) otherwise; valid range 0..6."""
    if not isinstance(score, (int, np.integer)) or not 0 <= score <= 6:
        raise DataError(f"mRS score {score!r} out of range 0..6")
    return GOOD if score <= 2 else POOR


# ---------------------------------------------------------------------------
# on-disk formats


def write_image(path, arr: np.ndarray):
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(IMG_MAGIC)
        fh.write(struct.pack("<III", h, w, c))
        fh.write(arr.astype("<f4").tobytes())


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != IMG_MAGIC:
            raise DataError(f"{path}: bad image magic {magic!r}")
        h, w, c = struct.unpack("<III", fh.read(12))
        data = np.frombuffer(fh.read(h * w * c * 4), dtype="<f4")
        if data.size != h * w * c:
            raise DataError(f"{path}: truncated image payload")
    return data.reshape(h, w, c).astype(np.float32)


def write_dataset(ds: Dataset, root) -> str:
    """Write images, texts, vocab, then the manifest last (atomically)."""
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "texts"), exist_ok=True)
    ds.vocab.save(os.path.join(root, VOCAB_NAME))
    rows = []
    for s in sorted(ds.samples, key=lambda s: s.id):
        img_rel = os.path.join("images", f"{s.id}.img")
        txt_rel = os.path.join("texts", f"{s.id}.txt")
        write_image(os.path.join(root, img_rel), s.image.data)
        with open(os.path.join(root, txt_rel), "w", encoding="utf-8") as fh:
            fh.write(s.text)
        rows.append(f"{s.id}\t{img_rel}\t{txt_rel}\t{s.mrs}\n")
    buf = io.StringIO()
    buf.write("# multitrans-dataset v1\n")
    buf.write(f"# dims: {ds.height} {ds.width} {ds.channels}\n")
    buf.write(f"# vocab: {VOCAB_NAME}\n")
    buf.writelines(rows)
    manifest = os.path.join(root, MANIFEST_NAME)
    tmp = manifest + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, manifest)
    return manifest


def write_generator_log(log: List[GenRecord], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id\tb_img\tb_txt\tleak_img\tleak_txt\tlabel\n")
        for r in log:
            fh.write(f"{r.id}\t{r.b_img}\t{r.b_txt}\t{r.leak_img}\t{r.leak_txt}\t{r.label}\n")


def read_generator_log(path) -> List[GenRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        next(fh)  # header
        for line in fh:
            sid, *nums = line.rstrip("\n").split("\t")
            out.append(GenRecord(sid, *[int(x) for x in nums]))
    return out


def load_dataset(manifest_path, max_seq_len=32) -> Dataset:
    """Load a manifest-rooted dataset; stable order by sample id."""
    root = os.path.dirname(os.path.abspath(manifest_path))
    dims = None
    vocab_name = None
    rows = []
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("dims:"):
                    dims = tuple(int(x) for x in body[5:].split())
                elif body.startswith("vocab:"):
                    vocab_name = body[6:].strip()
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"manifest line {lineno}: expected 4 fields, got {len(parts)}")
            rows.append((lineno, parts))
    if dims is None or len(dims) != 3:
        raise DataError("manifest: missing or malformed dims header")
    if vocab_name is None:
        raise DataError("manifest: missing vocab header")
    vocab = enc.Vocab.load(os.path.join(root, vocab_name))

    samples = []
    seen = set()
    for lineno, (sid, img_rel, txt_rel, mrs_s) in rows:
        if sid in seen:
            raise DataError(f"manifest line {lineno}: duplicate id {sid}")
        seen.add(sid)
        try:
            mrs = int(mrs_s)
        except ValueError:
            raise DataError(f"manifest line {lineno} ({sid}): bad mRS value {mrs_s!r}")
        if not 0 <= mrs <= 6:
            raise DataError(f"manifest line {lineno} ({sid}): mRS {mrs} out of range 0..6")
        img_path = os.path.join(root, img_rel)
        txt_path = os.path.join(root, txt_rel)
        for path in (img_path, txt_path):
            if not os.path.exists(path):
                raise DataError(f"manifest line {lineno} ({sid}): missing file {path}")
        img = read_image(img_path)
        if img.shape != dims:
            raise DataError(
                f"manifest line {lineno} ({sid}): image dims {img.shape} != header {dims}"
            )
        with open(txt_path, encoding="utf-8") as fh:
            text = fh.read()
        tokens = enc.tokenize(text, vocab, max_seq_len)
        samples.append(
            Sample(
                id=sid,
                image=Tensor(np.clip(img, 0.0, 1.0)),
                text=text,
                tokens=tokens,
                segments=[0] * len(tokens),
                mrs=mrs,
                label=dichotomize_mrs(mrs),
            )
        )
    samples.sort(key=lambda s: s.id)
    return Dataset(samples, vocab, *dims)
