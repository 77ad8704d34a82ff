"""Reference extractor backends behind a model-identifier registry.

Every backend is a small deterministic model: a pure function of the
input bytes plus tables shipped with the package.  They stand in for
large pretrained encoders while exercising the same adapter surface, so
swapping in a heavier backend means adding one registry entry.

Backends emit their model-native label vocabularies (blob color names,
lexicon entity types); mapping into the downstream class ranges happens
in the runner via the shipped mapping tables.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ModelLoadError

N_DETECTION_CLASSES = 80
N_NER_CLASSES = 18

# Anchor colors for quantization; "white" doubles as the usual background.
PALETTE = (
    ("red", (204, 26, 26)),
    ("orange", (230, 140, 26)),
    ("yellow", (230, 230, 26)),
    ("green", (26, 153, 51)),
    ("blue", (38, 77, 204)),
    ("purple", (140, 38, 166)),
    ("brown", (115, 77, 38)),
    ("black", (13, 13, 13)),
    ("gray", (128, 128, 128)),
    ("white", (242, 242, 242)),
)

PALETTE_NAMES = tuple(name for name, _ in PALETTE)
_PALETTE_ARR = np.array([rgb for _, rgb in PALETTE], dtype=np.float64)


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file into an H x W x 3 float array in [0, 1].

    Raises OSError (via Pillow) for missing or undecodable files; the
    runner turns that into a per-item skip.
    """
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise OSError(f"{path}: not a decodable RGB image")
    return arr


def quantize(img: np.ndarray) -> np.ndarray:
    """Map every pixel to the index of its nearest palette color."""
    flat = img.reshape(-1, 3) * 255.0
    dists = ((flat[:, None, :] - _PALETTE_ARR[None, :, :]) ** 2).sum(axis=2)
    return dists.argmin(axis=1).reshape(img.shape[:2])


def _seed_from(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def _pool_grid(img: np.ndarray, grid: int) -> np.ndarray:
    """Block-mean pooling to a grid x grid x 3 summary, any input size."""
    h, w, _ = img.shape
    ys = np.linspace(0, h, grid + 1).astype(int)
    xs = np.linspace(0, w, grid + 1).astype(int)
    out = np.empty((grid, grid, 3), dtype=np.float64)
    for i in range(grid):
        y0, y1 = ys[i], max(ys[i + 1], ys[i] + 1)
        for j in range(grid):
            x0, x1 = xs[j], max(xs[j + 1], xs[j] + 1)
            out[i, j] = img[min(y0, h - 1):y1, min(x0, w - 1):x1].mean(axis=(0, 1))
    return out


class ImageEmbedBackend:
    """Pooled-grid image embedding: block means projected to `dim`.

    The projection matrix is a fixed function of the model identifier,
    so equal (model, dim, pixels) always gives the same unit vector.
    """

    GRID = 8

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim
        n_features = self.GRID * self.GRID * 3 + 1
        rng = np.random.default_rng(_seed_from(f"image_embed|{model_id}"))
        self._w = rng.standard_normal((dim, n_features)) / np.sqrt(n_features)
        if float(np.linalg.norm(self._w[:, -1])) == 0.0:
            raise ModelLoadError(f"{model_id}: degenerate projection")

    def embed(self, img: np.ndarray) -> np.ndarray:
        feats = np.append(_pool_grid(img, self.GRID).ravel(), 1.0)
        vec = self._w @ feats
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec = self._w[:, -1]
            norm = float(np.linalg.norm(vec))
        return vec / norm


class TextEmbedBackend:
    """Signed hashed bag-of-words embedding, L2-normalized."""

    _TOKEN = re.compile(r"[a-z0-9]+")

    def __init__(self, model_id: str, dim: int):
        self.model_id = model_id
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in self._TOKEN.findall(text.lower()):
            digest = hashlib.blake2b(
                f"{self.model_id}|{tok}".encode("utf-8"), digest_size=9
            ).digest()
            idx = int.from_bytes(digest[:8], "little") % self.dim
            vec[idx] += 1.0 if digest[8] & 1 else -1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # empty or fully cancelling text: fall back to a keyed stream
            seed = _seed_from(f"text_fallback|{self.model_id}|{text}")
            rng = np.random.default_rng(seed)
            while norm == 0.0:
                vec = rng.standard_normal(self.dim)
                norm = float(np.linalg.norm(vec))
        return vec / norm


@dataclass(frozen=True)
class Blob:
    """One detected region: model-native label plus a normalized box."""

    label: str
    box: tuple[float, float, float, float]
    area_fraction: float


class DetectBackend:
    """Color-blob detector over the quantized palette.

    The most frequent palette color is treated as background; connected
    components of every other color above `min_area` become blobs,
    largest first, at most `max_blobs` per image.
    """

    def __init__(self, min_area: float = 0.002, max_blobs: int = 8):
        self.min_area = min_area
        self.max_blobs = max_blobs

    def detect(self, img: np.ndarray) -> list[Blob]:
        quant = quantize(img)
        h, w = quant.shape
        background = int(np.bincount(quant.ravel(), minlength=len(PALETTE)).argmax())
        blobs = []
        for color_idx, name in enumerate(PALETTE_NAMES):
            if color_idx == background:
                continue
            mask = quant == color_idx
            if not mask.any():
                continue
            labeled, n_comp = ndimage.label(mask)
            for comp in range(1, n_comp + 1):
                rows, cols = np.nonzero(labeled == comp)
                frac = rows.size / (h * w)
                if frac < self.min_area:
                    continue
                box = (cols.min() / w, rows.min() / h,
                       (cols.max() + 1) / w, (rows.max() + 1) / h)
                blobs.append(Blob(name, tuple(float(b) for b in box), float(frac)))
        blobs.sort(key=lambda b: (-b.area_fraction, b.box[1], b.box[0], b.label))
        return blobs[: self.max_blobs]


@dataclass(frozen=True)
class Mention:
    """One tagged span: model-native type plus character offsets."""

    surface: str
    entity_type: str
    span: tuple[int, int]


class NerBackend:
    """Lexicon tagger over capitalized token runs plus number tokens.

    Inside each maximal run of capitalized tokens the tagger takes
    greedy longest matches against the lexicon; uncovered run tokens
    merge into UNK mentions.  Standalone number tokens tag as NUMBER.
    """

    _TOKEN = re.compile(r"\S+")
    _NUMBER = re.compile(r"^\d+(?:[.,]\d+)*$")

    def __init__(self, lexicon: dict[str, str]):
        self.lexicon = dict(lexicon)
        self._by_first: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        for surface, etype in self.lexicon.items():
            words = tuple(surface.split())
            self._by_first.setdefault(words[0], []).append((words, etype))
        for options in self._by_first.values():
            options.sort(key=lambda item: -len(item[0]))

    def _tag_run(self, text: str, run: list[tuple[int, int, str]]) -> list[Mention]:
        mentions = []
        i = 0
        unk_start = None
        while i < len(run):
            matched = None
            for words, etype in self._by_first.get(run[i][2], ()):
                j = i + len(words)
                if j <= len(run) and tuple(t[2] for t in run[i:j]) == words:
                    matched = (j, etype)
                    break
            if matched is not None:
                if unk_start is not None:
                    mentions.append(self._mention(text, run, unk_start, i, "UNK"))
                    unk_start = None
                j, etype = matched
                mentions.append(self._mention(text, run, i, j, etype))
                i = j
            else:
                if unk_start is None:
                    unk_start = i
                i += 1
        if unk_start is not None:
            mentions.append(self._mention(text, run, unk_start, len(run), "UNK"))
        return mentions

    @staticmethod
    def _mention(text, run, i, j, etype) -> Mention:
        start, end = run[i][0], run[j - 1][1]
        return Mention(text[start:end], etype, (start, end))

    def tag(self, text: str) -> list[Mention]:
        mentions = []
        run: list[tuple[int, int, str]] = []
        for match in self._TOKEN.finditer(text):
            tok = match.group(0)
            if "A" <= tok[0] <= "Z":
                # trailing sentence punctuation is not part of the mention
                core = tok.rstrip(".,;:!?")
                run.append((match.start(), match.start() + len(core), core))
                continue
            if run:
                mentions.extend(self._tag_run(text, run))
                run = []
            core = tok.rstrip(".,;:!?")
            if core and self._NUMBER.match(core):
                end = match.start() + len(core)
                mentions.append(Mention(core, "NUMBER", (match.start(), end)))
        if run:
            mentions.extend(self._tag_run(text, run))
        mentions.sort(key=lambda m: m.span)
        return mentions


class CaptionBackend:
    """Template captioner naming the dominant non-background colors."""

    def __init__(self, max_colors: int = 3, min_fraction: float = 0.01):
        self.max_colors = max_colors
        self.min_fraction = min_fraction

    def caption(self, img: np.ndarray) -> str:
        quant = quantize(img)
        counts = np.bincount(quant.ravel(), minlength=len(PALETTE))
        background = int(counts.argmax())
        total = quant.size
        ranked = sorted(
            ((counts[i] / total, PALETTE_NAMES[i]) for i in range(len(PALETTE))
             if i != background and counts[i] / total >= self.min_fraction),
            key=lambda item: (-item[0], item[1]),
        )[: self.max_colors]
        bg_name = PALETTE_NAMES[background]
        if not ranked:
            return f"a photo of a plain {bg_name} background"
        phrase = " and ".join(f"a {name} shape" for _, name in ranked)
        return f"a photo of {phrase} on a {bg_name} background"


# ---------------------------------------------------------------- tables


def _data_text(fname: str) -> str:
    return resources.files("uknow_extractors.data").joinpath(fname).read_text(
        encoding="utf-8"
    )


def load_detect_label_map() -> dict[str, int]:
    """Blob label -> detection class index in 0..79."""
    table = json.loads(_data_text("detect_label_map.json"))
    out = {}
    for label, idx in table.items():
        idx = int(idx)
        if not 0 <= idx < N_DETECTION_CLASSES:
            raise ModelLoadError(f"detect_label_map: {label!r} -> {idx} outside 0..79")
        out[str(label)] = idx
    return out


def load_ner_type_map() -> dict[str, int]:
    """Entity type -> NER class index in 0..17."""
    table = json.loads(_data_text("ner_type_map.json"))
    out = {}
    for etype, idx in table.items():
        idx = int(idx)
        if not 0 <= idx < N_NER_CLASSES:
            raise ModelLoadError(f"ner_type_map: {etype!r} -> {idx} outside 0..17")
        out[str(etype)] = idx
    return out


def load_lexicon() -> dict[str, str]:
    """Surface form -> entity type, from the shipped lexicon."""
    out = {}
    for line_no, raw in enumerate(_data_text("ner_lexicon.tsv").splitlines(), start=1):
        line = raw.strip("\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise ModelLoadError(f"ner_lexicon.tsv:{line_no}: expected '<surface>\\t<type>'")
        surface, etype = line.split("\t", 1)
        if not surface.strip() or not etype.strip():
            raise ModelLoadError(f"ner_lexicon.tsv:{line_no}: empty surface or type")
        out[surface.strip()] = etype.strip()
    if not out:
        raise ModelLoadError("ner_lexicon.tsv: empty lexicon")
    return out


# ---------------------------------------------------------------- registry

_REGISTRY = {
    ("image_embed", "grid-gist-v1"):
        lambda dim: ImageEmbedBackend("grid-gist-v1", dim),
    ("text_embed", "bow-hash-v1"):
        lambda dim: TextEmbedBackend("bow-hash-v1", dim),
    ("detect", "color-blob-v1"):
        lambda dim: DetectBackend(),
    ("ner", "caps-lexicon-v1"):
        lambda dim: NerBackend(load_lexicon()),
    ("caption", "color-template-v1"):
        lambda dim: CaptionBackend(),
}


def known_models(extractor: str) -> list[str]:
    return sorted(mid for (ext, mid) in _REGISTRY if ext == extractor)


def load_model(extractor: str, model_id: str, dim: int):
    """Resolve a model identifier to a backend instance.

    An unknown identifier is a fatal load failure, mirroring a missing
    checkpoint for a real model.
    """
    builder = _REGISTRY.get((extractor, model_id))
    if builder is None:
        raise ModelLoadError(
            f"no {extractor} model {model_id!r}; known: {known_models(extractor)}"
        )
    return builder(dim)
