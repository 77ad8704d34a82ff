"""Feature manifests: the contract between content extractors and the graph.

A feature manifest is UTF-8 JSON lines, one record per line::

    {"owner": {"fact_id": 3, "selector": "title"}, "kind": "embedding",
     "payload": [0.1, -0.2, ...]}

Owners are either ``fact_id`` (news) or ``pair_id`` (image-text pairs);
selectors name the item of the owner the features belong to.  Four record
kinds exist: ``embedding``, ``detection``, ``entity`` and ``caption``.
Real extractors live outside this package; here we define the schema, a
deterministic stub featurizer for tests and pipelines without models, and
the vector utilities used by the edge builders.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import CorpusSummary
from .errors import DanglingOwnerError, MalformedLineError, SchemaError, UndefinedSimilarityError

N_DETECTION_CLASSES = 80
N_NER_CLASSES = 18

_IMAGE_SELECTOR = re.compile(r"^image\[(\d+)\]$")

FACT_TEXT_SELECTORS = ("title", "content")
PAIR_SELECTORS = ("pair_text", "pair_image")


def load_class_names(which: str) -> tuple[str, ...]:
    """Load the shipped class-name list: ``"detection"`` (80) or ``"ner"`` (18)."""
    fname = {"detection": "detection_classes.txt", "ner": "ner_classes.txt"}[which]
    text = resources.files("uknow.data").joinpath(fname).read_text(encoding="utf-8")
    names = tuple(line.strip() for line in text.splitlines() if line.strip())
    expected = N_DETECTION_CLASSES if which == "detection" else N_NER_CLASSES
    if len(names) != expected:
        raise SchemaError(f"{fname}: expected {expected} class names, found {len(names)}")
    return names


@dataclass(frozen=True)
class Owner:
    """A corpus item reference: ``kind`` is ``"fact"`` or ``"pair"``."""

    kind: str
    id: int


@dataclass(frozen=True)
class Detection:
    class_index: int
    box: tuple[float, float, float, float]
    crop_embedding: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            self.class_index == other.class_index
            and self.box == other.box
            and np.array_equal(self.crop_embedding, other.crop_embedding)
        )


@dataclass(frozen=True)
class EntityMention:
    surface: str
    ner_index: int
    span: tuple[int, int]


@dataclass(frozen=True)
class FeatureRecord:
    owner: Owner
    selector: str
    kind: str
    payload: object


class FeatureStore:
    """Immutable-after-load index of feature records by (owner, selector)."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self._embeddings: dict[tuple, np.ndarray] = {}
        self._detections: dict[tuple, list[Detection]] = {}
        self._entities: dict[tuple, list[EntityMention]] = {}
        self._captions: dict[tuple, str] = {}

    @staticmethod
    def _key(owner: Owner, selector: str) -> tuple:
        return (owner.kind, owner.id, selector)

    def add(self, record: FeatureRecord) -> None:
        key = self._key(record.owner, record.selector)
        if record.kind == "embedding":
            vec = np.asarray(record.payload, dtype=np.float32)
            if vec.ndim != 1 or vec.shape[0] != self.dim:
                raise SchemaError(
                    f"embedding for {key} has dim {vec.shape}, store dim is {self.dim}"
                )
            if key in self._embeddings:
                raise SchemaError(f"duplicate embedding record for {key}")
            self._embeddings[key] = vec
        elif record.kind == "detection":
            if key in self._detections:
                raise SchemaError(f"duplicate detection record for {key}")
            for det in record.payload:
                if det.crop_embedding.shape != (self.dim,):
                    raise SchemaError(
                        f"crop embedding for {key} has dim {det.crop_embedding.shape[0]},"
                        f" store dim is {self.dim}"
                    )
            self._detections[key] = list(record.payload)
        elif record.kind == "entity":
            if key in self._entities:
                raise SchemaError(f"duplicate entity record for {key}")
            self._entities[key] = list(record.payload)
        elif record.kind == "caption":
            if key in self._captions:
                raise SchemaError(f"duplicate caption record for {key}")
            self._captions[key] = str(record.payload)
        else:
            raise SchemaError(f"unknown feature kind {record.kind!r}")

    def embedding(self, owner: Owner, selector: str) -> np.ndarray | None:
        return self._embeddings.get(self._key(owner, selector))

    def detections(self, owner: Owner, selector: str) -> list[Detection]:
        return self._detections.get(self._key(owner, selector), [])

    def entities(self, owner: Owner, selector: str) -> list[EntityMention]:
        return self._entities.get(self._key(owner, selector), [])

    def caption(self, owner: Owner, selector: str) -> str | None:
        return self._captions.get(self._key(owner, selector))

    def __len__(self) -> int:
        return (
            len(self._embeddings) + len(self._detections)
            + len(self._entities) + len(self._captions)
        )


def _as_key_bytes(seed: int) -> bytes:
    return (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")


def _keyed_digest(content: bytes, seed: int, salt: bytes = b"") -> bytes:
    return hashlib.blake2b(salt + content, key=_as_key_bytes(seed), digest_size=32).digest()


def stub_featurize(content: str | bytes, dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in for a learned encoder.

    The content bytes are hashed with blake2b keyed by the seed; the digest
    seeds a PCG64 stream whose standard normals are L2-normalized.  The
    result is a unit vector that is a pure function of (content, dim, seed).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    data = content.encode("utf-8") if isinstance(content, str) else bytes(content)
    counter = 0
    while True:
        digest = _keyed_digest(data + counter.to_bytes(2, "little"), seed)
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.standard_normal(dim)
        norm = np.linalg.norm(vec)
        if norm > 0:
            return vec / norm
        counter += 1  # pragma: no cover - astronomically unlikely


def stub_detections(content: str | bytes, dim: int, seed: int, max_objects: int = 3) -> list[Detection]:
    """Synthesize 0..max_objects deterministic detections for an image.

    Object count, class and box coordinates all derive from the keyed hash
    of the image content; each crop embedding comes from the same stub
    encoder applied to (content, box ordinal).
    """
    data = content.encode("utf-8") if isinstance(content, str) else bytes(content)
    head = _keyed_digest(data, seed, salt=b"detect|")
    count = head[0] % (max_objects + 1)
    out = []
    for j in range(count):
        d = _keyed_digest(data + j.to_bytes(2, "little"), seed, salt=b"detbox|")
        class_index = d[0] % N_DETECTION_CLASSES
        raw = [int.from_bytes(d[1 + 4 * k:5 + 4 * k], "little") / 2**32 for k in range(4)]
        x0, x1 = sorted((raw[0], raw[1]))
        y0, y1 = sorted((raw[2], raw[3]))
        # degenerate boxes violate the 0 <= lo < hi <= 1 invariant
        x0, x1 = x0 * 0.999, x0 * 0.999 + max(x1 - x0, 1e-3)
        y0, y1 = y0 * 0.999, y0 * 0.999 + max(y1 - y0, 1e-3)
        crop = stub_featurize(data + b"|crop|" + j.to_bytes(2, "little"), dim, seed)
        out.append(Detection(class_index, (x0, y0, min(x1, 1.0), min(y1, 1.0)), crop))
    return out


_TOKEN = re.compile(r"\S+")


def stub_entities(text: str, seed: int) -> list[EntityMention]:
    """Rule-based stand-in for NER: maximal runs of capitalized tokens.

    A token counts as capitalized when its first character is an ASCII
    uppercase letter.  The surface form is the original text slice covering
    the run; the type index is the keyed hash of the surface modulo 18.
    """
    mentions = []
    run_start = None
    run_end = None
    for match in _TOKEN.finditer(text):
        tok = match.group(0)
        if "A" <= tok[0] <= "Z":
            if run_start is None:
                run_start = match.start()
            run_end = match.end()
        else:
            if run_start is not None:
                surface = text[run_start:run_end]
                ner = _keyed_digest(surface.encode("utf-8"), seed, salt=b"ner|")[0] % N_NER_CLASSES
                mentions.append(EntityMention(surface, ner, (run_start, run_end)))
                run_start = None
    if run_start is not None:
        surface = text[run_start:run_end]
        ner = _keyed_digest(surface.encode("utf-8"), seed, salt=b"ner|")[0] % N_NER_CLASSES
        mentions.append(EntityMention(surface, ner, (run_start, run_end)))
    return mentions


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two nonzero vectors, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _parse_owner(obj: dict, where: str) -> tuple[Owner, str]:
    if "selector" not in obj:
        raise SchemaError(f"{where}: owner without selector")
    selector = str(obj["selector"])
    if "fact_id" in obj:
        return Owner("fact", int(obj["fact_id"])), selector
    if "pair_id" in obj:
        return Owner("pair", int(obj["pair_id"])), selector
    raise SchemaError(f"{where}: owner needs fact_id or pair_id")


def _check_owner(owner: Owner, selector: str, summary: CorpusSummary, where: str) -> None:
    if owner.kind == "pair":
        if owner.id not in summary.pair_ids:
            raise DanglingOwnerError(f"{where}: pair_id {owner.id} not in corpus")
        if selector not in PAIR_SELECTORS:
            raise SchemaError(f"{where}: invalid pair selector {selector!r}")
        return
    if owner.id not in summary.fact_images:
        raise DanglingOwnerError(f"{where}: fact_id {owner.id} not in corpus")
    m = _IMAGE_SELECTOR.match(selector)
    if m:
        k = int(m.group(1))
        if k >= summary.fact_images[owner.id]:
            raise DanglingOwnerError(
                f"{where}: fact {owner.id} has no image[{k}]"
            )
        return
    if selector not in FACT_TEXT_SELECTORS:
        raise SchemaError(f"{where}: invalid fact selector {selector!r}")


def _is_image_selector(selector: str) -> bool:
    return selector == "pair_image" or _IMAGE_SELECTOR.match(selector) is not None


def _parse_payload(kind: str, payload, where: str):
    if kind == "embedding":
        arr = np.asarray(payload, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise SchemaError(f"{where}: embedding payload must be a flat number array")
        return arr
    if kind == "detection":
        dets = []
        for j, item in enumerate(payload):
            ci = int(item["class_index"])
            if not 0 <= ci < N_DETECTION_CLASSES:
                raise SchemaError(f"{where}: class_index {ci} outside 0..79")
            x0, y0, x1, y1 = (float(b) for b in item["box"])
            if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
                raise SchemaError(f"{where}: detection {j} box {item['box']} invalid")
            crop = np.asarray(item["crop_embedding"], dtype=np.float32)
            dets.append(Detection(ci, (x0, y0, x1, y1), crop))
        return dets
    if kind == "entity":
        ents = []
        for item in payload:
            ni = int(item["ner_index"])
            if not 0 <= ni < N_NER_CLASSES:
                raise SchemaError(f"{where}: ner_index {ni} outside 0..17")
            start, end = (int(s) for s in item["span"])
            if not 0 <= start < end:
                raise SchemaError(f"{where}: span [{start},{end}) invalid")
            ents.append(EntityMention(str(item["surface"]), ni, (start, end)))
        return ents
    if kind == "caption":
        return str(payload)
    raise SchemaError(f"{where}: unknown kind {kind!r}")


def iter_manifest_records(path: str | Path):
    """Yield (line_no, FeatureRecord) from a manifest, without corpus checks."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            where = f"{path}:{line_no}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(path, line_no, f"invalid JSON: {exc}") from exc
            owner, selector = _parse_owner(dict(obj.get("owner", {})), where)
            kind = str(obj.get("kind", ""))
            if kind in ("detection", "caption") and not _is_image_selector(selector):
                raise SchemaError(f"{where}: {kind} features require an image selector")
            if kind == "entity" and _is_image_selector(selector):
                raise SchemaError(f"{where}: entity features require a text selector")
            payload = _parse_payload(kind, obj.get("payload"), where)
            yield line_no, FeatureRecord(owner, selector, kind, payload)


def load_feature_manifest(path: str | Path, summary: CorpusSummary) -> FeatureStore:
    """Load and validate a feature manifest against a corpus summary.

    All embedding payloads (including detection crops) must agree on one
    dimension; owners and selectors must exist in the corpus.  Vectors are
    stored as float32, the persisted precision.
    """
    records = []
    dim = None
    path = Path(path)
    for line_no, rec in iter_manifest_records(path):
        where = f"{path}:{line_no}"
        _check_owner(rec.owner, rec.selector, summary, where)
        vecs = []
        if rec.kind == "embedding":
            vecs = [rec.payload]
        elif rec.kind == "detection":
            vecs = [d.crop_embedding for d in rec.payload]
        for vec in vecs:
            if dim is None:
                dim = int(vec.shape[0])
            elif vec.shape[0] != dim:
                raise SchemaError(
                    f"{where}: embedding dim {vec.shape[0]} conflicts with {dim}"
                )
        records.append(rec)
    store = FeatureStore(dim if dim is not None else 1)
    for rec in records:
        if rec.kind == "embedding":
            rec = FeatureRecord(rec.owner, rec.selector, rec.kind,
                                np.asarray(rec.payload, dtype=np.float32))
        store.add(rec)
    return store
