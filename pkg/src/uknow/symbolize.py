"""Phase 2: turn corpus items and features into a numbered node universe.

Every fact, image, text, detected object and named entity becomes a node
with a global id.  Ids are assigned in a documented canonical order and
then permuted by a seeded shuffle, so the numbering carries no information
yet is exactly reproducible.  The module also owns the static 114-entry
edge-code registry (codes 000-113) used by every later stage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import NewsRecord, PairRecord
from .errors import RegistryViolationError, UnknownCodeError
from .features import FeatureStore, Owner, load_class_names

LEVELS = ("L1", "L2", "L3")
MODALITIES = ("fact", "image", "text", "object", "entity")
NODE_KINDS = ("fact", "title", "content", "description", "pair_text",
              "image", "object", "entity")
VIEWS = ("I_in", "T_in", "I_cross", "T_cross", "IT_cross", "fact")
CROSS_VIEWS = ("I_cross", "T_cross", "IT_cross")
METHODS = ("detection", "ner", "annotation", "cosine")

N_CODES = 114

# named codes outside the detection/NER ranges
CODE_FACT_TITLE = 98
CODE_FACT_CONTENT = 99
CODE_FACT_IMAGE = 100
CODE_FACT_EVENT_SIBLING = 101
CODE_IMAGE_DESCRIPTION = 102
CODE_IMAGE_TITLE = 103
CODE_IMAGE_CONTENT = 104
CODE_IMGSIM = 105
CODE_EVENT_TITLE_TITLE = 106
CODE_TIME_ADJACENT_CONTENT = 107
CODE_EVENT_IMAGE_IMAGE = 108
CODE_EVENT_CONTENT_TITLE = 109
CODE_CONTENT_CONTENT_CLIP = 110
CODE_TITLE_TITLE_CLIP = 111
CODE_IMAGE_IMAGE_CLIP = 112
CODE_TITLE_CONTENT_CLIP = 113

_NAMED = {
    CODE_FACT_TITLE: ("fact_title", "fact", "annotation"),
    CODE_FACT_CONTENT: ("fact_content", "fact", "annotation"),
    CODE_FACT_IMAGE: ("fact_image", "fact", "annotation"),
    CODE_FACT_EVENT_SIBLING: ("fact_event_sibling", "fact", "annotation"),
    CODE_IMAGE_DESCRIPTION: ("image_description", "IT_cross", "annotation"),
    CODE_IMAGE_TITLE: ("image_title", "IT_cross", "annotation"),
    CODE_IMAGE_CONTENT: ("image_content", "IT_cross", "annotation"),
    CODE_IMGSIM: ("imgsim", "I_in", "cosine"),
    CODE_EVENT_TITLE_TITLE: ("event_title_title", "T_cross", "annotation"),
    CODE_TIME_ADJACENT_CONTENT: ("time_adjacent_content", "T_cross", "annotation"),
    CODE_EVENT_IMAGE_IMAGE: ("event_image_image", "I_cross", "annotation"),
    CODE_EVENT_CONTENT_TITLE: ("event_content_title", "T_cross", "annotation"),
    CODE_CONTENT_CONTENT_CLIP: ("content_content_clip", "T_cross", "cosine"),
    CODE_TITLE_TITLE_CLIP: ("title_title_clip", "T_cross", "cosine"),
    CODE_IMAGE_IMAGE_CLIP: ("image_image_clip", "I_cross", "cosine"),
    CODE_TITLE_CONTENT_CLIP: ("title_content_clip", "T_cross", "cosine"),
}


@dataclass(frozen=True)
class Origin:
    """Where a node came from: owner item, selector, and payload position.

    L1 fact nodes use selector None.  L3 nodes reuse the parent L2 node's
    selector plus a payload index (detection ordinal, or ordinal among the
    distinct entities of the text).
    """

    owner_kind: str
    owner_id: int
    selector: str | None = None
    payload_index: int | None = None

    def key(self) -> tuple:
        return (self.owner_kind, self.owner_id, self.selector, self.payload_index)


@dataclass(frozen=True)
class NodeId:
    global_id: int
    level: str
    modality: str
    kind: str
    origin: Origin
    attrs: dict = field(default_factory=dict)


def _selector_rank(owner_kind: str, selector: str) -> tuple[int, int]:
    if owner_kind == "pair":
        return {"pair_text": (0, 0), "pair_image": (1, 0)}[selector]
    if selector == "title":
        return (0, 0)
    if selector == "content":
        return (1, 0)
    if selector.startswith("description["):
        return (2, int(selector[12:-1]))
    if selector.startswith("image["):
        return (3, int(selector[6:-1]))
    raise ValueError(f"unknown selector {selector!r}")


def canonical_key(node: NodeId) -> tuple:
    """Total order: facts by id, then L2 by (owner, selector), then L3 by
    (parent L2 position, payload index).  Owner blocks put facts before pairs."""
    o = node.origin
    if node.level == "L1":
        return (0, 0, o.owner_id, 0, 0, 0)
    owner_rank = 0 if o.owner_kind == "fact" else 1
    sel = _selector_rank(o.owner_kind, o.selector)
    if node.level == "L2":
        return (1, owner_rank, o.owner_id, sel[0], sel[1], 0)
    return (2, owner_rank, o.owner_id, sel[0], sel[1], o.payload_index)


class NodeTable:
    """Immutable numbered node universe with an aligned embedding matrix.

    ``nodes[g].global_id == g`` for every g in [0, N).  Nodes that carry a
    feature vector reference a row of ``embeddings`` (float32) through
    ``attrs["embedding_row"]``.
    """

    def __init__(self, nodes: list[NodeId], permutation_seed: int,
                 embeddings: np.ndarray):
        nodes = sorted(nodes, key=lambda n: n.global_id)
        if [n.global_id for n in nodes] != list(range(len(nodes))):
            raise ValueError("global ids must form exactly 0..N-1")
        self.nodes = nodes
        self.permutation_seed = permutation_seed
        self.embeddings = np.asarray(embeddings, dtype=np.float32)
        self._by_origin = {n.origin.key(): n for n in nodes}
        if len(self._by_origin) != len(nodes):
            raise ValueError("node origins must be unique")

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, global_id: int) -> NodeId:
        return self.nodes[global_id]

    def by_origin(self, owner_kind: str, owner_id: int,
                  selector: str | None = None,
                  payload_index: int | None = None) -> NodeId | None:
        return self._by_origin.get((owner_kind, owner_id, selector, payload_index))

    def embedding_of(self, global_id: int) -> np.ndarray | None:
        row = self.nodes[global_id].attrs.get("embedding_row")
        return None if row is None else self.embeddings[row]

    def canonical_order(self) -> list[NodeId]:
        return sorted(self.nodes, key=canonical_key)

    def level_counts(self) -> dict[str, int]:
        counts = {lvl: 0 for lvl in LEVELS}
        for n in self.nodes:
            counts[n.level] += 1
        return counts

    def of_kind(self, kind: str) -> list[NodeId]:
        return [n for n in self.nodes if n.kind == kind]

    def children(self, parent_global_id: int) -> list[NodeId]:
        """L3 nodes whose origin points at the given L2 node's origin."""
        parent = self.nodes[parent_global_id]
        o = parent.origin
        out = [n for n in self.nodes
               if n.level == "L3" and n.origin.owner_kind == o.owner_kind
               and n.origin.owner_id == o.owner_id and n.origin.selector == o.selector]
        return sorted(out, key=lambda n: n.origin.payload_index)

    def __eq__(self, other):
        if not isinstance(other, NodeTable):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())

    def to_bytes(self) -> bytes:
        payload = {
            "permutation_seed": self.permutation_seed,
            "nodes": [
                {
                    "global_id": n.global_id,
                    "level": n.level,
                    "modality": n.modality,
                    "kind": n.kind,
                    "origin": list(n.origin.key()),
                    "attrs": {k: v for k, v in sorted(n.attrs.items())},
                }
                for n in self.nodes
            ],
        }
        head = json.dumps(payload, sort_keys=True, ensure_ascii=True).encode()
        shape = f"|{self.embeddings.shape[0]}x{self.embeddings.shape[1] if self.embeddings.ndim == 2 else 0}|".encode()
        return head + shape + self.embeddings.astype("<f4").tobytes()


def _dedup_entities(mentions) -> list:
    seen = set()
    out = []
    for m in mentions:
        ident = (m.surface, m.ner_index)
        if ident not in seen:
            seen.add(ident)
            out.append(m)
    return out


def assign_nodes(pairs: list[PairRecord], news: list[NewsRecord],
                 features: FeatureStore, seed: int) -> NodeTable:
    """Number every node: canonical order first, then a seeded shuffle.

    Creates one L1 node per news fact; L2 text nodes for titles, contents,
    nonempty image descriptions and pair texts; L2 image nodes for every
    image; L3 object nodes per detection and L3 entity nodes per distinct
    (text node, surface, ner type).  Pair-only corpora yield no L1 nodes.
    """
    ordered: list[tuple[str, str, str, Origin, dict]] = []

    def add(level, modality, kind, origin, attrs):
        ordered.append((level, modality, kind, origin, attrs))

    news_sorted = sorted(news, key=lambda r: r.fact_id)
    for rec in news_sorted:
        add("L1", "fact", "fact", Origin("fact", rec.fact_id),
            {"event_coarse": rec.event_coarse, "event_fine": rec.event_fine,
             "time": rec.time})
    for rec in news_sorted:
        add("L2", "text", "title", Origin("fact", rec.fact_id, "title"), {})
        add("L2", "text", "content", Origin("fact", rec.fact_id, "content"), {})
        for k, desc in enumerate(rec.image_descriptions):
            if desc:
                add("L2", "text", "description",
                    Origin("fact", rec.fact_id, f"description[{k}]"), {})
        for k in range(len(rec.image_paths)):
            add("L2", "image", "image", Origin("fact", rec.fact_id, f"image[{k}]"), {})
    for rec in sorted(pairs, key=lambda r: r.pair_id):
        add("L2", "text", "pair_text", Origin("pair", rec.pair_id, "pair_text"), {})
        add("L2", "image", "image", Origin("pair", rec.pair_id, "pair_image"), {})

    l3: list[tuple[str, str, str, Origin, dict]] = []
    for level, modality, kind, origin, _ in ordered:
        if level != "L2":
            continue
        owner = Owner(origin.owner_kind, origin.owner_id)
        if modality == "image":
            for j, det in enumerate(features.detections(owner, origin.selector)):
                l3.append(("L3", "object", "object",
                           Origin(origin.owner_kind, origin.owner_id,
                                  origin.selector, j),
                           {"class_index": int(det.class_index)}))
        elif kind in ("title", "content", "pair_text"):
            distinct = _dedup_entities(features.entities(owner, origin.selector))
            for j, ent in enumerate(distinct):
                l3.append(("L3", "entity", "entity",
                           Origin(origin.owner_kind, origin.owner_id,
                                  origin.selector, j),
                           {"surface": ent.surface, "ner_index": int(ent.ner_index)}))
    ordered.extend(l3)

    n = len(ordered)
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    perm = rng.permutation(n)

    rows: list[np.ndarray] = []
    nodes: list[NodeId] = []
    for i, (level, modality, kind, origin, attrs) in enumerate(ordered):
        vec = None
        owner = Owner(origin.owner_kind, origin.owner_id)
        if level == "L2":
            vec = features.embedding(owner, origin.selector)
        elif modality == "object":
            dets = features.detections(owner, origin.selector)
            vec = dets[origin.payload_index].crop_embedding
        if vec is not None:
            attrs = dict(attrs)
            attrs["embedding_row"] = len(rows)
            rows.append(np.asarray(vec, dtype=np.float32))
        nodes.append(NodeId(int(perm[i]), level, modality, kind, origin, attrs))

    emb = (np.stack(rows).astype(np.float32) if rows
           else np.zeros((0, features.dim), dtype=np.float32))
    return NodeTable(nodes, seed, emb)


@dataclass(frozen=True)
class RegistryEntry:
    code: int
    name: str
    view: str
    method: str


def _range_constraint(code: int) -> tuple[str, tuple[str, ...]]:
    """Return (required method, allowed views) for a code."""
    if 0 <= code <= 79:
        return "detection", ("I_in",)
    if 80 <= code <= 97:
        return "ner", ("T_in",)
    if 98 <= code <= 101:
        return "annotation", ("fact",)
    if 102 <= code <= 104:
        return "annotation", ("IT_cross",)
    if code == 105:
        return "cosine", ("I_in", "T_in", "I_cross", "T_cross", "IT_cross")
    if 106 <= code <= 109:
        return "annotation", CROSS_VIEWS
    if 110 <= code <= 113:
        return "cosine", CROSS_VIEWS
    raise UnknownCodeError(code)


class EdgeRegistry:
    """The static 114-entry edge-code table, code 000-113."""

    def __init__(self, entries: list[RegistryEntry]):
        if len(entries) != N_CODES:
            raise RegistryViolationError(
                f"registry must have {N_CODES} entries, got {len(entries)}")
        entries = sorted(entries, key=lambda e: e.code)
        if [e.code for e in entries] != list(range(N_CODES)):
            raise RegistryViolationError("registry codes must be exactly 0..113")
        for e in entries:
            method, views = _range_constraint(e.code)
            if e.method != method:
                raise RegistryViolationError(
                    f"code {e.code:03d}: method must be {method}, got {e.method}")
            if e.view not in views:
                raise RegistryViolationError(
                    f"code {e.code:03d}: view {e.view} not allowed (expects one of {views})")
            if not e.name:
                raise RegistryViolationError(f"code {e.code:03d}: empty name")
        self.entries = tuple(entries)

    def lookup(self, code: int) -> RegistryEntry:
        if not 0 <= code < N_CODES:
            raise UnknownCodeError(code)
        return self.entries[code]

    def view_of(self, code: int) -> str:
        return self.lookup(code).view

    def method_of(self, code: int) -> str:
        return self.lookup(code).method

    def __len__(self) -> int:
        return N_CODES

    def __iter__(self):
        return iter(self.entries)


def edge_registry(overrides: str | Path | dict | None = None) -> EdgeRegistry:
    """The default registry, optionally patched by a JSON override map.

    Overrides map code (as int or string) to a partial ``{name, view,
    method}`` object; every patched table is re-validated against the range
    constraints, so an override can rename a code or move 105-113 between
    allowed views but never change a range's method.
    """
    detection = load_class_names("detection")
    ner = load_class_names("ner")
    entries = [RegistryEntry(c, detection[c], "I_in", "detection") for c in range(80)]
    entries += [RegistryEntry(80 + k, ner[k], "T_in", "ner") for k in range(18)]
    for code, (name, view, method) in sorted(_NAMED.items()):
        entries.append(RegistryEntry(code, name, view, method))

    if overrides is not None:
        if not isinstance(overrides, dict):
            overrides = json.loads(Path(overrides).read_text(encoding="utf-8"))
        table = {e.code: e for e in entries}
        for raw_code, patch in overrides.items():
            code = int(raw_code)
            if not 0 <= code < N_CODES:
                raise UnknownCodeError(code)
            base = table[code]
            table[code] = RegistryEntry(
                code,
                str(patch.get("name", base.name)),
                str(patch.get("view", base.view)),
                str(patch.get("method", base.method)),
            )
        entries = list(table.values())
    return EdgeRegistry(entries)
