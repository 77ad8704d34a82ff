"""Phase 3: materialize edges for the five knowledge views and assemble G_m.

Three builders produce edge lists independently: internal edges from
detections and entities (codes 000-097), annotation edges from news
structure and event labels (098-109 except 105), and cosine similarity
edges over node embeddings (105, 110-113).  ``assemble_graph`` unions
them into an immutable, deduplicated, canonically sorted graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import NewsRecord
from .errors import DanglingEdgeError, RegistryViolationError, UndefinedSimilarityError
from .features import FeatureStore, cosine
from .symbolize import (
    CODE_CONTENT_CONTENT_CLIP,
    CODE_EVENT_CONTENT_TITLE,
    CODE_EVENT_IMAGE_IMAGE,
    CODE_EVENT_TITLE_TITLE,
    CODE_FACT_CONTENT,
    CODE_FACT_EVENT_SIBLING,
    CODE_FACT_IMAGE,
    CODE_FACT_TITLE,
    CODE_IMAGE_CONTENT,
    CODE_IMAGE_DESCRIPTION,
    CODE_IMAGE_IMAGE_CLIP,
    CODE_IMAGE_TITLE,
    CODE_IMGSIM,
    CODE_TIME_ADJACENT_CONTENT,
    CODE_TITLE_CONTENT_CLIP,
    CODE_TITLE_TITLE_CLIP,
    N_CODES,
    EdgeRegistry,
    NodeTable,
    edge_registry,
)

COSINE_CODES = (CODE_IMGSIM, CODE_CONTENT_CONTENT_CLIP, CODE_TITLE_TITLE_CLIP,
                CODE_IMAGE_IMAGE_CLIP, CODE_TITLE_CONTENT_CLIP)


@dataclass(frozen=True)
class Edge:
    """One triple <head, relation code, tail>; ids are NodeTable global ids."""

    head: int
    code: int
    tail: int
    weight: float = 1.0


@dataclass(frozen=True)
class Graph:
    node_table: NodeTable
    edges: tuple[Edge, ...]
    tau: float
    build_seed: int
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.edges)

    def triples(self) -> np.ndarray:
        """(|E|, 3) int64 array of [head, code, tail] rows."""
        if not self.edges:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array([[e.head, e.code, e.tail] for e in self.edges], dtype=np.int64)

    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.edges], dtype=np.float64)

    def check_invariants(self, registry: EdgeRegistry | None = None) -> None:
        """Full-build invariants: every L3 node has an edge to its L2 parent."""
        registry = registry or edge_registry()
        incident = {}
        for e in self.edges:
            registry.lookup(e.code)
            incident.setdefault(e.head, set()).add(e.tail)
            incident.setdefault(e.tail, set()).add(e.head)
        for node in self.node_table.nodes:
            if node.level != "L3":
                continue
            parent = self.node_table.by_origin(
                node.origin.owner_kind, node.origin.owner_id, node.origin.selector)
            if parent is None or parent.global_id not in incident.get(node.global_id, ()):
                raise DanglingEdgeError(
                    f"L3 node {node.global_id} has no edge to its L2 parent")


def _sym(a: int, b: int, code: int, weight: float = 1.0) -> Edge:
    """Canonical orientation for symmetric relations: head = lower id."""
    lo, hi = (a, b) if a < b else (b, a)
    return Edge(lo, code, hi, weight)


def build_internal_edges(nodes: NodeTable, features: FeatureStore) -> list[Edge]:
    """I_in and T_in: image -> object per detection, text -> entity per
    distinct entity.  The edge code is the class index (detections) or
    80 + NER index (entities)."""
    edges = []
    for node in nodes.nodes:
        if node.level != "L3":
            continue
        parent = nodes.by_origin(node.origin.owner_kind, node.origin.owner_id,
                                 node.origin.selector)
        if parent is None:
            raise DanglingEdgeError(f"L3 node {node.global_id} has no L2 parent")
        if node.modality == "object":
            code = int(node.attrs["class_index"])
            if not 0 <= code <= 79:
                raise RegistryViolationError(
                    f"detection class index {code} outside 0..79")
        else:
            ner = int(node.attrs["ner_index"])
            if not 0 <= ner <= 17:
                raise RegistryViolationError(f"NER index {ner} outside 0..17")
            code = 80 + ner
        edges.append(Edge(parent.global_id, code, node.global_id))
    return edges


def build_annotation_edges(nodes: NodeTable, news: list[NewsRecord]) -> list[Edge]:
    """Structural and event-label edges; news only, pairs contribute none.

    Per fact: 098/099/100 to its title/content/images, 102 image to its
    description text, 103/104 image to title/content.  Across facts that
    share a fine event label: 101 fact-fact, 106 title-title, 108
    image-image, 109 content-title.  Within each coarse event, contents of
    time-adjacent facts link with 107.
    """
    edges = []
    news_sorted = sorted(news, key=lambda r: r.fact_id)

    def n(fact_id, selector=None):
        return nodes.by_origin("fact", fact_id, selector)

    for rec in news_sorted:
        fact = n(rec.fact_id)
        title = n(rec.fact_id, "title")
        content = n(rec.fact_id, "content")
        edges.append(Edge(fact.global_id, CODE_FACT_TITLE, title.global_id))
        edges.append(Edge(fact.global_id, CODE_FACT_CONTENT, content.global_id))
        for k in range(len(rec.image_paths)):
            image = n(rec.fact_id, f"image[{k}]")
            edges.append(Edge(fact.global_id, CODE_FACT_IMAGE, image.global_id))
            desc = n(rec.fact_id, f"description[{k}]")
            if desc is not None:
                edges.append(Edge(image.global_id, CODE_IMAGE_DESCRIPTION,
                                  desc.global_id))
            edges.append(Edge(image.global_id, CODE_IMAGE_TITLE, title.global_id))
            edges.append(Edge(image.global_id, CODE_IMAGE_CONTENT, content.global_id))

    by_fine: dict[str, list[NewsRecord]] = {}
    for rec in news_sorted:
        if rec.event_fine:
            by_fine.setdefault(rec.event_fine, []).append(rec)
    for group in by_fine.values():
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                f, g = group[i], group[j]
                edges.append(_sym(n(f.fact_id).global_id, n(g.fact_id).global_id,
                                  CODE_FACT_EVENT_SIBLING))
                edges.append(_sym(n(f.fact_id, "title").global_id,
                                  n(g.fact_id, "title").global_id,
                                  CODE_EVENT_TITLE_TITLE))
                edges.append(_sym(n(f.fact_id, "content").global_id,
                                  n(g.fact_id, "title").global_id,
                                  CODE_EVENT_CONTENT_TITLE))
                edges.append(_sym(n(g.fact_id, "content").global_id,
                                  n(f.fact_id, "title").global_id,
                                  CODE_EVENT_CONTENT_TITLE))
                for a in range(len(f.image_paths)):
                    for b in range(len(g.image_paths)):
                        edges.append(_sym(n(f.fact_id, f"image[{a}]").global_id,
                                          n(g.fact_id, f"image[{b}]").global_id,
                                          CODE_EVENT_IMAGE_IMAGE))

    by_coarse: dict[str, list[NewsRecord]] = {}
    for rec in news_sorted:
        by_coarse.setdefault(rec.event_coarse, []).append(rec)
    for group in by_coarse.values():
        timeline = sorted(group, key=lambda r: (r.time, r.fact_id))
        for f, g in zip(timeline, timeline[1:]):
            edges.append(_sym(n(f.fact_id, "content").global_id,
                              n(g.fact_id, "content").global_id,
                              CODE_TIME_ADJACENT_CONTENT))
    return edges


def build_similarity_edges(nodes: NodeTable, features: FeatureStore,
                           tau: float, topk: int | None = None) -> list[Edge]:
    """Cosine edges at threshold tau (inclusive), weight = cosine value.

    Eligible pairs: images within one fact (105), images across items
    (112), titles across facts (111), contents across facts (110), and
    title-content across facts (113).  Nodes without embeddings are
    skipped.  Each unordered pair appears once with head = lower id.
    With a top-k cap, an edge survives only if it is among the k
    strongest similarity edges of at least one endpoint.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if topk is not None and topk < 1:
        raise ValueError(f"topk must be >= 1, got {topk}")

    def with_emb(kind):
        out = []
        for node in nodes.of_kind(kind):
            vec = nodes.embedding_of(node.global_id)
            if vec is not None:
                out.append((node, vec))
        return out

    images = with_emb("image")
    titles = with_emb("title")
    contents = with_emb("content")
    edges = []

    def emit(a, va, b, vb, code):
        try:
            sim = cosine(va, vb)
        except UndefinedSimilarityError:
            return
        if sim >= tau:
            edges.append(_sym(a.global_id, b.global_id, code, sim))

    for i in range(len(images)):
        a, va = images[i]
        for j in range(i + 1, len(images)):
            b, vb = images[j]
            same_fact = (a.origin.owner_kind == "fact"
                         and b.origin.owner_kind == "fact"
                         and a.origin.owner_id == b.origin.owner_id)
            emit(a, va, b, vb, CODE_IMGSIM if same_fact else CODE_IMAGE_IMAGE_CLIP)
    for i in range(len(titles)):
        a, va = titles[i]
        for j in range(i + 1, len(titles)):
            b, vb = titles[j]
            if a.origin.owner_id != b.origin.owner_id:
                emit(a, va, b, vb, CODE_TITLE_TITLE_CLIP)
    for i in range(len(contents)):
        a, va = contents[i]
        for j in range(i + 1, len(contents)):
            b, vb = contents[j]
            if a.origin.owner_id != b.origin.owner_id:
                emit(a, va, b, vb, CODE_CONTENT_CONTENT_CLIP)
    for a, va in titles:
        for b, vb in contents:
            if a.origin.owner_id != b.origin.owner_id:
                emit(a, va, b, vb, CODE_TITLE_CONTENT_CLIP)

    if topk is None:
        return edges
    ranked: dict[int, list[tuple[float, int, int, Edge]]] = {}
    for e in edges:
        for end, other in ((e.head, e.tail), (e.tail, e.head)):
            ranked.setdefault(end, []).append((-e.weight, other, e.code, e))
    keep = set()
    for entries in ranked.values():
        entries.sort(key=lambda t: t[:3])
        for _, _, _, e in entries[:topk]:
            keep.add((e.head, e.code, e.tail))
    return [e for e in edges if (e.head, e.code, e.tail) in keep]


def assemble_graph(nodes: NodeTable, edge_lists: list[list[Edge]], tau: float,
                   seed: int, provenance: dict | None = None) -> Graph:
    """Union the edge lists into a Graph: validate ids, dedup on
    (head, code, tail) keeping the first weight, sort canonically."""
    n = len(nodes)
    seen: dict[tuple[int, int, int], Edge] = {}
    for edge_list in edge_lists:
        for e in edge_list:
            if not (0 <= e.head < n and 0 <= e.tail < n):
                raise DanglingEdgeError(
                    f"edge ({e.head},{e.code},{e.tail}) references unknown id")
            if e.head == e.tail:
                raise DanglingEdgeError(f"self-loop on id {e.head}")
            if not 0 <= e.code < N_CODES:
                raise DanglingEdgeError(f"edge code {e.code} outside 0..113")
            seen.setdefault((e.head, e.code, e.tail), e)
    edges = tuple(seen[key] for key in sorted(seen))
    prov = {"n_nodes": n, "n_edges": len(edges), "tau": tau, "seed": seed}
    prov.update(provenance or {})
    return Graph(node_table=nodes, edges=edges, tau=tau, build_seed=seed,
                 provenance=prov)


def build_graph(pairs, news, features: FeatureStore, tau: float, seed: int,
                topk: int | None = None) -> Graph:
    """Full Phase-2 + Phase-3 pipeline from parsed corpus and features."""
    from .symbolize import assign_nodes

    nodes = assign_nodes(pairs, news, features, seed)
    internal = build_internal_edges(nodes, features)
    annotation = build_annotation_edges(nodes, news)
    similarity = build_similarity_edges(nodes, features, tau, topk)
    return assemble_graph(
        nodes, [internal, annotation, similarity], tau, seed,
        provenance={
            "n_pairs": len(pairs), "n_news": len(news),
            "internal_edges": len(internal),
            "annotation_edges": len(annotation),
            "similarity_edges": len(similarity),
        })
