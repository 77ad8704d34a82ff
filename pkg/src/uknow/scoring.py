"""Knowledge-augmented similarity scoring and cluster-retrieval metrics.

The knowledge embedding z^k of an (image node, text node) pair pools
neighbor vectors from four views: the image's detected objects (I_in),
the text's entities (T_in), the image's associated images (I_cross) and
the text's associated texts (T_cross).  The three-way score adds the
image-text cosine to the two knowledge cosines computed against the
block-mean projection of z^k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .construct import Graph
from .errors import UndefinedSimilarityError
from .features import cosine
from .reasoning import EmbeddingTable, Model

I_CROSS_IMAGE_CODES = frozenset({105, 108, 112})
T_CROSS_TEXT_CODES = frozenset({106, 107, 109, 110, 111, 113})


@dataclass(frozen=True)
class KnowledgeEmbedding:
    """Four pooled d-blocks in view order [I_in, T_in, I_cross, T_cross],
    their 4d concatenation, and the d-dim block-mean projection."""

    blocks: np.ndarray
    concat: np.ndarray
    projected: np.ndarray


def _vector_source(graph: Graph, source):
    """Normalize an embedding source to a per-node lookup function."""
    if source is None or source == "graph":
        table = graph.node_table

        def get(nid: int):
            return table.embedding_of(nid)

        dim = int(table.embeddings.shape[1]) if table.embeddings.ndim == 2 else 0
        return get, dim
    if isinstance(source, Model):
        reps = source.entity_reps()
        return (lambda nid: reps[nid]), int(reps.shape[1])
    if isinstance(source, EmbeddingTable):
        ents = source.entities
        return (lambda nid: ents[nid]), int(ents.shape[1])
    raise ValueError(f"unsupported embedding source: {source!r}")


def build_zk(image_node: int, text_node: int, graph: Graph,
             source=None) -> KnowledgeEmbedding:
    """Pool the four knowledge views around an image node and a text node.

    Each block is the arithmetic mean of the reachable neighbors' vectors
    under that view's edge codes; a view with no vectors contributes a
    zero block.  ``source`` selects graph feature vectors (default) or a
    trained model/table.
    """
    n = len(graph.node_table)
    for nid, want in ((image_node, "image"), (text_node, "text")):
        if not 0 <= nid < n:
            raise ValueError(f"node id {nid} out of range")
    if graph.node_table.node(image_node).modality != "image":
        raise ValueError(f"node {image_node} is not an image node")
    if graph.node_table.node(text_node).modality != "text":
        raise ValueError(f"node {text_node} is not a text node")

    get, dim = _vector_source(graph, source)

    obj_neighbors = []
    img_neighbors = []
    ent_neighbors = []
    txt_neighbors = []
    for e in graph.edges:
        if e.head == image_node or e.tail == image_node:
            other = e.tail if e.head == image_node else e.head
            if 0 <= e.code <= 79:
                obj_neighbors.append(other)
            elif e.code in I_CROSS_IMAGE_CODES:
                img_neighbors.append(other)
        if e.head == text_node or e.tail == text_node:
            other = e.tail if e.head == text_node else e.head
            if 80 <= e.code <= 97:
                ent_neighbors.append(other)
            elif e.code in T_CROSS_TEXT_CODES:
                txt_neighbors.append(other)

    def pool(ids):
        vecs = [np.asarray(v, dtype=np.float64)
                for v in (get(i) for i in ids) if v is not None]
        if not vecs:
            return np.zeros(dim, dtype=np.float64)
        return np.mean(vecs, axis=0)

    blocks = np.stack([pool(obj_neighbors), pool(ent_neighbors),
                       pool(img_neighbors), pool(txt_neighbors)])
    return KnowledgeEmbedding(blocks=blocks, concat=blocks.ravel().copy(),
                              projected=blocks.mean(axis=0))


def score_tik_terms(zt: np.ndarray, zi: np.ndarray, zk) -> tuple[float, float, float]:
    """The three cosine terms (text-image, knowledge-image, knowledge-text).

    ``zk`` is a KnowledgeEmbedding or a raw d-vector; a zero knowledge
    vector makes the two knowledge terms 0 instead of an error.
    """
    zt = np.asarray(zt, dtype=np.float64)
    zi = np.asarray(zi, dtype=np.float64)
    if np.linalg.norm(zt) == 0.0 or np.linalg.norm(zi) == 0.0:
        raise UndefinedSimilarityError("zT and zI must be nonzero")
    zk_vec = zk.projected if isinstance(zk, KnowledgeEmbedding) else np.asarray(zk, dtype=np.float64)
    term_ti = cosine(zt, zi)
    if np.linalg.norm(zk_vec) == 0.0:
        return term_ti, 0.0, 0.0
    return term_ti, cosine(zk_vec, zi), cosine(zk_vec, zt)


def score_tik(zt: np.ndarray, zi: np.ndarray, zk) -> float:
    """cos(zT, zI) + cos(zk', zI) + cos(zk', zT), in [-3, 3]."""
    return float(sum(score_tik_terms(zt, zi, zk)))


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return mat / norms


def _topk_hit(sim_row: np.ndarray, labels, query_label, k: int) -> bool:
    order = np.argsort(-sim_row, kind="stable")
    for idx in order[:k]:
        if sim_row[idx] == -np.inf:
            break
        if labels[idx] == query_label:
            return True
    return False


def retrieval_eval(image_embs: np.ndarray, text_embs: np.ndarray, labels,
                   k: int) -> dict:
    """R@K for the four retrieval modes over one item list.

    Item i carries an image embedding, a text embedding and a cluster
    label.  A query succeeds when any of its top-K cosine neighbors
    (self excluded in same-modality modes, ties broken by index) shares
    the label.  Items in singleton clusters are excluded from the
    denominator; a mode with no eligible queries reports None.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    image_embs = _unit_rows(image_embs)
    text_embs = _unit_rows(text_embs)
    labels = list(labels)
    n = len(labels)
    if image_embs.shape[0] != n or text_embs.shape[0] != n:
        raise ValueError("labels and embedding rows must align")
    counts: dict = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    eligible = [i for i in range(n) if counts[labels[i]] >= 2]

    galleries = {
        "img2img": (image_embs, image_embs, True),
        "txt2txt": (text_embs, text_embs, True),
        "img2txt": (image_embs, text_embs, False),
        "txt2img": (text_embs, image_embs, False),
    }
    out = {}
    for mode, (queries, gallery, same_modality) in galleries.items():
        if not eligible:
            out[mode] = None
            continue
        sims = queries @ gallery.T
        hits = 0
        for i in eligible:
            row = sims[i].copy()
            if same_modality:
                row[i] = -np.inf
            if _topk_hit(row, labels, labels[i], k):
                hits += 1
        out[mode] = hits / len(eligible)
    return out


def classification_eval(scores: np.ndarray, labels, k: int) -> float:
    """ACC@K with pessimistic ties: the true class counts as found only
    when its tie-aware rank is within K."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be a 2D matrix")
    n, c = scores.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError("labels must have one entry per score row")
    if n and (labels.min() < 0 or labels.max() >= c):
        raise ValueError("label outside class range")
    hits = 0
    for i in range(n):
        s_true = scores[i, labels[i]]
        better = int(np.count_nonzero(scores[i] > s_true))
        tied = int(np.count_nonzero(scores[i] == s_true)) - 1
        if 1 + better + tied <= k:
            hits += 1
    return hits / n if n else 0.0


def fact_retrieval_inputs(graph: Graph, source=None):
    """Per-fact pooled image/text embeddings and fine-event labels.

    The image side averages the fact's image-node vectors, the text side
    its title and content vectors.  Facts lacking either side are
    dropped; facts without a fine event label become singletons (and are
    therefore excluded from retrieval denominators).
    """
    get, dim = _vector_source(graph, source)
    per_fact: dict[int, dict] = {}
    for node in graph.node_table.nodes:
        if node.origin.owner_kind != "fact":
            continue
        slot = per_fact.setdefault(node.origin.owner_id,
                                   {"imgs": [], "txts": [], "fine": ""})
        if node.level == "L1":
            slot["fine"] = node.attrs.get("event_fine", "")
        elif node.kind == "image":
            vec = get(node.global_id)
            if vec is not None:
                slot["imgs"].append(np.asarray(vec, dtype=np.float64))
        elif node.kind in ("title", "content"):
            vec = get(node.global_id)
            if vec is not None:
                slot["txts"].append(np.asarray(vec, dtype=np.float64))

    fact_ids = []
    img_rows = []
    txt_rows = []
    labels = []
    for fid in sorted(per_fact):
        slot = per_fact[fid]
        if not slot["imgs"] or not slot["txts"]:
            continue
        fact_ids.append(fid)
        img_rows.append(np.mean(slot["imgs"], axis=0))
        txt_rows.append(np.mean(slot["txts"], axis=0))
        labels.append(slot["fine"] if slot["fine"] else f"__singleton__{fid}")
    if not fact_ids:
        return [], np.zeros((0, dim)), np.zeros((0, dim)), []
    return fact_ids, np.stack(img_rows), np.stack(txt_rows), labels
