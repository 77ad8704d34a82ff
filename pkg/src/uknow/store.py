"""Persist, split and measure graphs.

Layout of a graph directory::

    meta.json        version, tau, seeds, counts, sha256 checksums
    nodes.jsonl      one node object per line
    edges.jsonl      one {head, code, tail, weight} object per line
    embeddings.bin   20-byte header (magic, version, rows, dim) + float32 LE rows
    splits/<name>.json

Loads verify checksums and version; saves are atomic (write to a temp
name, then rename) and byte-deterministic.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .construct import COSINE_CODES, Edge, Graph, build_similarity_edges
from .errors import CorruptStoreError, MissingManifestError
from .features import FeatureStore
from .symbolize import NODE_KINDS, NodeId, NodeTable, Origin

FORMAT_VERSION = 1
EMB_MAGIC = b"UKNWEMB1"

DEGREE_BUCKETS = tuple([(2 * i, 2 * i + 1) for i in range(9)] + [(18, None)])


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _node_to_obj(n: NodeId) -> dict:
    return {
        "global_id": n.global_id,
        "level": n.level,
        "modality": n.modality,
        "kind": n.kind,
        "origin": list(n.origin.key()),
        "attrs": n.attrs,
    }


def _node_from_obj(obj: dict) -> NodeId:
    ok, oid, sel, pidx = obj["origin"]
    return NodeId(int(obj["global_id"]), obj["level"], obj["modality"],
                  obj["kind"], Origin(ok, int(oid), sel, pidx),
                  dict(obj["attrs"]))


def _pack_embeddings(matrix: np.ndarray) -> bytes:
    rows, dim = (matrix.shape if matrix.ndim == 2 else (0, 0))
    header = EMB_MAGIC + struct.pack("<III", FORMAT_VERSION, rows, dim)
    return header + matrix.astype("<f4").tobytes(order="C")


def _unpack_embeddings(data: bytes) -> np.ndarray:
    if len(data) < 20 or data[:8] != EMB_MAGIC:
        raise CorruptStoreError("embeddings.bin: bad magic or truncated header")
    version, rows, dim = struct.unpack("<III", data[8:20])
    if version != FORMAT_VERSION:
        raise CorruptStoreError(f"embeddings.bin: version {version} unsupported")
    expected = 20 + rows * dim * 4
    if len(data) != expected:
        raise CorruptStoreError(
            f"embeddings.bin: expected {expected} bytes, got {len(data)}")
    flat = np.frombuffer(data[20:], dtype="<f4")
    return flat.reshape(rows, dim).astype(np.float32)


def save_graph(graph: Graph, directory: str | Path) -> None:
    """Write the graph directory; deterministic bytes for equal graphs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    nodes_payload = "".join(
        _dumps(_node_to_obj(n)) + "\n" for n in graph.node_table.nodes
    ).encode("utf-8")
    edges_payload = "".join(
        _dumps({"head": e.head, "code": e.code, "tail": e.tail,
                "weight": e.weight}) + "\n"
        for e in graph.edges
    ).encode("utf-8")
    emb_payload = _pack_embeddings(graph.node_table.embeddings)

    meta = {
        "format_version": FORMAT_VERSION,
        "tau": graph.tau,
        "build_seed": graph.build_seed,
        "permutation_seed": graph.node_table.permutation_seed,
        "n_nodes": len(graph.node_table),
        "n_edges": len(graph.edges),
        "embedding_rows": int(graph.node_table.embeddings.shape[0]),
        "embedding_dim": int(graph.node_table.embeddings.shape[1]
                             if graph.node_table.embeddings.ndim == 2 else 0),
        "provenance": graph.provenance,
        "checksums": {
            "nodes.jsonl": _sha256(nodes_payload),
            "edges.jsonl": _sha256(edges_payload),
            "embeddings.bin": _sha256(emb_payload),
        },
    }
    _atomic_write(directory / "nodes.jsonl", nodes_payload)
    _atomic_write(directory / "edges.jsonl", edges_payload)
    _atomic_write(directory / "embeddings.bin", emb_payload)
    _atomic_write(directory / "meta.json", (_dumps(meta) + "\n").encode("utf-8"))


def load_graph(directory: str | Path) -> Graph:
    """Load and verify a graph directory; checksum mismatch raises."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise MissingManifestError(f"{meta_path} not found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format_version") != FORMAT_VERSION:
        raise CorruptStoreError(
            f"meta.json: format_version {meta.get('format_version')} unsupported")
    payloads = {}
    for fname in ("nodes.jsonl", "edges.jsonl", "embeddings.bin"):
        fpath = directory / fname
        if not fpath.exists():
            raise CorruptStoreError(f"{fpath} missing")
        data = fpath.read_bytes()
        digest = _sha256(data)
        if digest != meta["checksums"][fname]:
            raise CorruptStoreError(f"{fname}: checksum mismatch")
        payloads[fname] = data

    nodes = [_node_from_obj(json.loads(line))
             for line in payloads["nodes.jsonl"].decode("utf-8").splitlines()
             if line]
    edges = tuple(
        Edge(int(o["head"]), int(o["code"]), int(o["tail"]), float(o["weight"]))
        for o in (json.loads(line)
                  for line in payloads["edges.jsonl"].decode("utf-8").splitlines()
                  if line)
    )
    embeddings = _unpack_embeddings(payloads["embeddings.bin"])
    if len(nodes) != meta["n_nodes"] or len(edges) != meta["n_edges"]:
        raise CorruptStoreError("meta.json counts disagree with data files")
    table = NodeTable(nodes, int(meta["permutation_seed"]), embeddings)
    return Graph(node_table=table, edges=edges, tau=float(meta["tau"]),
                 build_seed=int(meta["build_seed"]),
                 provenance=dict(meta["provenance"]))


@dataclass(frozen=True)
class Split:
    """Partition assignment over units: edge ordinals (triple mode) or
    whole corpus items (fact mode)."""

    mode: str
    assignment: dict
    ratios: tuple[float, float, float]
    seed: int
    labels: tuple[str, str, str]

    def edge_labels(self, graph: Graph) -> list[str]:
        """Partition label of every edge, in graph edge order."""
        if self.mode == "triple":
            return [self.assignment[f"edge:{i}"] for i in range(len(graph.edges))]
        out = []
        for e in graph.edges:
            ua = _unit_of(graph.node_table.node(e.head))
            ub = _unit_of(graph.node_table.node(e.tail))
            la, lb = self.assignment[ua], self.assignment[ub]
            out.append(la if la == lb else self.labels[0])
        return out

    def triples_for(self, graph: Graph, label: str) -> np.ndarray:
        if label not in self.labels:
            raise ValueError(f"label {label!r} not in {self.labels}")
        tagged = self.edge_labels(graph)
        rows = [[e.head, e.code, e.tail]
                for e, lab in zip(graph.edges, tagged) if lab == label]
        if not rows:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array(rows, dtype=np.int64)


def _unit_of(node: NodeId) -> str:
    return f"{node.origin.owner_kind}:{node.origin.owner_id}"


def _largest_remainder(n: int, ratios: tuple[float, float, float]) -> list[int]:
    base = [math.floor(n * r) for r in ratios]
    fracs = sorted(range(3), key=lambda i: (-(n * ratios[i] - base[i]), i))
    for i in range(n - sum(base)):
        base[fracs[i % 3]] += 1
    return base


def split(graph: Graph, ratios, mode: str, seed: int,
          labels: tuple[str, str, str] = ("train", "val", "test")) -> Split:
    """Seeded partition of the graph.

    Triple mode shuffles edges and cuts by largest-remainder sizes.  Fact
    mode shuffles corpus units (facts and pairs); an edge joins a
    partition only when both endpoints' units agree, otherwise it falls
    back to the first label so evaluation sets stay leakage-free.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive reals")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if mode not in ("triple", "fact"):
        raise ValueError(f"mode must be 'triple' or 'fact', got {mode!r}")
    labels = tuple(labels)
    if len(labels) != 3 or len(set(labels)) != 3:
        raise ValueError("labels must be three distinct names")

    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    if mode == "triple":
        n = len(graph.edges)
        perm = rng.permutation(n)
        sizes = _largest_remainder(n, ratios)
        assignment = {}
        cursor = 0
        for size, label in zip(sizes, labels):
            for idx in perm[cursor:cursor + size]:
                assignment[f"edge:{int(idx)}"] = label
            cursor += size
        return Split("triple", assignment, ratios, seed, labels)

    units = sorted({_unit_of(n) for n in graph.node_table.nodes},
                   key=lambda u: (u.split(":")[0], int(u.split(":")[1])))
    perm = rng.permutation(len(units))
    sizes = _largest_remainder(len(units), ratios)
    assignment = {}
    cursor = 0
    for size, label in zip(sizes, labels):
        for idx in perm[cursor:cursor + size]:
            assignment[units[int(idx)]] = label
        cursor += size
    return Split("fact", assignment, ratios, seed, labels)


def save_split(directory: str | Path, name: str, sp: Split) -> None:
    sdir = Path(directory) / "splits"
    sdir.mkdir(parents=True, exist_ok=True)
    payload = {
        "mode": sp.mode,
        "ratios": list(sp.ratios),
        "seed": sp.seed,
        "labels": list(sp.labels),
        "assignment": sp.assignment,
    }
    _atomic_write(sdir / f"{name}.json", (_dumps(payload) + "\n").encode("utf-8"))


def load_split(directory: str | Path, name: str) -> Split:
    path = Path(directory) / "splits" / f"{name}.json"
    if not path.exists():
        raise MissingManifestError(f"{path} not found")
    obj = json.loads(path.read_text(encoding="utf-8"))
    return Split(obj["mode"], dict(obj["assignment"]),
                 tuple(obj["ratios"]), int(obj["seed"]), tuple(obj["labels"]))


@dataclass(frozen=True)
class BucketStat:
    lo: int
    hi: int | None
    count: int
    dominant_kind: str | None

    @property
    def label(self) -> str:
        return f"{self.lo}-{self.hi}" if self.hi is not None else f">={self.lo}"


@dataclass(frozen=True)
class Stats:
    node_kind_histogram: dict
    edge_code_histogram: dict
    degree_buckets: tuple
    rho_mean: float
    rho_bucket_estimate: float

    def to_json(self) -> dict:
        return {
            "node_kind_histogram": dict(self.node_kind_histogram),
            "edge_code_histogram": {f"{c:03d}": n
                                    for c, n in sorted(self.edge_code_histogram.items())},
            "degree_buckets": [
                {"range": b.label, "count": b.count,
                 "dominant_kind": b.dominant_kind}
                for b in self.degree_buckets
            ],
            "rho_mean": self.rho_mean,
            "rho_bucket_estimate": self.rho_bucket_estimate,
        }


def compute_stats(graph: Graph) -> Stats:
    """Histograms, degree buckets and mean density rho = 2|E| / |V|.

    Each edge contributes one degree to both endpoints.  The second
    density figure re-estimates rho from bucket midpoints (open bucket
    taken at 18.5), mirroring a bucket-weighted average.
    """
    n = len(graph.node_table)
    kind_hist = {kind: 0 for kind in NODE_KINDS}
    for node in graph.node_table.nodes:
        kind_hist[node.kind] += 1
    kind_hist = {k: v for k, v in kind_hist.items() if v}

    code_hist: dict[int, int] = {}
    degree = np.zeros(n, dtype=np.int64)
    for e in graph.edges:
        code_hist[e.code] = code_hist.get(e.code, 0) + 1
        degree[e.head] += 1
        degree[e.tail] += 1

    buckets = []
    midpoint_sum = 0.0
    for lo, hi in DEGREE_BUCKETS:
        if hi is None:
            member = degree >= lo
        else:
            member = (degree >= lo) & (degree <= hi)
        count = int(member.sum())
        dominant = None
        if count:
            per_kind: dict[str, int] = {}
            for gid in np.nonzero(member)[0]:
                k = graph.node_table.node(int(gid)).kind
                per_kind[k] = per_kind.get(k, 0) + 1
            dominant = min(per_kind, key=lambda k: (-per_kind[k], k))
        midpoint = (lo + hi) / 2.0 if hi is not None else lo + 0.5
        midpoint_sum += midpoint * count
        buckets.append(BucketStat(lo, hi, count, dominant))

    rho = 2.0 * len(graph.edges) / n if n else 0.0
    rho_est = midpoint_sum / n if n else 0.0
    return Stats(kind_hist, code_hist, tuple(buckets), rho, rho_est)


@dataclass(frozen=True)
class SweepPoint:
    tau: float
    edge_count: int
    rho_mean: float


def tau_sweep(nodes: NodeTable, features: FeatureStore, taus,
              structural_edges: int = 0) -> list[SweepPoint]:
    """Similarity-edge count and density at each threshold.

    ``taus`` must be nonempty and ascending.  The candidate set is built
    once at the smallest threshold; higher thresholds filter it, which is
    exact because the threshold test is a pure weight comparison.
    ``structural_edges`` adds a constant non-similarity edge count to the
    density figure (0 measures the similarity overlay alone).
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("taus must be nonempty")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be sorted ascending")
    n = len(nodes)
    base = build_similarity_edges(nodes, features, taus[0])
    out = []
    for tau in taus:
        count = sum(1 for e in base if e.weight >= tau)
        rho = 2.0 * (count + structural_edges) / n if n else 0.0
        out.append(SweepPoint(tau, count, rho))
    return out


def similarity_edge_set(graph: Graph) -> set[tuple[int, int, int]]:
    """The (head, code, tail) triples of the graph's cosine edges."""
    return {(e.head, e.code, e.tail) for e in graph.edges
            if e.code in COSINE_CODES}
