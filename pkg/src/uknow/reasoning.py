"""Translation-embedding link prediction over graph triples.

TransE scores a triple by the distance ||e_h + e_r - e_t|| under L1 or
L2; training minimizes the margin ranking loss against filtered uniform
negatives with plain SGD, all gradients written out in numpy.  The
neighbor-aggregation plug-in can replace raw entity vectors with
aggregated representations at scoring time for both training and
evaluation.  Ranking is filtered and pessimistic about ties.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .construct import Graph
from .errors import DivergenceError, MissingManifestError
from .plugin import (
    PluginParams,
    build_neighbor_lists,
    init_plugin,
    plugin_backward,
    plugin_forward,
)
from .symbolize import N_CODES

MODEL_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    dim: int = 64
    margin: float = 1.0
    lr: float = 0.01
    epochs: int = 100
    negatives: int = 1
    norm: str = "L1"
    seed: int = 0
    plugin: bool = False
    neighbor_cap: int = 8
    conv_kh: int = 3
    conv_kw: int = 3
    hidden: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.norm not in ("L1", "L2"):
            raise ValueError(f"norm must be L1 or L2, got {self.norm!r}")
        if self.plugin and self.neighbor_cap < self.conv_kh - 1:
            raise ValueError("neighbor cap too small for the conv filter")


@dataclass
class EmbeddingTable:
    """|V| x d entity vectors plus one vector per registry code (114)."""

    entities: np.ndarray
    relations: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.entities.shape[1])

    @property
    def n_entities(self) -> int:
        return int(self.entities.shape[0])

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.entities.copy(), self.relations.copy())


@dataclass(frozen=True)
class TripleQuery:
    """(entity, relation, ?) or (?, relation, entity) link query.

    ``direction`` is "tail" when ``entity`` is the head and the tail is
    predicted, "head" for the converse.
    """

    entity: int
    relation: int
    direction: str = "tail"


@dataclass
class TripleSet:
    """Training/eval triples plus the known-positive set used for
    filtered negative sampling."""

    triples: np.ndarray
    n_entities: int
    filter_triples: np.ndarray | None = None

    def __post_init__(self):
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if self.filter_triples is None:
            self.filter_triples = self.triples
        else:
            self.filter_triples = np.asarray(self.filter_triples,
                                             dtype=np.int64).reshape(-1, 3)

    @classmethod
    def from_graph(cls, graph: Graph, split=None, label: str | None = None
                   ) -> "TripleSet":
        if split is not None and label is not None:
            triples = split.triples_for(graph, label)
        else:
            triples = graph.triples()
        return cls(triples, len(graph.node_table), graph.triples())


def init_embeddings(source, cfg: TrainConfig):
    """Seeded uniform init in [-6/sqrt(d), 6/sqrt(d)]; entity rows are
    renormalized to unit L2.  Returns (table, plugin params or None)."""
    if isinstance(source, Graph):
        n_entities = len(source.node_table)
    elif isinstance(source, TripleSet):
        n_entities = source.n_entities
    else:
        n_entities = int(source)
    if n_entities < 1:
        raise ValueError("need at least one entity")
    bound = 6.0 / np.sqrt(cfg.dim)
    rng = np.random.default_rng(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    entities = rng.uniform(-bound, bound, size=(n_entities, cfg.dim))
    entities = _renormalize(entities)
    relations = rng.uniform(-bound, bound, size=(N_CODES, cfg.dim))
    table = EmbeddingTable(entities, relations)
    params = None
    if cfg.plugin:
        params = init_plugin(cfg.dim, cfg.neighbor_cap, cfg.seed,
                             cfg.conv_kh, cfg.conv_kw, cfg.hidden)
    return table, params


def _renormalize(entities: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(entities, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return entities / norms


def _dist_and_grad(u: np.ndarray, norm: str):
    if norm == "L1":
        return float(np.abs(u).sum()), np.sign(u)
    n = float(np.linalg.norm(u))
    return n, (u / n if n > 0 else np.zeros_like(u))


def transe_score(h: int, r: int, t: int, table: EmbeddingTable,
                 norm: str = "L1") -> float:
    """||e_h + e_r - e_t|| under the given norm; lower is better."""
    n = table.n_entities
    if not (0 <= h < n and 0 <= t < n):
        raise ValueError(f"entity id out of range: {h}, {t} (n={n})")
    if not 0 <= r < N_CODES:
        raise ValueError(f"relation code {r} outside 0..{N_CODES - 1}")
    if norm not in ("L1", "L2"):
        raise ValueError(f"norm must be L1 or L2, got {norm!r}")
    u = table.entities[h] + table.relations[r] - table.entities[t]
    return _dist_and_grad(u, norm)[0]


def margin_loss(d_pos: float, d_neg: float, margin: float) -> float:
    """max(0, margin + d_pos - d_neg)."""
    return max(0.0, margin + d_pos - d_neg)


def neighbor_aggregate(entity: int, source, table: EmbeddingTable,
                       params: PluginParams) -> np.ndarray:
    """Aggregated representation e' of one entity.

    ``source`` supplies the neighbor structure: a Graph, an (n, 3) triple
    array, or precomputed per-entity neighbor lists.  The capped neighbor
    choice is seeded per entity, so repeated calls agree.
    """
    lists = _neighbor_lists_from(source, table.n_entities, params)
    neigh = table.entities[lists[entity]] if lists[entity] else None
    out, _ = plugin_forward(table.entities[entity], neigh, params)
    return out


def _neighbor_lists_from(source, n_entities: int, params: PluginParams):
    if isinstance(source, Graph):
        triples = source.triples()
    elif isinstance(source, TripleSet):
        triples = source.triples
    elif isinstance(source, np.ndarray):
        triples = source
    else:
        return source
    return build_neighbor_lists(triples, n_entities, params.neighbor_cap,
                                params.sample_seed)


@dataclass
class Model:
    table: EmbeddingTable
    plugin: PluginParams | None
    neighbor_lists: list | None
    loss_curve: list
    cfg: TrainConfig

    def entity_reps(self) -> np.ndarray:
        """Representation matrix used for scoring: raw vectors, or the
        plug-in output per entity when enabled."""
        if self.plugin is None:
            return self.table.entities
        reps = np.empty_like(self.table.entities)
        for e in range(self.table.n_entities):
            lists = self.neighbor_lists[e]
            neigh = self.table.entities[lists] if lists else None
            reps[e], _ = plugin_forward(self.table.entities[e], neigh,
                                        self.plugin)
        return reps


def _rep_with_cache(table, plugin, neighbor_lists, e):
    lists = neighbor_lists[e]
    neigh = table.entities[lists] if lists else None
    return plugin_forward(table.entities[e], neigh, plugin)


def train_step(table: EmbeddingTable, plugin, neighbor_lists,
               pos: tuple[int, int, int], neg: tuple[int, int, int],
               cfg: TrainConfig) -> float:
    """One SGD update from a (positive, negative) pair; returns the loss.

    No parameter changes when the hinge is inactive.  With the plug-in
    on, gradients flow through every involved representation into the
    conv/MLP parameters, the center vectors and the sampled neighbors.
    """
    h, r, t = pos
    h2, r2, t2 = neg
    if plugin is None:
        u_pos = table.entities[h] + table.relations[r] - table.entities[t]
        u_neg = table.entities[h2] + table.relations[r2] - table.entities[t2]
    else:
        ids = sorted({h, t, h2, t2})
        rep = {}
        cache = {}
        for e in ids:
            rep[e], cache[e] = _rep_with_cache(table, plugin, neighbor_lists, e)
        u_pos = rep[h] + table.relations[r] - rep[t]
        u_neg = rep[h2] + table.relations[r2] - rep[t2]

    d_pos, g_pos = _dist_and_grad(u_pos, cfg.norm)
    d_neg, g_neg = _dist_and_grad(u_neg, cfg.norm)
    loss = margin_loss(d_pos, d_neg, cfg.margin)
    if loss <= 0.0:
        return loss

    lr = cfg.lr
    rel_grad: dict[int, np.ndarray] = {}
    rel_grad[r] = rel_grad.get(r, 0) + g_pos
    rel_grad[r2] = rel_grad.get(r2, 0) - g_neg

    if plugin is None:
        ent_grad: dict[int, np.ndarray] = {}
        for e, g in ((h, g_pos), (t, -g_pos), (h2, -g_neg), (t2, g_neg)):
            ent_grad[e] = ent_grad.get(e, 0) + g
        for e, g in ent_grad.items():
            table.entities[e] -= lr * g
    else:
        rep_grad: dict[int, np.ndarray] = {}
        for e, g in ((h, g_pos), (t, -g_pos), (h2, -g_neg), (t2, g_neg)):
            rep_grad[e] = rep_grad.get(e, 0) + g
        ent_grad = {}
        p_conv = np.zeros_like(plugin.conv)
        p_bias = 0.0
        p_w1 = np.zeros_like(plugin.w1)
        p_b1 = np.zeros_like(plugin.b1)
        p_w2 = np.zeros_like(plugin.w2)
        p_b2 = np.zeros_like(plugin.b2)
        for e, g in rep_grad.items():
            grads = plugin_backward(g, cache[e], plugin)
            p_conv += grads.conv
            p_bias += grads.conv_bias
            p_w1 += grads.w1
            p_b1 += grads.b1
            p_w2 += grads.w2
            p_b2 += grads.b2
            ent_grad[e] = ent_grad.get(e, 0) + grads.center
            for slot, nid in enumerate(neighbor_lists[e]):
                ent_grad[nid] = ent_grad.get(nid, 0) + grads.neighbors[slot]
        for e, g in ent_grad.items():
            table.entities[e] -= lr * g
        plugin.conv -= lr * p_conv
        plugin.conv_bias -= lr * p_bias
        plugin.w1 -= lr * p_w1
        plugin.b1 -= lr * p_b1
        plugin.w2 -= lr * p_w2
        plugin.b2 -= lr * p_b2

    for code, g in rel_grad.items():
        table.relations[code] -= lr * g
    return loss


def train(data: TripleSet, cfg: TrainConfig) -> Model:
    """Margin-ranking SGD over the triple set; deterministic per seed.

    Negatives corrupt head or tail uniformly and are rejected while they
    collide with a known positive (up to a bounded number of redraws).
    Entity vectors are renormalized after every epoch; a non-finite
    epoch loss raises a divergence error naming the epoch.
    """
    triples = data.triples
    if triples.shape[0] == 0:
        raise ValueError("training triples must be nonempty")
    table, plugin_params = init_embeddings(data, cfg)
    neighbor_lists = None
    if cfg.plugin:
        neighbor_lists = build_neighbor_lists(
            triples, data.n_entities, cfg.neighbor_cap, cfg.seed)
    known = {(int(a), int(b), int(c)) for a, b, c in data.filter_triples}
    rng = np.random.default_rng((cfg.seed & 0xFFFFFFFFFFFFFFFF, 0x51EB))
    n = triples.shape[0]
    loss_curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        count = 0
        for idx in order:
            h, r, t = (int(x) for x in triples[idx])
            for _ in range(cfg.negatives):
                corrupt_head = bool(rng.random() < 0.5)
                cand = int(rng.integers(data.n_entities))
                for _ in range(100):
                    neg = (cand, r, t) if corrupt_head else (h, r, cand)
                    if neg not in known:
                        break
                    cand = int(rng.integers(data.n_entities))
                else:
                    neg = (cand, r, t) if corrupt_head else (h, r, cand)
                total += train_step(table, plugin_params, neighbor_lists,
                                    (h, r, t), neg, cfg)
                count += 1
        table.entities = _renormalize(table.entities)
        mean_loss = total / count if count else 0.0
        if not np.isfinite(mean_loss):
            raise DivergenceError(epoch)
        loss_curve.append(mean_loss)
    return Model(table=table, plugin=plugin_params,
                 neighbor_lists=neighbor_lists, loss_curve=loss_curve, cfg=cfg)


def rank_answer(query: TripleQuery, answer: int, model: Model,
                filter_ids=(), reps: np.ndarray | None = None) -> int:
    """Filtered pessimistic rank of ``answer`` for the query.

    Candidates are all entities minus the other known true answers in
    ``filter_ids``.  Rank counts strictly better candidates plus every
    tied non-answer candidate, so constant scores rank last.
    """
    if reps is None:
        reps = model.entity_reps()
    n = reps.shape[0]
    if not 0 <= answer < n:
        raise ValueError(f"answer id {answer} out of range")
    if not 0 <= query.relation < N_CODES:
        raise ValueError(f"relation code {query.relation} outside 0..113")
    if not 0 <= query.entity < n:
        raise ValueError(f"query entity {query.entity} out of range")
    if query.direction not in ("tail", "head"):
        raise ValueError(f"direction must be tail or head, got {query.direction!r}")
    r_vec = model.table.relations[query.relation]
    if query.direction == "tail":
        diff = reps[query.entity] + r_vec - reps
    else:
        diff = reps + r_vec - reps[query.entity]
    if model.cfg.norm == "L1":
        scores = np.abs(diff).sum(axis=1)
    else:
        scores = np.linalg.norm(diff, axis=1)
    include = np.ones(n, dtype=bool)
    for fid in filter_ids:
        include[fid] = False
    include[answer] = True
    s_ans = scores[answer]
    better = int(np.count_nonzero((scores < s_ans) & include))
    tied = int(np.count_nonzero((scores == s_ans) & include)) - 1
    return 1 + better + tied


def metrics_from_ranks(ranks) -> dict:
    """MRR and Hits@{1,3,10} from a list of integer ranks >= 1."""
    ranks = np.asarray(list(ranks), dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("ranks must be nonempty")
    if np.any(ranks < 1):
        raise ValueError("ranks must be >= 1")
    return {
        "mrr": float(np.mean(1.0 / ranks)),
        "h@1": float(np.mean(ranks <= 1)),
        "h@3": float(np.mean(ranks <= 3)),
        "h@10": float(np.mean(ranks <= 10)),
        "n_queries": int(ranks.size),
    }


def evaluate(model: Model, test_triples: np.ndarray,
             known_triples: np.ndarray | None = None) -> dict:
    """Filtered MRR and Hits@{1,3,10} over both query directions.

    ``known_triples`` supplies the filter set (all positives from every
    partition); the test triples themselves are always included.
    """
    test_triples = np.asarray(test_triples, dtype=np.int64).reshape(-1, 3)
    if test_triples.shape[0] == 0:
        raise ValueError("test triples must be nonempty")
    tails: dict[tuple[int, int], set] = {}
    heads: dict[tuple[int, int], set] = {}

    def absorb(arr):
        for h, r, t in arr:
            tails.setdefault((int(h), int(r)), set()).add(int(t))
            heads.setdefault((int(r), int(t)), set()).add(int(h))

    absorb(test_triples)
    if known_triples is not None:
        absorb(np.asarray(known_triples, dtype=np.int64).reshape(-1, 3))

    reps = model.entity_reps()
    ranks = []
    for h, r, t in test_triples:
        h, r, t = int(h), int(r), int(t)
        ranks.append(rank_answer(TripleQuery(h, r, "tail"), t, model,
                                 tails[(h, r)], reps))
        ranks.append(rank_answer(TripleQuery(t, r, "head"), h, model,
                                 heads[(r, t)], reps))
    return metrics_from_ranks(ranks)


def save_model(model: Model, directory: str | Path) -> None:
    """Write model.json plus one .npy per array; deterministic bytes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / "entities.npy", model.table.entities,
            allow_pickle=False)
    np.save(directory / "relations.npy", model.table.relations,
            allow_pickle=False)
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "cfg": asdict(model.cfg),
        "loss_curve": model.loss_curve,
        "neighbor_lists": model.neighbor_lists,
        "plugin": None,
    }
    if model.plugin is not None:
        np.save(directory / "plugin_conv.npy", model.plugin.conv,
                allow_pickle=False)
        np.save(directory / "plugin_w1.npy", model.plugin.w1, allow_pickle=False)
        np.save(directory / "plugin_b1.npy", model.plugin.b1, allow_pickle=False)
        np.save(directory / "plugin_w2.npy", model.plugin.w2, allow_pickle=False)
        np.save(directory / "plugin_b2.npy", model.plugin.b2, allow_pickle=False)
        meta["plugin"] = {
            "conv_bias": model.plugin.conv_bias,
            "neighbor_cap": model.plugin.neighbor_cap,
            "sample_seed": model.plugin.sample_seed,
        }
    payload = json.dumps(meta, sort_keys=True, separators=(",", ":"))
    (directory / "model.json").write_text(payload + "\n", encoding="utf-8")


def load_model(directory: str | Path) -> Model:
    directory = Path(directory)
    meta_path = directory / "model.json"
    if not meta_path.exists():
        raise MissingManifestError(f"{meta_path} not found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    cfg = TrainConfig(**meta["cfg"])
    table = EmbeddingTable(np.load(directory / "entities.npy"),
                           np.load(directory / "relations.npy"))
    plugin = None
    if meta["plugin"] is not None:
        plugin = PluginParams(
            conv=np.load(directory / "plugin_conv.npy"),
            conv_bias=float(meta["plugin"]["conv_bias"]),
            w1=np.load(directory / "plugin_w1.npy"),
            b1=np.load(directory / "plugin_b1.npy"),
            w2=np.load(directory / "plugin_w2.npy"),
            b2=np.load(directory / "plugin_b2.npy"),
            neighbor_cap=int(meta["plugin"]["neighbor_cap"]),
            sample_seed=int(meta["plugin"]["sample_seed"]),
        )
    return Model(table=table, plugin=plugin,
                 neighbor_lists=meta["neighbor_lists"],
                 loss_curve=list(meta["loss_curve"]), cfg=cfg)
