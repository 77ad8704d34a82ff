"""Shared generators and independent oracles for the test suite.

Everything here is deliberately written against plain numpy/python so the
library's own vectorized code paths are checked against a second,
simpler implementation.
"""
from __future__ import annotations

import numpy as np

from uknow.symbolize import NodeId, NodeTable, Origin

GRID_W, GRID_H = 20, 10
GRID_MOVES = ((1, 0), (0, 1), (-1, 0), (0, -1))


def grid_triples(seed: int = 0, moves=GRID_MOVES, width: int = GRID_W,
                 height: int = GRID_H):
    """Functional lattice graph: entity (i, j), one relation per move.

    Returns (train, test) int64 arrays with 10% held out after a seeded
    shuffle.  Every relation is a partial bijection on the lattice, so a
    translation model can represent the structure exactly.
    """
    def eid(i, j):
        return i * height + j

    triples = []
    for r, (di, dj) in enumerate(moves):
        for i in range(width):
            for j in range(height):
                ni, nj = i + di, j + dj
                if 0 <= ni < width and 0 <= nj < height:
                    triples.append((eid(i, j), r, eid(ni, nj)))
    rng = np.random.default_rng(seed)
    triples = np.array(triples, dtype=np.int64)
    triples = triples[rng.permutation(len(triples))]
    n_test = len(triples) // 10
    return triples[n_test:], triples[:n_test]


def brute_force_rank(reps: np.ndarray, rel_vec: np.ndarray, entity: int,
                     direction: str, answer: int, filter_ids, norm: str) -> int:
    """Pessimistic filtered rank via a plain per-candidate loop."""
    n = reps.shape[0]
    excluded = set(int(f) for f in filter_ids)
    excluded.discard(int(answer))

    def dist(cand: int) -> float:
        if direction == "tail":
            u = reps[entity] + rel_vec - reps[cand]
        else:
            u = reps[cand] + rel_vec - reps[entity]
        if norm == "L1":
            return float(np.abs(u).sum())
        return float(np.sqrt(np.square(u).sum()))

    d_ans = dist(answer)
    better = 0
    tied = 0
    for cand in range(n):
        if cand in excluded or cand == answer:
            continue
        d = dist(cand)
        if d < d_ans:
            better += 1
        elif d == d_ans:
            tied += 1
    return 1 + better + tied


def expected_rank_baseline(test_triples: np.ndarray, known_triples: np.ndarray,
                           n_entities: int) -> float:
    """Random-scoring baseline MRR from per-query expected ranks.

    For each of the two directions of every test triple the filtered
    candidate pool has n_c entries; a uniformly random ordering gives an
    expected reciprocal rank of H(n_c)/n_c and an expected rank of
    (n_c + 1)/2.  The larger of the two aggregate figures is returned so
    the comparison downstream is the conservative one.
    """
    tails: dict = {}
    heads: dict = {}
    for h, r, t in np.asarray(known_triples, dtype=np.int64):
        tails.setdefault((int(h), int(r)), set()).add(int(t))
        heads.setdefault((int(r), int(t)), set()).add(int(h))
    recip_of_expected = []
    expected_recip = []
    for h, r, t in np.asarray(test_triples, dtype=np.int64):
        h, r, t = int(h), int(r), int(t)
        for n_filtered in (len(tails[(h, r)]), len(heads[(r, t)])):
            n_c = n_entities - (n_filtered - 1)
            harmonic = float(np.sum(1.0 / np.arange(1, n_c + 1)))
            recip_of_expected.append(2.0 / (n_c + 1))
            expected_recip.append(harmonic / n_c)
    return max(float(np.mean(recip_of_expected)), float(np.mean(expected_recip)))


def title_only_table(vectors: np.ndarray) -> NodeTable:
    """Synthetic NodeTable of L2 title nodes, one per row of ``vectors``.

    Node i is the title of fact i with embedding row i; handy for graph
    assembly, split and stats tests that need full control of the node
    universe without running the corpus pipeline.
    """
    vectors = np.asarray(vectors, dtype=np.float32)
    nodes = [
        NodeId(global_id=i, level="L2", modality="text", kind="title",
               origin=Origin("fact", i, "title", None),
               attrs={"embedding_row": i})
        for i in range(vectors.shape[0])
    ]
    return NodeTable(nodes, permutation_seed=0, embeddings=vectors)


def random_instances_plugin(n: int, dim: int = 8, cap: int = 4,
                            hidden: int | None = None, guard: float = 5e-3):
    """Yield n plugin FD instances clear of ReLU kinks.

    Each instance is (params, center, neighbors).  Instances whose conv
    or hidden preactivations fall within ``guard`` of zero are redrawn,
    because a finite-difference step across a kink is not comparable to
    the one-sided analytic gradient.
    """
    from uknow.plugin import init_plugin, plugin_forward

    out = []
    attempt = 0
    while len(out) < n:
        rng = np.random.default_rng((0xFD, attempt))
        attempt += 1
        params = init_plugin(dim, cap, seed=attempt, hidden=hidden)
        params.conv = rng.uniform(-0.5, 0.5, size=params.conv.shape)
        params.conv_bias = float(rng.uniform(-0.2, 0.2))
        center = rng.normal(size=dim)
        j = int(rng.integers(0, cap + 1))
        neighbors = rng.normal(size=(j, dim)) if j else None
        _, cache = plugin_forward(center, neighbors, params)
        _, y, _, z1, _, _ = cache
        if np.min(np.abs(y)) <= guard or np.min(np.abs(z1)) <= guard:
            continue
        out.append((params, center, neighbors))
    return out


def fd_max_rel_err(params, center, neighbors, step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference grads.

    The probe loss is w . e' for a fixed random w, so the output adjoint
    is exactly w and every parameter, the center vector and each sampled
    neighbor row get checked coordinate by coordinate.
    """
    from uknow.plugin import plugin_backward, plugin_forward

    rng = np.random.default_rng(0xA11)
    w = rng.normal(size=params.dim)

    def loss() -> float:
        out, _ = plugin_forward(center, neighbors, params)
        return float(w @ out)

    _, cache = plugin_forward(center, neighbors, params)
    grads = plugin_backward(w, cache, params)

    worst = 0.0

    def check(array, grad):
        nonlocal worst
        it = np.nditer(array, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = array[idx]
            array[idx] = orig + step
            up = loss()
            array[idx] = orig - step
            down = loss()
            array[idx] = orig
            fd = (up - down) / (2.0 * step)
            an = float(np.asarray(grad)[idx])
            err = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            worst = max(worst, err)
            it.iternext()

    check(params.conv, grads.conv)
    check(params.w1, grads.w1)
    check(params.b1, grads.b1)
    check(params.w2, grads.w2)
    check(params.b2, grads.b2)
    check(center, grads.center)
    if neighbors is not None and len(neighbors):
        check(neighbors, grads.neighbors)

    bias = params.conv_bias
    params.conv_bias = bias + step
    up = loss()
    params.conv_bias = bias - step
    down = loss()
    params.conv_bias = bias
    fd = (up - down) / (2.0 * step)
    err = abs(fd - grads.conv_bias) / max(abs(fd), abs(grads.conv_bias), 1e-6)
    return max(worst, err)
