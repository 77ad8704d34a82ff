"""Neighbor-aggregation plug-in: conv + MLP over a stacked neighbor matrix.

A node's new representation e' is computed from the (1+m) x d matrix
whose first row is the node's own vector and whose remaining rows are up
to m neighbor vectors (zero-padded below).  A single-channel 2D valid
convolution with a scalar bias, ReLU, flatten and a one-hidden-layer MLP
map that matrix back to a d-vector.  Forward and backward passes are
written out by hand in numpy so gradients can be verified against finite
differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PluginParams:
    """Trainable state: conv filter, scalar conv bias, two MLP layers."""

    conv: np.ndarray
    conv_bias: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    neighbor_cap: int
    sample_seed: int

    @property
    def dim(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "PluginParams":
        return PluginParams(self.conv.copy(), float(self.conv_bias),
                           self.w1.copy(), self.b1.copy(),
                           self.w2.copy(), self.b2.copy(),
                           self.neighbor_cap, self.sample_seed)


@dataclass
class PluginGrads:
    conv: np.ndarray
    conv_bias: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    center: np.ndarray
    neighbors: np.ndarray


def conv_output_shape(dim: int, cap: int, kh: int = 3, kw: int = 3) -> tuple[int, int]:
    out_h = (1 + cap) - kh + 1
    out_w = dim - kw + 1
    if out_h < 1 or out_w < 1:
        raise ValueError(
            f"conv {kh}x{kw} does not fit a {1 + cap}x{dim} input")
    return out_h, out_w


def init_plugin(dim: int, cap: int, seed: int, kh: int = 3, kw: int = 3,
                hidden: int | None = None) -> PluginParams:
    """Seeded uniform init scaled by fan-in, biases slightly positive so
    the ReLUs start active."""
    if hidden is None:
        hidden = 4 * dim
    out_h, out_w = conv_output_shape(dim, cap, kh, kw)
    flat = out_h * out_w
    rng = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, 0xE92))
    conv = rng.uniform(-1.0, 1.0, size=(kh, kw)) / (kh * kw)
    s1 = np.sqrt(6.0 / (flat + hidden))
    w1 = rng.uniform(-s1, s1, size=(hidden, flat))
    s2 = np.sqrt(6.0 / (hidden + dim))
    w2 = rng.uniform(-s2, s2, size=(dim, hidden))
    return PluginParams(conv=conv, conv_bias=0.01,
                        w1=w1, b1=np.full(hidden, 0.01),
                        w2=w2, b2=np.zeros(dim),
                        neighbor_cap=cap, sample_seed=seed)


def plugin_forward(center: np.ndarray, neighbors: np.ndarray,
                   params: PluginParams):
    """e' for one node.  Returns (output d-vector, cache for backward).

    ``neighbors`` is a (j, d) array with j <= neighbor_cap; missing rows
    are zero-padded.  Pure function of its arguments.
    """
    center = np.asarray(center, dtype=np.float64)
    d = center.shape[0]
    m = params.neighbor_cap
    kh, kw = params.conv.shape
    x = np.zeros((1 + m, d), dtype=np.float64)
    x[0] = center
    j = 0
    if neighbors is not None and len(neighbors):
        neighbors = np.asarray(neighbors, dtype=np.float64)
        j = neighbors.shape[0]
        if j > m:
            raise ValueError(f"{j} neighbors exceed cap {m}")
        x[1:1 + j] = neighbors
    out_h, out_w = (1 + m) - kh + 1, d - kw + 1
    y = np.full((out_h, out_w), params.conv_bias, dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            y += params.conv[u, v] * x[u:u + out_h, v:v + out_w]
    r = np.maximum(y, 0.0)
    f = r.ravel()
    z1 = params.w1 @ f + params.b1
    h1 = np.maximum(z1, 0.0)
    out = params.w2 @ h1 + params.b2
    cache = (x, y, f, z1, h1, j)
    return out, cache


def plugin_backward(grad_out: np.ndarray, cache, params: PluginParams) -> PluginGrads:
    """Adjoint of plugin_forward for a scalar loss with d/d(e') = grad_out."""
    x, y, f, z1, h1, j = cache
    kh, kw = params.conv.shape
    out_h, out_w = y.shape

    g_w2 = np.outer(grad_out, h1)
    g_b2 = np.asarray(grad_out, dtype=np.float64).copy()
    g_h1 = params.w2.T @ grad_out
    g_z1 = g_h1 * (z1 > 0.0)
    g_w1 = np.outer(g_z1, f)
    g_b1 = g_z1
    g_f = params.w1.T @ g_z1
    g_y = g_f.reshape(out_h, out_w) * (y > 0.0)

    g_conv = np.empty_like(params.conv)
    g_x = np.zeros_like(x)
    for u in range(kh):
        for v in range(kw):
            window = x[u:u + out_h, v:v + out_w]
            g_conv[u, v] = float(np.sum(g_y * window))
            g_x[u:u + out_h, v:v + out_w] += params.conv[u, v] * g_y
    g_bias = float(np.sum(g_y))
    return PluginGrads(conv=g_conv, conv_bias=g_bias, w1=g_w1, b1=g_b1,
                       w2=g_w2, b2=g_b2, center=g_x[0],
                       neighbors=g_x[1:1 + j].copy())


def neighbor_sample(entity: int, adjacency: list, cap: int, seed: int) -> list[int]:
    """Up to ``cap`` neighbor ids for one entity.

    ``adjacency`` holds the entity's full sorted neighbor list; when it
    exceeds the cap a uniform sample without replacement is drawn from a
    per-entity seeded stream, so the choice is stable across calls.
    """
    if len(adjacency) <= cap:
        return list(adjacency)
    rng = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, entity))
    picked = rng.choice(len(adjacency), size=cap, replace=False)
    return sorted(adjacency[i] for i in picked)


def build_neighbor_lists(triples: np.ndarray, n_entities: int, cap: int,
                         seed: int) -> list[list[int]]:
    """Per-entity capped neighbor lists from (head, code, tail) triples.

    N(e) collects nodes connected to e in either direction, deduplicated
    and sorted before the seeded down-sample.
    """
    full: list[set[int]] = [set() for _ in range(n_entities)]
    for h, _, t in np.asarray(triples, dtype=np.int64):
        if h != t:
            full[h].add(int(t))
            full[t].add(int(h))
    return [neighbor_sample(e, sorted(full[e]), cap, seed)
            for e in range(n_entities)]
