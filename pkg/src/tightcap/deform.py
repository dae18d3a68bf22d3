"""Embedded deformation graphs.

Graph nodes are farthest-point samples of the surface; every surface point
is bound to its `bind_k` nearest nodes with weights
w = max(0, 1 - d/d_max)^2 (d_max = distance to the (bind_k+1)-th node),
normalized to sum 1. A node k with rotation R_k and translation t_k warps
a point v as R_k (v - g_k) + g_k + t_k, and bound points blend these.

Rotations live as matrices; solver parameters are per-node axis-angle
increments composed on the left (see solver.retract), so all jacobians
here are evaluated at the identity increment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from . import so3
from .spatial import SpatialIndex


def fps_sample(points: np.ndarray, count: int, seed: int = 0) -> np.ndarray:
    """Farthest-point sampling; the seed picks the starting point."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= count <= n:
        raise ValueError(f"cannot sample {count} nodes from {n} points")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(n))
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start
    d2 = ((points - points[start]) ** 2).sum(1)
    for i in range(1, count):
        nxt = int(np.argmax(d2))
        chosen[i] = nxt
        np.minimum(d2, ((points - points[nxt]) ** 2).sum(1), out=d2)
    return chosen


@dataclass
class EDGraph:
    nodes: np.ndarray        # (g, 3) rest node positions
    edges: np.ndarray        # (e, 2) directed node pairs for regularization
    points: np.ndarray       # (n, 3) rest surface points the graph was built on
    bind_idx: np.ndarray     # (n, bind_k)
    bind_w: np.ndarray       # (n, bind_k), rows sum to 1

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_params(self) -> int:
        return 6 * len(self.nodes)


def bind_points(nodes: np.ndarray, points: np.ndarray, bind_k: int = 4
                ) -> Tuple[np.ndarray, np.ndarray]:
    index = SpatialIndex(nodes)
    k = min(bind_k + 1, len(nodes))
    d, idx = index.nearest(points, k)
    if k < 2:
        return idx, np.ones_like(d)
    d_max = d[:, -1:]
    w = np.maximum(0.0, 1.0 - d[:, :-1] / np.maximum(d_max, 1e-12)) ** 2
    s = w.sum(1, keepdims=True)
    flat = (s[:, 0] <= 1e-12)
    if flat.any():  # all bind_k nodes equidistant to the cutoff
        w[flat] = 1.0
        s = w.sum(1, keepdims=True)
    return idx[:, :-1], w / s


def build_ed_graph(points: np.ndarray, node_count: int, seed: int = 0,
                   bind_k: int = 4, graph_k: int = 6) -> EDGraph:
    points = np.asarray(points, dtype=np.float64)
    node_ids = fps_sample(points, node_count, seed=seed)
    nodes = points[node_ids].copy()
    _, nn = SpatialIndex(nodes).nearest(nodes, min(graph_k + 1, node_count))
    pairs = set()
    for k in range(node_count):
        for n in nn[k, 1:]:
            pairs.add((k, int(n)))
            pairs.add((int(n), k))
    edges = np.array(sorted(pairs), dtype=np.int64)
    bind_idx, bind_w = bind_points(nodes, points, bind_k)
    return EDGraph(nodes=nodes, edges=edges, points=points,
                   bind_idx=bind_idx, bind_w=bind_w)


@dataclass
class EDState:
    rot: np.ndarray   # (g, 3, 3)
    t: np.ndarray     # (g, 3)

    @classmethod
    def identity(cls, n_nodes: int) -> "EDState":
        return cls(rot=np.tile(np.eye(3), (n_nodes, 1, 1)),
                   t=np.zeros((n_nodes, 3)))

    def copy(self) -> "EDState":
        return EDState(rot=self.rot.copy(), t=self.t.copy())

    def apply_delta(self, delta: np.ndarray) -> "EDState":
        """Compose per-node increments (omega, dt) onto the state."""
        g = len(self.rot)
        d = delta.reshape(g, 6)
        return EDState(rot=so3.exp_many(d[:, :3]) @ self.rot,
                       t=self.t + d[:, 3:])


def warp_points(graph: EDGraph, state: EDState,
                points: Optional[np.ndarray] = None,
                bind: Optional[Tuple[np.ndarray, np.ndarray]] = None
                ) -> np.ndarray:
    if points is None:
        points = graph.points
        idx, w = graph.bind_idx, graph.bind_w
    else:
        idx, w = bind if bind is not None else bind_points(graph.nodes, points)
    local = points[:, None, :] - graph.nodes[idx]            # (n, k, 3)
    rotated = np.einsum("nkab,nkb->nka", state.rot[idx], local)
    per_node = rotated + graph.nodes[idx] + state.t[idx]
    return np.einsum("nk,nka->na", w, per_node)


def _increment_jacobians(x: np.ndarray, n_nodes: int) -> np.ndarray:
    """Left Jacobians of the per-node rotation increments (exact at x != 0)."""
    d = x.reshape(n_nodes, 6)[:, :3]
    if not d.any():
        return np.broadcast_to(np.eye(3), (n_nodes, 3, 3))
    out = np.empty((n_nodes, 3, 3))
    for k in range(n_nodes):
        out[k] = so3.left_jacobian(d[k])
    return out


def warp_with_jacobian(graph: EDGraph, base: EDState, x: np.ndarray,
                       points: Optional[np.ndarray] = None,
                       bind: Optional[Tuple[np.ndarray, np.ndarray]] = None
                       ) -> Tuple[np.ndarray, sp.csr_matrix]:
    """Warp under base∘x and the exact (3n, 6g) jacobian w.r.t. x."""
    if points is None:
        points = graph.points
        idx, w = graph.bind_idx, graph.bind_w
    else:
        idx, w = bind if bind is not None else bind_points(graph.nodes, points)
    state = base.apply_delta(x)
    n, k = idx.shape
    local = points[:, None, :] - graph.nodes[idx]
    rotated = np.einsum("nkab,nkb->nka", state.rot[idx], local)
    warped = np.einsum("nk,nka->na",
                       w, rotated + graph.nodes[idx] + state.t[idx])

    Jl = _increment_jacobians(x, graph.n_nodes)
    d_rot = -w[:, :, None, None] * (so3.hat_many(rotated) @ Jl[idx])
    d_t = w[:, :, None, None] * np.eye(3)
    rows = np.broadcast_to(
        (3 * np.arange(n))[:, None, None, None]
        + np.arange(3)[None, None, :, None], (n, k, 3, 3))
    col_rot = np.broadcast_to(
        (6 * idx)[:, :, None, None] + np.arange(3)[None, None, None, :],
        (n, k, 3, 3))
    data = np.concatenate([d_rot.ravel(), d_t.ravel()])
    rr = np.concatenate([rows.ravel(), rows.ravel()])
    cc = np.concatenate([col_rot.ravel(), (col_rot + 3).ravel()])
    J = sp.coo_matrix((data, (rr, cc)), shape=(3 * n, graph.n_params)).tocsr()
    return warped, J


def arap_with_jacobian(graph: EDGraph, base: EDState, x: np.ndarray
                       ) -> Tuple[np.ndarray, sp.csr_matrix]:
    """Per directed node pair (k, n): (g_k - g_n) - R_k (rest_k - rest_n),
    with g = rest + t, all under base∘x; exact jacobian w.r.t. x."""
    state = base.apply_delta(x)
    k_ids = graph.edges[:, 0]
    n_ids = graph.edges[:, 1]
    rest_d = graph.nodes[k_ids] - graph.nodes[n_ids]
    rot_d = np.einsum("eab,eb->ea", state.rot[k_ids], rest_d)
    r = (graph.nodes[k_ids] + state.t[k_ids]) \
        - (graph.nodes[n_ids] + state.t[n_ids]) - rot_d

    e = len(graph.edges)
    Jl = _increment_jacobians(x, graph.n_nodes)
    j_rot = so3.hat_many(rot_d) @ Jl[k_ids]                   # (e, 3, 3)
    eye = np.broadcast_to(np.eye(3), (e, 3, 3))
    rows = np.broadcast_to(
        (3 * np.arange(e))[:, None, None] + np.arange(3)[None, :, None],
        (e, 3, 3))

    def cols_for(ids, offset):
        return np.broadcast_to(
            (6 * ids)[:, None, None] + offset + np.arange(3)[None, None, :],
            (e, 3, 3))

    data = np.concatenate([j_rot.ravel(), eye.ravel(), (-eye).ravel()])
    rr = np.concatenate([rows.ravel()] * 3)
    cc = np.concatenate([cols_for(k_ids, 0).ravel(),
                         cols_for(k_ids, 3).ravel(),
                         cols_for(n_ids, 3).ravel()])
    J = sp.coo_matrix((data, (rr, cc)), shape=(3 * e, graph.n_params)).tocsr()
    return r.ravel(), J
