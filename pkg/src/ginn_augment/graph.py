"""Similarity graph over encoded rows.

Pairwise Euclidean distances (restricted to the attributes both rows observe)
become similarities ``1 / (1 + d)``. Edges are pruned in two percentile steps:
first per row, then over everything that survived. The surviving similarities
are the edge weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

PRUNE_PERCENTILE = 97.72  # +2 sigma under a Gaussian

LABELED = "labeled"
UNLABELED = "unlabeled"
INJECTED = "injected"
TAGS = (LABELED, UNLABELED, INJECTED)

_BLOCK = 64


@dataclass
class GraphAdjacency:
    a: np.ndarray
    tags: tuple[str, ...]

    def __post_init__(self):
        if self.a.shape[0] != self.a.shape[1] or len(self.tags) != self.a.shape[0]:
            raise ValueError("adjacency must be square with one tag per node")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def nodes_tagged(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.tags) if t == tag], dtype=int)

    def degree(self) -> np.ndarray:
        return (self.a > 0).sum(axis=1)


def masked_distance(x_i, m_i, x_j, m_j) -> Optional[float]:
    """Euclidean distance over the shared observed support, or ``None`` if it is empty."""
    x_i, m_i, x_j, m_j = (np.asarray(v, dtype=float) for v in (x_i, m_i, x_j, m_j))
    if not (x_i.shape == m_i.shape == x_j.shape == m_j.shape) or x_i.ndim != 1:
        raise ValueError("masked_distance needs four vectors of equal length")
    shared = m_i * m_j
    if not shared.any():
        return None
    diff = x_i * shared - x_j * shared
    return math.sqrt(float(np.dot(diff, diff)))


def pairwise_similarity(x_a, m_a, x_b, m_b) -> np.ndarray:
    """``1 / (1 + masked distance)`` for every (row of a, row of b); 0 without overlap.

    Each entry is summed in the same column order, so swapping the arguments
    gives the exact transpose.
    """
    x_a, m_a, x_b, m_b = (np.asarray(v, dtype=float) for v in (x_a, m_a, x_b, m_b))
    if x_a.shape[1] != x_b.shape[1]:
        raise ValueError("row widths differ")
    out = np.zeros((x_a.shape[0], x_b.shape[0]))
    for start in range(0, x_a.shape[0], _BLOCK):
        stop = min(start + _BLOCK, x_a.shape[0])
        shared = m_a[start:stop, None, :] * m_b[None, :, :]
        diff = x_a[start:stop, None, :] * shared - x_b[None, :, :] * shared
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        overlap = shared.any(axis=2)
        out[start:stop] = np.where(overlap, 1.0 / (1.0 + dist), 0.0)
    return out


def build_similarity(values, mask) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        raise ValueError("need at least two rows")
    s = pairwise_similarity(values, mask, values, mask)
    # the blocked computation is already symmetric, this pins it bitwise
    s = np.triu(s, 1)
    return s + s.T


def percentile(values, q: float) -> float:
    """Linear interpolation between order statistics (the 'linear' convention)."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty set")
    pos = q / 100.0 * (v.size - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, v.size - 1)
    frac = pos - lo
    return float(v[lo] + (v[hi] - v[lo]) * frac)


def _row_step(s: np.ndarray, q: float) -> np.ndarray:
    n = s.shape[0]
    keep = np.zeros_like(s, dtype=bool)
    off = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = s[i, off[i]]
        tau = percentile(row, q)
        keep[i] = (s[i] >= tau) & (s[i] > 0) & off[i]
    return keep


def two_step_prune(s, tags: Optional[Sequence[str]] = None, q: float = PRUNE_PERCENTILE) -> GraphAdjacency:
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    if n < 2:
        raise ValueError("need at least two nodes")
    keep = _row_step(s, q)
    if keep.any():
        tau = percentile(s[keep], q)
        keep &= s >= tau
    keep = keep | keep.T
    a = np.where(keep, s, 0.0)
    return GraphAdjacency(a, tuple(tags) if tags is not None else (UNLABELED,) * n)


def propagation_operator(a, with_self_loops: bool = True) -> np.ndarray:
    """Symmetric normalisation ``D^-1/2 (A [+ I]) D^-1/2``; zero-degree rows stay zero."""
    a = a.a if isinstance(a, GraphAdjacency) else np.asarray(a, dtype=float)
    if with_self_loops:
        a = a + np.eye(a.shape[0])
    deg = a.sum(axis=1)
    scale = np.sqrt(np.outer(deg, deg))
    op = np.divide(a, scale, out=np.zeros_like(a), where=scale > 0)
    return np.triu(op) + np.triu(op, 1).T


def inject_damaged_nodes(adj: GraphAdjacency, base_values, base_mask, new_values, new_masks,
                         q: float = PRUNE_PERCENTILE) -> GraphAdjacency:
    """Append damaged rows as nodes linked only to unlabeled nodes.

    Only the per-row percentile step is applied. A node left without an edge
    is attached to its most similar candidate. New nodes never link to each
    other. Without unlabeled nodes every original node is a candidate.
    """
    new_values = np.asarray(new_values, dtype=float)
    new_masks = np.asarray(new_masks, dtype=float)
    if np.any(new_masks.sum(axis=1) == 0):
        raise ValueError("injected rows need at least one observed attribute")
    cand = adj.nodes_tagged(UNLABELED)
    if cand.size == 0:
        cand = np.array([i for i, t in enumerate(adj.tags) if t != INJECTED], dtype=int)
    bx = np.asarray(base_values, dtype=float)[cand]
    bm = np.asarray(base_mask, dtype=float)[cand]
    sim = pairwise_similarity(new_values, new_masks, bx, bm)

    n0, k = adj.n, new_values.shape[0]
    a = np.zeros((n0 + k, n0 + k))
    a[:n0, :n0] = adj.a
    for r in range(k):
        row = sim[r]
        tau = percentile(row, q)
        keep = (row >= tau) & (row > 0)
        if not keep.any():
            if row.max() > 0:
                keep[int(np.argmax(row))] = True
            else:
                # no shared support with any candidate: fall back to the plain
                # distance between the zero-filled vectors
                d = np.sqrt(((bx - new_values[r]) ** 2).sum(axis=1))
                j = int(np.argmin(d))
                row = np.zeros_like(row)
                row[j] = 1.0 / (1.0 + d[j])
                keep[j] = True
        cols = cand[keep]
        a[n0 + r, cols] = row[keep]
        a[cols, n0 + r] = row[keep]
    return GraphAdjacency(a, tuple(adj.tags) + (INJECTED,) * k)


def write_edge_list(path, adj: GraphAdjacency) -> None:
    """Text dump: a ``#`` header with node tags, then ``i j weight`` for i < j."""
    with open(path, "w") as fh:
        fh.write(f"# nodes {adj.n}\n")
        for i, t in enumerate(adj.tags):
            fh.write(f"# tag {i} {t}\n")
        ii, jj = np.nonzero(np.triu(adj.a, 1))
        for i, j in zip(ii, jj):
            fh.write(f"{i} {j} {float(adj.a[i, j])!r}\n")


def read_edge_list(path) -> GraphAdjacency:
    n, tags, edges = None, {}, []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if parts[1] == "nodes":
                    n = int(parts[2])
                elif parts[1] == "tag":
                    tags[int(parts[2])] = parts[3]
                continue
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if n is None:
        raise ValueError(f"{path}: missing '# nodes' header")
    a = np.zeros((n, n))
    for i, j, w in edges:
        a[i, j] = a[j, i] = w
    return GraphAdjacency(a, tuple(tags.get(i, UNLABELED) for i in range(n)))
