"""Small dense max-flow / min-cut used by the lifting and closure checks."""

from __future__ import annotations

from collections import deque

import numpy as np

# residual capacities at or below this are treated as saturated
TINY = 1e-15


def max_flow(capacity: np.ndarray, source: int, sink: int) -> tuple[float, np.ndarray]:
    """Edmonds-Karp on a dense capacity matrix.

    Returns the flow value and the boolean mask of nodes reachable from the
    source in the final residual graph (the source side of a minimum cut).
    Neighbours are scanned in index order, so the cut is deterministic.
    """
    cap = np.asarray(capacity, dtype=float)
    n = cap.shape[0]
    residual = cap.tolist()
    nz = (cap > 0) | (cap.T > 0)
    adj = [np.flatnonzero(nz[u]).tolist() for u in range(n)]
    total = 0.0
    while True:
        parent = [-1] * n
        parent[source] = source
        queue = deque([source])
        while queue and parent[sink] < 0:
            u = queue.popleft()
            row = residual[u]
            for v in adj[u]:
                if parent[v] < 0 and row[v] > TINY:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            return total, np.array([p >= 0 for p in parent])
        bottleneck = float("inf")
        v = sink
        while v != source:
            u = parent[v]
            bottleneck = min(bottleneck, residual[u][v])
            v = u
        v = sink
        while v != source:
            u = parent[v]
            residual[u][v] -= bottleneck
            residual[v][u] += bottleneck
            v = u
        total += bottleneck


def max_weight_closure(weights: np.ndarray, succ: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximum total weight of a set closed under ``succ`` (u in T, succ[u, v] => v in T).

    Classic reduction to a minimum cut: positive nodes hang off the source,
    negative nodes feed the sink, successor edges get unbounded capacity.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    big = float(np.abs(w).sum()) + 1.0
    src, snk = n, n + 1
    cap = np.zeros((n + 2, n + 2))
    cap[:n, :n] = np.where(succ, big, 0.0)
    np.fill_diagonal(cap[:n, :n], 0.0)
    pos = w > 0
    cap[src, :n] = np.where(pos, w, 0.0)
    cap[:n, snk] = np.where(~pos, -w, 0.0)
    cut, side = max_flow(cap, src, snk)
    closure = side[:n]
    return float(w[pos].sum() - cut), closure
