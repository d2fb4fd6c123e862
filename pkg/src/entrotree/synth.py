"""Deterministic synthetic graphs and traffic-like series used as fixtures."""
from __future__ import annotations

import numpy as np

from .graph import Graph, GraphError

# 2024-01-01 00:00 UTC, a Monday
DEFAULT_START = 1704067200


def _undirected(n, edges):
    a = np.zeros((n, n))
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0
    return Graph(a)


def cycle(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return _undirected(n, [(i, (i + 1) % n) for i in range(n)])


def barbell_triangles() -> Graph:
    # triangles {0,1,2} and {3,4,5} joined by the bridge 2-3
    return _undirected(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)])


def grid(rows: int, cols: int) -> Graph:
    if rows < 1 or cols < 1:
        raise GraphError("grid needs rows, cols >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return _undirected(rows * cols, edges)


def community_labels(n: int, c: int) -> np.ndarray:
    """Contiguous blocks of near-equal size."""
    return np.arange(n) * c // n


def random_community(n: int, c: int, p_in: float = 0.4, p_out: float = 0.03,
                     seed: int = 0, connect: bool = True) -> Graph:
    """Planted-partition graph with ``c`` contiguous communities.

    With ``connect`` set, components are chained by one extra edge between
    their smallest vertices so that spectral encodings are well defined.
    """
    if c < 1 or n < c:
        raise GraphError(f"need 1 <= c <= n, got n={n}, c={c}")
    if not 0.0 <= p_out < p_in <= 1.0:
        raise GraphError("need 0 <= p_out < p_in <= 1")
    rng = np.random.default_rng(seed)
    labels = community_labels(n, c)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    draw = rng.random((n, n)) < prob
    a = np.triu(draw, k=1).astype(float)
    a = a + a.T
    if connect:
        comps = _components(a)
        for prev, nxt in zip(comps, comps[1:]):
            i, j = min(prev), min(nxt)
            a[i, j] = a[j, i] = 1.0
    return Graph(a)


def _components(a: np.ndarray) -> list[list[int]]:
    n = a.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in np.flatnonzero(a[u] > 0):
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def synth_graph(kind: str, params: dict | None = None, seed: int = 0) -> Graph:
    params = dict(params or {})
    try:
        if kind == "cycle":
            return cycle(int(params.get("n", 4)))
        if kind == "barbell-triangles":
            return barbell_triangles()
        if kind == "grid":
            return grid(int(params.get("rows", 3)), int(params.get("cols", 3)))
        if kind == "random-community":
            return random_community(
                int(params.get("n", 30)), int(params.get("c", 3)),
                float(params.get("p_in", 0.4)), float(params.get("p_out", 0.03)),
                seed=seed)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GraphError):
            raise
        raise GraphError(f"invalid params for {kind}: {exc}") from None
    raise GraphError(f"unknown graph kind {kind!r}")


def synth_series(labels: np.ndarray, T: int = 288, channels: int = 3,
                 seed: int = 0, interval: int = 5, noise: float = 0.1) -> np.ndarray:
    """Daily-periodic signal plus noise, T x N x C.

    Each community gets its own phase offset; channel k is scaled by (1 + k/2).
    """
    labels = np.asarray(labels)
    n_comm = int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    steps_per_day = 24 * 60 / interval
    t = np.arange(T)[:, None]
    phase = 2 * np.pi * labels[None, :] / n_comm
    base = 1.0 + 0.5 * np.sin(2 * np.pi * t / steps_per_day + phase)
    scale = 1.0 + 0.5 * np.arange(channels)
    x = base[:, :, None] * scale[None, None, :]
    return x + noise * rng.standard_normal(x.shape)
