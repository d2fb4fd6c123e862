"""Weighted graphs: ingestion, degrees, normalized Laplacian and spectral encodings."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# |lambda| below this counts as a trivial (per-component) eigenvalue
TRIVIAL_EIG_TOL = 1e-9


class GraphError(ValueError):
    """Raised for malformed graph input or invalid graph queries."""


@dataclass(frozen=True, eq=False)
class Graph:
    adjacency: np.ndarray
    directed: bool = False
    n: int = field(init=False)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise GraphError("graph needs at least one vertex")
        if not np.all(np.isfinite(a)):
            raise GraphError("adjacency contains non-finite weights")
        if np.any(a < 0):
            raise GraphError("negative edge weight")
        if np.any(np.diag(a) != 0):
            raise GraphError("self-loops are not allowed on ingestion")
        if not self.directed and not np.array_equal(a, a.T):
            raise GraphError("undirected graph with asymmetric adjacency")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "n", a.shape[0])

    def symmetrized(self) -> "Graph":
        if not self.directed:
            return self
        return Graph((self.adjacency + self.adjacency.T) / 2.0, directed=False)

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def n_edges(self) -> int:
        a = self.adjacency
        if self.directed:
            return int(np.count_nonzero(a))
        return int(np.count_nonzero(np.triu(a)))


def degree(g: Graph, v: int) -> float:
    if not 0 <= v < g.n:
        raise GraphError(f"vertex {v} out of range for n={g.n}")
    return float(g.adjacency[v].sum())


def volume(g: Graph) -> float:
    return float(g.adjacency.sum())


def load_graph(path, format: str = "edge-list-csv", n: int | None = None,
               directed: bool = False) -> Graph:
    """Read a graph from CSV.

    ``edge-list-csv`` expects a ``src,dst,weight`` header and 0-based ids;
    duplicate edges accumulate and undirected input is mirrored.
    ``adjacency-csv`` is N rows of N comma-separated reals. When ``n`` is
    given, edge-list ids must be below it; otherwise n = max id + 1.
    """
    path = Path(path)
    if not path.exists():
        raise GraphError(f"no such file: {path}")
    text = path.read_text(encoding="utf-8")
    if format == "adjacency-csv":
        rows = [r for r in csv.reader(text.splitlines()) if r]
        if not rows:
            raise GraphError("empty adjacency file")
        try:
            a = np.array([[float(x) for x in r] for r in rows])
        except ValueError as exc:
            raise GraphError(f"parse failure: {exc}") from None
        return Graph(a, directed=directed)
    if format != "edge-list-csv":
        raise GraphError(f"unknown graph format {format!r}")

    rows = list(csv.reader(text.splitlines()))
    if rows and [c.strip() for c in rows[0]] == ["src", "dst", "weight"]:
        rows = rows[1:]
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise GraphError("no edges")
    edges = []
    for lineno, r in enumerate(rows, start=2):
        if len(r) != 3:
            raise GraphError(f"parse failure at line {lineno}: expected 3 fields")
        try:
            s, d, w = int(r[0]), int(r[1]), float(r[2])
        except ValueError:
            raise GraphError(f"parse failure at line {lineno}: {r!r}") from None
        if s < 0 or d < 0:
            raise GraphError(f"negative vertex id at line {lineno}")
        if w < 0:
            raise GraphError(f"negative weight at line {lineno}")
        edges.append((s, d, w))
    max_id = max(max(s, d) for s, d, _ in edges)
    if n is None:
        n = max_id + 1
    elif max_id >= n:
        raise GraphError(f"vertex id {max_id} >= declared n={n}")
    a = np.zeros((n, n))
    for s, d, w in edges:
        if s == d:
            raise GraphError(f"self-loop on vertex {s}")
        a[s, d] += w
        if not directed:
            a[d, s] += w
    return Graph(a, directed=directed)


def save_edge_list(g: Graph, path) -> None:
    a = g.adjacency
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("src,dst,weight\n")
        for i in range(g.n):
            for j in range(g.n):
                if a[i, j] > 0 and (g.directed or i < j):
                    fh.write(f"{i},{j},{float(a[i, j])!r}\n")


def normalized_laplacian(g: Graph) -> np.ndarray:
    """I - D^-1/2 A D^-1/2 on the symmetrized graph.

    Zero-degree vertices get D^-1/2 = 0 and an all-zero row and column.
    """
    a = g.symmetrized().adjacency
    d = a.sum(axis=1)
    inv_sqrt = np.zeros_like(d)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    lap = np.diag(nz.astype(float)) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return lap


@dataclass(frozen=True, eq=False)
class EigenBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _fix_signs(vecs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size and col[idx[0]] < 0:
            vecs[:, j] = -col
    return vecs


def sym_eigendecomposition(m: np.ndarray) -> EigenBasis:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise GraphError(f"expected a square matrix, got {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
        raise GraphError("matrix is not symmetric")
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise GraphError(f"eigensolver failed to converge: {exc}") from None
    return EigenBasis(vals, _fix_signs(vecs))


def laplacian_pe(g: Graph, k: int) -> np.ndarray:
    """Eigenvectors of the k smallest non-trivial normalized-Laplacian eigenvalues."""
    if k < 0 or k > g.n - 1:
        raise GraphError(f"k={k} too large for n={g.n} (need k <= n-1)")
    basis = sym_eigendecomposition(normalized_laplacian(g))
    nontrivial = np.flatnonzero(np.abs(basis.eigenvalues) >= TRIVIAL_EIG_TOL)
    if nontrivial.size < k:
        raise GraphError(
            f"only {nontrivial.size} non-trivial eigenpairs available, k={k} requested")
    return basis.eigenvectors[:, nontrivial[:k]]
