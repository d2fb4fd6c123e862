"""Encoding trees over a graph and their structural entropy.

A tree node caches its cut weight ``g`` (edge weight crossing the boundary of
its vertex set) and its volume ``V`` (sum of degrees inside). Both are taken
on the symmetrized graph. Leaves hold exactly one vertex each.

The greedy minimizer starts from the flat tree and repeatedly applies the
sibling ``combine`` or ``merge`` with the most negative entropy change.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .graph import Graph

OPS = ("combine", "merge")
_TIE_WINDOW = 1e-12


class TreeError(ValueError):
    pass


@dataclass
class TreeNode:
    id: int
    parent: int | None
    children: list[int] = field(default_factory=list)
    vertex: int | None = None
    g: float = 0.0
    V: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.vertex is not None


@dataclass
class EncodingTree:
    nodes: dict[int, TreeNode]
    root: int
    leaf_of: dict[int, int]
    adjacency: np.ndarray | None = field(default=None, repr=False, compare=False)

    def copy(self) -> "EncodingTree":
        return EncodingTree(copy.deepcopy(self.nodes), self.root, dict(self.leaf_of),
                            self.adjacency)

    @property
    def vol(self) -> float:
        return self.nodes[self.root].V

    def _new_id(self) -> int:
        return max(self.nodes) + 1

    def vertices(self, a: int) -> list[int]:
        out = []
        stack = [a]
        while stack:
            node = self.nodes[stack.pop()]
            if node.is_leaf:
                out.append(node.vertex)
            else:
                stack.extend(node.children)
        return sorted(out)

    def rep(self, a: int) -> int:
        """Smallest vertex id under ``a``; used for deterministic tie-breaks."""
        return self.vertices(a)[0]

    def depth(self, a: int) -> int:
        d = 0
        while self.nodes[a].parent is not None:
            a = self.nodes[a].parent
            d += 1
        return d

    def subtree_height(self, a: int) -> int:
        node = self.nodes[a]
        if node.is_leaf or not node.children:
            return 0
        return 1 + max(self.subtree_height(c) for c in node.children)

    @property
    def height(self) -> int:
        return self.subtree_height(self.root)

    def iter_nodes(self) -> Iterator[TreeNode]:
        """Breadth-first from the root, children in stored order."""
        queue = [self.root]
        while queue:
            nid = queue.pop(0)
            node = self.nodes[nid]
            yield node
            queue.extend(node.children)

    def internal_nodes(self) -> list[int]:
        return [n.id for n in self.iter_nodes() if not n.is_leaf]

    def path_to_root(self, a: int) -> list[int]:
        path = [a]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path

    def _adj(self) -> np.ndarray:
        if self.adjacency is None:
            raise TreeError("tree is not bound to a graph; load it with a Graph")
        return self.adjacency

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "encoding-tree/1",
            "n": len(self.leaf_of),
            "root": self.root,
            "nodes": [
                {"id": n.id, "parent": n.parent, "children": list(n.children),
                 "vertex": n.vertex, "g": n.g, "V": n.V}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict, g: Graph | None = None) -> "EncodingTree":
        try:
            nodes = {}
            for rec in data["nodes"]:
                nodes[int(rec["id"])] = TreeNode(
                    id=int(rec["id"]),
                    parent=None if rec["parent"] is None else int(rec["parent"]),
                    children=[int(c) for c in rec["children"]],
                    vertex=None if rec["vertex"] is None else int(rec["vertex"]),
                    g=float(rec["g"]), V=float(rec["V"]))
            root = int(data["root"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TreeError(f"malformed tree record: {exc}") from None
        if root not in nodes:
            raise TreeError("root id not among nodes")
        leaf_of = {n.vertex: n.id for n in nodes.values() if n.is_leaf}
        adj = None if g is None else g.symmetrized().adjacency
        return cls(nodes, root, leaf_of, adj)

    @classmethod
    def from_json(cls, text: str, g: Graph | None = None) -> "EncodingTree":
        return cls.from_dict(json.loads(text), g)


def _cut_and_volume(adj: np.ndarray, verts) -> tuple[float, float]:
    verts = list(verts)
    rows = adj[verts]
    vol = float(rows.sum())
    inside = float(rows[:, verts].sum())
    return vol - inside, vol


def flat_tree(g: Graph) -> EncodingTree:
    adj = g.symmetrized().adjacency
    deg = adj.sum(axis=1)
    root = TreeNode(id=g.n, parent=None, children=list(range(g.n)), g=0.0,
                    V=float(deg.sum()))
    nodes = {root.id: root}
    for v in range(g.n):
        nodes[v] = TreeNode(id=v, parent=root.id, vertex=v, g=float(deg[v]),
                            V=float(deg[v]))
    return EncodingTree(nodes, root.id, {v: v for v in range(g.n)}, adj)


def tree_from_partition(g: Graph, blocks) -> EncodingTree:
    """Two-level tree: one community node per block of size >= 2.

    Singleton blocks stay as leaves directly under the root.
    """
    t = flat_tree(g)
    root = t.nodes[t.root]
    new_children = []
    placed = set()
    for block in sorted((sorted(b) for b in blocks), key=lambda b: b[0]):
        if len(block) == 1:
            new_children.append(block[0])
            placed.add(block[0])
            continue
        gid = t._new_id()
        gg, vv = _cut_and_volume(t.adjacency, block)
        t.nodes[gid] = TreeNode(id=gid, parent=t.root, children=list(block), g=gg, V=vv)
        for v in block:
            t.nodes[v].parent = gid
            placed.add(v)
        new_children.append(gid)
    if placed != set(range(g.n)):
        raise TreeError("blocks do not partition the vertex set")
    root.children = new_children
    return t


# -- entropy ------------------------------------------------------------------

def _term(g_a: float, v_a: float, v_parent: float, vol: float) -> float:
    if g_a == 0 or v_a == v_parent:
        return 0.0
    return -(g_a / vol) * math.log2(v_a / v_parent)


def node_entropy(g: Graph | None, t: EncodingTree, a: int) -> float:
    """Entropy contribution in bits of non-root node ``a``."""
    if a == t.root:
        raise TreeError("node entropy is not defined for the root")
    node = t.nodes[a]
    return _term(node.g, node.V, t.nodes[node.parent].V, t.vol)


def structural_entropy(g: Graph | None, t: EncodingTree) -> float:
    if t.vol == 0:
        return 0.0
    return sum(node_entropy(g, t, n.id) for n in t.iter_nodes() if n.id != t.root)


def one_dim_entropy(g: Graph) -> float:
    """-sum (d/vol) log2(d/vol); equals the flat-tree structural entropy."""
    d = g.symmetrized().degrees()
    vol = d.sum()
    if vol == 0:
        return 0.0
    p = d[d > 0] / vol
    return float(-(p * np.log2(p)).sum())


# -- operators ----------------------------------------------------------------

def _check_siblings(t: EncodingTree, a: int, b: int) -> int:
    if a == b:
        raise TreeError("operator needs two distinct nodes")
    for x in (a, b):
        if x not in t.nodes:
            raise TreeError(f"unknown node {x}")
        if x == t.root:
            raise TreeError("root cannot take part in combine/merge")
    p = t.nodes[a].parent
    if p != t.nodes[b].parent:
        raise TreeError(f"nodes {a} and {b} are not siblings")
    return p


def _pair_weight(t: EncodingTree, a: int, b: int) -> float:
    adj = t._adj()
    return float(adj[np.ix_(t.vertices(a), t.vertices(b))].sum())


def _combine_inplace(t: EncodingTree, a: int, b: int, w_ab: float | None = None) -> int:
    p = _check_siblings(t, a, b)
    if w_ab is None:
        w_ab = _pair_weight(t, a, b)
    na, nb = t.nodes[a], t.nodes[b]
    gid = t._new_id()
    parent = t.nodes[p]
    first = min(parent.children.index(a), parent.children.index(b))
    ordered = [c for c in parent.children if c in (a, b)]
    t.nodes[gid] = TreeNode(id=gid, parent=p, children=ordered,
                            g=na.g + nb.g - 2.0 * w_ab, V=na.V + nb.V)
    parent.children = [c for c in parent.children if c not in (a, b)]
    parent.children.insert(first, gid)
    na.parent = nb.parent = gid
    return gid


def _merge_inplace(t: EncodingTree, a: int, b: int, w_ab: float | None = None) -> int:
    p = _check_siblings(t, a, b)
    na, nb = t.nodes[a], t.nodes[b]
    if na.is_leaf or nb.is_leaf:
        raise TreeError("merge requires two non-leaf siblings")
    if w_ab is None:
        w_ab = _pair_weight(t, a, b)
    gid = t._new_id()
    parent = t.nodes[p]
    i_a, i_b = parent.children.index(a), parent.children.index(b)
    first, second = (na, nb) if i_a < i_b else (nb, na)
    kids = first.children + second.children
    t.nodes[gid] = TreeNode(id=gid, parent=p, children=kids,
                            g=na.g + nb.g - 2.0 * w_ab, V=na.V + nb.V)
    for c in kids:
        t.nodes[c].parent = gid
    parent.children = [c for c in parent.children if c not in (a, b)]
    parent.children.insert(min(i_a, i_b), gid)
    del t.nodes[a], t.nodes[b]
    return gid


def combine(t: EncodingTree, a: int, b: int) -> EncodingTree:
    """Insert a new node over siblings ``a`` and ``b``; returns a new tree."""
    out = t.copy()
    _combine_inplace(out, a, b)
    return out


def merge(t: EncodingTree, a: int, b: int) -> EncodingTree:
    """Fuse non-leaf siblings ``a`` and ``b`` into one node adopting all their children."""
    out = t.copy()
    _merge_inplace(out, a, b)
    return out


def _log2_ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((num > 0) & (den > 0), np.log2(np.where(num > 0, num, 1.0)
                                                        / np.where(den > 0, den, 1.0)), 0.0)


def _terms(g_a, v_a, v_p, vol):
    g_a = np.asarray(g_a, dtype=float)
    return np.where(g_a > 0, -(g_a / vol) * _log2_ratio(np.asarray(v_a, float),
                                                          np.asarray(v_p, float)), 0.0)


def entropy_delta(g: Graph | None, t: EncodingTree, op: str, a: int, b: int) -> float:
    """Change in structural entropy caused by ``op(a, b)``, from local terms only."""
    if op not in OPS:
        raise TreeError(f"unknown operator {op!r}")
    p = _check_siblings(t, a, b)
    na, nb = t.nodes[a], t.nodes[b]
    if op == "merge" and (na.is_leaf or nb.is_leaf):
        raise TreeError("merge requires two non-leaf siblings")
    vol = t.vol
    if vol == 0:
        return 0.0
    w_ab = _pair_weight(t, a, b)
    g_new, v_new = na.g + nb.g - 2.0 * w_ab, na.V + nb.V
    v_p = t.nodes[p].V
    delta = _term(g_new, v_new, v_p, vol)
    if op == "combine":
        for x in (na, nb):
            delta += _term(x.g, x.V, v_new, vol) - _term(x.g, x.V, v_p, vol)
        return delta
    delta -= _term(na.g, na.V, v_p, vol) + _term(nb.g, nb.V, v_p, vol)
    for x in (na, nb):
        for c in x.children:
            nc = t.nodes[c]
            delta += _term(nc.g, nc.V, v_new, vol) - _term(nc.g, nc.V, x.V, vol)
    return delta


# -- greedy minimization --------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    iteration: int
    operator: str
    a: int
    b: int
    created: int
    delta: float
    entropy: float


@dataclass(frozen=True)
class _Candidate:
    delta: float
    key: tuple
    op: str
    a: int
    b: int
    w_ab: float


def _sibling_candidates(t: EncodingTree, p: int, vol: float) -> list[_Candidate]:
    """Every combine/merge over unordered sibling pairs under ``p``, vectorized."""
    kids = t.nodes[p].children
    k = len(kids)
    if k < 2:
        return []
    adj = t._adj()
    n = adj.shape[0]
    member = np.zeros((k, n))
    reps = np.empty(k, dtype=int)
    for i, c in enumerate(kids):
        vs = t.vertices(c)
        member[i, vs] = 1.0
        reps[i] = vs[0]
    w = member @ adj @ member.T
    g = np.array([t.nodes[c].g for c in kids])
    v = np.array([t.nodes[c].V for c in kids])
    v_p = t.nodes[p].V
    leaf = np.array([t.nodes[c].is_leaf for c in kids])
    child_g = np.array([sum(t.nodes[cc].g for cc in t.nodes[c].children) for c in kids])

    iu, ju = np.triu_indices(k, 1)
    g_new = g[iu] + g[ju] - 2.0 * w[iu, ju]
    v_new = v[iu] + v[ju]
    base = _terms(g_new, v_new, v_p, vol)
    # combine: a and b only see their parent volume change
    d_comb = base + _gain(g[iu], v_new, v_p, vol) + _gain(g[ju], v_new, v_p, vol)
    # merge: a and b vanish, their children re-parent onto the merged node
    own = _terms(g, v, v_p, vol)
    d_merge = (base - own[iu] - own[ju]
               + _gain(child_g[iu], v_new, v[iu], vol)
               + _gain(child_g[ju], v_new, v[ju], vol))
    can_merge = ~leaf[iu] & ~leaf[ju]

    out = []
    for idx in range(iu.size):
        i, j = iu[idx], ju[idx]
        lo, hi = sorted((int(reps[i]), int(reps[j])))
        out.append(_Candidate(float(d_comb[idx]), ("combine", lo, hi), "combine",
                              kids[i], kids[j], float(w[i, j])))
        if can_merge[idx]:
            out.append(_Candidate(float(d_merge[idx]), ("merge", lo, hi), "merge",
                                  kids[i], kids[j], float(w[i, j])))
    return out


def _gain(g_sum, v_new, v_old, vol):
    # entropy change of children whose parent volume goes from v_old to v_new
    return np.where(np.asarray(g_sum) > 0, (np.asarray(g_sum) / vol) * _log2_ratio(
        np.asarray(v_new, float), np.broadcast_to(np.asarray(v_old, float),
                                                  np.shape(v_new))), 0.0)


def _best(cands: list[_Candidate]) -> _Candidate | None:
    if not cands:
        return None
    lowest = min(c.delta for c in cands)
    tied = [c for c in cands if c.delta <= lowest + _TIE_WINDOW]
    return min(tied, key=lambda c: c.key)


def minimize(g: Graph, max_height: int | None = None, tol: float = 1e-12,
             callback: Callable[[TraceStep, EncodingTree], None] | None = None
             ) -> EncodingTree:
    """Greedy structural-entropy minimization from the flat tree.

    Each iteration scans all sibling pairs under every internal node for both
    operators and applies the most negative change; the loop ends once no
    change beats ``-tol``. If ``max_height`` is set, the greedy tree is then
    compressed (see :func:`compress_to_height`).
    """
    t = flat_tree(g)
    vol = t.vol
    if vol == 0:
        return t
    h = structural_entropy(g, t)
    it = 0
    while True:
        cands = []
        for p in t.internal_nodes():
            cands.extend(_sibling_candidates(t, p, vol))
        best = _best(cands)
        if best is None or best.delta >= -tol:
            break
        apply = _combine_inplace if best.op == "combine" else _merge_inplace
        created = apply(t, best.a, best.b, best.w_ab)
        it += 1
        h = h + best.delta
        if callback is not None:
            callback(TraceStep(it, best.op, best.a, best.b, created, best.delta, h), t)
    if max_height is not None and t.height > max_height:
        t = compress_to_height(g, t, max_height)
    return t


def minimize_traced(g: Graph, **kwargs) -> tuple[EncodingTree, list[TraceStep]]:
    steps: list[TraceStep] = []
    tree = minimize(g, callback=lambda s, _t: steps.append(s), **kwargs)
    return tree, steps


def _remove_delta(t: EncodingTree, a: int) -> float:
    node = t.nodes[a]
    vol = t.vol
    v_p = t.nodes[node.parent].V
    delta = -_term(node.g, node.V, v_p, vol)
    for c in node.children:
        nc = t.nodes[c]
        delta += _term(nc.g, nc.V, v_p, vol) - _term(nc.g, nc.V, node.V, vol)
    return delta


def _remove_inplace(t: EncodingTree, a: int) -> None:
    node = t.nodes[a]
    parent = t.nodes[node.parent]
    i = parent.children.index(a)
    parent.children[i:i + 1] = node.children
    for c in node.children:
        t.nodes[c].parent = parent.id
    del t.nodes[a]


def compress_to_height(g: Graph, t: EncodingTree, max_height: int) -> EncodingTree:
    """Remove internal nodes until the tree height is at most ``max_height``.

    Only nodes lying on a longest root-to-leaf path are eligible; the one whose
    removal raises the entropy least goes first. The result is never worse than
    the flat tree (which is returned instead if it were).
    """
    if max_height < 1:
        raise TreeError("max_height must be >= 1")
    t = t.copy()
    while t.height > max_height:
        top = t.height
        cands = []
        for a in t.internal_nodes():
            if a == t.root:
                continue
            if t.depth(a) + t.subtree_height(a) == top:
                cands.append((_remove_delta(t, a), t.rep(a), a))
        lowest = min(c[0] for c in cands)
        _, _, a = min(c for c in cands if c[0] <= lowest + _TIE_WINDOW)
        _remove_inplace(t, a)
    flat = flat_tree(g)
    if structural_entropy(g, flat) < structural_entropy(g, t):
        return flat
    return t


# -- exhaustive oracle ------------------------------------------------------------

ORACLE_MAX_N = 10


def set_partitions(n: int) -> Iterator[list[list[int]]]:
    """All set partitions of range(n) via restricted growth strings."""
    if n == 0:
        yield []
        return
    a = [0] * n

    def rec(i, m):
        if i == n:
            blocks = [[] for _ in range(m + 1)]
            for v, b in enumerate(a):
                blocks[b].append(v)
            yield blocks
            return
        for b in range(m + 2):
            a[i] = b
            yield from rec(i + 1, max(m, b))

    a[0] = 0
    yield from rec(1, 0)


def partition_entropy(g: Graph, blocks) -> float:
    """Entropy of the two-level tree induced by ``blocks``, straight from the formula."""
    adj = g.symmetrized().adjacency
    d = adj.sum(axis=1)
    vol = d.sum()
    if vol == 0:
        return 0.0
    total = 0.0
    for block in blocks:
        if len(block) == 1:
            v = block[0]
            if d[v] > 0:
                total -= d[v] / vol * math.log2(d[v] / vol)
            continue
        vb = d[block].sum()
        gb = vb - adj[np.ix_(block, block)].sum()
        if gb > 0:
            total -= gb / vol * math.log2(vb / vol)
        for v in block:
            if d[v] > 0:
                total -= d[v] / vol * math.log2(d[v] / vb)
    return total


def exhaustive_min_2level(g: Graph) -> tuple[EncodingTree, float]:
    if g.n > ORACLE_MAX_N:
        raise TreeError(f"exhaustive search limited to n <= {ORACLE_MAX_N}, got {g.n}")
    best_h, best_blocks = math.inf, None
    for blocks in set_partitions(g.n):
        h = partition_entropy(g, blocks)
        if h < best_h - 1e-12:
            best_h, best_blocks = h, [list(b) for b in blocks]
    return tree_from_partition(g, best_blocks), best_h


# -- levels and validation ----------------------------------------------------------

def level_partition(t: EncodingTree, level: int) -> list[list[int]]:
    """Vertex sets of the nodes at depth ``level``.

    Leaves sitting above that depth are carried down as singletons. Sets are
    ordered by smallest vertex.
    """
    if not 0 < level <= t.height:
        raise TreeError(f"level {level} out of range 1..{t.height}")
    blocks = []
    frontier = [(t.root, 0)]
    while frontier:
        nid, d = frontier.pop()
        node = t.nodes[nid]
        if d == level or node.is_leaf:
            blocks.append(t.vertices(nid))
        else:
            frontier.extend((c, d + 1) for c in node.children)
    return sorted(blocks, key=lambda b: b[0])


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, invariant: str, detail: str) -> None:
        self.violations.append((invariant, detail))

    def invariants(self) -> set[str]:
        return {v for v, _ in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{k}: {d}" for k, d in self.violations)


def validate(t: EncodingTree, g: Graph, tol: float = 1e-9) -> ValidationReport:
    rep = ValidationReport()
    nodes = t.nodes
    if t.root not in nodes:
        rep.add("root", "root id missing")
        return rep
    if nodes[t.root].parent is not None:
        rep.add("root", "root has a parent")
    for n in nodes.values():
        if n.id != t.root and n.parent is None:
            rep.add("root", f"non-root node {n.id} has no parent")
        if n.parent is not None:
            if n.parent not in nodes:
                rep.add("parent-child", f"node {n.id} points to missing parent {n.parent}")
            elif n.id not in nodes[n.parent].children:
                rep.add("parent-child", f"node {n.id} not listed by parent {n.parent}")
        for c in n.children:
            if c not in nodes:
                rep.add("parent-child", f"node {n.id} lists missing child {c}")
            elif nodes[c].parent != n.id:
                rep.add("parent-child", f"child {c} of {n.id} points elsewhere")
        if n.is_leaf and n.children:
            rep.add("singleton-leaf", f"leaf {n.id} has children")
        if not n.is_leaf and not n.children:
            rep.add("singleton-leaf", f"internal node {n.id} has no children")
    if not rep.ok:
        return rep

    seen, stack, count = set(), [t.root], {}
    while stack:
        nid = stack.pop()
        if nid in seen:
            rep.add("parent-child", f"node {nid} reached twice")
            return rep
        seen.add(nid)
        node = nodes[nid]
        if node.is_leaf:
            count[node.vertex] = count.get(node.vertex, 0) + 1
        stack.extend(node.children)
    if seen != set(nodes):
        rep.add("parent-child", f"unreachable nodes {sorted(set(nodes) - seen)}")
    for v, c in sorted(count.items()):
        if c > 1:
            rep.add("disjointness", f"vertex {v} appears in {c} leaves")
    missing = set(range(g.n)) - set(count)
    extra = set(count) - set(range(g.n))
    if missing:
        rep.add("coverage", f"vertices without a leaf: {sorted(missing)}")
    if extra:
        rep.add("coverage", f"leaves hold unknown vertices: {sorted(extra)}")
    for v, nid in t.leaf_of.items():
        if nid not in nodes or nodes[nid].vertex != v:
            rep.add("leaf-map", f"leaf_of[{v}] -> {nid} is stale")
    if not rep.ok:
        return rep

    adj = g.symmetrized().adjacency
    for n in nodes.values():
        gg, vv = _cut_and_volume(adj, t.vertices(n.id))
        scale = max(1.0, abs(vv))
        if abs(gg - n.g) > tol * scale or abs(vv - n.V) > tol * scale:
            rep.add("cache", f"node {n.id}: cached (g={n.g}, V={n.V}) vs ({gg}, {vv})")
    return rep
