"""Attention masks and hierarchical correlation scores derived from an encoding tree."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .tree import EncodingTree, TreeError, level_partition, node_entropy, structural_entropy, validate

EPS = 1e-12


class HeadCountError(ValueError):
    """Too few attention heads for the available masks."""

    def __init__(self, heads: int, n_masks: int):
        self.heads = heads
        self.n_masks = n_masks
        super().__init__(f"need heads > L: heads={heads}, L={n_masks}")


@dataclass(frozen=True, eq=False)
class LevelMask:
    level: int | None  # None marks the adjacency mask
    allow: np.ndarray

    @property
    def source(self) -> str:
        return "adjacency" if self.level is None else f"tree-level-{self.level}"


@dataclass(frozen=True, eq=False)
class MaskSet:
    masks: list[LevelMask]
    head_assignment: list[int | None]

    @property
    def n_masks(self) -> int:
        return len(self.masks)

    @property
    def heads(self) -> int:
        return len(self.head_assignment)

    def mask_for_head(self, head: int) -> np.ndarray | None:
        idx = self.head_assignment[head]
        return None if idx is None else self.masks[idx].allow

    def manifest(self) -> dict:
        return {
            "heads": self.heads,
            "L": self.n_masks,
            "masks": [{"index": i, "source": m.source, "level": m.level}
                      for i, m in enumerate(self.masks)],
            "head_assignment": list(self.head_assignment),
        }


def level_mask(t: EncodingTree, level: int, n: int | None = None) -> LevelMask:
    """Boolean mask permitting pairs that share a node at tree depth ``level``.

    The leaf level (``level == height``) is excluded.
    """
    if not 0 < level < t.height:
        raise TreeError(f"mask level {level} out of range 1..{t.height - 1}")
    n = len(t.leaf_of) if n is None else n
    labels = np.empty(n, dtype=int)
    for k, block in enumerate(level_partition(t, level)):
        labels[block] = k
    allow = labels[:, None] == labels[None, :]
    allow.setflags(write=False)
    return LevelMask(level, allow)


def adjacency_mask(g: Graph) -> LevelMask:
    a = g.adjacency > 0
    allow = a | a.T | np.eye(g.n, dtype=bool)
    allow.setflags(write=False)
    return LevelMask(None, allow)


def build_mask_set(t: EncodingTree, g: Graph, heads: int) -> MaskSet:
    masks = [level_mask(t, lvl, g.n) for lvl in range(1, t.height)]
    masks.append(adjacency_mask(g))
    if heads <= len(masks):
        raise HeadCountError(heads, len(masks))
    assignment = [i if i < len(masks) else None for i in range(heads)]
    return MaskSet(masks, assignment)


def _node_entropies(g: Graph | None, t: EncodingTree) -> dict[int, float]:
    ent = {n.id: node_entropy(g, t, n.id) for n in t.iter_nodes() if n.id != t.root}
    ent[t.root] = structural_entropy(g, t)
    return {k: max(v, EPS) for k, v in ent.items()}


def relative_entropy_step(g: Graph | None, t: EncodingTree, child: int,
                          direction: str) -> float:
    """Ratio of floored node entropies along one tree edge.

    ``up`` gives H(parent)/H(child), ``down`` gives H(child)/H(parent). The
    root's entropy is taken to be the whole tree's structural entropy.
    """
    if child == t.root:
        raise TreeError("the root has no parent edge")
    parent = t.nodes[child].parent
    ent = _node_entropies(g, t)
    if direction == "up":
        return ent[parent] / ent[child]
    if direction == "down":
        return ent[child] / ent[parent]
    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def hier_score(g: Graph, t: EncodingTree, check: bool = True) -> np.ndarray:
    """Path sums of relative entropies between leaves through their lowest common ancestor.

    Row i walks up from vertex i's leaf, column j walks down to vertex j's leaf.
    """
    if check:
        report = validate(t, g)
        if not report.ok:
            raise TreeError(f"invalid tree: {report}")
    ent = _node_entropies(g, t)
    n = g.n
    up_cost, down_cost = [], []
    for v in range(n):
        path = t.path_to_root(t.leaf_of[v])
        up, down = {path[0]: 0.0}, {path[0]: 0.0}
        acc_up = acc_down = 0.0
        for child, parent in zip(path, path[1:]):
            acc_up += ent[parent] / ent[child]
            acc_down += ent[child] / ent[parent]
            up[parent] = acc_up
            down[parent] = acc_down
        up_cost.append((path, up))
        down_cost.append(down)
    s = np.zeros((n, n))
    for i in range(n):
        path_i, up_i = up_cost[i]
        for j in range(n):
            if i == j:
                continue
            down_j = down_cost[j]
            lca = next(a for a in path_i if a in down_j)
            s[i, j] = up_i[lca] + down_j[lca]
    return s
