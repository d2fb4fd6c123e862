"""Structural-entropy encoding trees and a forward-only hierarchy-aware ST transformer."""
from .graph import Graph, load_graph, laplacian_pe, normalized_laplacian
from .hierarchy import build_mask_set, hier_score
from .tree import EncodingTree, exhaustive_min_2level, flat_tree, minimize, structural_entropy

__all__ = [
    "EncodingTree", "Graph", "build_mask_set", "exhaustive_min_2level", "flat_tree",
    "hier_score", "laplacian_pe", "load_graph", "minimize", "normalized_laplacian",
    "structural_entropy",
]
