import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entrotree.graph import Graph
from entrotree.synth import barbell_triangles, cycle, random_community
from entrotree.tree import (EncodingTree, TreeError, combine, compress_to_height, entropy_delta,
                            flat_tree, level_partition, merge, minimize, minimize_traced,
                            node_entropy, one_dim_entropy, structural_entropy, tree_from_partition,
                            validate)

from conftest import community_graphs, naive_entropy, random_graph

# hand evaluation of -(g/vol) log2(V/V_parent) on the barbell (vol = 14)
BARBELL_FLAT = (4 * (2 / 14) * math.log2(7) + 2 * (3 / 14) * math.log2(14 / 3))
BARBELL_TWO_TRIANGLES = 2 * (1 / 14 + 2 * (2 / 14) * math.log2(7 / 2) + (3 / 14) * math.log2(7 / 3))
BARBELL_NESTED = 2 * (1 / 14 + (2 / 14) * math.log2(7 / 4) + 2 * (2 / 14) + (3 / 14) * math.log2(7 / 3))
TRIANGLES = [[0, 1, 2], [3, 4, 5]]


def test_frozen_values_match_stated_approximations():
    assert BARBELL_TWO_TRIANGLES == pytest.approx(1.699518, abs=1e-5)
    assert BARBELL_FLAT == pytest.approx(2.556650, abs=1e-5)


def test_flat_tree_c4(c4):
    t = flat_tree(c4)
    root = t.nodes[t.root]
    assert len(root.children) == 4 and root.V == 8
    for v in range(4):
        leaf = t.nodes[t.leaf_of[v]]
        assert (leaf.g, leaf.V) == (2, 2)


def test_flat_tree_single_vertex():
    t = flat_tree(Graph(np.zeros((1, 1))))
    assert len(t.nodes) == 2 and t.height == 1


def test_flat_tree_barbell(barbell):
    t = flat_tree(barbell)
    got = [(t.nodes[t.leaf_of[v]].g, t.nodes[t.leaf_of[v]].V) for v in range(6)]
    assert got == [(2, 2), (2, 2), (3, 3), (3, 3), (2, 2), (2, 2)]


def test_node_entropy(c4, barbell):
    t = flat_tree(c4)
    assert node_entropy(c4, t, 0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(TreeError):
        node_entropy(c4, t, t.root)
    tb = tree_from_partition(barbell, TRIANGLES)
    comm = tb.nodes[tb.leaf_of[0]].parent
    assert node_entropy(barbell, tb, comm) == pytest.approx(1 / 14, abs=1e-12)


def test_zero_cut_community_has_zero_entropy():
    a = np.zeros((4, 4))
    a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = 1
    g = Graph(a)
    t = tree_from_partition(g, [[0, 1], [2, 3]])
    comm = t.nodes[t.leaf_of[0]].parent
    assert node_entropy(g, t, comm) == 0.0


def test_structural_entropy_fixtures(c4, barbell):
    assert structural_entropy(c4, flat_tree(c4)) == pytest.approx(2.0, abs=1e-12)
    assert structural_entropy(barbell, flat_tree(barbell)) == pytest.approx(BARBELL_FLAT, abs=1e-12)
    t = tree_from_partition(barbell, TRIANGLES)
    assert structural_entropy(barbell, t) == pytest.approx(BARBELL_TWO_TRIANGLES, abs=1e-12)


def test_zero_volume_graph():
    g = Graph(np.zeros((3, 3)))
    assert structural_entropy(g, flat_tree(g)) == 0.0
    t = minimize(g)
    assert t.height == 1


def test_combine_c4(c4):
    t = combine(flat_tree(c4), 0, 1)
    gid = t.nodes[0].parent
    assert (t.nodes[gid].g, t.nodes[gid].V) == (2, 4)
    assert validate(t, c4).ok
    assert structural_entropy(c4, t) == pytest.approx(1.75, abs=1e-12)


def test_combine_rejects_root_and_self(c4):
    t = flat_tree(c4)
    with pytest.raises(TreeError):
        combine(t, t.root, 0)
    with pytest.raises(TreeError):
        combine(t, 1, 1)
    t2 = combine(t, 0, 1)
    with pytest.raises(TreeError, match="siblings"):
        combine(t2, 0, 2)


def test_combine_builds_triangle(barbell):
    t = combine(flat_tree(barbell), 0, 1)
    t = combine(t, t.nodes[0].parent, 2)
    tri = t.nodes[t.nodes[2].parent]
    assert (tri.g, tri.V) == (1, 7)
    assert validate(t, barbell).ok


def test_merge_two_pairs(c4):
    t = tree_from_partition(c4, [[0, 1], [2, 3]])
    a, b = t.nodes[0].parent, t.nodes[2].parent
    m = merge(t, a, b)
    gid = m.nodes[0].parent
    assert m.vertices(gid) == [0, 1, 2, 3]
    assert m.nodes[gid].children == [0, 1, 2, 3]
    assert validate(m, c4).ok


def test_merge_rejects_leaves(c4):
    t = flat_tree(c4)
    with pytest.raises(TreeError, match="non-leaf"):
        merge(t, 0, 1)
    with pytest.raises(TreeError):
        entropy_delta(c4, t, "merge", 0, 1)


def test_merge_triangles_increases_entropy(barbell):
    t = tree_from_partition(barbell, TRIANGLES)
    a, b = t.nodes[0].parent, t.nodes[3].parent
    m = merge(t, a, b)
    node = m.nodes[m.nodes[0].parent]
    assert (node.g, node.V) == (0, 14)
    assert structural_entropy(barbell, m) > structural_entropy(barbell, t)


def test_operators_do_not_mutate_input(c4):
    t = flat_tree(c4)
    before = t.to_json()
    combine(t, 0, 1)
    assert t.to_json() == before


def test_entropy_delta_c4(c4):
    t = flat_tree(c4)
    assert entropy_delta(c4, t, "combine", 0, 1) == pytest.approx(-0.25, abs=1e-12)


def test_entropy_delta_zero_cut_components():
    a = np.zeros((4, 4))
    a[0, 1] = a[1, 0] = a[2, 3] = a[3, 2] = 1
    g = Graph(a)
    t = flat_tree(g)
    d = entropy_delta(g, t, "combine", 0, 2)
    assert d == pytest.approx(structural_entropy(g, combine(t, 0, 2)) - structural_entropy(g, t),
                              abs=1e-10)


def _random_op(t, rng):
    parents = [p for p in t.internal_nodes() if len(t.nodes[p].children) >= 2]
    p = parents[rng.integers(len(parents))]
    kids = t.nodes[p].children
    i, j = rng.choice(len(kids), size=2, replace=False)
    a, b = kids[i], kids[j]
    if not t.nodes[a].is_leaf and not t.nodes[b].is_leaf and rng.random() < 0.5:
        return "merge", a, b
    return "combine", a, b


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 14))
def test_entropy_delta_matches_recomputation(seed, n):
    g = random_graph(n, 0.4, seed, weighted=True)
    rng = np.random.default_rng(seed)
    t = flat_tree(g)
    for _ in range(8):
        op, a, b = _random_op(t, rng)
        d = entropy_delta(g, t, op, a, b)
        nxt = combine(t, a, b) if op == "combine" else merge(t, a, b)
        assert d == pytest.approx(naive_entropy(g.adjacency, nxt) - naive_entropy(g.adjacency, t),
                                  abs=1e-10)
        assert validate(nxt, g).ok
        t = nxt


def test_vectorized_candidates_match_scalar_delta():
    from entrotree.tree import _sibling_candidates
    g = random_community(20, 3, seed=4)
    t = flat_tree(g)
    rng = np.random.default_rng(0)
    for _ in range(6):
        op, a, b = _random_op(t, rng)
        t = combine(t, a, b) if op == "combine" else merge(t, a, b)
    for p in t.internal_nodes():
        for c in _sibling_candidates(t, p, t.vol):
            assert c.delta == pytest.approx(entropy_delta(g, t, c.op, c.a, c.b), abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_flat_entropy_identity(seed):
    g = random_graph(int(5 + seed), 0.3, seed, weighted=True)
    assert structural_entropy(g, flat_tree(g)) == pytest.approx(one_dim_entropy(g), abs=1e-9)


def test_minimize_c4(c4):
    t = minimize(c4)
    assert structural_entropy(c4, t) == pytest.approx(1.5, abs=1e-9)
    assert level_partition(t, 1) in ([[0, 1], [2, 3]], [[0, 3], [1, 2]])


def test_minimize_barbell_unbounded(barbell):
    t = minimize(barbell)
    assert level_partition(t, 1) == TRIANGLES
    assert structural_entropy(barbell, t) == pytest.approx(BARBELL_NESTED, abs=1e-9)


def test_minimize_barbell_height_two(barbell):
    t = minimize(barbell, max_height=2)
    assert t.height == 2
    assert level_partition(t, 1) == TRIANGLES
    assert structural_entropy(barbell, t) == pytest.approx(BARBELL_TWO_TRIANGLES, abs=1e-9)


def test_minimize_single_vertex():
    g = Graph(np.zeros((1, 1)))
    t, steps = minimize_traced(g)
    assert steps == [] and t.height == 1


@pytest.mark.parametrize("g", community_graphs(8, n_max=30, seed0=5))
def test_minimize_trace_and_intermediates(g):
    seen = []

    def cb(step, tree):
        assert validate(tree, g).ok
        assert step.entropy == pytest.approx(structural_entropy(g, tree), abs=1e-9)
        seen.append(step.entropy)

    t = minimize(g, callback=cb)
    flat = structural_entropy(g, flat_tree(g))
    seq = [flat] + seen
    assert all(b < a - 1e-12 for a, b in zip(seq, seq[1:]))
    assert structural_entropy(g, t) <= flat
    assert validate(t, g).ok


@pytest.mark.parametrize("h", [1, 2, 3])
def test_max_height_respected(h):
    g = random_community(24, 3, seed=11)
    t = minimize(g, max_height=h)
    assert t.height <= h
    assert validate(t, g).ok
    assert structural_entropy(g, t) <= structural_entropy(g, flat_tree(g)) + 1e-12


def test_compress_rejects_zero_height(c4):
    with pytest.raises(TreeError):
        compress_to_height(c4, flat_tree(c4), 0)


def test_level_partition(barbell):
    t = minimize(barbell, max_height=2)
    assert level_partition(t, 1) == TRIANGLES
    assert level_partition(flat_tree(barbell), 1) == [[v] for v in range(6)]
    with pytest.raises(TreeError):
        level_partition(t, 0)
    with pytest.raises(TreeError):
        level_partition(t, 3)


def test_level_partition_ragged(c4):
    t = combine(flat_tree(c4), 0, 1)
    assert level_partition(t, 1) == [[0, 1], [2], [3]]
    assert level_partition(t, 2) == [[0], [1], [2], [3]]


def test_validate_detects_duplicate_vertex(c4):
    t = flat_tree(c4)
    t.nodes[1].vertex = 0
    assert "disjointness" in validate(t, c4).invariants()


def test_validate_detects_stale_cache(c4):
    t = combine(flat_tree(c4), 0, 1)
    t.nodes[t.nodes[0].parent].V = 5
    report = validate(t, c4)
    assert not report.ok and "cache" in report.invariants()


def test_validate_detects_broken_links(c4):
    t = flat_tree(c4)
    t.nodes[2].parent = 3
    assert "parent-child" in validate(t, c4).invariants()


@pytest.mark.parametrize("g", community_graphs(50, n_max=30, seed0=9))
def test_validate_minimize_outputs(g):
    assert validate(minimize(g), g).ok


def test_combine_then_merge_closure(barbell):
    t = tree_from_partition(barbell, [[0, 1], [2, 3], [4, 5]])
    p01, p23 = t.nodes[0].parent, t.nodes[2].parent
    # combine two communities, then fuse the result with the third community
    t2 = combine(t, p01, p23)
    new = t2.nodes[p01].parent
    t3 = merge(t2, new, t2.nodes[4].parent)
    assert validate(t3, barbell).ok


def test_json_round_trip(barbell):
    t = minimize(barbell)
    text = t.to_json()
    back = EncodingTree.from_json(text, barbell)
    assert back.to_json() == text
    assert validate(back, barbell).ok
    data = json.loads(text)
    assert {"id", "parent", "children", "vertex", "g", "V"} <= set(data["nodes"][0])


def test_unbound_tree_refuses_operators(c4):
    t = EncodingTree.from_json(flat_tree(c4).to_json())
    with pytest.raises(TreeError, match="not bound"):
        combine(t, 0, 1)
