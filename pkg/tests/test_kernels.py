import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entrotree.graph import Graph
from entrotree.kernels import (DEFAULT_KERNEL_SIZES, KernelError, SeriesWindow, TemporalKernelBank,
                               graph_multihop, hop_stack, identity_bank, make_bank, mfcl,
                               pad_replicate, temporal_multifilter)
from entrotree.synth import cycle, random_community

P2 = Graph(np.array([[0.0, 1.0], [1.0, 0.0]]))


def naive_conv(x, kernels, stride):
    """Loop version: clamp indices into the series instead of materializing padding."""
    T, N, C = x.shape
    outs = []
    for w in kernels:
        k, _, o = w.shape
        front = k // 2
        y = []
        for t in range(0, T, stride):
            acc = np.zeros((N, o))
            for l in range(k):
                src = min(max(t + l - front, 0), T - 1)
                acc += x[src] @ w[l]
            y.append(acc)
        outs.append(np.stack(y))
    return np.concatenate(outs, axis=2)


def test_pad_replicate():
    x = np.array([[1.0], [2.0], [3.0]])
    assert np.array_equal(pad_replicate(x, 1), x)
    assert pad_replicate(x, 3)[:, 0].tolist() == [1, 1, 2, 3, 3]
    assert pad_replicate(x, 2)[:, 0].tolist() == [1, 1, 2, 3]
    with pytest.raises(KernelError):
        pad_replicate(x, 0)


def test_identity_bank_passthrough():
    x = np.random.default_rng(0).standard_normal((7, 4, 3))
    out = temporal_multifilter(SeriesWindow(x), identity_bank(3))
    assert np.array_equal(out, x)


def test_default_sizes_preserve_length():
    x = np.random.default_rng(1).standard_normal((12, 5, 3))
    bank = make_bank(DEFAULT_KERNEL_SIZES, 3, 32)
    out = temporal_multifilter(SeriesWindow(x), bank)
    assert out.shape == (12, 5, 32)


@pytest.mark.parametrize("T, stride", [(12, 1), (36, 3), (48, 4)])
def test_stride_compression(T, stride):
    x = np.random.default_rng(T).standard_normal((T, 4, 2))
    bank = make_bank(DEFAULT_KERNEL_SIZES, 2, 16, stride=stride)
    assert temporal_multifilter(SeriesWindow(x), bank).shape[0] == 12


def test_bank_validation():
    with pytest.raises(KernelError):
        make_bank([1, 2, 3], 2, 16)
    with pytest.raises(KernelError):
        TemporalKernelBank([np.zeros((1, 2, 4)), np.zeros((2, 2, 3))])
    with pytest.raises(KernelError):
        TemporalKernelBank([np.zeros((1, 2, 4))], stride=0)


def test_series_window_validation():
    with pytest.raises(KernelError):
        SeriesWindow(np.zeros((3, 2)))
    with pytest.raises(KernelError):
        SeriesWindow(np.full((2, 2, 1), np.nan))


@settings(max_examples=50, deadline=None)
@given(T=st.integers(1, 40), sizes=st.lists(st.integers(1, 8), min_size=1, max_size=4),
       stride=st.integers(1, 5), seed=st.integers(0, 1000))
def test_multifilter_matches_naive(T, sizes, stride, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((T, 3, 2))
    bank = make_bank(sizes, 2, 2 * len(sizes), stride=stride, rng=rng)
    out = temporal_multifilter(SeriesWindow(x), bank)
    assert out.shape[0] == -(-T // stride)
    assert np.allclose(out, naive_conv(x, bank.kernels, stride), atol=1e-12)


def test_hop_stack_p2():
    stack = hop_stack(P2, 1)
    assert np.allclose(stack.matrices[1], [[0.5, 0.5], [0.5, 0.5]])
    assert len(hop_stack(P2, 0).matrices) == 1
    with pytest.raises(KernelError):
        hop_stack(P2, -1)


@pytest.mark.parametrize("seed", range(5))
def test_hop_stack_row_stochastic(seed):
    g = random_community(15, 3, seed=seed, connect=False)
    for m in hop_stack(g, 3).matrices:
        assert np.max(np.abs(m.sum(axis=1) - 1)) <= 1e-12


def test_hop_stack_uses_directed_adjacency():
    a = np.zeros((2, 2))
    a[0, 1] = 1
    m = hop_stack(Graph(a, directed=True), 1).matrices[1]
    assert np.allclose(m, [[0.5, 0.5], [0.0, 1.0]])


def test_graph_multihop_p2():
    x = np.array([[[1.0], [0.0]]])
    out = graph_multihop(x, hop_stack(P2, 1))
    assert np.allclose(out[0], [[1.0, 0.5], [0.0, 0.5]])


def test_graph_multihop_shapes():
    x = np.random.default_rng(2).standard_normal((3, 4, 5))
    assert np.array_equal(graph_multihop(x, hop_stack(cycle(4), 0)), x)
    assert graph_multihop(x, hop_stack(cycle(4), 2)).shape == (3, 4, 15)
    with pytest.raises(KernelError):
        graph_multihop(x, hop_stack(P2, 1))


def test_graph_multihop_linear():
    rng = np.random.default_rng(3)
    stack = hop_stack(random_community(12, 2, seed=1), 3)
    x, y = rng.standard_normal((2, 4, 12, 3))
    a, b = 1.7, -0.4
    lhs = graph_multihop(a * x + b * y, stack)
    rhs = a * graph_multihop(x, stack) + b * graph_multihop(y, stack)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_constant_signal_preserved():
    stack = hop_stack(random_community(12, 2, seed=1), 4)
    x = np.broadcast_to(np.array([2.0, -1.0]), (3, 12, 2))
    out = graph_multihop(x, stack)
    assert np.max(np.abs(out - np.tile([2.0, -1.0], 5))) <= 1e-9


def test_mfcl():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((12, 6, 3))
    g = random_community(6, 2, seed=0)
    assert np.array_equal(mfcl(SeriesWindow(x), identity_bank(3), hop_stack(g, 0)), x)
    bank = make_bank(DEFAULT_KERNEL_SIZES, 3, 32, rng=rng)
    out = mfcl(SeriesWindow(x), bank, hop_stack(g, 1))
    assert out.shape == (12, 6, 64)
    assert np.all(np.isfinite(out))
    assert np.all(mfcl(SeriesWindow(np.zeros_like(x)), bank, hop_stack(g, 1)) == 0)
