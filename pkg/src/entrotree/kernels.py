"""Multi-filter convolution: multi-size temporal filters followed by multi-hop graph filters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .graph import Graph

DEFAULT_KERNEL_SIZES = (1, 2, 3, 6)


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SeriesWindow:
    data: np.ndarray  # T x N x C
    interval: float = 5.0  # minutes per step
    start_timestamp: int = 0  # epoch seconds, UTC

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or min(d.shape) < 1:
            raise KernelError(f"series must be T x N x C with positive dims, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise KernelError("series contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class TemporalKernelBank:
    kernels: list[np.ndarray]  # each k_j x C x (c_t / m)
    stride: int = 1

    def __post_init__(self):
        if not self.kernels:
            raise KernelError("kernel bank is empty")
        if self.stride < 1:
            raise KernelError("stride must be >= 1")
        shapes = [np.shape(w) for w in self.kernels]
        if any(len(s) != 3 for s in shapes):
            raise KernelError("each kernel must be k x C x c_out")
        if len({s[1] for s in shapes}) != 1 or len({s[2] for s in shapes}) != 1:
            raise KernelError("kernels disagree on input or output channels "
                              "(c_t must split evenly across filters)")

    @property
    def sizes(self) -> list[int]:
        return [w.shape[0] for w in self.kernels]

    @property
    def in_channels(self) -> int:
        return self.kernels[0].shape[1]

    @property
    def c_t(self) -> int:
        return self.kernels[0].shape[2] * len(self.kernels)

    def out_length(self, T: int) -> int:
        return -(-T // self.stride)


def make_bank(sizes, in_channels: int, c_t: int, stride: int = 1,
              rng: np.random.Generator | None = None) -> TemporalKernelBank:
    """Seeded kernels, scaled by 1/sqrt(k * C)."""
    sizes = list(sizes)
    if c_t % len(sizes):
        raise KernelError(f"c_t={c_t} not divisible by {len(sizes)} filters")
    rng = np.random.default_rng(0) if rng is None else rng
    per = c_t // len(sizes)
    kernels = [rng.standard_normal((k, in_channels, per)) / np.sqrt(k * in_channels)
               for k in sizes]
    return TemporalKernelBank(kernels, stride)


def identity_bank(channels: int, stride: int = 1) -> TemporalKernelBank:
    return TemporalKernelBank([np.eye(channels)[None, :, :]], stride)


def pad_replicate(x: np.ndarray, k: int) -> np.ndarray:
    """Repeat the first and last rows so a valid size-k convolution keeps the length.

    The front gets ceil((k-1)/2) copies, the back floor((k-1)/2).
    """
    if k < 1:
        raise KernelError("kernel size must be >= 1")
    x = np.asarray(x)
    front, back = k // 2, (k - 1) // 2
    return np.concatenate([np.repeat(x[:1], front, axis=0), x,
                           np.repeat(x[-1:], back, axis=0)], axis=0)


def temporal_multifilter(w: SeriesWindow, bank: TemporalKernelBank) -> np.ndarray:
    x = w.data
    if x.shape[2] != bank.in_channels:
        raise KernelError(f"series has {x.shape[2]} channels, bank expects {bank.in_channels}")
    outs = []
    for kern in bank.kernels:
        k = kern.shape[0]
        xp = pad_replicate(x, k)
        win = sliding_window_view(xp, k, axis=0)[::bank.stride]  # T' x N x C x k
        outs.append(np.einsum("tnck,kco->tno", win, kern))
    return np.concatenate(outs, axis=2)


@dataclass(frozen=True, eq=False)
class HopStack:
    matrices: list[np.ndarray]

    @property
    def hops(self) -> int:
        return len(self.matrices) - 1

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]


def hop_stack(g: Graph, h: int) -> HopStack:
    """Powers 0..h of D^-1 (A + I), with D the row sums of A + I."""
    if h < 0:
        raise KernelError("hop count must be >= 0")
    a = g.adjacency + np.eye(g.n)
    a_hat = a / a.sum(axis=1, keepdims=True)
    mats = [np.eye(g.n)]
    for _ in range(h):
        mats.append(mats[-1] @ a_hat)
    return HopStack(mats)


def graph_multihop(x: np.ndarray, stack: HopStack) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[1] != stack.n:
        raise KernelError(f"node axis {x.shape[1] if x.ndim == 3 else '?'} "
                          f"does not match hop stack size {stack.n}")
    return np.concatenate([np.einsum("nm,tmc->tnc", m, x) for m in stack.matrices], axis=2)


def mfcl(w: SeriesWindow, bank: TemporalKernelBank, stack: HopStack) -> np.ndarray:
    """ST-tokens of shape T' x N x (h+1)*c_t."""
    return graph_multihop(temporal_multifilter(w, bank), stack)
