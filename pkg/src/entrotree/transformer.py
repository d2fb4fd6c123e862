"""Forward-only spatial/temporal transformer with hierarchy-aware spatial attention.

Everything is plain numpy. Weights are seeded pseudo-random (see
:func:`init_weights` for the draw order) or loaded from a weight bundle; there
is no training code.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .arrays import read_array3, write_array3
from .graph import Graph, laplacian_pe
from .hierarchy import MaskSet, build_mask_set, hier_score
from .kernels import (DEFAULT_KERNEL_SIZES, SeriesWindow, TemporalKernelBank, hop_stack,
                      make_bank, mfcl)
from .tree import EncodingTree

N_TIME_FEATURES = 7 + 24


class ForwardError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class InvariantViolation(AssertionError):
    pass


# -- positional encodings -------------------------------------------------------

def sinusoidal_pe(T: int, d: int) -> np.ndarray:
    if d % 2:
        raise ValueError(f"sinusoidal encoding needs an even dimension, got {d}")
    pos = np.arange(T)[:, None]
    freq = 10000.0 ** (np.arange(0, d, 2) / d)
    pe = np.empty((T, d))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


def timestamp_onehot(start: int, T: int, interval: float) -> np.ndarray:
    """T x 31: day-of-week (Monday = 0) then hour-of-day, in UTC."""
    if interval <= 0:
        raise ValueError("interval must be positive")
    out = np.zeros((T, N_TIME_FEATURES))
    for t in range(T):
        ts = datetime.fromtimestamp(start + t * interval * 60, tz=timezone.utc)
        out[t, ts.weekday()] = 1.0
        out[t, 7 + ts.hour] = 1.0
    return out


def timestamp_embedding(start: int, T: int, interval: float, w_b: np.ndarray) -> np.ndarray:
    return timestamp_onehot(start, T, interval) @ w_b


@dataclass(frozen=True, eq=False)
class PEBundle:
    D_s: np.ndarray  # N x d
    D_t: np.ndarray  # T x d
    D_b: np.ndarray  # T x d
    W_pe: np.ndarray  # k x d


# -- attention -------------------------------------------------------------------

@dataclass(eq=False)
class AttentionWeights:
    wq: np.ndarray  # heads x d x d/heads
    wk: np.ndarray
    wv: np.ndarray
    w_ffn: np.ndarray  # d x d
    b_ffn: np.ndarray  # d
    norm_mean: np.ndarray
    norm_var: np.ndarray
    norm_scale: np.ndarray
    norm_shift: np.ndarray
    norm_eps: float = 1e-5

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @property
    def d(self) -> int:
        return self.wq.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "norm_eps"}


def random_attention_weights(d: int, heads: int, rng: np.random.Generator) -> AttentionWeights:
    if d % heads:
        raise ValueError(f"heads={heads} must divide d={d}")
    dh = d // heads
    proj = lambda: rng.standard_normal((heads, d, dh)) / np.sqrt(d)  # noqa: E731
    return AttentionWeights(
        wq=proj(), wk=proj(), wv=proj(),
        w_ffn=rng.standard_normal((d, d)) / np.sqrt(d),
        b_ffn=np.zeros(d),
        norm_mean=np.zeros(d), norm_var=np.ones(d),
        norm_scale=np.ones(d), norm_shift=np.zeros(d))


def zero_attention_weights(d: int, heads: int) -> AttentionWeights:
    dh = d // heads
    z = np.zeros((heads, d, dh))
    return AttentionWeights(z, z.copy(), z.copy(), np.zeros((d, d)), np.zeros(d),
                            np.zeros(d), np.ones(d), np.ones(d), np.zeros(d))


class AttentionRecorder:
    """Collects post-softmax weights keyed by (layer, kind, head)."""

    def __init__(self):
        self.maps: dict[tuple[int, str, int], np.ndarray] = {}
        self.layer = 0

    def record(self, kind: str, weights: np.ndarray) -> None:
        # weights: ... x heads x M x M
        for h in range(weights.shape[-3]):
            self.maps[(self.layer, kind, h)] = weights[..., h, :, :].copy()


def _head_masks(masks, heads: int, m: int):
    if masks is None:
        return [None] * heads
    if isinstance(masks, MaskSet):
        if masks.heads != heads:
            raise ValueError(f"mask set covers {masks.heads} heads, attention has {heads}")
        per_head = [masks.mask_for_head(h) for h in range(heads)]
    else:
        per_head = list(masks)
        if len(per_head) != heads:
            raise ValueError(f"got {len(per_head)} head masks for {heads} heads")
    for allow in per_head:
        if allow is not None and np.shape(allow) != (m, m):
            raise ValueError(f"mask shape {np.shape(allow)} does not match sequence length {m}")
    return per_head


def attention_heads(H, D, D_b, S, masks, w: AttentionWeights, check: bool = False):
    """Per-head softmax weights and the concatenated head outputs (before the FFN).

    ``H`` is ``... x M x d``; ``D`` and ``D_b`` broadcast against it. Disallowed
    positions get a -inf logit. Returns ``(weights, concat)`` with weights
    shaped ``... x heads x M x M``.
    """
    H = np.asarray(H, dtype=np.float64)
    m, d = H.shape[-2:]
    if d != w.d:
        raise ValueError(f"hidden dim {d} does not match weights ({w.d})")
    xq = H + D if D is not None else H
    if D_b is not None:
        xq = xq + D_b
    q = np.einsum("...md,hde->...hme", xq, w.wq)
    k = np.einsum("...md,hde->...hme", H, w.wk)
    v = np.einsum("...md,hde->...hme", H, w.wv)
    logits = q @ np.swapaxes(k, -1, -2)
    if S is not None:
        S = np.asarray(S)
        if S.shape != (m, m):
            raise ValueError(f"score matrix shape {S.shape} != ({m}, {m})")
        logits = logits + S
    logits = logits / np.sqrt(d / w.heads)
    for h, allow in enumerate(_head_masks(masks, w.heads, m)):
        if allow is not None:
            logits[..., h, :, :] = np.where(allow, logits[..., h, :, :], -np.inf)
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    weights = e / e.sum(axis=-1, keepdims=True)
    if check:
        _check_weights(weights, masks, w.heads, m)
    out = weights @ v  # ... x heads x M x dh
    concat = np.moveaxis(out, -3, -2).reshape(*out.shape[:-3], m, d)
    return weights, concat


def _check_weights(weights, masks, heads, m):
    if not np.all(np.isfinite(weights)):
        raise InvariantViolation("non-finite attention weight")
    err = np.max(np.abs(weights.sum(axis=-1) - 1.0))
    if err > 1e-9:
        raise InvariantViolation(f"softmax rows deviate from 1 by {err:.3e}")
    for h, allow in enumerate(_head_masks(masks, heads, m)):
        if allow is not None and np.any(weights[..., h, :, :][..., ~np.asarray(allow)] != 0):
            raise InvariantViolation(f"head {h}: masked position carries weight")


def batch_norm(x, w: AttentionWeights):
    return (x - w.norm_mean) / np.sqrt(w.norm_var + w.norm_eps) * w.norm_scale + w.norm_shift


def masked_multihead_attention(H, D, D_b, S, masks, w: AttentionWeights, residual=None,
                               check: bool = False, recorder: AttentionRecorder | None = None,
                               kind: str = "attention"):
    """Multi-head attention followed by ReLU feed-forward and stored-statistics norm.

    When ``residual`` is given it is added after the feed-forward, before the norm.
    """
    weights, concat = attention_heads(H, D, D_b, S, masks, w, check=check)
    if recorder is not None:
        recorder.record(kind, weights)
    z = np.maximum(concat @ w.w_ffn + w.b_ffn, 0.0)
    if residual is not None:
        z = z + residual
    return batch_norm(z, w)


def temporal_transformer(H, pe: PEBundle, w: AttentionWeights, check=False, recorder=None):
    """Attention along time, separately for every node, with shared parameters."""
    seq = np.swapaxes(H, 0, 1)  # N x T x d
    out = masked_multihead_attention(seq, pe.D_t, pe.D_b, None, None, w, residual=seq,
                                     check=check, recorder=recorder, kind="temporal")
    return np.swapaxes(out, 0, 1)


def spatial_transformer(H, pe: PEBundle, masks: MaskSet, S, w: AttentionWeights,
                        check=False, recorder=None):
    """Attention across nodes at every time step; head i uses its assigned mask."""
    if masks is not None and masks.heads != w.heads:
        raise ValueError(f"mask set has {masks.heads} heads, weights have {w.heads}")
    return masked_multihead_attention(H, pe.D_s, pe.D_b[:, None, :], S, masks, w, residual=H,
                                      check=check, recorder=recorder, kind="spatial")


def st_encoder(H, pe, masks, S, w_temporal, w_spatial, check=False, recorder=None):
    h = temporal_transformer(H, pe, w_temporal, check=check, recorder=recorder)
    return spatial_transformer(h, pe, masks, S, w_spatial, check=check, recorder=recorder)


# -- output layer ----------------------------------------------------------------

@dataclass(eq=False)
class OutputWeights:
    w1: np.ndarray  # d x d
    b1: np.ndarray
    w2: np.ndarray  # d x C_o
    b2: np.ndarray
    deconv: np.ndarray | None = None  # stride x d x d
    deconv_bias: np.ndarray | None = None


def deconv_stride(t_hidden: int, horizon: int) -> int:
    return -(-horizon // t_hidden)


def output_layer(H_o, horizon: int, w: OutputWeights):
    """Transposed convolution along time when lengths differ, then a two-layer perceptron."""
    t_h = H_o.shape[0]
    if t_h < 1:
        raise ValueError("empty hidden sequence")
    x = H_o
    if t_h != horizon:
        if w.deconv is None:
            raise ValueError("hidden length differs from horizon but no deconvolution weights")
        s = w.deconv.shape[0]
        # kernel == stride: step t spreads onto outputs t*s .. t*s+s-1
        y = np.einsum("tnd,rde->trne", x, w.deconv).reshape(t_h * s, *x.shape[1:2], -1)
        x = y[:horizon] + w.deconv_bias
    hid = np.maximum(x @ w.w1 + w.b1, 0.0)
    return hid @ w.w2 + w.b2


# -- whole model -------------------------------------------------------------------

@dataclass
class ModelConfig:
    layers: int = 3
    d: int = 64
    heads: int = 8
    horizon: int = 12
    out_channels: int = 1
    seed: int = 0
    kernel_sizes: tuple = DEFAULT_KERNEL_SIZES
    stride: int = 1
    hops: int = 1
    pe_k: int = 8

    @property
    def c_t(self) -> int:
        if self.d % (self.hops + 1):
            raise ValueError(f"d={self.d} not divisible by hops+1={self.hops + 1}")
        return self.d // (self.hops + 1)

    def hidden_length(self, T: int) -> int:
        return -(-T // self.stride)


@dataclass(eq=False)
class ModelWeights:
    bank: TemporalKernelBank
    w_pe: np.ndarray  # pe_k x d
    w_b: np.ndarray  # 31 x d
    temporal: list[AttentionWeights]
    spatial: list[AttentionWeights]
    output: OutputWeights
    meta: dict = field(default_factory=dict)


def init_weights(cfg: ModelConfig, in_channels: int, T: int) -> ModelWeights:
    """Seeded weights. Draw order: kernel bank, W_pe, W_b, then per layer
    temporal and spatial attention, then output (deconv if needed, w1, w2)."""
    rng = np.random.default_rng(cfg.seed)
    bank = make_bank(cfg.kernel_sizes, in_channels, cfg.c_t, cfg.stride, rng)
    d = cfg.d
    w_pe = rng.standard_normal((cfg.pe_k, d)) / np.sqrt(max(cfg.pe_k, 1))
    w_b = rng.standard_normal((N_TIME_FEATURES, d)) / np.sqrt(N_TIME_FEATURES)
    temporal, spatial = [], []
    for _ in range(cfg.layers):
        temporal.append(random_attention_weights(d, cfg.heads, rng))
        spatial.append(random_attention_weights(d, cfg.heads, rng))
    t_h = cfg.hidden_length(T)
    deconv = deconv_bias = None
    if t_h != cfg.horizon:
        s = deconv_stride(t_h, cfg.horizon)
        deconv = rng.standard_normal((s, d, d)) / np.sqrt(d)
        deconv_bias = np.zeros(d)
    out = OutputWeights(
        w1=rng.standard_normal((d, d)) / np.sqrt(d), b1=np.zeros(d),
        w2=rng.standard_normal((d, cfg.out_channels)) / np.sqrt(d),
        b2=np.zeros(cfg.out_channels), deconv=deconv, deconv_bias=deconv_bias)
    return ModelWeights(bank, w_pe, w_b, temporal, spatial, out,
                        meta={"seed": cfg.seed, "in_channels": in_channels, "T": T})


def build_pe(cfg: ModelConfig, weights: ModelWeights, g: Graph, window: SeriesWindow) -> PEBundle:
    t_h = cfg.hidden_length(window.shape[0])
    lap = laplacian_pe(g, cfg.pe_k)
    # timestamps follow the strided hidden steps
    d_b = timestamp_embedding(window.start_timestamp, t_h, window.interval * cfg.stride,
                              weights.w_b)
    return PEBundle(D_s=lap @ weights.w_pe, D_t=sinusoidal_pe(t_h, cfg.d), D_b=d_b,
                    W_pe=weights.w_pe)


@dataclass(eq=False)
class ForwardResult:
    prediction: np.ndarray
    hidden_length: int
    n_masks: int
    recorder: AttentionRecorder | None = None


def forward_detailed(cfg: ModelConfig, weights: ModelWeights, window: SeriesWindow, g: Graph,
                     tree: EncodingTree, check: bool = False,
                     record: bool = False) -> ForwardResult:
    T, N, _ = window.shape

    def stage(name, fn):
        try:
            return fn()
        except (ForwardError, InvariantViolation):
            raise
        except (ValueError, KeyError, IndexError) as exc:
            raise ForwardError(name, str(exc)) from exc

    if g.n != N:
        raise ForwardError("input", f"graph has {g.n} vertices, series has N={N}")
    if len(tree.leaf_of) != N:
        raise ForwardError("input", f"tree covers {len(tree.leaf_of)} vertices, series has N={N}")
    stack = stage("mfcl", lambda: hop_stack(g, cfg.hops))
    x0 = stage("mfcl", lambda: mfcl(window, weights.bank, stack))
    if x0.shape[2] != cfg.d:
        raise ForwardError("mfcl", f"token dim {x0.shape[2]} != d={cfg.d}")
    pe = stage("positional-encoding", lambda: build_pe(cfg, weights, g, window))
    masks = stage("masks", lambda: build_mask_set(tree, g, cfg.heads))
    S = stage("hier-score", lambda: hier_score(g, tree))
    recorder = AttentionRecorder() if record else None
    h = x0
    skip = x0.copy()
    for i in range(cfg.layers):
        if recorder is not None:
            recorder.layer = i
        h = stage(f"encoder[{i}]", lambda: st_encoder(
            h, pe, masks, S, weights.temporal[i], weights.spatial[i], check=check,
            recorder=recorder))
        skip = skip + h
    pred = stage("output", lambda: output_layer(skip, cfg.horizon, weights.output))
    if check and not np.all(np.isfinite(pred)):
        raise InvariantViolation("non-finite prediction")
    return ForwardResult(pred, x0.shape[0], masks.n_masks, recorder)


def forward(cfg: ModelConfig, weights: ModelWeights, window: SeriesWindow, g: Graph,
            tree: EncodingTree, check: bool = False) -> np.ndarray:
    return forward_detailed(cfg, weights, window, g, tree, check=check).prediction


# -- weight bundles ----------------------------------------------------------------

def _named_arrays(w: ModelWeights) -> dict[str, np.ndarray]:
    out = {f"bank.{i}": k for i, k in enumerate(w.bank.kernels)}
    out["pe.w_pe"] = w.w_pe
    out["pe.w_b"] = w.w_b
    for i, (wt, ws) in enumerate(zip(w.temporal, w.spatial)):
        for name, arr in wt.arrays().items():
            out[f"layer{i}.temporal.{name}"] = arr
        for name, arr in ws.arrays().items():
            out[f"layer{i}.spatial.{name}"] = arr
    for name in ("w1", "b1", "w2", "b2", "deconv", "deconv_bias"):
        arr = getattr(w.output, name)
        if arr is not None:
            out[f"output.{name}"] = arr
    return out


def save_weights(directory, w: ModelWeights, cfg: ModelConfig) -> None:
    """Write one container file per array plus ``manifest.json``.

    Arrays of rank < 3 are stored with leading unit dims; the manifest keeps
    the true shape.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in _named_arrays(w).items():
        arr = np.asarray(arr, dtype=np.float64)
        fname = name + ".bin"
        write_array3(directory / fname, arr.reshape((1,) * (3 - arr.ndim) + arr.shape))
        entries.append({"name": name, "file": fname, "shape": list(arr.shape)})
    manifest = {"format": "weight-bundle/1", "seed": cfg.seed, "layers": cfg.layers,
                "stride": w.bank.stride, "norm_eps": w.temporal[0].norm_eps if w.temporal else 1e-5,
                "arrays": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n",
                                             encoding="utf-8")


def load_weights(directory) -> ModelWeights:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    arrs = {e["name"]: read_array3(directory / e["file"]).reshape(e["shape"])
            for e in manifest["arrays"]}
    n_k = sum(1 for k in arrs if k.startswith("bank."))
    bank = TemporalKernelBank([arrs[f"bank.{i}"] for i in range(n_k)], manifest["stride"])
    eps = manifest.get("norm_eps", 1e-5)

    def att(prefix):
        names = [f.name for f in fields(AttentionWeights) if f.name != "norm_eps"]
        return AttentionWeights(**{n: arrs[f"{prefix}.{n}"] for n in names}, norm_eps=eps)

    layers = manifest["layers"]
    out = OutputWeights(arrs["output.w1"], arrs["output.b1"], arrs["output.w2"],
                        arrs["output.b2"], arrs.get("output.deconv"),
                        arrs.get("output.deconv_bias"))
    return ModelWeights(bank, arrs["pe.w_pe"], arrs["pe.w_b"],
                        [att(f"layer{i}.temporal") for i in range(layers)],
                        [att(f"layer{i}.spatial") for i in range(layers)], out,
                        meta={"seed": manifest.get("seed")})
