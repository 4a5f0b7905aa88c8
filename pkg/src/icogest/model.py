"""Latent-bottleneck transformer for per-word gesture placement/intensity.

The input embeddings are flattened into a token sequence (one token per
scalar, value channel plus Fourier positional features), cross-attended into
a small learnable latent array, refined by self-attention and feedforward
blocks, mean-pooled, and projected to a single sigmoid output. All forward
passes cache activations so gradients can be pushed back through every
parameter with the explicit rules from ``numerics``.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    DimensionError,
    Parameter,
    Tensor2,
    gelu,
    gelu_backward,
    layer_norm,
    layer_norm_backward,
    matmul,
    matmul_backward,
    sigmoid,
    softmax_rows,
    softmax_rows_backward,
)

LN_EPS = 1e-5


class StateError(RuntimeError):
    """backward() was called without a cached forward pass."""


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``depth`` counts cross-attention layers; each is followed by ``sa_blocks``
    self-attention blocks, and every attention block is followed by its own
    feedforward block. ``source_dim`` is the width tokens are projected to
    before the key/value projections (defaults to the raw token width).
    """

    depth: int = 1
    sa_blocks: int = 1
    num_latents: int = 128
    latent_dim: int = 256
    cross_heads: int = 1
    sa_heads: int = 8
    ffn_mult: int = 4
    fourier_bands: int = 6
    max_freq: float = 10.0
    task: str = "placement"
    sentence_dim: int = 384
    word_dim: int = 100
    token_layout: str = "scalar"
    source_dim: int | None = None

    def __post_init__(self):
        if self.depth < 1 or self.sa_blocks < 1:
            raise ValueError("depth and sa_blocks must be >= 1")
        if self.fourier_bands < 1:
            raise ValueError("fourier_bands must be >= 1")
        if self.latent_dim % self.sa_heads != 0:
            raise ValueError("latent_dim must be divisible by sa_heads")
        if self.latent_dim % self.cross_heads != 0:
            raise ValueError("latent_dim must be divisible by cross_heads")
        if self.task not in ("placement", "intensity"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.token_layout not in ("scalar", "pair"):
            raise ValueError(f"unknown token_layout {self.token_layout!r}")

    @property
    def positional_dim(self) -> int:
        return 2 * self.fourier_bands + 1

    @property
    def value_dim(self) -> int:
        # Width of a token's value slice: one scalar per token in the scalar
        # layout, a whole (padded) embedding per token in the pair layout.
        if self.token_layout == "scalar":
            return 1
        return max(self.sentence_dim, self.word_dim)

    @property
    def token_dim(self) -> int:
        return self.value_dim + self.positional_dim

    @property
    def num_tokens(self) -> int:
        if self.token_layout == "scalar":
            return self.sentence_dim + self.word_dim
        return 2

    @property
    def effective_source_dim(self) -> int:
        return self.source_dim if self.source_dim is not None else self.token_dim

    @property
    def ffn_dim(self) -> int:
        return self.ffn_mult * self.latent_dim

    def layer_plan(self) -> list[str]:
        """Block sequence, e.g. depth=1, sa=1 -> [cross, ffn, self, ffn]."""
        per_layer = ["cross", "ffn"] + ["self", "ffn"] * self.sa_blocks
        return per_layer * self.depth


# ---------------------------------------------------------------------------
# Token assembly
# ---------------------------------------------------------------------------

def fourier_frequencies(bands: int, max_freq: float) -> np.ndarray:
    """Log-spaced frequency bands from 1.0 to max_freq."""
    return np.geomspace(1.0, max_freq, bands)


def fourier_encode(p: float, bands: int, max_freq: float) -> np.ndarray:
    """Positional features [sin(pi w_k p), cos(pi w_k p)]_{k=1..K} followed by p."""
    if bands < 1:
        raise ValueError("need at least one frequency band")
    omega = fourier_frequencies(bands, max_freq)
    out = np.empty(2 * bands + 1)
    out[0:-1:2] = np.sin(np.pi * omega * p)
    out[1:-1:2] = np.cos(np.pi * omega * p)
    out[-1] = p
    return out


def assemble_tokens(h_s: np.ndarray, e_n: np.ndarray, config: ModelConfig) -> Tensor2:
    """Build the M x D token matrix from one (sentence, fused-word) input pair."""
    h_s = np.asarray(h_s, dtype=np.float64)
    e_n = np.asarray(e_n, dtype=np.float64)
    if h_s.shape != (config.sentence_dim,):
        raise DimensionError(f"h_s has shape {h_s.shape}, expected ({config.sentence_dim},)")
    if e_n.shape != (config.word_dim,):
        raise DimensionError(f"e_n has shape {e_n.shape}, expected ({config.word_dim},)")
    m = config.num_tokens
    tokens = np.zeros((m, config.token_dim))
    positions = 2.0 * np.arange(m) / (m - 1) - 1.0
    if config.token_layout == "scalar":
        tokens[:, 0] = np.concatenate([h_s, e_n])
    else:
        tokens[0, : h_s.size] = h_s
        tokens[1, : e_n.size] = e_n
    k = config.fourier_bands
    angles = np.pi * positions[:, None] * fourier_frequencies(k, config.max_freq)[None, :]
    pos_slice = tokens[:, config.value_dim :]
    pos_slice[:, 0 : 2 * k : 2] = np.sin(angles)
    pos_slice[:, 1 : 2 * k : 2] = np.cos(angles)
    pos_slice[:, -1] = positions
    return tokens


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class FfnParams:
    ln_gamma: Parameter
    ln_beta: Parameter
    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter


@dataclass
class AttentionBlockParams:
    ln_q_gamma: Parameter
    ln_q_beta: Parameter
    w_q: Parameter
    w_k: Parameter
    w_v: Parameter
    w_o: Parameter
    ffn: FfnParams
    # Present only on cross-attention blocks (pre-norm of the projected tokens).
    ln_kv_gamma: Parameter | None = None
    ln_kv_beta: Parameter | None = None


@dataclass
class LayerParams:
    cross: AttentionBlockParams
    sa: list[AttentionBlockParams]


@dataclass
class HeadParams:
    w: Parameter
    b: Parameter


@dataclass
class ModelParams:
    latents: Parameter
    input_proj: Parameter
    layers: list[LayerParams]
    head: HeadParams

    def named_parameters(self) -> list[Parameter]:
        out = [self.latents, self.input_proj]
        for layer in self.layers:
            out.extend(_block_params(layer.cross))
            for block in layer.sa:
                out.extend(_block_params(block))
        out.extend([self.head.w, self.head.b])
        names = [p.name for p in out]
        if len(set(names)) != len(names):
            raise ValueError("parameter names are not unique")
        return out


def _block_params(block: AttentionBlockParams) -> list[Parameter]:
    out = [block.ln_q_gamma, block.ln_q_beta]
    if block.ln_kv_gamma is not None:
        out.extend([block.ln_kv_gamma, block.ln_kv_beta])
    out.extend([block.w_q, block.w_k, block.w_v, block.w_o])
    f = block.ffn
    out.extend([f.ln_gamma, f.ln_beta, f.w1, f.b1, f.w2, f.b2])
    return out


def _build_params(config: ModelConfig, init) -> ModelParams:
    """Construct the full parameter tree; ``init(kind, name, shape)`` makes each tensor."""
    d = config.latent_dim
    s = config.effective_source_dim

    def ffn(prefix: str) -> FfnParams:
        return FfnParams(
            ln_gamma=Parameter(f"{prefix}.ln.gamma", init("one", (1, d))),
            ln_beta=Parameter(f"{prefix}.ln.beta", init("zero", (1, d))),
            w1=Parameter(f"{prefix}.w1", init("normal", (d, config.ffn_dim))),
            b1=Parameter(f"{prefix}.b1", init("zero", (1, config.ffn_dim))),
            w2=Parameter(f"{prefix}.w2", init("normal", (config.ffn_dim, d))),
            b2=Parameter(f"{prefix}.b2", init("zero", (1, d))),
        )

    def attention(prefix: str, source_dim: int, cross: bool) -> AttentionBlockParams:
        return AttentionBlockParams(
            ln_q_gamma=Parameter(f"{prefix}.ln_q.gamma", init("one", (1, d))),
            ln_q_beta=Parameter(f"{prefix}.ln_q.beta", init("zero", (1, d))),
            ln_kv_gamma=Parameter(f"{prefix}.ln_kv.gamma", init("one", (1, source_dim))) if cross else None,
            ln_kv_beta=Parameter(f"{prefix}.ln_kv.beta", init("zero", (1, source_dim))) if cross else None,
            w_q=Parameter(f"{prefix}.w_q", init("normal", (d, d))),
            w_k=Parameter(f"{prefix}.w_k", init("normal", (source_dim, d))),
            w_v=Parameter(f"{prefix}.w_v", init("normal", (source_dim, d))),
            w_o=Parameter(f"{prefix}.w_o", init("normal", (d, d))),
            ffn=ffn(f"{prefix}.ffn"),
        )

    layers = []
    for i in range(config.depth):
        cross = attention(f"layer{i}.cross", s, cross=True)
        sa = [attention(f"layer{i}.sa{j}", d, cross=False) for j in range(config.sa_blocks)]
        layers.append(LayerParams(cross=cross, sa=sa))
    return ModelParams(
        latents=Parameter("latents", init("normal", (config.num_latents, d))),
        input_proj=Parameter("input_proj", init("normal", (config.token_dim, s))),
        layers=layers,
        head=HeadParams(
            w=Parameter("head.w", init("normal", (d, 1))),
            b=Parameter("head.b", init("zero", (1, 1))),
        ),
    )


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Seeded init: projections and latents ~ N(0, 0.02^2), biases 0, LN gamma 1."""
    rng = np.random.default_rng(seed)

    def init(kind: str, shape: tuple[int, int]) -> np.ndarray:
        if kind == "normal":
            return rng.normal(0.0, 0.02, size=shape)
        if kind == "one":
            return np.ones(shape)
        return np.zeros(shape)

    return _build_params(config, init)


# ---------------------------------------------------------------------------
# Blocks: forward + backward
# ---------------------------------------------------------------------------

def _attention_core(
    zn: Tensor2, sn: Tensor2, params: AttentionBlockParams, heads: int
) -> tuple[Tensor2, dict]:
    """Multi-head scaled dot-product attention on pre-normed inputs."""
    d = params.w_q.value.shape[1]
    if d % heads != 0:
        raise DimensionError(f"model dim {d} not divisible by {heads} heads")
    d_h = d // heads
    scale = 1.0 / math.sqrt(d_h)
    q = matmul(zn, params.w_q.value)
    k = matmul(sn, params.w_k.value)
    v = matmul(sn, params.w_v.value)
    ctx = np.empty_like(q)
    weights = []
    for h in range(heads):
        sl = slice(h * d_h, (h + 1) * d_h)
        scores = matmul(q[:, sl], k[:, sl].T) * scale
        w = softmax_rows(scores)
        ctx[:, sl] = matmul(w, v[:, sl])
        weights.append(w)
    out = matmul(ctx, params.w_o.value)
    cache = {
        "zn": zn, "sn": sn, "q": q, "k": k, "v": v, "ctx": ctx,
        "weights": weights, "heads": heads, "scale": scale, "params": params,
    }
    return out, cache


def _attention_core_backward(d_out: Tensor2, cache: dict) -> tuple[Tensor2, Tensor2]:
    """Returns gradients w.r.t. the pre-normed query input and source input."""
    p: AttentionBlockParams = cache["params"]
    zn, sn, q, k, v, ctx = cache["zn"], cache["sn"], cache["q"], cache["k"], cache["v"], cache["ctx"]
    heads, scale = cache["heads"], cache["scale"]
    d_h = q.shape[1] // heads

    d_ctx, d_wo = matmul_backward(d_out, ctx, p.w_o.value)
    p.w_o.grad += d_wo
    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    for h in range(heads):
        sl = slice(h * d_h, (h + 1) * d_h)
        w = cache["weights"][h]
        d_w, dv[:, sl] = matmul_backward(d_ctx[:, sl], w, v[:, sl])
        d_scores = softmax_rows_backward(d_w, w) * scale
        dq[:, sl] = matmul(d_scores, k[:, sl])
        dk[:, sl] = matmul(d_scores.T, q[:, sl])
    d_zn, d_wq = matmul_backward(dq, zn, p.w_q.value)
    p.w_q.grad += d_wq
    d_sn_k, d_wk = matmul_backward(dk, sn, p.w_k.value)
    p.w_k.grad += d_wk
    d_sn_v, d_wv = matmul_backward(dv, sn, p.w_v.value)
    p.w_v.grad += d_wv
    return d_zn, d_sn_k + d_sn_v


def cross_attention(
    z: Tensor2, src: Tensor2, params: AttentionBlockParams, heads: int = 1
) -> tuple[Tensor2, dict]:
    """Pre-norm cross-attention: queries from latents, keys/values from the
    projected token sequence; residual added."""
    zn, ln_q_cache = layer_norm(z, params.ln_q_gamma, params.ln_q_beta, LN_EPS)
    sn, ln_kv_cache = layer_norm(src, params.ln_kv_gamma, params.ln_kv_beta, LN_EPS)
    out, core = _attention_core(zn, sn, params, heads)
    core["ln_q"] = ln_q_cache
    core["ln_kv"] = ln_kv_cache
    return z + out, core


def cross_attention_backward(d_out: Tensor2, cache: dict) -> tuple[Tensor2, Tensor2]:
    """Returns (dZ, dSrc)."""
    d_zn, d_sn = _attention_core_backward(d_out, cache)
    dz = d_out + layer_norm_backward(d_zn, cache["ln_q"])
    d_src = layer_norm_backward(d_sn, cache["ln_kv"])
    return dz, d_src


def self_attention(
    z: Tensor2, params: AttentionBlockParams, heads: int
) -> tuple[Tensor2, dict]:
    """Pre-norm self-attention among latent tokens; residual added."""
    zn, ln_cache = layer_norm(z, params.ln_q_gamma, params.ln_q_beta, LN_EPS)
    out, core = _attention_core(zn, zn, params, heads)
    core["ln_q"] = ln_cache
    return z + out, core


def self_attention_backward(d_out: Tensor2, cache: dict) -> Tensor2:
    d_zn, d_sn = _attention_core_backward(d_out, cache)
    return d_out + layer_norm_backward(d_zn + d_sn, cache["ln_q"])


def ffn_block(z: Tensor2, params: FfnParams) -> tuple[Tensor2, dict]:
    """Pre-norm feedforward: W2 GELU(W1 z + b1) + b2, residual added."""
    zn, ln_cache = layer_norm(z, params.ln_gamma, params.ln_beta, LN_EPS)
    h1 = matmul(zn, params.w1.value) + params.b1.value
    act = gelu(h1)
    out = matmul(act, params.w2.value) + params.b2.value
    cache = {"zn": zn, "h1": h1, "act": act, "ln": ln_cache, "params": params}
    return z + out, cache


def ffn_block_backward(d_out: Tensor2, cache: dict) -> Tensor2:
    p: FfnParams = cache["params"]
    p.b2.grad += d_out.sum(axis=0, keepdims=True)
    d_act, d_w2 = matmul_backward(d_out, cache["act"], p.w2.value)
    p.w2.grad += d_w2
    d_h1 = gelu_backward(d_act, cache["h1"])
    p.b1.grad += d_h1.sum(axis=0, keepdims=True)
    d_zn, d_w1 = matmul_backward(d_h1, cache["zn"], p.w1.value)
    p.w1.grad += d_w1
    return d_out + layer_norm_backward(d_zn, cache["ln"])


def pool_and_head(head: HeadParams, z: Tensor2) -> tuple[float, float]:
    """Mean-pool the latents and project to a scalar logit + sigmoid output."""
    pooled = z.mean(axis=0, keepdims=True)
    logit = float(matmul(pooled, head.w.value)[0, 0] + head.b.value[0, 0])
    return logit, sigmoid(logit)


# ---------------------------------------------------------------------------
# Whole-model forward / backward
# ---------------------------------------------------------------------------

class GestureModel:
    """Stateful forward/backward wrapper around a (config, params) pair.

    ``forward`` caches all activations; ``backward`` consumes the cache,
    accumulating gradients into every parameter (latents and the input
    projection included). The upstream gradient is taken with respect to the
    pre-sigmoid logit.
    """

    def __init__(self, config: ModelConfig, params: ModelParams):
        self.config = config
        self.params = params
        self._cache = None

    def forward(self, h_s: np.ndarray, e_n: np.ndarray) -> tuple[float, float]:
        tokens = assemble_tokens(h_s, e_n, self.config)
        return self.forward_tokens(tokens)

    def forward_tokens(self, tokens: Tensor2) -> tuple[float, float]:
        cfg, prm = self.config, self.params
        src = matmul(tokens, prm.input_proj.value)
        z = prm.latents.value
        trace = []
        for layer in prm.layers:
            z, cache = cross_attention(z, src, layer.cross, cfg.cross_heads)
            trace.append(("cross", cache))
            z, cache = ffn_block(z, layer.cross.ffn)
            trace.append(("ffn", cache))
            for block in layer.sa:
                z, cache = self_attention(z, block, cfg.sa_heads)
                trace.append(("self", cache))
                z, cache = ffn_block(z, block.ffn)
                trace.append(("ffn", cache))
        logit, out = pool_and_head(prm.head, z)
        pooled = z.mean(axis=0, keepdims=True)
        self._cache = {"tokens": tokens, "trace": trace, "z_final": z, "pooled": pooled}
        return logit, out

    def backward(self, upstream_grad: float) -> None:
        if self._cache is None:
            raise StateError("backward called before forward")
        cfg, prm = self.config, self.params
        cache = self._cache

        prm.head.w.grad += cache["pooled"].T * upstream_grad
        prm.head.b.grad += upstream_grad
        n = cfg.num_latents
        dz = np.repeat(prm.head.w.value.T * (upstream_grad / n), n, axis=0)

        d_src_total = None
        for kind, block_cache in reversed(cache["trace"]):
            if kind == "ffn":
                dz = ffn_block_backward(dz, block_cache)
            elif kind == "self":
                dz = self_attention_backward(dz, block_cache)
            else:
                dz, d_src = cross_attention_backward(dz, block_cache)
                d_src_total = d_src if d_src_total is None else d_src_total + d_src
        prm.latents.grad += dz
        _, d_proj = matmul_backward(d_src_total, cache["tokens"], prm.input_proj.value)
        prm.input_proj.grad += d_proj

    def attention_weights(self) -> list[Tensor2]:
        """Per-head attention matrices from the most recent forward pass."""
        if self._cache is None:
            raise StateError("no forward pass has been run")
        out = []
        for kind, block_cache in self._cache["trace"]:
            if kind in ("cross", "self"):
                out.extend(block_cache["weights"])
        return out


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"ICGW"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before the declared content."""


class CheckpointIntegrityError(CheckpointError):
    """Tensor names/shapes do not match the configuration in the header."""


def save_checkpoint(params: ModelParams, config: ModelConfig, path, meta: dict | None = None) -> None:
    """Binary format: magic, version, config JSON, then named f64 tensors."""
    header = {"config": dataclasses.asdict(config), "meta": meta or {}}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tensors = params.named_parameters()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for p in tensors:
            name = p.name.encode("utf-8")
            rows, cols = p.value.shape
            f.write(struct.pack("<I", len(name)))
            f.write(name)
            f.write(struct.pack("<II", rows, cols))
            f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, dict]:
    with open(path, "rb") as f:
        blob = f.read()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointTruncatedError(f"checkpoint truncated while reading {what}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic bytes)")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<I", take(4, "header length"))
    try:
        header = json.loads(take(header_len, "header").decode("utf-8"))
        config = ModelConfig(**header["config"])
    except (ValueError, TypeError, KeyError) as exc:
        raise CheckpointFormatError(f"invalid checkpoint header: {exc}") from exc
    meta = header.get("meta", {})

    (n_tensors,) = struct.unpack("<I", take(4, "tensor count"))
    loaded: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack("<I", take(4, "tensor name length"))
        name = take(name_len, "tensor name").decode("utf-8")
        rows, cols = struct.unpack("<II", take(8, "tensor shape"))
        data = take(rows * cols * 8, f"tensor {name!r} data")
        loaded[name] = np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()
    if pos != len(blob):
        raise CheckpointIntegrityError(f"{len(blob) - pos} trailing bytes after tensor data")

    params = init_params(config, seed=0)
    expected = {p.name: p for p in params.named_parameters()}
    if set(loaded) != set(expected):
        missing = sorted(set(expected) - set(loaded))
        extra = sorted(set(loaded) - set(expected))
        raise CheckpointIntegrityError(
            f"tensor names do not match config (missing {missing}, unexpected {extra})"
        )
    for name, arr in loaded.items():
        p = expected[name]
        if arr.shape != p.value.shape:
            raise CheckpointIntegrityError(
                f"tensor {name!r} has shape {arr.shape}, config implies {p.value.shape}"
            )
        p.value = arr
        p.grad = np.zeros_like(arr)
    return params, config, meta
