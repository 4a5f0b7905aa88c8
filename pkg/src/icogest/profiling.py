"""Analytic FLOP counting and single-thread latency benchmarking.

Counting convention (fixed so numbers are reproducible):
  * one multiply-accumulate = 2 FLOPs,
  * softmax and layer normalization = 5 FLOPs per element,
  * GELU = 10 FLOPs per element, sin/cos = 10 FLOPs per evaluation,
  * sigmoid = 10 FLOPs.
Absolute GFLOPs depend on unpublished reference widths, so the contract is
structural: totals are exactly affine in the number of self-attention blocks
at fixed depth and exactly proportional to depth in the per-layer component.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import GestureModel, ModelConfig, ModelParams

MAC_FLOPS = 2
SOFTMAX_FLOPS_PER_ELEMENT = 5
NORM_FLOPS_PER_ELEMENT = 5
GELU_FLOPS_PER_ELEMENT = 10
TRIG_FLOPS_PER_EVAL = 10
SIGMOID_FLOPS = 10


@dataclass
class FlopReport:
    depth: int
    sa_blocks: int
    components: dict[str, int]
    cross_block_flops: int  # one cross-attention block + its FFN
    sa_block_flops: int  # one self-attention block + its FFN
    shared_flops: int  # assembly, input projection, pooling, head

    @property
    def total_flops(self) -> int:
        return sum(self.components.values())

    @property
    def gflops(self) -> float:
        return self.total_flops / 1e9


@dataclass
class LatencyReport:
    iterations: int
    warmup: int
    median_ms: float
    p95_ms: float
    mean_ms: float
    cv: float  # coefficient of variation (population std / mean)


def _linear_flops(rows: int, in_dim: int, out_dim: int, bias: bool = False) -> int:
    flops = rows * in_dim * out_dim * MAC_FLOPS
    if bias:
        flops += rows * out_dim
    return flops


def count_flops(config: ModelConfig) -> FlopReport:
    """Closed-form FLOP count of one forward pass over the exact block sequence."""
    n = config.num_latents
    d = config.latent_dim
    m = config.num_tokens
    s = config.effective_source_dim
    f = config.ffn_dim
    k = config.fourier_bands

    assembly = m * (2 * k * TRIG_FLOPS_PER_EVAL + 2)  # sin/cos pairs + position scale
    input_proj = _linear_flops(m, config.token_dim, s)

    ln_z = NORM_FLOPS_PER_ELEMENT * n * d
    residual = n * d

    ffn = (
        ln_z
        + _linear_flops(n, d, f, bias=True)
        + GELU_FLOPS_PER_ELEMENT * n * f
        + _linear_flops(n, f, d, bias=True)
        + residual
    )

    cross_attn = (
        ln_z
        + NORM_FLOPS_PER_ELEMENT * m * s
        + _linear_flops(n, d, d)  # queries
        + 2 * _linear_flops(m, s, d)  # keys and values
        + n * m * d * MAC_FLOPS  # scores, summed over heads
        + SOFTMAX_FLOPS_PER_ELEMENT * config.cross_heads * n * m
        + n * m * d * MAC_FLOPS  # weighted values
        + _linear_flops(n, d, d)  # output projection
        + residual
    )

    self_attn = (
        ln_z
        + 3 * _linear_flops(n, d, d)
        + n * n * d * MAC_FLOPS
        + SOFTMAX_FLOPS_PER_ELEMENT * config.sa_heads * n * n
        + n * n * d * MAC_FLOPS
        + _linear_flops(n, d, d)
        + residual
    )

    pooling = n * d + d
    head = _linear_flops(1, d, 1, bias=True) + SIGMOID_FLOPS

    components = {
        "fourier_assembly": assembly,
        "input_projection": input_proj,
        "cross_attention": config.depth * cross_attn,
        "cross_ffn": config.depth * ffn,
        "self_attention": config.depth * config.sa_blocks * self_attn,
        "self_ffn": config.depth * config.sa_blocks * ffn,
        "pooling": pooling,
        "head": head,
    }
    return FlopReport(
        depth=config.depth,
        sa_blocks=config.sa_blocks,
        components=components,
        cross_block_flops=cross_attn + ffn,
        sa_block_flops=self_attn + ffn,
        shared_flops=assembly + input_proj + pooling + head,
    )


def latency_stats(samples_ms: list[float], warmup: int) -> LatencyReport:
    """Order statistics for a vector of per-iteration times (milliseconds).

    Median is the midpoint average; p95 uses the nearest-rank method.
    """
    if not samples_ms:
        raise ValueError("no timing samples")
    xs = sorted(samples_ms)
    n = len(xs)
    if n % 2:
        median = xs[n // 2]
    else:
        median = 0.5 * (xs[n // 2 - 1] + xs[n // 2])
    p95 = xs[math.ceil(0.95 * n) - 1]
    mean = sum(xs) / n
    std = math.sqrt(sum((x - mean) ** 2 for x in xs) / n)
    return LatencyReport(
        iterations=n, warmup=warmup, median_ms=median, p95_ms=p95, mean_ms=mean,
        cv=std / mean if mean > 0 else 0.0,
    )


def bench_latency(
    params: ModelParams,
    config: ModelConfig,
    sample: tuple[np.ndarray, np.ndarray],
    iterations: int = 100,
    warmup: int = 10,
) -> LatencyReport:
    """Time single-sample forward passes on the calling thread.

    The benchmark loop itself is sequential; run it on an otherwise idle
    process for meaningful numbers.
    """
    if iterations < 30:
        raise ValueError("need at least 30 timed iterations")
    if warmup < 5:
        raise ValueError("need at least 5 warmup iterations")
    if time.get_clock_info("perf_counter").resolution <= 0:
        raise EnvironmentError("perf_counter reports non-positive resolution")
    h_s, e_n = sample
    model = GestureModel(config, params)
    for _ in range(warmup):
        model.forward(h_s, e_n)
    times = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        model.forward(h_s, e_n)
        times.append((time.perf_counter() - t0) * 1e3)
    return latency_stats(times, warmup)


def sweep_csv_header() -> str:
    return "depth,sa,gflops,median_ms,p95_ms,cv"


def sweep_csv_row(
    flop: FlopReport, latency: LatencyReport | None = None
) -> str:
    if latency is None:
        return f"{flop.depth},{flop.sa_blocks},{flop.gflops:.6g},,,"
    return (
        f"{flop.depth},{flop.sa_blocks},{flop.gflops:.6g},"
        f"{latency.median_ms:.6g},{latency.p95_ms:.6g},{latency.cv:.6g}"
    )


TABLE1_SWEEP = (
    (2, 8), (2, 4), (2, 2), (2, 1), (1, 8), (1, 4), (1, 2), (1, 1),
)
