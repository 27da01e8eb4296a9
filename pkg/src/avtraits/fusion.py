"""Bidirectional cross-attention fusion and the trait regression head.

One direction attends visual queries over audio keys/values, the other
audio queries over visual keys/values:

    fused = softmax(Fq Wq (Fkv Wk)^T / sqrt(d_k)) Fkv Wv

The head mean-pools both fused sequences over their token axes,
concatenates, and maps through a sigmoid-terminated dense layer to the
five trait scores in (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ShapeError

__all__ = [
    "CrossAttentionParams",
    "FusedPair",
    "HeadParams",
    "cross_attention",
    "fuse_bidirectional",
    "make_attention_params",
    "make_head_params",
    "regression_head",
]

N_TRAITS = 5


@dataclass
class CrossAttentionParams:
    """Query/key/value projections plus the scalar used in 1/sqrt(d_k)."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    d_k: int

    def __post_init__(self):
        if self.w_q.shape[1] != self.d_k or self.w_k.shape[1] != self.d_k:
            raise ShapeError(
                f"w_q/w_k must have {self.d_k} columns, got {self.w_q.shape} and {self.w_k.shape}"
            )

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.wq": self.w_q, f"{prefix}.wk": self.w_k, f"{prefix}.wv": self.w_v}


@dataclass
class FusedPair:
    """The two fused sequences; f1 has the visual-query rows, f2 the audio-query rows."""

    f1: Tensor
    f2: Tensor


@dataclass
class HeadParams:
    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.weight.shape[1] != N_TRAITS or self.bias.shape != (N_TRAITS,):
            raise ShapeError(f"head must emit {N_TRAITS} traits, got weight {self.weight.shape}")

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def _uniform(rng, shape, fan_in, dtype, gain=3.0):
    # variance-preserving uniform init for the linear projections
    bound = np.sqrt(gain / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def make_attention_params(width: int, rng: np.random.Generator, dtype=np.float64) -> CrossAttentionParams:
    """Square d x d projections; d_k = d_v = d."""
    return CrossAttentionParams(
        w_q=_uniform(rng, (width, width), width, dtype),
        w_k=_uniform(rng, (width, width), width, dtype),
        w_v=_uniform(rng, (width, width), width, dtype),
        d_k=width,
    )


def make_head_params(d_v: int, rng: np.random.Generator, dtype=np.float64) -> HeadParams:
    return HeadParams(
        weight=_uniform(rng, (2 * d_v, N_TRAITS), 2 * d_v, dtype),
        bias=Tensor(np.zeros(N_TRAITS, dtype=dtype), requires_grad=True),
    )


def cross_attention(fq: Tensor, fkv: Tensor, params: CrossAttentionParams) -> Tensor:
    """Attend ``fq`` rows over ``fkv`` rows; returns one output row per query."""
    if fq.ndim != 2 or fkv.ndim != 2:
        raise ShapeError("token sequences must be 2-D (tokens x width)")
    if fq.shape[0] < 1 or fkv.shape[0] < 1:
        raise ShapeError("token sequences must be nonempty")
    if fq.shape[1] != params.w_q.shape[0] or fkv.shape[1] != params.w_k.shape[0]:
        raise ShapeError(
            f"token width mismatch: queries {fq.shape}, keys {fkv.shape}, "
            f"projections {params.w_q.shape}"
        )
    queries = dc.matmul(fq, params.w_q)
    keys = dc.matmul(fkv, params.w_k)
    scores = dc.mul(dc.matmul(queries, dc.transpose(keys)), 1.0 / math.sqrt(params.d_k))
    return dc.matmul(dc.softmax_rows(scores), dc.matmul(fkv, params.w_v))


def fuse_bidirectional(
    f_v: Tensor,
    f_a: Tensor,
    p1: CrossAttentionParams,
    p2: CrossAttentionParams,
) -> FusedPair:
    """Visual-queries-over-audio and audio-queries-over-visual, as a pair."""
    return FusedPair(
        f1=cross_attention(f_v, f_a, p1),
        f2=cross_attention(f_a, f_v, p2),
    )


def regression_head(pair: FusedPair, params: HeadParams) -> Tensor:
    """Pool each fused sequence over tokens and regress five scores in (0, 1)."""
    m1 = dc.mean(pair.f1, axis=0)
    m2 = dc.mean(pair.f2, axis=0)
    pooled = dc.reshape(dc.concat([m1, m2], axis=0), (1, -1))
    return dc.reshape(dc.sigmoid(dc.dense(pooled, params.weight, params.bias)), (N_TRAITS,))
