"""Per-modality encoders producing token sequences of a common width.

The visual stem stands in for a pretrained face encoder behind the same
interface (frame in, feature map out): a stack of stride-2 3x3
convolutions with relu, then feature enhancement, global average
pooling, and a linear projection to the model width - one token per
frame.  The audio stem treats the T x 10 cepstral matrix as a 1-channel
map, convolves with a temporal stride, enhances, pools the coefficient
axis, and projects to ceil(T/stride) time tokens.

Feature enhancement is either the multi-scale block or, for the
ablation arm, a single same-padded 3x3 convolution of equal channel
count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import InputError, ShapeError
from .msfem import MsfemParams, make_msfem_params, msfem_forward

__all__ = [
    "PlainConvParams",
    "StemParams",
    "audio_stem",
    "enhance",
    "make_audio_stem",
    "make_visual_stem",
    "visual_stem",
]


@dataclass
class PlainConvParams:
    """Ablation substitute for the multi-scale block: one 3x3 same-pad conv."""

    kernel: Tensor
    bias: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.plain.kernel": self.kernel, f"{prefix}.plain.bias": self.bias}


@dataclass
class StemParams:
    modality: str
    convs: list[tuple[Tensor, Tensor, tuple[int, int]]]  # (kernel, bias, stride)
    enhancer: MsfemParams | PlainConvParams
    proj_w: Tensor
    proj_b: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for i, (kernel, bias, _) in enumerate(self.convs):
            named[f"{prefix}.conv{i}.kernel"] = kernel
            named[f"{prefix}.conv{i}.bias"] = bias
        named.update(self.enhancer.tensors(f"{prefix}.enhance"))
        named[f"{prefix}.proj.weight"] = self.proj_w
        named[f"{prefix}.proj.bias"] = self.proj_b
        return named


def _uniform(rng, shape, fan_in, dtype, gain=3.0):
    # variance-preserving uniform init; gain 6 ahead of relu, 3 elsewhere
    bound = np.sqrt(gain / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _make_enhancer(channels, use_msfem, rng, dtype):
    if use_msfem:
        return make_msfem_params(channels, rng, dtype=dtype)
    return PlainConvParams(
        kernel=_uniform(rng, (channels, channels, 3, 3), channels * 9, dtype),
        bias=_zeros(channels, dtype),
    )


def enhance(x: Tensor, params: MsfemParams | PlainConvParams) -> Tensor:
    if isinstance(params, PlainConvParams):
        return dc.conv2d(x, params.kernel, params.bias, padding=1)
    return msfem_forward(x, params)


def make_visual_stem(
    width: int,
    channels: tuple[int, ...] = (8, 16, 32),
    use_msfem: bool = True,
    rng: np.random.Generator | None = None,
    dtype=np.float64,
) -> StemParams:
    rng = rng or np.random.default_rng(0)
    convs = []
    c_prev = 3
    for c in channels:
        kernel = _uniform(rng, (c, c_prev, 3, 3), c_prev * 9, dtype, gain=6.0)
        convs.append((kernel, _zeros(c, dtype), (2, 2)))
        c_prev = c
    return StemParams(
        modality="visual",
        convs=convs,
        enhancer=_make_enhancer(c_prev, use_msfem, rng, dtype),
        proj_w=_uniform(rng, (c_prev, width), c_prev, dtype),
        proj_b=_zeros(width, dtype),
    )


def make_audio_stem(
    width: int,
    channels: int = 8,
    stride: int = 6,
    use_msfem: bool = True,
    rng: np.random.Generator | None = None,
    dtype=np.float64,
) -> StemParams:
    rng = rng or np.random.default_rng(0)
    convs = [
        (_uniform(rng, (channels, 1, 3, 3), 9, dtype, gain=6.0), _zeros(channels, dtype), (stride, 1))
    ]
    return StemParams(
        modality="audio",
        convs=convs,
        enhancer=_make_enhancer(channels, use_msfem, rng, dtype),
        proj_w=_uniform(rng, (channels, width), channels, dtype),
        proj_b=_zeros(width, dtype),
    )


def visual_stem(frames, params: StemParams) -> Tensor:
    """Encode a (K, 3, H, W) frame stack into K tokens of the model width.

    Frames ride the batch axis, so there is no cross-frame mixing before
    fusion: permuting input frames permutes the tokens identically.
    """
    x = frames if isinstance(frames, Tensor) else Tensor(frames)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected a (K, 3, H, W) frame stack, got {x.shape}")
    for kernel, bias, stride in params.convs:
        x = dc.relu(dc.conv2d(x, kernel, bias, stride=stride, padding=1))
    x = enhance(x, params.enhancer)
    pooled = dc.global_average_pool(x)
    return dc.dense(pooled, params.proj_w, params.proj_b)


def audio_stem(mfcc_frames, params: StemParams) -> Tensor:
    """Encode a (T, n_coeffs) cepstral matrix into ceil(T/stride) tokens."""
    x = mfcc_frames if isinstance(mfcc_frames, Tensor) else Tensor(mfcc_frames)
    if x.ndim != 2:
        raise ShapeError(f"expected a (T, n_coeffs) matrix, got {x.shape}")
    t = x.shape[0]
    if t < 3:
        raise InputError(f"need at least 3 time steps for the stem convolution, got {t}")
    kernel, bias, stride = params.convs[0]
    maps = dc.conv2d(dc.reshape(x, (1, 1, t, x.shape[1])), kernel, bias, stride=stride, padding=1)
    maps = dc.relu(maps)
    maps = enhance(maps, params.enhancer)
    # pool out the coefficient axis, keep (time, channel) token layout
    pooled = dc.mean(maps, axis=3)
    tokens = dc.transpose(dc.reshape(pooled, (pooled.shape[1], pooled.shape[2])))
    return dc.dense(tokens, params.proj_w, params.proj_b)
