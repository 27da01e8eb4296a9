"""Multi-scale feature enhancement.

A feature map is reduced by a 1x1 convolution, run through parallel
1x1 / 3x3 / 5x5 branches (same-padded so they can be summed), spliced as
[b1, b1+b3, b3+b5] along channels, integrated by another 1x1
convolution, and finally gated by squeeze-excitation channel attention.
The convolutional chain is purely linear; the only nonlinearities are
inside the attention gate, so doubling the input doubles the pre-gate
output when biases are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError

__all__ = [
    "ChannelAttentionParams",
    "MsfemParams",
    "channel_attention",
    "make_msfem_params",
    "msfem_forward",
    "msfem_pre_gate",
]


@dataclass
class ChannelAttentionParams:
    """Squeeze-excitation gate: pool -> dense -> relu -> dense -> sigmoid."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class MsfemParams:
    reduce_kernel: Tensor
    reduce_bias: Tensor
    b1_kernel: Tensor
    b1_bias: Tensor
    b3_kernel: Tensor
    b3_bias: Tensor
    b5_kernel: Tensor
    b5_bias: Tensor
    integrate_kernel: Tensor
    integrate_bias: Tensor
    attention: ChannelAttentionParams

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        """Named parameter tensors for registry/checkpoint use."""
        return {
            f"{prefix}.reduce.kernel": self.reduce_kernel,
            f"{prefix}.reduce.bias": self.reduce_bias,
            f"{prefix}.b1.kernel": self.b1_kernel,
            f"{prefix}.b1.bias": self.b1_bias,
            f"{prefix}.b3.kernel": self.b3_kernel,
            f"{prefix}.b3.bias": self.b3_bias,
            f"{prefix}.b5.kernel": self.b5_kernel,
            f"{prefix}.b5.bias": self.b5_bias,
            f"{prefix}.integrate.kernel": self.integrate_kernel,
            f"{prefix}.integrate.bias": self.integrate_bias,
            f"{prefix}.attn.w1": self.attention.w1,
            f"{prefix}.attn.b1": self.attention.b1,
            f"{prefix}.attn.w2": self.attention.w2,
            f"{prefix}.attn.b2": self.attention.b2,
        }


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype, gain: float = 3.0) -> Tensor:
    # variance-preserving uniform init: var = gain / (3 * fan_in);
    # gain 6 compensates the halving of a following relu
    bound = np.sqrt(gain / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def make_msfem_params(
    c_in: int,
    rng: np.random.Generator,
    dtype=np.float64,
    reduction: int = 4,
) -> MsfemParams:
    """Seeded parameters for one enhancement block.

    The reduced width is max(c_in // 2, 4); the output width equals
    c_in so the block is a drop-in.  c_in must be divisible by the
    attention reduction ratio.
    """
    if c_in < 1:
        raise ConfigError("c_in must be >= 1")
    if c_in % reduction != 0:
        raise ConfigError(f"channel count {c_in} not divisible by attention reduction {reduction}")
    c_r = max(c_in // 2, 4)
    c_out = c_in
    hidden = c_out // reduction
    return MsfemParams(
        reduce_kernel=_uniform(rng, (c_r, c_in, 1, 1), c_in, dtype),
        reduce_bias=_zeros(c_r, dtype),
        b1_kernel=_uniform(rng, (c_r, c_r, 1, 1), c_r, dtype),
        b1_bias=_zeros(c_r, dtype),
        b3_kernel=_uniform(rng, (c_r, c_r, 3, 3), c_r * 9, dtype),
        b3_bias=_zeros(c_r, dtype),
        b5_kernel=_uniform(rng, (c_r, c_r, 5, 5), c_r * 25, dtype),
        b5_bias=_zeros(c_r, dtype),
        integrate_kernel=_uniform(rng, (c_out, 3 * c_r, 1, 1), 3 * c_r, dtype),
        integrate_bias=_zeros(c_out, dtype),
        attention=ChannelAttentionParams(
            w1=_uniform(rng, (c_out, hidden), c_out, dtype, gain=6.0),
            b1=_zeros(hidden, dtype),
            w2=_uniform(rng, (hidden, c_out), hidden, dtype),
            b2=_zeros(c_out, dtype),
        ),
    )


def channel_attention(x: Tensor, params: ChannelAttentionParams) -> Tensor:
    """Rescale each channel by a learned weight in (0, 1).

    Works on (C,H,W) maps and (N,C,H,W) batches alike.
    """
    pooled = dc.global_average_pool(x)
    squeezed = dc.reshape(pooled, (1, -1)) if x.ndim == 3 else pooled
    hidden = dc.relu(dc.dense(squeezed, params.w1, params.b1))
    weights = dc.sigmoid(dc.dense(hidden, params.w2, params.b2))
    if x.ndim == 3:
        gate = dc.reshape(weights, (x.shape[0], 1, 1))
    else:
        gate = dc.reshape(weights, (x.shape[0], x.shape[1], 1, 1))
    return dc.mul(x, gate)


def msfem_pre_gate(x: Tensor, params: MsfemParams) -> Tensor:
    """Everything before the attention gate (linear in the input)."""
    reduced = dc.conv2d(x, params.reduce_kernel, params.reduce_bias)
    f1 = dc.conv2d(reduced, params.b1_kernel, params.b1_bias)
    f3 = dc.conv2d(reduced, params.b3_kernel, params.b3_bias, padding=1)
    f5 = dc.conv2d(reduced, params.b5_kernel, params.b5_bias, padding=2)
    merged = dc.concat_channels([f1, dc.add(f1, f3), dc.add(f3, f5)])
    return dc.conv2d(merged, params.integrate_kernel, params.integrate_bias)


def msfem_forward(x: Tensor, params: MsfemParams) -> Tensor:
    """Full block: multi-scale splice, integration, channel attention."""
    return channel_attention(msfem_pre_gate(x, params), params.attention)
