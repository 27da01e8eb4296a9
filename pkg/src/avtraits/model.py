"""The assembled audio-visual regression network.

Wires the two modality stems, the bidirectional cross-attention pair,
and the trait head behind a flat registry of named parameter tensors
(the unit the optimiser updates and checkpoints serialise).
Construction is deterministic: all weights come from one seeded
generator in a fixed order, uniform with variance-preserving bounds
(sqrt(6/fan_in) ahead of relu, sqrt(3/fan_in) for linear maps) and zero
biases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .branches import StemParams, audio_stem, make_audio_stem, make_visual_stem, visual_stem
from .diffcore import Tensor
from .errors import CorruptionError
from .fusion import (
    CrossAttentionParams,
    HeadParams,
    fuse_bidirectional,
    make_attention_params,
    make_head_params,
    regression_head,
)

__all__ = ["ModelConfig", "PersonalityNet"]

_INIT_STREAM = 0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; data-side scale lives in the train config."""

    width: int = 32
    frame_channels: tuple[int, ...] = (8, 16, 32)
    audio_channels: int = 8
    audio_stride: int = 6
    use_msfem: bool = True


class PersonalityNet:
    """Stems + fusion + head over a named parameter registry."""

    def __init__(self, config: ModelConfig, seed: int = 1, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(np.random.SeedSequence([seed, _INIT_STREAM]))
        self.visual = make_visual_stem(
            config.width,
            channels=tuple(config.frame_channels),
            use_msfem=config.use_msfem,
            rng=rng,
            dtype=self.dtype,
        )
        self.audio = make_audio_stem(
            config.width,
            channels=config.audio_channels,
            stride=config.audio_stride,
            use_msfem=config.use_msfem,
            rng=rng,
            dtype=self.dtype,
        )
        self.fuse1 = make_attention_params(config.width, rng, dtype=self.dtype)
        self.fuse2 = make_attention_params(config.width, rng, dtype=self.dtype)
        self.head = make_head_params(config.width, rng, dtype=self.dtype)
        self.params: dict[str, Tensor] = {}
        self.params.update(self.visual.tensors("visual"))
        self.params.update(self.audio.tensors("audio"))
        self.params.update(self.fuse1.tensors("fuse1"))
        self.params.update(self.fuse2.tensors("fuse2"))
        self.params.update(self.head.tensors("head"))

    # -- forward --------------------------------------------------------

    def forward(self, visual: np.ndarray, audio: np.ndarray) -> Tensor:
        """Frame stack (K,3,H,W) + cepstra (T,10) -> five scores in (0, 1)."""
        tokens_v = visual_stem(np.asarray(visual, dtype=self.dtype), self.visual)
        tokens_a = audio_stem(np.asarray(audio, dtype=self.dtype), self.audio)
        pair = fuse_bidirectional(tokens_v, tokens_a, self.fuse1, self.fuse2)
        return regression_head(pair, self.head)

    def predict(self, visual: np.ndarray, audio: np.ndarray) -> np.ndarray:
        return self.forward(visual, audio).values.copy()

    # -- parameter plumbing ----------------------------------------------

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.params.items()}

    def load_parameter_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            missing = sorted(set(self.params) - set(arrays))
            extra = sorted(set(arrays) - set(self.params))
            raise CorruptionError(
                f"parameter names do not match the architecture: missing={missing}, extra={extra}"
            )
        for name, values in arrays.items():
            tensor = self.params[name]
            if tensor.values.shape != values.shape:
                raise CorruptionError(
                    f"parameter {name} has shape {values.shape}, expected {tensor.values.shape}"
                )
            tensor.values = values.astype(self.dtype).copy()

    @classmethod
    def from_arrays(
        cls, config: ModelConfig, arrays: dict[str, np.ndarray], dtype=np.float32
    ) -> "PersonalityNet":
        net = cls(config, seed=0, dtype=dtype)
        net.load_parameter_arrays(arrays)
        return net
