"""Modality augmentation and corruption scenarios.

Training-side: each sample expands into six forms sharing one label -
the original, each modality zeroed, each modality plus standard-normal
noise, and both modalities attenuated by one shared random factor.

Inference-side: the six non-ideal scenarios (plus ``clean``) corrupt a
sample in place of real-world modality loss or interference.  "Empty"
is an all-zeros array of unchanged shape; "full noise" replaces the
modality with standard-normal samples; "w noise" adds noise matched to
the modality's own mean and standard deviation (a constant array is
returned unchanged, since its matched noise has zero variance).

All randomness flows through an explicit generator, so every draw is
reproducible from a run seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "AugmentedGroup",
    "GROUP_SIZE",
    "NON_IDEAL_SCENARIOS",
    "SCENARIOS",
    "Sample",
    "add_noise",
    "apply_scenario",
    "cli_tag",
    "expand_group",
    "scenario_from_cli",
]

SCENARIOS = (
    "clean",
    "only_video",
    "only_audio",
    "video_full_noise",
    "audio_full_noise",
    "video_noise",
    "audio_noise",
)
NON_IDEAL_SCENARIOS = SCENARIOS[1:]
GROUP_SIZE = 6
ATTENUATION_RANGE = (0.3, 1.0)


@dataclass
class Sample:
    """One training/evaluation item: frame stack, cepstra, trait label."""

    visual: np.ndarray
    audio: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        self.label = np.asarray(self.label, dtype=np.float64)
        if self.label.shape != (5,):
            raise ShapeError(f"label must have shape (5,), got {self.label.shape}")
        if (self.label < 0).any() or (self.label > 1).any():
            raise ShapeError("label entries must lie in [0, 1]")

    def copy(self) -> "Sample":
        return Sample(self.visual.copy(), self.audio.copy(), self.label.copy())


@dataclass
class AugmentedGroup:
    """Six forms of one sample, all carrying the same label (form 0 is the original)."""

    forms: list[Sample]
    label: np.ndarray


def add_noise(x: np.ndarray, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Additive noise: ``standard_normal`` is N(0,1); ``matched`` is
    N(mean(x), std(x)^2).  Matched noise on a constant array returns the
    array unchanged."""
    x = np.asarray(x)
    if kind == "standard_normal":
        return x + rng.standard_normal(x.shape)
    if kind == "matched":
        std = float(x.std())
        if std == 0.0:
            return x.copy()
        return x + rng.normal(float(x.mean()), std, size=x.shape)
    raise ConfigError(f"unknown noise kind {kind!r}")


def expand_group(
    sample: Sample,
    rng: np.random.Generator,
    attenuation_range: tuple[float, float] = ATTENUATION_RANGE,
) -> AugmentedGroup:
    """Expand one sample into its six training forms.

    Draw order is fixed (audio noise, visual noise, then the shared
    attenuation factor) so a given generator state always produces the
    same group.  The input sample is never mutated.
    """
    original = sample.copy()
    audio_empty = Sample(sample.visual.copy(), np.zeros_like(sample.audio), sample.label)
    visual_empty = Sample(np.zeros_like(sample.visual), sample.audio.copy(), sample.label)
    audio_noisy = Sample(
        sample.visual.copy(), add_noise(sample.audio, "standard_normal", rng), sample.label
    )
    visual_noisy = Sample(
        add_noise(sample.visual, "standard_normal", rng), sample.audio.copy(), sample.label
    )
    factor = rng.uniform(*attenuation_range)
    attenuated = Sample(sample.visual * factor, sample.audio * factor, sample.label)
    return AugmentedGroup(
        forms=[original, audio_empty, visual_empty, audio_noisy, visual_noisy, attenuated],
        label=np.asarray(sample.label, dtype=np.float64).copy(),
    )


def apply_scenario(sample: Sample, scenario: str, rng: np.random.Generator) -> Sample:
    """Corrupt a sample per the named scenario; shapes and label survive exactly."""
    if scenario == "clean":
        return sample.copy()
    if scenario == "only_video":
        return Sample(sample.visual.copy(), np.zeros_like(sample.audio), sample.label)
    if scenario == "only_audio":
        return Sample(np.zeros_like(sample.visual), sample.audio.copy(), sample.label)
    if scenario == "video_full_noise":
        noise = rng.standard_normal(sample.visual.shape).astype(sample.visual.dtype, copy=False)
        return Sample(noise, sample.audio.copy(), sample.label)
    if scenario == "audio_full_noise":
        noise = rng.standard_normal(sample.audio.shape).astype(sample.audio.dtype, copy=False)
        return Sample(sample.visual.copy(), noise, sample.label)
    if scenario == "video_noise":
        return Sample(add_noise(sample.visual, "matched", rng), sample.audio.copy(), sample.label)
    if scenario == "audio_noise":
        return Sample(sample.visual.copy(), add_noise(sample.audio, "matched", rng), sample.label)
    raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def cli_tag(scenario: str) -> str:
    return scenario.replace("_", "-")


def scenario_from_cli(tag: str) -> str:
    scenario = tag.replace("-", "_")
    if scenario not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {tag!r}; expected one of {[cli_tag(s) for s in SCENARIOS]}"
        )
    return scenario
