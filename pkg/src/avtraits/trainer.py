"""Deterministic SGD training with modality augmentation.

Defaults mirror the benchmark recipe: batch size 8, seed 1, initial
learning rate 0.04 dropping to one tenth at epochs 30/45/55/60 over 70
epochs.  The loss is mean absolute error - the evaluation score is
affine in it - and the optimiser is plain SGD, so two runs with the
same config and data produce byte-identical checkpoints.

Randomness streams are derived, never shared: parameter init from
(seed, 0) inside the model, per-epoch shuffles from (seed, 1, epoch),
and per-sample augmentation from (seed, 2, epoch, index).  When
augmentation is on, every base sample contributes its six forms each
epoch; the six forms may land in different batches after the shuffle.

A checkpoint is one file: a text manifest (config snapshot, epoch,
history, parameter names) followed by the named parameters as
consecutive tensor-container records.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .datastore import read_tensor_stream, tensor_bytes
from .diffcore import Tensor
from .errors import ConfigError, CorruptionError, DivergenceError, FormatError, InputError, ShapeError
from .frontend import FrontendConfig
from .mas import expand_group
from .metrics import average_accuracy, evaluate_model
from .model import ModelConfig, PersonalityNet

__all__ = [
    "Checkpoint",
    "EpochStats",
    "TrainConfig",
    "TrainResult",
    "lr_at_epoch",
    "load_checkpoint",
    "mae_loss",
    "save_checkpoint",
    "train",
]

CHECKPOINT_MAGIC = "MSMACKPT 1"
_SHUFFLE_STREAM = 1
_MAS_STREAM = 2


@dataclass(frozen=True)
class TrainConfig:
    """Training recipe plus the scale knobs tests shrink for desk runs."""

    batch_size: int = 8
    seed: int = 1
    initial_lr: float = 0.04
    epochs: int = 70
    milestones: tuple[int, ...] = (30, 45, 55, 60)
    use_msfem: bool = True
    use_mas: bool = True
    k_frames: int = 75
    frame_size: int = 224
    width: int = 32
    frame_channels: tuple[int, ...] = (8, 16, 32)
    audio_channels: int = 8
    audio_stride: int = 6

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        ms = tuple(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"milestones must be strictly increasing, got {ms}")
        if ms and ms[-1] >= self.epochs:
            raise ConfigError(f"milestones must stay below epochs={self.epochs}, got {ms}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small-scale preset that trains in seconds instead of hours.

        The learning rate is retuned for the shrunk network; the
        full-scale default keeps the benchmark value.
        """
        base = dict(
            initial_lr=0.2,
            epochs=60,
            milestones=(40, 52),
            k_frames=8,
            frame_size=32,
            width=32,
            frame_channels=(8, 16, 32),
            audio_channels=8,
            audio_stride=6,
        )
        base.update(overrides)
        return cls(**base)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            width=self.width,
            frame_channels=tuple(self.frame_channels),
            audio_channels=self.audio_channels,
            audio_stride=self.audio_stride,
            use_msfem=self.use_msfem,
        )

    def frontend_config(self) -> FrontendConfig:
        return FrontendConfig(k_frames=self.k_frames, frame_size=self.frame_size)

    # -- plain-text key=value round trip --------------------------------

    def to_file(self, path) -> None:
        Path(path).write_text(self.to_text())

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(), source=str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        values: dict = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{line_no}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
            values[key] = _parse_field(key, value, source, line_no)
        return cls(**values)


def _parse_field(key: str, value: str, source: str, line_no: int):
    int_keys = {"batch_size", "seed", "epochs", "k_frames", "frame_size", "width",
                "audio_channels", "audio_stride"}
    tuple_keys = {"milestones", "frame_channels"}
    bool_keys = {"use_msfem", "use_mas"}
    try:
        if key in int_keys:
            return int(value)
        if key in tuple_keys:
            return tuple(int(v) for v in value.split(",")) if value else ()
        if key in bool_keys:
            if value.lower() not in ("true", "false"):
                raise ValueError(value)
            return value.lower() == "true"
        return float(value)
    except ValueError:
        raise ConfigError(f"{source}:{line_no}: bad value for {key}: {value!r}")


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """initial_lr scaled by one tenth per passed milestone."""
    if not 0 <= epoch < config.epochs:
        raise InputError(f"epoch {epoch} outside 0..{config.epochs - 1}")
    passed = sum(1 for m in config.milestones if m <= epoch)
    return config.initial_lr / (10.0 ** passed)


def mae_loss(pred: Tensor, labels: np.ndarray) -> Tensor:
    """Mean absolute error over all entries; subgradient 0 at exact ties."""
    labels = np.asarray(labels, dtype=pred.values.dtype)
    if pred.values.shape != labels.shape:
        raise ShapeError(f"prediction {pred.values.shape} vs label {labels.shape}")
    return dc.mean(dc.absolute(pred - Tensor(labels)))


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_accuracy: float
    samples_seen: int


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: TrainConfig
    epoch: int
    history: list[EpochStats]

    def build_model(self) -> PersonalityNet:
        return PersonalityNet.from_arrays(self.config.model_config(), self.params)


@dataclass
class TrainResult:
    best: Checkpoint
    final: Checkpoint
    history: list[EpochStats]

    @property
    def best_epoch(self) -> int:
        return self.best.epoch


def _epoch_pool(samples, config: TrainConfig, epoch: int):
    if not config.use_mas:
        return list(samples)
    pool = []
    for i, sample in enumerate(samples):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, _MAS_STREAM, epoch, i]))
        pool.extend(expand_group(sample, rng).forms)
    return pool


def train(dataset, config: TrainConfig) -> TrainResult:
    """Run the full schedule and return the best-validation and final states.

    ``dataset`` needs ``train`` and ``val`` sample lists; an empty val
    split falls back to validating on the training samples.
    """
    train_samples = list(dataset.train)
    if not train_samples:
        raise InputError("training split is empty")
    val_samples = list(dataset.val) or train_samples

    model = PersonalityNet(config.model_config(), seed=config.seed)
    history: list[EpochStats] = []
    best: Checkpoint | None = None

    for epoch in range(config.epochs):
        lr = lr_at_epoch(epoch, config)
        pool = _epoch_pool(train_samples, config, epoch)
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, _SHUFFLE_STREAM, epoch])
        ).permutation(len(pool))

        loss_sum = 0.0
        seen = 0
        for start in range(0, len(order), config.batch_size):
            batch = [pool[i] for i in order[start : start + config.batch_size]]
            model.zero_grad()
            preds = dc.concat([model.forward(s.visual, s.audio) for s in batch], axis=0)
            preds = dc.reshape(preds, (len(batch), 5))
            labels = np.stack([s.label for s in batch])
            loss = mae_loss(preds, labels)
            if not np.isfinite(loss.values):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            loss.backward()
            for p in model.params.values():
                if p.grad is not None:
                    p.values -= (lr * p.grad).astype(p.values.dtype, copy=False)
            loss_sum += loss.item() * len(batch)
            seen += len(batch)

        val_accuracy = average_accuracy(evaluate_model(model, val_samples))
        history.append(
            EpochStats(
                epoch=epoch,
                lr=lr,
                train_loss=loss_sum / seen,
                val_accuracy=val_accuracy,
                samples_seen=seen,
            )
        )
        if best is None or val_accuracy > best.history[-1].val_accuracy:
            best = Checkpoint(
                params=model.parameter_arrays(),
                config=config,
                epoch=epoch,
                history=list(history),
            )

    final = Checkpoint(
        params=model.parameter_arrays(), config=config, epoch=config.epochs - 1,
        history=list(history),
    )
    return TrainResult(best=best, final=final, history=history)


# -- checkpoint container -------------------------------------------------


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    """Serialise to one file: text manifest, blank line, tensor records."""
    buf = io.BytesIO()
    lines = [CHECKPOINT_MAGIC, f"epoch={checkpoint.epoch}"]
    for key, value in _config_items(checkpoint.config):
        lines.append(f"config.{key}={value}")
    for field_name in ("epoch", "lr", "train_loss", "val_accuracy", "samples_seen"):
        row = ",".join(repr(getattr(h, field_name)) for h in checkpoint.history)
        lines.append(f"history.{field_name}={row}")
    names = list(checkpoint.params)
    for name in names:
        lines.append(f"param={name}")
    buf.write(("\n".join(lines) + "\n\n").encode())
    for name in names:
        buf.write(tensor_bytes(checkpoint.params[name]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def _config_items(config: TrainConfig):
    for line in config.to_text().strip().splitlines():
        key, _, value = line.partition("=")
        yield key, value


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    head, sep, _ = raw.partition(b"\n\n")
    if not sep:
        raise FormatError(f"{path}: missing checkpoint header terminator")
    lines = head.decode().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    epoch = None
    config_lines = []
    history_cols: dict[str, list[str]] = {}
    names: list[str] = []
    for line in lines[1:]:
        key, _, value = line.partition("=")
        if key == "epoch":
            epoch = int(value)
        elif key.startswith("config."):
            config_lines.append(f"{key[len('config.'):]}={value}")
        elif key.startswith("history."):
            history_cols[key[len("history."):]] = value.split(",") if value else []
        elif key == "param":
            names.append(value)
        else:
            raise FormatError(f"{path}: unknown checkpoint line {line!r}")
    if epoch is None or not names:
        raise CorruptionError(f"{path}: checkpoint header incomplete")
    config = TrainConfig.from_text("\n".join(config_lines), source=str(path))

    history = []
    if history_cols:
        n_rows = len(history_cols["epoch"])
        for i in range(n_rows):
            history.append(
                EpochStats(
                    epoch=int(history_cols["epoch"][i]),
                    lr=float(history_cols["lr"][i]),
                    train_loss=float(history_cols["train_loss"][i]),
                    val_accuracy=float(history_cols["val_accuracy"][i]),
                    samples_seen=int(history_cols["samples_seen"][i]),
                )
            )

    params: dict[str, np.ndarray] = {}
    body = io.BytesIO(raw[len(head) + 2 :])
    for name in names:
        try:
            params[name] = read_tensor_stream(body)
        except (FormatError, CorruptionError) as exc:
            raise CorruptionError(f"{path}: while reading parameter {name}: {exc}") from exc
    return Checkpoint(params=params, config=config, epoch=epoch, history=history)
