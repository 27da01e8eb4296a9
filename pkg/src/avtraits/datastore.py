"""Dataset files: manifests, cached tensors, and synthetic data.

Tensor container ("MSMA" files): magic ``MSMA``, version u16 LE, rank
u8, dims as u32 LE, then row-major float32 LE payload.  Writes are
whole-file atomic (temp file + rename).

Manifest: a comma-separated file with the exact header
``id,visual,audio,E,N,A,C,O,split``; paths are resolved relative to the
manifest's directory.  The visual path is a directory of one tensor
file per frame (lexicographic order = temporal order); the audio path
is a 16-bit mono WAV.

The synthetic generator plants one scalar per modality: the angle of an
oriented luminance gradient (visual) and the frequency of a pure tone
snapped to an exact DFT bin (audio).  E, A, O are monotone functions of
the visual scalar and N, C of the audio scalar, so neither modality
alone suffices for all five traits.  Brute-force decoders recover the
scalars straight from the generated files, which is what the oracle
tests lean on.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    InputError,
    LoadError,
    ValidationError,
)
from .frontend import FrontendConfig, frame_stack, mfcc, read_wav, write_wav, AudioClip
from .mas import Sample

__all__ = [
    "Dataset",
    "ManifestEntry",
    "SynthConfig",
    "decode_planted_labels",
    "load_dataset",
    "load_manifest",
    "load_samples",
    "planted_labels",
    "prepare_cache",
    "read_tensor",
    "read_tensor_stream",
    "synth_dataset",
    "tensor_bytes",
    "write_manifest",
    "write_tensor",
]

MAGIC = b"MSMA"
VERSION = 1
MAX_RANK = 8
MANIFEST_HEADER = ["id", "visual", "audio", "E", "N", "A", "C", "O", "split"]
SPLITS = ("train", "val", "test")
CACHE_SIDECAR = "frontend.hash"

# Model-ready cepstra are standardised with one fixed affine so their
# entries sit near unit scale (raw log-cepstra span tens).  The raw
# extraction itself is untouched; these constants are part of the data
# pipeline, recorded here and applied symmetrically at cache and load.
MFCC_SHIFT = -2.5
MFCC_SCALE = 8.0


# -- tensor container ----------------------------------------------------


def tensor_bytes(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype=np.float32)
    if array.ndim < 1 or array.ndim > MAX_RANK:
        raise InputError(f"tensor rank must be 1..{MAX_RANK}, got {array.ndim}")
    if not np.isfinite(array).all():
        raise InputError("tensor contains non-finite values")
    header = MAGIC + struct.pack("<HB", VERSION, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + array.astype("<f4").tobytes(order="C")


def write_tensor(path, array: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(tensor_bytes(array))
    tmp.replace(path)


def read_tensor_stream(fh) -> np.ndarray:
    """Read one tensor record from a binary stream positioned at its magic."""
    magic = fh.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}, expected {MAGIC!r}")
    meta = fh.read(3)
    if len(meta) != 3:
        raise CorruptionError("tensor header truncated")
    version, rank = struct.unpack("<HB", meta)
    if version != VERSION:
        raise FormatError(f"unknown tensor version {version}")
    if rank < 1 or rank > MAX_RANK:
        raise CorruptionError(f"tensor rank {rank} outside 1..{MAX_RANK}")
    dim_bytes = fh.read(4 * rank)
    if len(dim_bytes) != 4 * rank:
        raise CorruptionError("tensor dims truncated")
    dims = struct.unpack(f"<{rank}I", dim_bytes)
    count = int(np.prod(dims))
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise CorruptionError(
            f"tensor payload truncated: expected {4 * count} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"tensor file not found: {path}")
    with path.open("rb") as fh:
        return read_tensor_stream(fh)


# -- manifest --------------------------------------------------------------


@dataclass
class ManifestEntry:
    sample_id: str
    visual: Path
    audio: Path
    label: np.ndarray
    split: str


def load_manifest(path) -> list[ManifestEntry]:
    """Parse and validate a manifest; entries come back in file order."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"manifest not found: {path}")
    base = path.parent
    entries: list[ManifestEntry] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty manifest, expected header {MANIFEST_HEADER}")
        if header != MANIFEST_HEADER:
            raise FormatError(
                f"{path}: bad header {header}, expected {MANIFEST_HEADER}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise FormatError(
                    f"{path}:{row_no}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}"
                )
            sample_id, visual, audio, *trait_cells, split = row
            label = np.empty(5)
            for i, (name, cell) in enumerate(zip(MANIFEST_HEADER[3:8], trait_cells)):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"{path}:{row_no}: column {name} is not a number: {cell!r}"
                    )
                if not 0.0 <= value <= 1.0:
                    raise ValidationError(
                        f"{path}:{row_no}: column {name}={value} outside [0, 1]"
                    )
                label[i] = value
            if split not in SPLITS:
                raise ValidationError(
                    f"{path}:{row_no}: split {split!r} not one of {SPLITS}"
                )
            visual_path = base / visual
            audio_path = base / audio
            if not visual_path.is_dir():
                raise LoadError(f"{path}:{row_no}: visual directory not found: {visual_path}")
            if not audio_path.is_file():
                raise LoadError(f"{path}:{row_no}: audio file not found: {audio_path}")
            entries.append(
                ManifestEntry(
                    sample_id=sample_id,
                    visual=visual_path,
                    audio=audio_path,
                    label=label,
                    split=split,
                )
            )
    return entries


def write_manifest(path, rows: list[dict]) -> None:
    """Write manifest rows ({id, visual, audio, label, split}) atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for row in rows:
            writer.writerow(
                [row["id"], row["visual"], row["audio"]]
                + [repr(float(v)) for v in row["label"]]
                + [row["split"]]
            )
    tmp.replace(path)


# -- sample loading and the feature cache ----------------------------------


@dataclass
class Dataset:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]


def _load_frame_dir(path: Path) -> list[np.ndarray]:
    files = sorted(p for p in path.iterdir() if p.suffix == ".ten")
    if not files:
        raise LoadError(f"no frame tensors in {path}")
    frames = []
    for f in files:
        tensor = read_tensor(f)
        if tensor.ndim != 3 or tensor.shape[0] != 3:
            raise CorruptionError(f"{f}: expected a (3, H, W) frame, got {tensor.shape}")
        frames.append(np.clip(tensor.transpose(1, 2, 0).astype(np.float64), 0.0, 1.0))
    return frames


def _compute_sample(entry: ManifestEntry, config: FrontendConfig) -> Sample:
    visual = frame_stack(_load_frame_dir(entry.visual), config).astype(np.float32)
    clip = read_wav(entry.audio)
    cepstra = (mfcc(clip, config).frames - MFCC_SHIFT) / MFCC_SCALE
    return Sample(visual=visual, audio=cepstra.astype(np.float32), label=entry.label.copy())


def _cache_paths(cache_dir: Path, entry: ManifestEntry) -> tuple[Path, Path]:
    return cache_dir / f"{entry.sample_id}.visual.ten", cache_dir / f"{entry.sample_id}.audio.ten"


def prepare_cache(entries: list[ManifestEntry], config: FrontendConfig, cache_dir) -> int:
    """Precompute features into ``cache_dir``; returns the number of samples written.

    The sidecar records the frontend config hash; a later load with a
    different config invalidates the whole cache.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        sample = _compute_sample(entry, config)
        visual_path, audio_path = _cache_paths(cache_dir, entry)
        write_tensor(visual_path, sample.visual)
        write_tensor(audio_path, sample.audio)
    (cache_dir / CACHE_SIDECAR).write_text(config.config_hash() + "\n")
    return len(entries)


def _cache_valid(cache_dir: Path | None, config: FrontendConfig) -> bool:
    if cache_dir is None:
        return False
    sidecar = Path(cache_dir) / CACHE_SIDECAR
    return sidecar.is_file() and sidecar.read_text().strip() == config.config_hash()


def load_samples(
    entries: list[ManifestEntry],
    config: FrontendConfig,
    cache_dir=None,
) -> list[Sample]:
    """Build model-ready samples, via the cache when its hash matches."""
    use_cache = _cache_valid(cache_dir, config)
    samples = []
    for entry in entries:
        if use_cache:
            visual_path, audio_path = _cache_paths(Path(cache_dir), entry)
            if visual_path.is_file() and audio_path.is_file():
                samples.append(
                    Sample(
                        visual=read_tensor(visual_path),
                        audio=read_tensor(audio_path),
                        label=entry.label.copy(),
                    )
                )
                continue
        samples.append(_compute_sample(entry, config))
    return samples


def load_dataset(manifest_path, config: FrontendConfig, cache_dir=None) -> Dataset:
    entries = load_manifest(manifest_path)
    by_split = {split: [e for e in entries if e.split == split] for split in SPLITS}
    return Dataset(
        train=load_samples(by_split["train"], config, cache_dir),
        val=load_samples(by_split["val"], config, cache_dir),
        test=load_samples(by_split["test"], config, cache_dir),
    )


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale generation defaults; bump k_frames/frame_size for full scale."""

    k_frames: int = 8
    frame_size: int = 32
    audio_seconds: float = 0.5
    sample_rate: int = 16000
    tone_amplitude: float = 0.5
    freq_lo: float = 200.0
    freq_hi: float = 2000.0
    angle_steps: int = 4096  # the visual scalar lives on this grid
    gradient_contrast: float = 0.25  # 0.5 +- c*sqrt(2) must stay inside [0, 1]

    @property
    def n_audio_samples(self) -> int:
        return int(round(self.audio_seconds * self.sample_rate))


def planted_labels(u_visual: float, u_audio: float) -> np.ndarray:
    """Monotone map from the two planted scalars to the five traits.

    E, A, O depend only on the visual scalar; N, C only on the audio
    scalar.  The spans run close to the [0, 1] ends so a regressor has
    to commit, as the benchmark's observer labels do.
    """
    return np.array(
        [
            0.02 + 0.96 * u_visual,          # E
            0.02 + 0.96 * u_audio,           # N
            0.98 - 0.96 * u_visual,          # A
            0.98 - 0.96 * u_audio,           # C
            0.02 + 0.96 * u_visual * u_visual,  # O
        ]
    )


def _snap_angle(u_raw: float, steps: int) -> float:
    # keep the top of the grid shy of 1 so the gradient angle stays below pi
    return min(round(u_raw * steps), steps - 1) / steps


def _snap_frequency(u_raw: float, cfg: SynthConfig) -> tuple[float, float]:
    target = cfg.freq_lo + u_raw * (cfg.freq_hi - cfg.freq_lo)
    bin_hz = cfg.sample_rate / cfg.n_audio_samples
    freq = round(target / bin_hz) * bin_hz
    return freq, (freq - cfg.freq_lo) / (cfg.freq_hi - cfg.freq_lo)


def _gradient_frame(u_visual: float, size: int, contrast: float) -> np.ndarray:
    theta = np.pi * u_visual
    axis = np.linspace(-1.0, 1.0, size)
    pattern = 0.5 + contrast * (np.cos(theta) * axis[None, :] + np.sin(theta) * axis[:, None])
    return np.repeat(pattern[None, :, :], 3, axis=0)


def synth_dataset(n: int, seed: int, out_dir, config: SynthConfig = SynthConfig()) -> Path:
    """Generate n samples under ``out_dir`` and return the manifest path.

    Deterministic: per-sample generators derive from (seed, index).
    Splits follow a 3:1:1 round-robin (indices 0-2 train, 3 val, 4 test).
    """
    if n < 1:
        raise InputError("need at least one sample")
    out_dir = Path(out_dir)
    rows = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        u_visual = _snap_angle(rng.random(), config.angle_steps)
        freq, u_audio = _snap_frequency(rng.random(), config)
        sample_id = f"v{i:05d}"

        frame = _gradient_frame(u_visual, config.frame_size, config.gradient_contrast)
        frame_dir = out_dir / "frames" / sample_id
        for k in range(config.k_frames):
            write_tensor(frame_dir / f"frame_{k:03d}.ten", frame)

        t = np.arange(config.n_audio_samples) / config.sample_rate
        tone = config.tone_amplitude * np.sin(2.0 * np.pi * freq * t)
        audio_path = out_dir / "audio" / f"{sample_id}.wav"
        write_wav(audio_path, tone, config.sample_rate)

        rows.append(
            {
                "id": sample_id,
                "visual": f"frames/{sample_id}",
                "audio": f"audio/{sample_id}.wav",
                "label": planted_labels(u_visual, u_audio),
                "split": SPLITS[0 if i % 5 < 3 else (1 if i % 5 == 3 else 2)],
            }
        )
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest


# -- brute-force decoders (the oracle side of the planted signal) ----------


def decode_visual_scalar(frame_dir, angle_steps: int = SynthConfig.angle_steps) -> float:
    """Recover the gradient-angle scalar from the first stored frame."""
    frames = _load_frame_dir(Path(frame_dir))
    gray = frames[0].mean(axis=2)
    size = gray.shape[0]
    axis = np.linspace(-1.0, 1.0, size)
    # projections onto the two orthogonal ramps; atan2 cancels the contrast
    cos_part = (gray * axis[None, :]).sum()
    sin_part = (gray * axis[:, None]).sum()
    theta = np.arctan2(sin_part, cos_part)
    return min(max(round(theta / np.pi * angle_steps), 0), angle_steps - 1) / angle_steps


def decode_audio_scalar(wav_path, config: SynthConfig = SynthConfig()) -> float:
    """Recover the tone-frequency scalar by FFT peak (the tone sits on a bin)."""
    clip: AudioClip = read_wav(wav_path)
    spectrum = np.abs(np.fft.rfft(clip.samples))
    bin_hz = clip.sample_rate / clip.samples.size
    freq = int(np.argmax(spectrum)) * bin_hz
    return (freq - config.freq_lo) / (config.freq_hi - config.freq_lo)


def decode_planted_labels(entry: ManifestEntry, config: SynthConfig = SynthConfig()) -> np.ndarray:
    """Read both planted scalars from the files and re-derive the label."""
    u_visual = decode_visual_scalar(entry.visual, config.angle_steps)
    u_audio = decode_audio_scalar(entry.audio, config)
    return planted_labels(u_visual, u_audio)
