"""Waveform and video-frame frontends.

The MFCC pipeline is fixed by ``FrontendConfig`` defaults: 16 kHz mono,
400-sample (25 ms) periodic Hann window, 160-sample (10 ms) hop,
512-point FFT magnitude spectrum, 26 triangular mel filters on the
m = 2595*log10(1 + f/700) scale evaluated at bin centre frequencies,
log with a 1e-10 floor, orthonormal DCT-II, and the first 10
coefficients kept (c0 included).  Frames are picked uniformly with the
floor(i*L/k) rule and resized bilinearly with half-pixel centres.

Waveforms travel in a plain uncompressed PCM container: 16-bit
little-endian mono WAV with the rate declared in the header.
"""

from __future__ import annotations

import hashlib
import wave
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, FormatError, InputError

__all__ = [
    "AudioClip",
    "FrontendConfig",
    "MfccMatrix",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "mfcc",
    "sample_frames",
    "preprocess_frame",
    "frame_stack",
    "read_wav",
    "write_wav",
]


@dataclass(frozen=True)
class FrontendConfig:
    """Every knob of the deterministic preprocessing path.

    ``config_hash`` feeds the feature cache: two configs with the same
    hash produce bit-identical features.
    """

    sample_rate: int = 16000
    window: int = 400
    hop: int = 160
    n_fft: int = 512
    n_mels: int = 26
    n_coeffs: int = 10
    log_floor: float = 1e-10
    k_frames: int = 75
    frame_size: int = 224

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.hop <= 0 or self.window <= 0:
            raise ConfigError("window and hop must be positive")
        if self.k_frames < 1 or self.frame_size < 1:
            raise ConfigError("k_frames and frame_size must be >= 1")

    def config_hash(self) -> str:
        text = "|".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class AudioClip:
    """Mono waveform with its sample rate; samples live in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise InputError("sample rate must be positive")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InputError("waveform must be a nonempty 1-D array")
        if not np.isfinite(self.samples).all():
            raise InputError("waveform contains non-finite samples")
        if np.abs(self.samples).max() > 1.0:
            raise InputError("waveform samples must lie in [-1, 1]")


@dataclass
class MfccMatrix:
    """T x n_coeffs cepstral matrix plus its frame rate in frames/second."""

    frames: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise InputError("MFCC matrix must be 2-D (time x coefficient)")
        if not np.isfinite(self.frames).all():
            raise InputError("MFCC matrix contains non-finite entries")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters evaluated at FFT bin centre frequencies.

    Returns an (n_mels, n_fft//2 + 1) matrix.  Filter m rises linearly
    from edge m to edge m+1 and falls to edge m+2, where the edges are
    n_mels + 2 points equally spaced in mel between 0 Hz and Nyquist.
    No area normalisation is applied.
    """
    if n_mels < 1:
        raise ConfigError("n_mels must be >= 1")
    if n_fft < 2 or (n_fft & (n_fft - 1)) != 0:
        raise ConfigError(f"n_fft must be a power of two >= 2, got {n_fft}")
    if n_fft < 2 * n_mels:
        raise ConfigError(f"n_mels={n_mels} too large for n_fft={n_fft}")
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bank = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        left, centre, right = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - left) / (centre - left)
        falling = (right - bin_freqs) / (right - centre)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _dct2_ortho_matrix(n_out: int, n_in: int) -> np.ndarray:
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    mat = np.cos(np.pi * k * (2 * n + 1) / (2.0 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    return mat


def mfcc(clip: AudioClip, config: FrontendConfig = FrontendConfig()) -> MfccMatrix:
    """Cepstral features of a clip: frame, window, |FFT|, mel, log, DCT-II.

    Frame count is 1 + floor((len - window) / hop); no padding or
    centring, so shifting the waveform by one hop shifts frames by one
    index exactly.
    """
    if clip.sample_rate != config.sample_rate:
        raise InputError(
            f"clip rate {clip.sample_rate} differs from configured {config.sample_rate}"
        )
    if clip.samples.size < config.window:
        raise InputError(
            f"clip of {clip.samples.size} samples is shorter than one {config.window}-sample window"
        )
    frames = sliding_window_view(clip.samples, config.window)[:: config.hop]
    windowed = frames * _hann_periodic(config.window)
    spectrum = np.abs(np.fft.rfft(windowed, n=config.n_fft, axis=1))
    bank = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    log_mel = np.log(spectrum @ bank.T + config.log_floor)
    cepstra = log_mel @ _dct2_ortho_matrix(config.n_coeffs, config.n_mels).T
    return MfccMatrix(frames=cepstra, frame_rate=config.sample_rate / config.hop)


def sample_frames(video, k: int):
    """Pick k frames uniformly: indices floor(i*L/k) for i in 0..k-1.

    Videos shorter than k repeat frames; order is preserved.
    """
    frames = list(video)
    length = len(frames)
    if length < 1:
        raise InputError("cannot sample frames from an empty video")
    if k < 1:
        raise InputError("frame count k must be >= 1")
    return [frames[(i * length) // k] for i in range(k)]


def preprocess_frame(img: np.ndarray, target: int | tuple[int, int]) -> np.ndarray:
    """Bilinearly resize an H x W x 3 image and return it as 3 x H' x W' in [0, 1].

    uint8 inputs are scaled by 1/255; float inputs must already be in
    [0, 1].  Resampling uses half-pixel centres with edge clamping, so a
    same-size call is an exact passthrough and constants are preserved.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"expected an H x W x 3 image, got shape {img.shape}")
    h0, w0 = img.shape[:2]
    if h0 < 1 or w0 < 1:
        raise InputError("image has a zero-sized axis")
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    else:
        img = img.astype(np.float64)
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise InputError("float image values must lie in [0, 1]")
    th, tw = (target, target) if isinstance(target, int) else (int(target[0]), int(target[1]))
    if th < 1 or tw < 1:
        raise InputError("target size must be >= 1")

    ys = np.clip((np.arange(th) + 0.5) * (h0 / th) - 0.5, 0.0, h0 - 1.0)
    xs = np.clip((np.arange(tw) + 0.5) * (w0 / tw) - 0.5, 0.0, w0 - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h0 - 1)
    x1 = np.minimum(x0 + 1, w0 - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    resized = top * (1 - wy) + bottom * wy
    return resized.transpose(2, 0, 1)


def frame_stack(video, config: FrontendConfig) -> np.ndarray:
    """Sample and resize a frame list into a (k_frames, 3, S, S) stack in [0, 1]."""
    picked = sample_frames(video, config.k_frames)
    stack = np.stack([preprocess_frame(f, config.frame_size) for f in picked])
    return stack


# -- PCM container -------------------------------------------------------


def read_wav(path) -> AudioClip:
    """Read a 16-bit little-endian mono WAV file."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit samples, got {8 * fh.getsampwidth()}-bit")
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: not a valid WAV file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return AudioClip(samples=np.clip(samples, -1.0, 1.0), sample_rate=rate)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1] as 16-bit little-endian mono WAV."""
    quantised = np.round(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * 32767.0)
    data = quantised.astype("<i2").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with wave.open(str(tmp), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(data)
    tmp.replace(path)
