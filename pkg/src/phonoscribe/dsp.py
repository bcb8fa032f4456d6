"""Audio decoding and MFCC feature extraction.

Featurization is pinned for reproducibility: 16 kHz mono, clips forced to
2.0 s, 25 ms Hann windows with a 10 ms hop, 512-point spectrum, 64
triangular mel filters spanning 0 Hz to Nyquist, natural log with a 1e-10
floor, orthonormal DCT-II keeping the first 40 coefficients. A 2 s clip at
16 kHz therefore yields 1 + (32000 - 400) // 160 = 198 frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


class CorruptHeaderError(ValueError):
    pass


class UnsupportedFormatError(ValueError):
    def __init__(self, codec: str):
        self.codec = codec
        super().__init__(f"unsupported WAV format: {codec}")


class ConfigError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class DegenerateStdError(ValueError):
    pass


class FeatureFileError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    """Mono audio, amplitudes in [-1, 1]."""

    sample_rate: int
    samples: np.ndarray


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 16000
    clip_seconds: float = 2.0
    window_seconds: float = 0.025
    hop_seconds: float = 0.010
    n_fft: int = 512
    n_mels: int = 64
    n_coefficients: int = 40
    log_floor: float = 1e-10


@dataclass(frozen=True)
class FeatureNorm:
    """Global scalar standardization constants."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("std must be positive")


# Constants observed on the full recording corpus; shipped as the default
# for real-corpus runs. Synthetic or re-built corpora should recompute.
DEFAULT_NORM = FeatureNorm(mean=-11.48, std=80.30)


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE container to a mono clip.

    Supports PCM16 and IEEE float32, 1 or 2 channels. Stereo is averaged;
    PCM16 is scaled by 1/32768.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeaderError("not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise CorruptHeaderError("truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise CorruptHeaderError("missing fmt or data chunk")

    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{channels} channels")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"format {audio_format}, {bits}-bit")

    if channels == 2:
        samples = samples[: len(samples) // 2 * 2].reshape(-1, 2).mean(axis=1)
    if sample_rate <= 0:
        raise CorruptHeaderError("non-positive sample rate")
    return AudioClip(sample_rate=sample_rate, samples=samples)


def encode_wav(clip: AudioClip) -> bytes:
    """Serialize a clip as PCM16 WAV (counterpart of ``decode_wav``)."""
    pcm = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(pcm * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    return header + payload


def fix_length(clip: AudioClip, seconds: float = 2.0) -> AudioClip:
    """Zero-pad or truncate (both at the end) to exactly round(s * rate)."""
    n = round(seconds * clip.sample_rate)
    x = clip.samples
    if len(x) == n:
        return clip
    if len(x) > n:
        return AudioClip(clip.sample_rate, x[:n].copy())
    out = np.zeros(n, dtype=x.dtype)
    out[: len(x)] = x
    return AudioClip(clip.sample_rate, out)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rate conversion with a 16-tap windowed-sinc kernel.

    Kernel weights are renormalized per output sample, so DC is preserved
    exactly, including at the clip edges. Identity when rates match.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    x = clip.samples.astype(np.float64)
    n = len(x)
    ratio = target_rate / clip.sample_rate
    out_len = int(round(n * ratio))
    if out_len == 0 or n == 0:
        return AudioClip(target_rate, np.zeros(out_len))

    positions = np.arange(out_len) / ratio
    base = np.floor(positions).astype(np.int64)
    taps = np.arange(-7, 9)
    idx = base[:, None] + taps[None, :]
    delta = idx - positions[:, None]

    cutoff = min(1.0, ratio)  # anti-aliasing when downsampling
    weights = cutoff * np.sinc(cutoff * delta)
    weights *= 0.5 + 0.5 * np.cos(np.pi * delta / 8.0)  # Hann taper, |delta| <= 8
    weights *= (idx >= 0) & (idx < n)

    gathered = x[np.clip(idx, 0, n - 1)]
    y = (weights * gathered).sum(axis=1) / weights.sum(axis=1)
    return AudioClip(target_rate, y)


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann window: 0.5 - 0.5 cos(2 pi k / (n - 1))."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    if window > len(x):
        raise ConfigError(f"window {window} exceeds signal length {len(x)}")
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    return np.ascontiguousarray(frames)


def magnitude_spectrum(frames: np.ndarray, n_fft: int) -> np.ndarray:
    """|DFT| of zero-padded frames; rows are frames, n_fft//2 + 1 bins."""
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=-1))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on the mel scale, (n_mels, n_fft//2 + 1).

    Band edges are mel-spaced between 0 Hz and Nyquist; weights are the
    triangle heights evaluated at each FFT bin's center frequency.
    """
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0),
                                   n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower = edges[:-2, None]
    center = edges[1:-1, None]
    upper = edges[2:, None]
    up = (bins[None, :] - lower) / (center - lower)
    down = (upper - bins[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(up, down))


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, (n_out, n_in)."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    mat = np.sqrt(2.0 / n_in) * np.cos(np.pi * (2 * n + 1) * k / (2 * n_in))
    mat[0] /= np.sqrt(2.0)
    return mat


def mfcc(clip: AudioClip, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """MFCC matrix, (frames, n_coefficients), float64.

    The clip must already be at ``config.sample_rate``; run ``resample`` and
    ``fix_length`` first.
    """
    if clip.sample_rate != config.sample_rate:
        raise ConfigError(
            f"clip at {clip.sample_rate} Hz, config expects {config.sample_rate}"
        )
    window = round(config.window_seconds * config.sample_rate)
    hop = round(config.hop_seconds * config.sample_rate)
    frames = frame_signal(clip.samples.astype(np.float64), window, hop)
    frames = frames * hann_window(window)

    spectrum = magnitude_spectrum(frames, config.n_fft)
    fbank = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    energies = spectrum @ fbank.T
    log_energies = np.log(np.maximum(energies, config.log_floor))
    dct = dct_matrix(config.n_coefficients, config.n_mels)
    return log_energies @ dct.T


def compute_norm(feature_matrices: Iterable[np.ndarray]) -> FeatureNorm:
    """Scalar mean and population std over every coefficient of every frame."""
    total = 0
    acc = 0.0
    acc_sq = 0.0
    for mat in feature_matrices:
        arr = np.asarray(mat, dtype=np.float64)
        total += arr.size
        acc += arr.sum()
        acc_sq += np.square(arr).sum()
    if total == 0:
        raise EmptyInputError("no feature values")
    mean = acc / total
    var = acc_sq / total - mean * mean
    std = float(np.sqrt(max(var, 0.0)))
    if std <= 0.0:
        raise DegenerateStdError("all feature values identical")
    return FeatureNorm(mean=float(mean), std=std)


def standardize(features: np.ndarray, norm: FeatureNorm) -> np.ndarray:
    return (features - norm.mean) / norm.std


FEATURE_MAGIC = b"PHFM"
FEATURE_VERSION = 1


def save_features(path: str | Path, features: np.ndarray) -> None:
    """Write a feature matrix: magic, u16 version, u32 T, u32 C, f32-LE data."""
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 2:
        raise FeatureFileError("feature matrix must be 2-D")
    header = struct.pack("<4sHII", FEATURE_MAGIC, FEATURE_VERSION, *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes())


def load_features(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(struct.calcsize("<4sHII"))
        magic, version, t, c = struct.unpack("<4sHII", header)
        if magic != FEATURE_MAGIC:
            raise FeatureFileError(f"bad magic {magic!r}")
        if version != FEATURE_VERSION:
            raise FeatureFileError(f"unsupported version {version}")
        data = np.frombuffer(f.read(4 * t * c), dtype="<f4")
    if data.size != t * c:
        raise FeatureFileError("truncated feature payload")
    return data.reshape(t, c).copy()
