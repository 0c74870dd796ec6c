"""Filterbank features, speed perturbation, WAV/feature file I/O and a
planted-segment feature synthesizer for alignment and training tests."""

from __future__ import annotations

import csv
import struct
import wave
from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-10
TARGET_RATE_HZ = 16000
FBK_MAGIC = b"FBK1"


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray
    frame_hop_ms: float = 10.0
    frame_window_ms: float = 30.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"feature matrix must be T x B with T, B >= 1, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def band_count(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_frames * self.frame_hop_ms / 1000.0


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(bands: int, sample_rate_hz: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    edges = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), bands + 2)
    return mel_to_hz(edges[1:-1])


def mel_filterbank(bands: int, n_fft: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular HTK-mel filters spanning 0 Hz to Nyquist, shape (bands, n_fft//2 + 1)."""
    edges_hz = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), bands + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    lower, center, upper = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def num_frames_for(num_samples: int, window_samples: int, hop_samples: int) -> int:
    return (num_samples - window_samples) // hop_samples + 1


def extract_fbank(audio: AudioBuffer, bands: int = 40, hop_ms: float = 10.0,
                  window_ms: float = 30.0) -> FeatureMatrix:
    """Log mel filterbank energies with a Hann window.

    Rows follow ``floor((n - window) / hop) + 1``; energies are floored at
    ``LOG_FLOOR`` before the log.
    """
    if bands < 1:
        raise ValueError("bands must be >= 1")
    if hop_ms <= 0 or window_ms <= 0 or hop_ms > window_ms:
        raise ValueError("need 0 < hop_ms <= window_ms")
    x = audio.samples
    if not np.all(np.isfinite(x)):
        raise ValueError("invalid audio")
    sr = audio.sample_rate_hz
    win = int(round(window_ms * sr / 1000.0))
    hop = int(round(hop_ms * sr / 1000.0))
    if len(x) < win:
        raise ValueError("audio too short")
    n_fft = 1 << (win - 1).bit_length()
    T = num_frames_for(len(x), win, hop)
    idx = np.arange(win)[None, :] + hop * np.arange(T)[:, None]
    frames = x[idx] * np.hanning(win + 2)[1:-1]
    power = np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(bands, n_fft, sr).T
    return FeatureMatrix(np.log(np.maximum(energies, LOG_FLOOR)), frame_hop_ms=hop_ms,
                         frame_window_ms=window_ms)


def _resample_linear(x: np.ndarray, out_len: int, step: float) -> np.ndarray:
    pos = np.arange(out_len) * step
    return np.interp(pos, np.arange(len(x)), x)


def speed_perturb(audio: AudioBuffer, factor: float) -> AudioBuffer:
    """Play ``audio`` ``factor`` times faster by linear-interpolation resampling."""
    if not factor > 0:
        raise ValueError("invalid factor")
    if factor == 1.0:
        return AudioBuffer(audio.samples.copy(), audio.sample_rate_hz)
    n_out = int(round(len(audio.samples) / factor))
    return AudioBuffer(_resample_linear(audio.samples, n_out, factor), audio.sample_rate_hz)


def resample(audio: AudioBuffer, rate_hz: int = TARGET_RATE_HZ) -> AudioBuffer:
    if audio.sample_rate_hz == rate_hz:
        return audio
    step = audio.sample_rate_hz / rate_hz
    n_out = int(round(len(audio.samples) / step))
    return AudioBuffer(_resample_linear(audio.samples, n_out, step), rate_hz)


def read_wav(path, rate_hz: int = TARGET_RATE_HZ) -> AudioBuffer:
    """Read a mono 16-bit PCM WAV file and resample it to ``rate_hz``."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        sr = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return resample(AudioBuffer(samples, sr), rate_hz)


def write_wav(path, audio: AudioBuffer) -> None:
    pcm = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate_hz)
        w.writeframes(pcm.tobytes())


def write_features(path, feats: FeatureMatrix) -> None:
    rows, cols = feats.frames.shape
    with open(path, "wb") as f:
        f.write(FBK_MAGIC + struct.pack("<II", rows, cols))
        f.write(feats.frames.astype("<f4").tobytes())


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) != 12 or head[:4] != FBK_MAGIC:
            raise ValueError(f"{path}: not an FBK1 feature file")
        rows, cols = struct.unpack("<II", head[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return FeatureMatrix(data.reshape(rows, cols).astype(np.float64))


def write_features_csv(path, feats: FeatureMatrix) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow([f"band{i}" for i in range(feats.band_count)])
        for row in feats.frames:
            out.writerow([repr(float(v)) for v in row])


def phone_mean(phone_id: int, bands: int) -> np.ndarray:
    """Mean feature vector planted for ``phone_id``; independent of any noise seed."""
    return np.random.default_rng([0x5EED, int(phone_id)]).normal(0.0, 1.0, size=bands)


def synth_features(spec, bands: int = 40, noise_level: float = 0.0, seed: int = 0):
    """Planted-segment features.

    ``spec`` is a list of ``(phone_id, frame_count)``.  Each segment is the
    phone's mean vector plus Gaussian noise of std ``noise_level``.  Returns
    the feature matrix and the frame-level phone labels.
    """
    if not spec:
        raise ValueError("empty specification")
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    blocks, labels = [], []
    for phone_id, count in spec:
        if count < 1:
            raise ValueError("frame counts must be >= 1")
        blocks.append(np.tile(phone_mean(phone_id, bands), (count, 1)))
        labels.extend([int(phone_id)] * count)
    frames = np.vstack(blocks)
    if noise_level > 0:
        frames = frames + noise_level * np.random.default_rng(seed).normal(size=frames.shape)
    return FeatureMatrix(frames), np.asarray(labels, dtype=np.int64)


def gaussian_loglikes(feats: FeatureMatrix, phone_ids, num_states: int,
                      variance: float = 1.0) -> np.ndarray:
    """Log-likelihoods under unit-shared-variance Gaussians at the planted means.

    States not listed in ``phone_ids`` get ``-inf``-free but very low scores.
    """
    x = feats.frames
    out = np.full((x.shape[0], num_states), -1e6)
    for p in phone_ids:
        d = x - phone_mean(p, feats.band_count)
        out[:, p] = -0.5 * np.sum(d * d, axis=1) / variance
    return out
