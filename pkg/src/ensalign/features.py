"""Acoustic front end: 39-dimensional log-energy MFCC features.

Each frame carries [log-energy, c1..c12, deltas, delta-deltas]. The zeroth
cepstral coefficient is dropped and its slot holds the log of the frame
energy instead.
"""

from __future__ import annotations

import csv
import wave
from dataclasses import dataclass

import numpy as np
from scipy.fftpack import dct


class AudioError(ValueError):
    """Unusable audio input (wrong encoding, wrong rate, ...)."""


class TooShortError(AudioError):
    """Audio shorter than a single analysis frame."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio with samples normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise AudioError("samples must be a non-empty 1-D sequence")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end parameters. Defaults follow common HTK-style practice."""

    sample_rate: int = 16000
    frame_length_s: float = 0.025
    frame_advance_s: float = 0.010
    n_filters: int = 26
    n_cepstra: int = 13
    pre_emphasis: float = 0.97
    energy_floor: float = 1e-10
    delta_window: int = 2


@dataclass(frozen=True)
class FeatureMatrix:
    """n frames by 39 columns: [log-energy, c1..c12, d(13), dd(13)]."""

    frames: np.ndarray
    frame_advance_s: float
    frame_length_s: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError("feature frames must be a 2-D array")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature frames contain non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def frame_end_times_s(self) -> np.ndarray:
        """End time of frame i is (i + 1) * frame_advance_s."""
        return (np.arange(self.n_frames) + 1) * self.frame_advance_s


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM WAV file. Other encodings are rejected."""
    with wave.open(str(path), "rb") as w:
        if w.getcomptype() != "NONE":
            raise AudioError(f"{path}: compressed WAV not supported")
        if w.getnchannels() != 1:
            raise AudioError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise AudioError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path, samples, sample_rate: int) -> None:
    """Write samples in [-1, 1] as a mono 16-bit PCM WAV file."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def frame_signal(audio: AudioBuffer, frame_length_s: float, frame_advance_s: float) -> np.ndarray:
    """Slice audio into Hamming-windowed frames.

    Frame i starts at sample round(i * frame_advance_s * rate); a trailing
    partial frame is dropped.
    """
    if not frame_length_s >= frame_advance_s > 0:
        raise ValueError("need frame_length_s >= frame_advance_s > 0")
    rate = audio.sample_rate
    length = int(round(frame_length_s * rate))
    n_samples = audio.samples.size
    if n_samples < length:
        raise TooShortError(
            f"audio of {n_samples} samples is shorter than one {length}-sample frame"
        )
    starts = []
    i = 0
    while True:
        start = int(round(i * frame_advance_s * rate))
        if start + length > n_samples:
            break
        starts.append(start)
        i += 1
    window = np.hamming(length)
    frames = np.stack([audio.samples[s : s + length] for s in starts])
    return frames * window


def delta(features: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression delta over +/- `window` frames, edge rows replicated."""
    if window < 1:
        raise ValueError("delta window must be >= 1")
    feats = np.asarray(features, dtype=np.float64)
    n = feats.shape[0]
    denom = 2 * sum(w * w for w in range(1, window + 1))
    out = np.zeros_like(feats)
    idx = np.arange(n)
    for w in range(1, window + 1):
        ahead = feats[np.minimum(idx + w, n - 1)]
        behind = feats[np.maximum(idx - w, 0)]
        out += w * (ahead - behind)
    return out / denom


def mel_filterbank(
    n_filters: int, nfft: int, sample_rate: int, low_hz: float = 0.0, high_hz: float | None = None
) -> np.ndarray:
    """Triangular mel filterbank, shape (n_filters, nfft // 2 + 1)."""
    high_hz = high_hz if high_hz is not None else sample_rate / 2.0
    low_mel = 2595.0 * np.log10(1.0 + low_hz / 700.0)
    high_mel = 2595.0 * np.log10(1.0 + high_hz / 700.0)
    mel_points = np.linspace(low_mel, high_mel, n_filters + 2)
    hz_points = 700.0 * (10.0 ** (mel_points / 2595.0) - 1.0)
    bins = np.floor((nfft + 1) * hz_points / sample_rate).astype(int)
    bank = np.zeros((n_filters, nfft // 2 + 1))
    for j in range(n_filters):
        for i in range(bins[j], bins[j + 1]):
            bank[j, i] = (i - bins[j]) / (bins[j + 1] - bins[j])
        for i in range(bins[j + 1], bins[j + 2]):
            bank[j, i] = (bins[j + 2] - i) / (bins[j + 2] - bins[j + 1])
    return bank


def magnitude_spectrum(frames: np.ndarray, nfft: int) -> np.ndarray:
    return np.abs(np.fft.rfft(frames, n=nfft, axis=1))


def _next_pow2(n: int) -> int:
    nfft = 1
    while nfft < n:
        nfft *= 2
    return nfft


def mfcc(audio: AudioBuffer, config: FeatureConfig | None = None) -> FeatureMatrix:
    """Compute the 39-dimensional feature matrix for one audio buffer.

    Per frame: pre-emphasis, Hamming window, magnitude spectrum, mel
    filterbank, log, DCT-II keeping c1..c12; the c0 slot holds the log of
    the frame energy floored at config.energy_floor. Deltas and
    delta-deltas are appended.
    """
    cfg = config if config is not None else FeatureConfig()
    if audio.sample_rate != cfg.sample_rate:
        raise AudioError(
            f"expected {cfg.sample_rate} Hz audio, got {audio.sample_rate} Hz; resample upstream"
        )
    x = audio.samples
    emphasized = np.append(x[0], x[1:] - cfg.pre_emphasis * x[:-1])
    frames = frame_signal(
        AudioBuffer(emphasized, audio.sample_rate), cfg.frame_length_s, cfg.frame_advance_s
    )
    energy = np.sum(frames * frames, axis=1)
    log_energy = np.log(np.maximum(energy, cfg.energy_floor))

    nfft = _next_pow2(frames.shape[1])
    mag = magnitude_spectrum(frames, nfft)
    bank = mel_filterbank(cfg.n_filters, nfft, cfg.sample_rate)
    fbank = np.maximum(mag @ bank.T, cfg.energy_floor)
    ceps = dct(np.log(fbank), type=2, axis=1, norm="ortho")[:, 1 : cfg.n_cepstra]

    base = np.hstack([log_energy[:, None], ceps])
    d = delta(base, cfg.delta_window)
    dd = delta(d, cfg.delta_window)
    return FeatureMatrix(np.hstack([base, d, dd]), cfg.frame_advance_s, cfg.frame_length_s)


def feature_column_names(n_cepstra: int = 13) -> list[str]:
    base = ["log_energy"] + [f"c{i}" for i in range(1, n_cepstra)]
    return base + [f"d_{name}" for name in base] + [f"dd_{name}" for name in base]


def write_features_csv(fm: FeatureMatrix, fileobj) -> None:
    """Debug export: one frame per row, header names all columns."""
    writer = csv.writer(fileobj)
    writer.writerow(feature_column_names((fm.frames.shape[1] // 3)))
    for row in fm.frames:
        writer.writerow([f"{v:.9g}" for v in row])
