"""Synthetic segment audio with known boundaries.

Segment classes are narrow tones or band-limited noise, concatenated into
utterances. Because the boundaries are known exactly, these files support
end-to-end alignment experiments without any licensed corpus.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .acoustic import ClassInventory
from .features import FeatureConfig


@dataclass(frozen=True)
class SegmentClass:
    """Either a pure tone (low_hz == high_hz) or a noise band."""

    name: str
    low_hz: float
    high_hz: float


DEFAULT_CLASSES = (
    SegmentClass("aa", 280.0, 280.0),
    SegmentClass("ii", 1150.0, 1150.0),
    SegmentClass("uu", 2500.0, 2500.0),
    SegmentClass("ss", 3500.0, 7000.0),
)


def default_inventory() -> ClassInventory:
    return ClassInventory(tuple(c.name for c in DEFAULT_CLASSES))


def _band_noise(n: int, low_hz: float, high_hz: float, rate: int, rng) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    spectrum[(freqs < low_hz) | (freqs > high_hz)] = 0.0
    band = np.fft.irfft(spectrum, n=n)
    peak = np.max(np.abs(band))
    return band / peak if peak > 0 else band


def synth_segment(cls: SegmentClass, duration_s: float, rate: int, rng) -> np.ndarray:
    n = int(round(duration_s * rate))
    amplitude = rng.uniform(0.3, 0.7)
    if cls.low_hz == cls.high_hz:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        t = np.arange(n) / rate
        wave = np.sin(2.0 * np.pi * cls.low_hz * t + phase)
    else:
        wave = _band_noise(n, cls.low_hz, cls.high_hz, rate, rng)
    return amplitude * wave


@dataclass(frozen=True)
class Utterance:
    """Concatenated segments with their exact internal boundary times."""

    file_id: str
    labels: tuple[str, ...]
    boundaries_s: tuple[float, ...]  # end time of every segment, file end included
    samples: np.ndarray
    sample_rate: int


def synth_utterance(
    file_id: str,
    labels,
    durations_s,
    rate: int = 16000,
    rng=None,
    noise_level: float = 0.01,
    classes=DEFAULT_CLASSES,
) -> Utterance:
    rng = rng if rng is not None else np.random.default_rng(0)
    by_name = {c.name: c for c in classes}
    pieces = [synth_segment(by_name[label], dur, rate, rng) for label, dur in zip(labels, durations_s)]
    samples = np.concatenate(pieces)
    samples = samples + noise_level * rng.standard_normal(samples.size)
    samples = np.clip(samples, -1.0, 1.0)
    ends = np.cumsum([p.size for p in pieces]) / rate
    return Utterance(file_id, tuple(labels), tuple(float(e) for e in ends), samples, rate)


def random_utterance(
    file_id: str,
    rng,
    rate: int = 16000,
    n_segments_range: tuple[int, int] = (3, 6),
    duration_range_s: tuple[float, float] = (0.2, 0.5),
    classes=DEFAULT_CLASSES,
) -> Utterance:
    """Random labels (no adjacent repeats, which would be inaudible) and durations."""
    n_segments = int(rng.integers(n_segments_range[0], n_segments_range[1] + 1))
    labels = []
    for _ in range(n_segments):
        options = [c.name for c in classes if not labels or c.name != labels[-1]]
        labels.append(options[int(rng.integers(len(options)))])
    durations = rng.uniform(duration_range_s[0], duration_range_s[1], size=n_segments)
    return synth_utterance(file_id, labels, durations, rate=rate, rng=rng, classes=classes)


def frame_labels(
    utterance: Utterance, n_frames: int, inventory: ClassInventory, config: FeatureConfig
) -> np.ndarray:
    """Class index per analysis frame, decided by the frame's window center."""
    centers = np.arange(n_frames) * config.frame_advance_s + config.frame_length_s / 2.0
    out = np.empty(n_frames, dtype=np.int64)
    for i, center in enumerate(centers):
        seg = min(bisect_right(utterance.boundaries_s, center), len(utterance.labels) - 1)
        out[i] = inventory.index(utterance.labels[seg])
    return out


def build_corpus(
    n_files: int,
    seed: int,
    rate: int = 16000,
    prefix: str = "utt",
    classes=DEFAULT_CLASSES,
    **kwargs,
) -> list[Utterance]:
    rng = np.random.default_rng(seed)
    return [
        random_utterance(f"{prefix}{i:03d}", rng, rate=rate, classes=classes, **kwargs)
        for i in range(n_files)
    ]
