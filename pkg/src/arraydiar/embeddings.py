"""Speaker embedding extraction.

A pretrained neural speaker embedder is deliberately not bundled. Three
interchangeable extractors are provided instead:

  * ``DefaultEmbedder`` -- deterministic log-mel statistics, gain-invariant;
    weak, but enough to tell apart sources with distinct spectral envelopes.
  * ``OracleEmbedder`` -- one-hot ground-truth identity, test-only.
  * ``ExternalEmbedder`` -- vectors read from a sidecar file produced by any
    external model (see :func:`read_embedding_sidecar` for the format).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import InvalidConfig, TooShort

MIN_SEGMENT_SECONDS = 0.25


class Embedder(Protocol):
    def embed(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray: ...


def mel_filterbank(
    num_bands: int, fft_size: int, sample_rate: int, fmin: float = 50.0
) -> np.ndarray:
    """Triangular mel filterbank, shape (num_bands, fft_size // 2 + 1)."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    fmax = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_bands + 2)
    hz_points = mel_to_hz(mel_points)
    bins = np.floor((fft_size + 1) * hz_points / sample_rate).astype(int)
    bank = np.zeros((num_bands, fft_size // 2 + 1))
    for b in range(num_bands):
        left, center, right = bins[b], bins[b + 1], bins[b + 2]
        center = max(center, left + 1)
        right = max(right, center + 1)
        bank[b, left:center] = (np.arange(left, center) - left) / (center - left)
        bank[b, center:right] = (right - np.arange(center, right)) / (right - center)
    return bank


def default_embed(
    waveform: np.ndarray,
    sample_rate: int,
    num_bands: int = 40,
    fft_size: int = 512,
    frame_shift: int = 160,
) -> np.ndarray:
    """Deterministic spectral-statistics embedding (D = 2 * num_bands).

    Per mel band, the mean and standard deviation of the log energy over
    time are stacked. The mean features are centered across bands, which
    cancels the constant offset a global gain adds in the log domain, so the
    embedding is invariant to positive scaling of the waveform.
    """
    waveform = np.asarray(waveform, dtype=np.float64).ravel()
    if len(waveform) < MIN_SEGMENT_SECONDS * sample_rate:
        raise TooShort(
            f"segment of {len(waveform) / sample_rate:.3f} s is shorter than "
            f"{MIN_SEGMENT_SECONDS} s"
        )
    num_frames = 1 + (len(waveform) - fft_size) // frame_shift
    if num_frames < 1:
        raise TooShort("segment shorter than one analysis frame")
    window = np.hanning(fft_size)
    starts = np.arange(num_frames) * frame_shift
    frames = np.lib.stride_tricks.sliding_window_view(waveform, fft_size)[starts]
    power = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2  # (T, F)
    bank = mel_filterbank(num_bands, fft_size, sample_rate)
    log_mel = np.log(np.maximum(power @ bank.T, 1e-30))  # (T, num_bands)
    mean = log_mel.mean(axis=0)
    std = log_mel.std(axis=0)
    mean = mean - mean.mean()
    vec = np.concatenate([mean, std])
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 1e-30 else vec


class DefaultEmbedder:
    def __init__(self, num_bands: int = 40):
        self.num_bands = num_bands

    def embed(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray:
        return default_embed(waveform, sample_rate, num_bands=self.num_bands)


class OracleEmbedder:
    """One-hot ground-truth identity vectors, for pipeline-wiring tests.

    The pipeline resolves each segment to the ground-truth speaker with the
    largest temporal overlap and calls :meth:`one_hot` directly; the
    waveform-based interface is unsupported on purpose.
    """

    def __init__(self, speakers: list[str]):
        self.speakers = list(speakers)

    def one_hot(self, speaker: str) -> np.ndarray:
        vec = np.zeros(max(len(self.speakers), 1))
        vec[self.speakers.index(speaker)] = 1.0
        return vec

    def embed(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray:
        raise InvalidConfig("the oracle embedder labels segments, not waveforms")


class ExternalEmbedder:
    """Embeddings read from a sidecar file keyed by segment id."""

    def __init__(self, path: str | Path):
        self.vectors = read_embedding_sidecar(path)

    def embed_segment(self, segment_id: int) -> np.ndarray:
        if segment_id not in self.vectors:
            raise InvalidConfig(f"sidecar file has no embedding for segment {segment_id}")
        return self.vectors[segment_id]

    def embed(self, waveform: np.ndarray, sample_rate: int) -> np.ndarray:
        raise InvalidConfig("the external embedder is keyed by segment id")


def write_embedding_sidecar(path: str | Path, vectors: dict[int, np.ndarray]) -> None:
    """Binary sidecar: per record a uint32 segment id, a uint32 length and
    that many little-endian float32 values."""
    with open(path, "wb") as fh:
        for seg_id in sorted(vectors):
            vec = np.asarray(vectors[seg_id], dtype="<f4")
            fh.write(struct.pack("<II", seg_id, len(vec)))
            fh.write(vec.tobytes())


def read_embedding_sidecar(path: str | Path) -> dict[int, np.ndarray]:
    vectors: dict[int, np.ndarray] = {}
    raw = Path(path).read_bytes()
    offset = 0
    while offset < len(raw):
        if offset + 8 > len(raw):
            raise InvalidConfig(f"truncated sidecar file: {path}")
        seg_id, length = struct.unpack_from("<II", raw, offset)
        offset += 8
        end = offset + 4 * length
        if end > len(raw):
            raise InvalidConfig(f"truncated sidecar file: {path}")
        vectors[seg_id] = np.frombuffer(raw[offset:end], dtype="<f4").astype(np.float64)
        offset = end
    return vectors


def normalize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 1e-30 else vec
