"""Multichannel audio container and WAV file handling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.io import wavfile

from .errors import EmptyInput, InvalidConfig


@dataclass(frozen=True)
class MultichannelAudio:
    """Time-domain signals of one recording, shape (channels, samples).

    All channels share one sample grid; channels may originate from a compact
    array or from distributed devices (after zipping single-channel files).
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if samples.ndim != 2:
            raise InvalidConfig(f"expected (channels, samples), got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise InvalidConfig(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


def read_wav(path: str | Path) -> MultichannelAudio:
    """Read a PCM16/PCM32/float WAV file into a MultichannelAudio."""
    sample_rate, data = wavfile.read(str(path))
    if data.size == 0:
        raise EmptyInput(f"empty WAV file: {path}")
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T  # scipy returns (samples, channels)
    return MultichannelAudio(samples=data, sample_rate=int(sample_rate))


def read_wavs(paths: Iterable[str | Path]) -> MultichannelAudio:
    """Zip several WAV files (mono or multichannel) into one recording.

    Channels are stacked in the order given; all files must share the sample
    rate. Differing lengths are truncated to the shortest file (distributed
    devices rarely stop at the very same sample).
    """
    parts = [read_wav(p) for p in paths]
    if not parts:
        raise EmptyInput("no WAV files given")
    rates = {p.sample_rate for p in parts}
    if len(rates) > 1:
        raise InvalidConfig(f"sample rates differ across files: {sorted(rates)}")
    length = min(p.num_samples for p in parts)
    stacked = np.concatenate([p.samples[:, :length] for p in parts], axis=0)
    return MultichannelAudio(samples=stacked, sample_rate=parts[0].sample_rate)


def write_wav(path: str | Path, audio: MultichannelAudio, dtype: str = "float32") -> None:
    """Write a MultichannelAudio as WAV (``float32`` or ``pcm16``)."""
    data = audio.samples.T
    if dtype == "float32":
        wavfile.write(str(path), audio.sample_rate, data.astype(np.float32))
    elif dtype == "pcm16":
        clipped = np.clip(data, -1.0, 1.0 - 1.0 / 32768.0)
        wavfile.write(str(path), audio.sample_rate, (clipped * 32768.0).astype(np.int16))
    else:
        raise InvalidConfig(f"unsupported WAV dtype: {dtype}")
