"""Deterministic STFT/ISTFT front-end.

Conventions used everywhere downstream:
  * tensors are indexed ``(channel, frame, bin)``;
  * bins run from 0 to ``fft_size // 2`` inclusive (real-input FFT layout);
  * frame ``t`` starts at sample ``t * frame_shift``;
  * a periodic Hann analysis window of length ``fft_size`` is applied; the
    same window is used for synthesis, with overlap-add normalized by the
    summed squared window (perfect reconstruction on the fully overlapped
    interior for 50% and 75% overlap).

Parseval note: with this windowing, ``sum |X|^2`` over a steady-state signal
equals the time-domain energy times ``fft_size * sum(w^2) / frame_shift``
(up to the one-sided-spectrum doubling of interior bins).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .audio import MultichannelAudio
from .errors import EmptyInput, InvalidConfig

_WINDOWS = ("hann",)


def _check_params(fft_size: int, frame_shift: int, window: str) -> None:
    if window not in _WINDOWS:
        raise InvalidConfig(f"unsupported window {window!r}; choose from {_WINDOWS}")
    if fft_size <= 0 or (fft_size & (fft_size - 1)) != 0:
        raise InvalidConfig(f"fft_size must be a power of two, got {fft_size}")
    if frame_shift <= 0 or fft_size < frame_shift:
        raise InvalidConfig(f"need 0 < frame_shift <= fft_size, got shift={frame_shift}")


def analysis_window(fft_size: int, window: str = "hann") -> np.ndarray:
    _check_params(fft_size, fft_size, window)
    return get_window(window, fft_size, fftbins=True)


@dataclass(frozen=True)
class SpectrogramTensor:
    """Complex STFT of a multichannel recording, shape (channel, frame, bin)."""

    values: np.ndarray
    frame_shift: int
    fft_size: int
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 3:
            raise InvalidConfig(f"expected (channel, frame, bin), got shape {values.shape}")
        if values.shape[2] != self.fft_size // 2 + 1:
            raise InvalidConfig(
                f"bin count {values.shape[2]} does not match fft_size {self.fft_size}"
            )
        object.__setattr__(self, "values", values)

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]

    @property
    def num_bins(self) -> int:
        return self.values.shape[2]

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.frame_shift

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of every bin."""
        return np.arange(self.num_bins) * self.sample_rate / self.fft_size

    def frame_to_seconds(self, frame: float) -> float:
        return frame * self.frame_shift / self.sample_rate

    def seconds_to_frame(self, seconds: float) -> int:
        return int(round(seconds * self.sample_rate / self.frame_shift))


def stft(
    audio: MultichannelAudio,
    fft_size: int = 1024,
    frame_shift: int = 256,
    window: str = "hann",
) -> SpectrogramTensor:
    """Short-time Fourier transform of all channels.

    The signal tail is zero-padded so that every sample is covered by at
    least one frame; frame ``t`` covers samples
    ``[t * frame_shift, t * frame_shift + fft_size)``.
    """
    _check_params(fft_size, frame_shift, window)
    if audio.num_samples == 0:
        raise EmptyInput("cannot compute the STFT of an empty signal")

    num_frames = max(1, -(-audio.num_samples // frame_shift))
    padded_len = (num_frames - 1) * frame_shift + fft_size
    padded = np.zeros((audio.num_channels, padded_len))
    padded[:, : audio.num_samples] = audio.samples

    win = analysis_window(fft_size, window)
    starts = np.arange(num_frames) * frame_shift
    # (channel, frame, sample-in-frame)
    frames = np.lib.stride_tricks.sliding_window_view(padded, fft_size, axis=1)[:, starts, :]
    values = np.fft.rfft(frames * win, axis=2)
    return SpectrogramTensor(
        values=values,
        frame_shift=frame_shift,
        fft_size=fft_size,
        sample_rate=audio.sample_rate,
    )


def istft(
    spec: SpectrogramTensor,
    window: str = "hann",
    num_samples: int | None = None,
) -> MultichannelAudio:
    """Inverse STFT by windowed overlap-add with squared-window normalization."""
    _check_params(spec.fft_size, spec.frame_shift, window)
    win = analysis_window(spec.fft_size, window)

    total = (spec.num_frames - 1) * spec.frame_shift + spec.fft_size
    out = np.zeros((spec.num_channels, total))
    norm = np.zeros(total)
    frames = np.fft.irfft(spec.values, n=spec.fft_size, axis=2) * win
    for t in range(spec.num_frames):
        start = t * spec.frame_shift
        out[:, start : start + spec.fft_size] += frames[:, t, :]
        norm[start : start + spec.fft_size] += win**2
    valid = norm > 1e-12
    out[:, valid] /= norm[valid]
    if num_samples is not None:
        out = out[:, :num_samples]
    return MultichannelAudio(samples=out, sample_rate=spec.sample_rate)
