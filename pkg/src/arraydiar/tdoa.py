"""Per-frame multi-source TDOA estimation.

GCC-PhaT correlations are computed per microphone pair, a few local maxima
are picked per pair, and candidate delay vectors are assembled by combining
one peak per pair. A candidate survives only if every closed three-microphone
loop sums (close) to zero, which prunes the combinatorial explosion down to
the physically grounded vectors.

Sign convention: ``tau[i, j] > 0`` means the signal arrives at microphone
``j`` later than at microphone ``i``.

Pair order: delays are stacked grouped by the larger microphone index, i.e.
``[(0,1), (0,2), (1,2), (0,3), (1,3), (2,3), ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .stft import SpectrogramTensor

EPS_FLOOR = 1e-12


def mic_pairs(num_channels: int) -> list[tuple[int, int]]:
    """Ordered microphone pairs, grouped by the larger index."""
    return [(i, j) for j in range(1, num_channels) for i in range(j)]


def pair_index(num_channels: int) -> dict[tuple[int, int], int]:
    return {pair: p for p, pair in enumerate(mic_pairs(num_channels))}


def lag_axis(fft_size: int) -> np.ndarray:
    """Lag values (in samples) matching the fftshifted correlation layout."""
    return np.arange(-fft_size // 2, fft_size // 2)


@dataclass(frozen=True)
class TdoaVector:
    """Pairwise delay vector of one source hypothesis in one frame."""

    delays: np.ndarray
    frame: int
    score: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "delays", np.asarray(self.delays, dtype=np.float64))


@dataclass
class GccFrame:
    """GCC-PhaT correlations and picked peaks of one frame, all pairs."""

    frame: int
    pairs: list[tuple[int, int]]
    lags: np.ndarray
    correlations: np.ndarray  # (num_pairs, num_lags)
    peaks: list[list[tuple[float, float]]] = field(default_factory=list)  # (lag, value)


def _averaged_cross_spectrum(
    spec: SpectrogramTensor, context_frames: int
) -> np.ndarray:
    """Context-averaged cross spectra for all pairs, shape (pairs, T, F).

    The raw cross spectra are averaged over a symmetric window of
    ``context_frames + 1`` frames (``context_frames // 2`` on each side,
    edges replicated) before the phase transform.
    """
    values = spec.values
    pairs = mic_pairs(spec.num_channels)
    cross = np.empty((len(pairs), spec.num_frames, spec.num_bins), dtype=np.complex128)
    for p, (i, j) in enumerate(pairs):
        cross[p] = np.conj(values[i]) * values[j]
    if context_frames > 0:
        size = context_frames + 1
        cross = uniform_filter1d(cross.real, size, axis=1, mode="nearest") + 1j * (
            uniform_filter1d(cross.imag, size, axis=1, mode="nearest")
        )
    return cross


def _phat_correlation(cross: np.ndarray, fft_size: int) -> np.ndarray:
    """Phase transform + IFFT; returns fftshifted correlations over lag."""
    mag = np.abs(cross)
    normed = np.where(mag < EPS_FLOOR, 0.0, cross / np.maximum(mag, EPS_FLOOR))
    corr = np.fft.irfft(normed, n=fft_size, axis=-1)
    return np.fft.fftshift(corr, axes=-1)


def gcc_phat(
    spec: SpectrogramTensor,
    pair: tuple[int, int],
    frame: int,
    context_frames: int = 4,
) -> np.ndarray:
    """GCC-PhaT correlation of one microphone pair at one frame.

    Returns the real correlation over the fftshifted lag axis
    (see :func:`lag_axis`). Bins whose averaged cross-spectrum magnitude
    falls below ``1e-12`` contribute zero.
    """
    i, j = pair
    if i == j:
        raise ValueError("microphone pair must consist of two distinct channels")
    if not (0 <= frame < spec.num_frames):
        raise IndexError(f"frame {frame} out of range [0, {spec.num_frames})")
    half = context_frames // 2
    lo = max(0, frame - half)
    hi = min(spec.num_frames, frame + half + 1)
    cross = (np.conj(spec.values[i, lo:hi]) * spec.values[j, lo:hi]).mean(axis=0)
    return _phat_correlation(cross[None, :], spec.fft_size)[0]


def pick_peaks(
    correlation: np.ndarray,
    num_peaks: int,
    max_delay: float,
    min_peak_distance: int = 2,
    lags: np.ndarray | None = None,
) -> list[tuple[float, float]]:
    """Pick up to ``num_peaks`` local maxima within ``+-max_delay`` lags.

    Returns ``(lag, value)`` tuples sorted by descending value (ties broken
    by ascending lag), with parabolic sub-sample refinement of each peak.
    Accepted peaks are at least ``min_peak_distance`` integer lags apart.
    A flat correlation yields no peaks.
    """
    if num_peaks < 1:
        raise ValueError("num_peaks must be >= 1")
    correlation = np.asarray(correlation, dtype=np.float64)
    if lags is None:
        lags = np.arange(len(correlation)) - len(correlation) // 2

    in_range = np.abs(lags) <= max_delay
    idx = np.arange(1, len(correlation) - 1)
    local_max = (correlation[idx] > correlation[idx - 1]) & (
        correlation[idx] >= correlation[idx + 1]
    )
    candidates = idx[local_max & in_range[idx]]
    if candidates.size == 0:
        return []

    order = sorted(candidates, key=lambda k: (-correlation[k], lags[k]))
    picked: list[int] = []
    for k in order:
        if all(abs(lags[k] - lags[p]) >= min_peak_distance for p in picked):
            picked.append(k)
        if len(picked) == num_peaks:
            break

    peaks = []
    for k in picked:
        left, mid, right = correlation[k - 1], correlation[k], correlation[k + 1]
        denom = left - 2.0 * mid + right
        if abs(denom) > 1e-15:
            delta = 0.5 * (left - right) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
        else:
            delta = 0.0
        value = mid - 0.25 * (left - right) * delta
        peaks.append((float(lags[k] + delta), float(value)))
    peaks.sort(key=lambda p: (-p[1], p[0]))
    return peaks


def loop_residuals(delays: np.ndarray, num_channels: int) -> np.ndarray:
    """Absolute residual of every three-microphone loop of a delay vector."""
    index = pair_index(num_channels)
    residuals = []
    for i in range(num_channels):
        for j in range(i + 1, num_channels):
            for k in range(j + 1, num_channels):
                residuals.append(
                    abs(
                        delays[index[(i, j)]]
                        + delays[index[(j, k)]]
                        - delays[index[(i, k)]]
                    )
                )
    return np.asarray(residuals)


def enumerate_consistent(
    gcc: GccFrame,
    tau_th: float,
    max_vectors: int = 4,
) -> list[TdoaVector]:
    """Assemble loop-consistent TDOA vectors from per-pair peaks.

    One peak is chosen per pair; a combination is kept only if every
    three-microphone loop residual ``|tau_ij + tau_jk - tau_ik|`` stays within
    ``tau_th``. The depth-first enumeration prunes as soon as any loop over
    already-assigned pairs is violated, so the worst case never materializes.
    Near-duplicate vectors (L-infinity distance <= ``tau_th / 2``) are merged,
    keeping the one with the larger summed peak correlation, and at most
    ``max_vectors`` vectors are returned, best first.
    """
    pairs = gcc.pairs
    num_channels = max(j for _, j in pairs) + 1
    index = pair_index(num_channels)
    if len(pairs) != len(index) or any(not p for p in gcc.peaks):
        return []

    num_pairs = len(pairs)
    delays = np.zeros(num_pairs)
    scores = np.zeros(num_pairs)
    found: list[tuple[float, np.ndarray]] = []

    def assign(p: int) -> None:
        if p == num_pairs:
            found.append((float(scores.sum()), delays.copy()))
            return
        i, j = pairs[p]
        for lag, value in gcc.peaks[p]:
            ok = True
            for k in range(i):
                # loop (k, i, j): all three pairs are assigned at this point
                residual = abs(delays[index[(k, i)]] + lag - delays[index[(k, j)]])
                if residual > tau_th:
                    ok = False
                    break
            if ok:
                delays[p] = lag
                scores[p] = value
                assign(p + 1)
        delays[p] = 0.0
        scores[p] = 0.0

    assign(0)

    found.sort(key=lambda item: -item[0])
    kept: list[TdoaVector] = []
    for score, vec in found:
        if any(np.max(np.abs(vec - k.delays)) <= tau_th / 2 for k in kept):
            continue
        kept.append(TdoaVector(delays=vec, frame=gcc.frame, score=score))
        if len(kept) == max_vectors:
            break
    return kept


def suppress_partial_duplicates(
    vectors: list[TdoaVector], tolerance: float
) -> list[TdoaVector]:
    """Drop weaker vectors that share half or more pair delays with a kept one.

    Correlation sidelobes produce loop-consistent ghost combinations that
    reuse most of a stronger vector's peaks and swap a residual-cancelling
    subset. Two genuinely distinct source positions differ in (almost) all
    pairwise delays, so sharing at least half of them within ``tolerance``
    marks a ghost. ``vectors`` must be sorted by descending score.
    """
    kept: list[TdoaVector] = []
    for vec in vectors:
        ghost = any(
            np.sum(np.abs(vec.delays - ref.delays) <= tolerance)
            >= len(vec.delays) / 2
            for ref in kept
        )
        if not ghost:
            kept.append(vec)
    return kept


def estimate_tdoa_stream(
    spec: SpectrogramTensor,
    num_peaks: int = 2,
    tau_th: float = 1.0,
    max_delay: float = 100.0,
    activity_threshold: float = 0.1,
    context_frames: int = 4,
    max_vectors: int = 4,
    min_peak_distance: int = 2,
) -> list[TdoaVector]:
    """Run GCC-PhaT + peak picking + loop filtering over a whole recording.

    Frames whose best peak (over all pairs) stays below ``activity_threshold``
    are treated as silence and emit no vectors. The result is a flat stream
    of TDOA vectors sorted by frame, up to ``max_vectors`` per frame.
    """
    pairs = mic_pairs(spec.num_channels)
    cross = _averaged_cross_spectrum(spec, context_frames)
    corr = _phat_correlation(cross, spec.fft_size)
    del cross

    lags_full = lag_axis(spec.fft_size)
    half = int(np.ceil(max_delay)) + 2
    center = spec.fft_size // 2
    lo, hi = max(0, center - half), min(len(lags_full), center + half + 1)
    lags = lags_full[lo:hi]
    corr = corr[:, :, lo:hi]

    stream: list[TdoaVector] = []
    for t in range(spec.num_frames):
        frame_peaks = [
            pick_peaks(corr[p, t], num_peaks, max_delay, min_peak_distance, lags)
            for p in range(len(pairs))
        ]
        best = max((pk[0][1] for pk in frame_peaks if pk), default=0.0)
        if best < activity_threshold:
            continue
        gcc = GccFrame(
            frame=t, pairs=pairs, lags=lags, correlations=corr[:, t], peaks=frame_peaks
        )
        vectors = enumerate_consistent(gcc, tau_th, max_vectors)
        stream.extend(suppress_partial_duplicates(vectors, tau_th / 2))
    return stream
