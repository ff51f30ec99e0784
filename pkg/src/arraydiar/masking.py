"""Per-segment time-frequency masking and mask-based MVDR beamforming.

Pipeline per segment: detect noise-only bins via the eigenvalue gap of local
spatial covariance estimates, assign the remaining bins to the spatially
closest segment prototype (rank-1 steering-vector outer product, compared to
the instantaneous normalized phase matrix), reject phantom-reflection
segments by their in-band mask activity, and beamform with the
Souden-style mask-based MVDR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tdoa import pair_index


def steering_vector(
    median_tdoa: np.ndarray, num_channels: int, fft_size: int
) -> np.ndarray:
    """Unit-modulus steering vectors implied by a TDOA vector.

    Channel 0 is the phase reference. The per-mic delay of channel ``c`` is
    the (0, c) entry of the delay vector (in samples), and the phase ramp at
    bin ``k`` is ``exp(-j * 2*pi * k * delay_c / fft_size)``.

    Returns shape (num_bins, num_channels).
    """
    index = pair_index(num_channels)
    delays = np.zeros(num_channels)
    for c in range(1, num_channels):
        delays[c] = median_tdoa[index[(0, c)]]
    bins = np.arange(fft_size // 2 + 1)
    return np.exp(-2j * np.pi * bins[:, None] * delays[None, :] / fft_size)


def prototype_scm(steering: np.ndarray) -> np.ndarray:
    """Rank-1 prototype SCMs a a^H per frequency, shape (bins, C, C)."""
    return steering[:, :, None] * np.conj(steering[:, None, :])


def herdin_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Correlation-matrix distance: 1 - tr(A B) / (||A||_F ||B||_F).

    For Hermitian PSD inputs the trace is real; the real part is taken to
    guard against rounding. Zero for proportional matrices, up to one for
    orthogonal ones.
    """
    num = float(np.real(np.trace(a @ b)))
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom < 1e-30:
        return 1.0
    return 1.0 - num / denom


def local_scms(segment_values: np.ndarray, context: int) -> np.ndarray:
    """Per-bin SCM estimates averaged over +-context frames.

    ``segment_values`` has shape (C, T, F); returns (T, F, C, C), Hermitian
    by construction (symmetrized against rounding).
    """
    outer = np.einsum("ctf,dtf->tfcd", segment_values, np.conj(segment_values))
    num_frames = outer.shape[0]
    cum = np.concatenate([np.zeros_like(outer[:1]), np.cumsum(outer, axis=0)], axis=0)
    t = np.arange(num_frames)
    lo = np.maximum(0, t - context)
    hi = np.minimum(num_frames, t + context + 1)
    scm = (cum[hi] - cum[lo]) / (hi - lo)[:, None, None, None]
    return 0.5 * (scm + np.conj(np.swapaxes(scm, -1, -2)))


def estimate_noise_mask(
    segment_values: np.ndarray,
    context: int = 5,
    gap_threshold: float = 10.0,
) -> np.ndarray:
    """Boolean (T, F) mask of noise-dominated bins.

    A bin counts as noise if the ratio of the two largest eigenvalues of its
    local SCM stays below ``gap_threshold`` (no dominant spatial direction).
    A vanishing second eigenvalue means rank-1, i.e. speech.
    """
    _, num_frames, num_bins = segment_values.shape
    noise = np.empty((num_frames, num_bins), dtype=bool)
    chunk = max(1, 4_000_000 // max(1, num_frames * segment_values.shape[0] ** 2))
    for f0 in range(0, num_bins, chunk):
        scm = local_scms(segment_values[:, :, f0 : f0 + chunk], context)
        eigvals = np.linalg.eigvalsh(scm)
        lam1 = eigvals[..., -1]
        lam2 = np.abs(eigvals[..., -2])
        ratio = np.where(lam2 < 1e-30, np.inf, lam1 / np.maximum(lam2, 1e-30))
        noise[:, f0 : f0 + chunk] = ratio < gap_threshold
    return noise


def assign_bins(
    segment_values: np.ndarray,
    prototypes: list[tuple[int, np.ndarray]],
    noise_mask: np.ndarray,
) -> np.ndarray:
    """Assign every non-noise bin to the spatially closest prototype.

    ``prototypes`` maps segment ids to steering vectors of shape (F, C) and
    must be sorted by id (ties go to the lowest id). For a rank-1 prototype
    Phi = a a^H and the elementwise-normalized observation phase matrix Psi,
    the correlation-matrix distance reduces to ``1 - |a^H y_hat|^2 / C^2``
    with ``y_hat`` the per-channel phase of the observation, which is what is
    evaluated here. Returns an int (T, F) label map; -1 marks noise, and
    all-zero observations fall back to noise.
    """
    if not prototypes:
        raise ValueError("need at least one prototype")
    num_channels, _, _ = segment_values.shape
    mag = np.abs(segment_values)
    phases = np.where(mag < 1e-30, 0.0, segment_values / np.maximum(mag, 1e-30))

    distances = np.empty((len(prototypes), *noise_mask.shape))
    for p, (_, steering) in enumerate(prototypes):
        inner = np.einsum("fc,ctf->tf", np.conj(steering), phases)
        distances[p] = 1.0 - np.abs(inner) ** 2 / num_channels**2

    ids = np.asarray([seg_id for seg_id, _ in prototypes])
    labels = ids[np.argmin(distances, axis=0)]
    labels = labels.astype(np.int64)
    labels[noise_mask] = -1
    labels[np.all(mag < 1e-30, axis=0)] = -1
    return labels


def band_bins(
    fft_size: int, sample_rate: int, low_hz: float = 150.0, high_hz: float = 3500.0
) -> np.ndarray:
    """Bin indices whose center frequency falls inside [low_hz, high_hz]."""
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    return np.nonzero((freqs >= low_hz) & (freqs <= high_hz))[0]


def reflection_activity(
    labels: np.ndarray, segment_id: int, bins: np.ndarray
) -> float:
    """Mean in-band mask activity of one segment over its own extent."""
    return float(np.mean(labels[:, bins] == segment_id))


def reflection_filter(
    labels: np.ndarray,
    segment_id: int,
    bins: np.ndarray,
    activity_threshold: float = 0.2,
) -> tuple[bool, float]:
    """Keep/discard verdict: too little in-band activity means a phantom.

    Returns ``(kept, activity)``.
    """
    activity = reflection_activity(labels, segment_id, bins)
    return activity >= activity_threshold, activity


@dataclass
class BeamformResult:
    """Beamformed single-channel STFT of one segment."""

    values: np.ndarray  # (T, F) complex
    weights: np.ndarray  # (F, C) complex
    passthrough_bins: np.ndarray  # (F,) bool, reference-channel fallback


def mvdr_weights(
    phi_ss: np.ndarray, phi_nn: np.ndarray, ref_mic: int = 0
) -> tuple[np.ndarray, bool]:
    """Souden mask-based MVDR weight vector for one frequency.

    ``w = (phi_nn^-1 phi_ss / tr(phi_nn^-1 phi_ss)) e_ref``. A singular
    noise SCM is diagonal-loaded; a vanishing trace falls back to the
    reference channel (flagged via the second return value).
    """
    num_channels = phi_ss.shape[0]
    trace_nn = float(np.real(np.trace(phi_nn)))
    if trace_nn < 1e-30:
        w = np.zeros(num_channels, dtype=np.complex128)
        w[ref_mic] = 1.0
        return w, True
    loaded = phi_nn + 1e-6 * trace_nn / num_channels * np.eye(num_channels)
    try:
        numerator = np.linalg.solve(loaded, phi_ss)
    except np.linalg.LinAlgError:
        w = np.zeros(num_channels, dtype=np.complex128)
        w[ref_mic] = 1.0
        return w, True
    trace = np.trace(numerator)
    if abs(trace) < 1e-12:
        w = np.zeros(num_channels, dtype=np.complex128)
        w[ref_mic] = 1.0
        return w, True
    return numerator[:, ref_mic] / trace, False


def mvdr_beamform(
    segment_values: np.ndarray,
    target_mask: np.ndarray,
    other_mask: np.ndarray,
    ref_mic: int = 0,
) -> BeamformResult:
    """Mask-based MVDR over one segment extent.

    ``segment_values`` is (C, T, F); ``target_mask`` and ``other_mask`` are
    (T, F) weights (binary or soft) for the target and the noise-plus-
    interferer bins. Output is the beamformed (T, F) spectrogram.
    """
    num_channels, num_frames, num_bins = segment_values.shape
    y = np.moveaxis(segment_values, 0, -1)  # (T, F, C)
    outer = y[..., :, None] * np.conj(y[..., None, :])  # (T, F, C, C)

    def scm(mask: np.ndarray) -> np.ndarray:
        weight = np.sum(mask, axis=0)  # (F,)
        phi = np.einsum("tf,tfcd->fcd", mask, outer)
        phi = phi / np.maximum(weight, 1e-30)[:, None, None]
        phi[weight < 1e-30] = 0.0
        return 0.5 * (phi + np.conj(np.swapaxes(phi, -1, -2)))

    phi_ss = scm(np.asarray(target_mask, dtype=np.float64))
    phi_nn = scm(np.asarray(other_mask, dtype=np.float64))

    weights = np.empty((num_bins, num_channels), dtype=np.complex128)
    passthrough = np.zeros(num_bins, dtype=bool)
    for f in range(num_bins):
        w, fell_back = mvdr_weights(phi_ss[f], phi_nn[f], ref_mic)
        weights[f] = w
        passthrough[f] = fell_back
    out = np.einsum("fc,tfc->tf", np.conj(weights), y)
    return BeamformResult(values=out, weights=weights, passthrough_bins=passthrough)
