"""Spatial masking: steering vectors, noise detection, bin assignment,
reflection filtering and MVDR beamforming."""

import numpy as np
import pytest

from arraydiar.masking import (
    assign_bins,
    band_bins,
    estimate_noise_mask,
    herdin_distance,
    local_scms,
    mvdr_beamform,
    mvdr_weights,
    prototype_scm,
    reflection_filter,
    steering_vector,
)
from arraydiar.tdoa import pair_index

FS = 16000
FFT = 1024
C = 4


def _tdoa_from_mic_delays(delays: np.ndarray) -> np.ndarray:
    index = pair_index(len(delays))
    out = np.zeros(len(index))
    for (i, j), p in index.items():
        out[p] = delays[j] - delays[i]
    return out


# --- steering vectors -------------------------------------------------------


def test_zero_delay_gives_all_ones():
    a = steering_vector(np.zeros(6), C, FFT)
    np.testing.assert_allclose(a, np.ones((FFT // 2 + 1, C)))


def test_phase_ramp_closed_form():
    # delta_1 = 4 samples -> phase of a_1 at bin k equals -2*pi*k*4/1024
    tdoa = _tdoa_from_mic_delays(np.array([0.0, 4.0, 0.0, 0.0]))
    a = steering_vector(tdoa, C, FFT)
    k = np.arange(FFT // 2 + 1)
    np.testing.assert_allclose(a[:, 1], np.exp(-2j * np.pi * k * 4 / FFT), atol=1e-12)
    np.testing.assert_allclose(np.abs(a), 1.0)


def test_conjugate_symmetry_in_the_delay():
    plus = steering_vector(_tdoa_from_mic_delays(np.array([0, 2.5, 0, 0.0])), C, FFT)
    minus = steering_vector(_tdoa_from_mic_delays(np.array([0, -2.5, 0, 0.0])), C, FFT)
    np.testing.assert_allclose(minus, np.conj(plus), atol=1e-12)


def test_prototype_scm_rank_one_and_trace():
    a = steering_vector(_tdoa_from_mic_delays(np.array([0, 4.0, -3.0, 7.0])), C, FFT)
    phi = prototype_scm(a)
    assert phi.shape == (FFT // 2 + 1, C, C)
    eigvals = np.linalg.eigvalsh(phi[100])
    assert eigvals[-2] <= 1e-8 * eigvals[-1]  # rank 1
    assert np.real(np.trace(phi[100])) == pytest.approx(C)


# --- Herdin distance --------------------------------------------------------


def test_herdin_distance_properties():
    rng = np.random.default_rng(0)
    mats = []
    for _ in range(4):
        b = rng.standard_normal((C, C)) + 1j * rng.standard_normal((C, C))
        mats.append(b @ np.conj(b.T))
    for m in mats:
        assert herdin_distance(m, m) <= 1e-10
        assert herdin_distance(m, 3.7 * m) <= 1e-10  # scale invariant
    for a in mats:
        for b in mats:
            d = herdin_distance(a, b)
            assert -1e-12 <= d <= 1.0 + 1e-9
            assert d == pytest.approx(herdin_distance(b, a))
    assert herdin_distance(np.zeros((C, C)), mats[0]) == 1.0


# --- local SCMs and noise mask ---------------------------------------------


def test_local_scms_hermitian_psd():
    rng = np.random.default_rng(1)
    values = rng.standard_normal((C, 20, 8)) + 1j * rng.standard_normal((C, 20, 8))
    scm = local_scms(values, context=5)
    assert scm.shape == (20, 8, C, C)
    np.testing.assert_allclose(scm, np.conj(np.swapaxes(scm, -1, -2)), atol=1e-10)
    assert np.min(np.linalg.eigvalsh(scm)) >= -1e-8


def test_rank_one_bins_are_speech():
    a = np.exp(1j * np.array([0.0, 1.0, 2.0, 3.0]))
    rng = np.random.default_rng(2)
    scale = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    values = (scale[None, :, None] * a[:, None, None]) * np.ones((1, 1, 4))
    noise = estimate_noise_mask(values, context=5, gap_threshold=10.0)
    assert not noise.any()


def test_white_noise_bins_are_noise_with_low_eig_ratio():
    rng = np.random.default_rng(3)
    values = rng.standard_normal((C, 200, 16)) + 1j * rng.standard_normal((C, 200, 16))
    scm = local_scms(values, context=5)
    eigvals = np.linalg.eigvalsh(scm)
    ratios = eigvals[..., -1] / np.maximum(eigvals[..., -2], 1e-30)
    assert np.median(ratios) < 2.0  # [DERIVED] i.i.d. complex Gaussian, C=4
    noise = estimate_noise_mask(values, context=5, gap_threshold=10.0)
    assert np.mean(noise) > 0.95


def test_plane_wave_in_noise_detected_as_speech():
    # 20 dB SNR plane wave -> >= 95% of bins flagged speech
    rng = np.random.default_rng(4)
    a = np.exp(1j * rng.uniform(0, 2 * np.pi, C))
    signal = rng.standard_normal((1, 300, 16)) + 1j * rng.standard_normal((1, 300, 16))
    noise = 0.1 * (rng.standard_normal((C, 300, 16)) + 1j * rng.standard_normal((C, 300, 16)))
    values = signal * a[:, None, None] + noise
    mask = estimate_noise_mask(values, context=5, gap_threshold=10.0)
    assert np.mean(~mask) >= 0.95


# --- bin assignment ---------------------------------------------------------


def _steering_pair():
    a1 = steering_vector(_tdoa_from_mic_delays(np.array([0, 3.0, -2.0, 5.0])), C, FFT)
    a2 = steering_vector(_tdoa_from_mic_delays(np.array([0, -4.0, 6.0, -1.0])), C, FFT)
    return a1, a2


def test_observation_aligned_with_prototype_assigned_to_it():
    a1, a2 = _steering_pair()
    rng = np.random.default_rng(5)
    scale = rng.standard_normal((10, FFT // 2 + 1)) + 1j * rng.standard_normal((10, FFT // 2 + 1))
    values = np.transpose(a2, (1, 0))[:, None, :] * scale[None]
    noise = np.zeros((10, FFT // 2 + 1), dtype=bool)
    labels = assign_bins(values, [(0, a1), (1, a2)], noise)
    # bin 0 (DC) is a tie -- every steering vector is all-ones there
    assert np.all(labels[:, 1:] == 1)
    assert np.all(labels[:, 0] == 0)


def test_tie_breaks_to_lowest_segment_id():
    a1, _ = _steering_pair()
    values = np.transpose(a1, (1, 0))[:, None, :] * np.ones((1, 5, 1))
    noise = np.zeros((5, FFT // 2 + 1), dtype=bool)
    labels = assign_bins(values, [(3, a1), (7, a1)], noise)  # identical prototypes
    assert np.all(labels == 3)


def test_zero_observation_and_noise_mask_fall_to_noise():
    a1, a2 = _steering_pair()
    values = np.zeros((C, 5, FFT // 2 + 1), dtype=complex)
    values[:, 0, :] = np.transpose(a1, (1, 0))[:, :]
    noise = np.zeros((5, FFT // 2 + 1), dtype=bool)
    noise[1, :] = True
    labels = assign_bins(values, [(0, a1), (1, a2)], noise)
    assert np.all(labels[0] == 0)
    assert np.all(labels[1] == -1)  # explicit noise mask
    assert np.all(labels[2:] == -1)  # zero observations


def test_assignment_partitions_all_non_noise_bins():
    a1, a2 = _steering_pair()
    rng = np.random.default_rng(6)
    values = rng.standard_normal((C, 8, FFT // 2 + 1)) + 1j * rng.standard_normal(
        (C, 8, FFT // 2 + 1)
    )
    noise = rng.uniform(size=(8, FFT // 2 + 1)) < 0.3
    labels = assign_bins(values, [(0, a1), (1, a2)], noise)
    assert np.all(labels[noise] == -1)
    assert np.all(np.isin(labels[~noise], [0, 1]))
    # removing one prototype: remaining bins still fully covered
    labels2 = assign_bins(values, [(1, a2)], noise)
    assert np.all(labels2[~noise] == 1)


def test_assign_bins_needs_a_prototype():
    with pytest.raises(ValueError):
        assign_bins(np.zeros((C, 1, 513), dtype=complex), [], np.zeros((1, 513), bool))


# --- reflection filter ------------------------------------------------------


def test_band_bins_cover_150_to_3500_hz():
    bins = band_bins(FFT, FS, 150.0, 3500.0)
    freqs = bins * FS / FFT
    assert freqs.min() >= 150.0 and freqs.max() <= 3500.0
    assert 1000 * FFT // FS in bins


def test_empty_mask_discarded_active_mask_kept():
    bins = band_bins(FFT, FS)
    labels = np.full((20, FFT // 2 + 1), -1)
    kept, activity = reflection_filter(labels, 0, bins, 0.2)
    assert not kept and activity == 0.0
    labels[:, bins] = 0
    kept, activity = reflection_filter(labels, 0, bins, 0.2)
    assert kept and activity == 1.0


# --- MVDR -------------------------------------------------------------------


def test_mvdr_distortionless_for_rank_one_target():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        a = np.exp(1j * rng.uniform(0, 2 * np.pi, C))
        a[0] = 1.0  # reference-mic phase convention
        phi_ss = rng.uniform(0.5, 2.0) * np.outer(a, np.conj(a))
        b = rng.standard_normal((C, C)) + 1j * rng.standard_normal((C, C))
        phi_nn = b @ np.conj(b.T) + 0.1 * np.eye(C)
        w, fell_back = mvdr_weights(phi_ss, phi_nn, ref_mic=0)
        assert not fell_back
        worst = max(worst, abs(np.vdot(w, a) - 1.0))
    assert worst <= 1e-6


def test_mvdr_scale_invariance():
    rng = np.random.default_rng(8)
    a = np.exp(1j * rng.uniform(0, 2 * np.pi, C))
    phi_ss = np.outer(a, np.conj(a))
    b = rng.standard_normal((C, C)) + 1j * rng.standard_normal((C, C))
    phi_nn = b @ np.conj(b.T) + 0.1 * np.eye(C)
    w1, _ = mvdr_weights(phi_ss, phi_nn)
    w2, _ = mvdr_weights(5.0 * phi_ss, phi_nn)
    w3, _ = mvdr_weights(phi_ss, 5.0 * phi_nn)
    np.testing.assert_allclose(w1, w2, atol=1e-10)
    np.testing.assert_allclose(w1, w3, atol=1e-10)


def test_mvdr_passthrough_on_empty_noise_scm():
    w, fell_back = mvdr_weights(np.eye(C, dtype=complex), np.zeros((C, C)), ref_mic=2)
    assert fell_back
    np.testing.assert_allclose(w, np.eye(C)[2])


def test_mvdr_beamform_single_source_recovers_reference_channel():
    # plane wave active in the first half, diffuse noise throughout; the
    # masks split the frames into target and noise-only halves
    rng = np.random.default_rng(9)
    bins = 64
    a = np.exp(1j * rng.uniform(0, 2 * np.pi, (bins, C)))
    a[:, 0] = 1.0
    s = rng.standard_normal((40, bins)) + 1j * rng.standard_normal((40, bins))
    s[20:] = 0.0
    y = np.einsum("tf,fc->ctf", s, a)
    noise = 1e-2 * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    target = np.zeros((40, bins))
    target[:20] = 1.0
    result = mvdr_beamform(y + noise, target, 1.0 - target, ref_mic=0)
    assert not result.passthrough_bins.any()
    # output matches the reference-channel signal (a_ref = 1)
    err = np.max(np.abs(result.values[:20] - s[:20])) / np.max(np.abs(s))
    assert err < 0.05
