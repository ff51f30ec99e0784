"""EM mask refinement with a complex angular central Gaussian mixture.

The model is fitted per segment to the direction-normalized observations
``z = y / ||y||`` of every tf-bin. Each class (noise + the segments active
in the extent) carries one Hermitian PD parameter matrix per frequency;
mixture weights are time-varying but shared across frequency, which keeps
the per-frequency classes permutation-aligned with the broadband binary
initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RIDGE = 1e-6


@dataclass
class CacgmmResult:
    masks: np.ndarray  # (num_classes, T, F), sums to 1 per tf-bin
    log_likelihoods: list[float]
    converged_early: bool


def _hermitize(mats: np.ndarray) -> np.ndarray:
    return 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))


def _ridge(mats: np.ndarray) -> np.ndarray:
    dim = mats.shape[-1]
    trace = np.real(np.einsum("...cc->...", mats))
    eye = np.eye(dim)
    return mats + (_RIDGE * np.maximum(trace, dim * 1e-30) / dim)[..., None, None] * eye


def _update_shape_matrices(
    z: np.ndarray, gamma: np.ndarray, quad: np.ndarray, valid: np.ndarray
) -> np.ndarray:
    """M-step for the class/frequency parameter matrices.

    ``z``: (T, F, C); ``gamma``: (M, T, F); ``quad``: (M, T, F) values of
    z^H B^-1 z from the previous iteration (ones on the first call).
    """
    num_channels = z.shape[-1]
    weights = gamma * valid[None, :, :]
    scaled = weights / np.maximum(quad, 1e-30)
    outer = z[..., :, None] * np.conj(z[..., None, :])  # (T, F, C, C)
    numer = np.einsum("mtf,tfcd->mfcd", scaled, outer)
    denom = np.sum(weights, axis=1)  # (M, F)
    shape = num_channels * numer / np.maximum(denom, 1e-30)[..., None, None]
    # classes with no support in a band: fall back to identity
    empty = denom < 1e-12
    shape[empty] = np.eye(num_channels)
    return _ridge(_hermitize(shape))


def cacgmm_refine(
    segment_values: np.ndarray,
    init_masks: np.ndarray,
    iterations: int = 5,
) -> CacgmmResult:
    """Refine binary masks into soft posteriors by a few EM iterations.

    ``segment_values``: (C, T, F) observations of the segment extent.
    ``init_masks``: (M, T, F) nonnegative, summing to one per tf-bin; class
    order is preserved in the output. Stops early if the log-likelihood
    decreases (beyond 1e-6 slack) and returns the last valid masks.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    num_channels, num_frames, num_bins = segment_values.shape
    num_classes = init_masks.shape[0]
    if init_masks.shape != (num_classes, num_frames, num_bins):
        raise ValueError("init_masks shape does not match the segment extent")

    y = np.moveaxis(segment_values, 0, -1)  # (T, F, C)
    norm = np.linalg.norm(y, axis=-1)
    valid = norm > 1e-30
    z = np.where(valid[..., None], y / np.maximum(norm, 1e-30)[..., None], 0.0)

    gamma = np.asarray(init_masks, dtype=np.float64).copy()
    gamma /= np.maximum(gamma.sum(axis=0), 1e-30)
    quad = np.ones((num_classes, num_frames, num_bins))
    pi = np.maximum(np.mean(gamma, axis=2), 1e-30)  # (M, T)

    log_likelihoods: list[float] = []
    best_gamma = gamma.copy()
    converged_early = False

    for _ in range(iterations):
        # M-step from current posteriors
        shape = _update_shape_matrices(z, gamma, quad, valid)
        pi = np.maximum(np.mean(gamma, axis=2), 1e-30)
        pi /= pi.sum(axis=0)

        # E-step
        inv = np.linalg.inv(shape)  # (M, F, C, C)
        _, logdet = np.linalg.slogdet(shape)
        quad = np.maximum(
            np.real(np.einsum("tfc,mfcd,tfd->mtf", np.conj(z), inv, z)), 1e-30
        )
        log_p = (
            np.log(pi)[:, :, None]
            - logdet[:, None, :]
            - num_channels * np.log(quad)
        )
        log_max = np.max(log_p, axis=0)
        weights = np.exp(log_p - log_max[None])
        total = np.sum(weights, axis=0)
        gamma_new = weights / np.maximum(total, 1e-30)
        # bins with no energy carry no spatial evidence: keep them uniform
        gamma_new[:, ~valid] = 1.0 / num_classes

        ll = float(np.sum((np.log(total) + log_max)[valid]))
        if log_likelihoods and ll < log_likelihoods[-1] - 1e-6:
            converged_early = True
            break
        log_likelihoods.append(ll)
        gamma = gamma_new
        best_gamma = gamma

    return CacgmmResult(
        masks=best_gamma,
        log_likelihoods=log_likelihoods,
        converged_early=converged_early,
    )
