"""Shared scene builders and test-only harnesses for the test suite."""

from __future__ import annotations

import numpy as np

from arraydiar.diarization import Diarization, merge_and_emit
from arraydiar.simulate import PositionEpoch, Reflection, SceneSpec, Source


def spread_mics(rng: np.random.Generator, num: int = 4) -> np.ndarray:
    """A distributed (meters apart) microphone layout inside a 4x4 m room."""
    return rng.uniform([-2.0, -2.0, 0.8], [2.0, 2.0, 1.8], (num, 3))


def mel_scale(freq):
    return 2595.0 * np.log10(1.0 + np.asarray(freq) / 700.0)


def inverse_mel(mels):
    return 700.0 * (10.0 ** (np.asarray(mels) / 2595.0) - 1.0)


def comb_bands(speaker_index: int, num_speakers: int = 4,
               low: float = 150.0, high: float = 7800.0,
               num_chunks: int = 40) -> list[list[float]]:
    """Disjoint mel-spaced comb support for synthetic speaker signals.

    Chunk k on a mel-spaced grid belongs to speaker ``k mod num_speakers``;
    the union over speakers tiles [low, high] without overlap, so the
    spectral envelopes are disjoint while each speaker's support still spans
    the whole band (sharp GCC correlation peaks).
    """
    edges = inverse_mel(np.linspace(mel_scale(low), mel_scale(high), num_chunks + 1))
    return [
        [float(edges[k]), float(edges[k + 1])]
        for k in range(num_chunks)
        if k % num_speakers == speaker_index % num_speakers
    ]


def single_source_scene(
    rng: np.random.Generator,
    duration: float = 7.0,
    activity: list[tuple[float, float]] | None = None,
    noise_floor: float | None = -40.0,
) -> tuple[SceneSpec, np.ndarray]:
    """One white-noise source at a random position; returns (scene, position)."""
    mics = spread_mics(rng)
    position = rng.uniform([-2.5, -2.5, 1.0], [2.5, 2.5, 2.0])
    source = Source(
        id="s0",
        speaker="spk0",
        positions=[PositionEpoch(0.0, position)],
        activity=activity or [(1.0, duration - 1.0)],
        signal={"type": "white_noise"},
        gain=1.0,
    )
    scene = SceneSpec(
        mic_positions=mics,
        sources=[source],
        sample_rate=16000,
        duration=duration,
        noise_floor=noise_floor,
    )
    return scene, position


def overlap_meeting_scene() -> SceneSpec:
    """4 "speakers", round-robin turns of 5 s starting every 3 s.

    Each utterance overlaps its neighbours by 2 s, i.e. 40% of every
    utterance is double talk. Speakers carry disjoint mel-comb envelopes, so
    the spectral embedder can tell them apart while each signal still spans
    the whole band.
    """
    rng = np.random.default_rng(42)
    mics = spread_mics(rng)
    positions = [
        [2.4, 1.8, 1.6],
        [-2.2, 1.5, 1.4],
        [-1.9, -2.1, 1.7],
        [2.1, -2.3, 1.5],
    ]
    activity: dict[int, list[tuple[float, float]]] = {i: [] for i in range(4)}
    start = 1.0
    for turn in range(10):
        activity[turn % 4].append((start, start + 5.0))
        start += 3.0
    duration = start + 3.0
    sources = [
        Source(
            id=f"s{i}",
            speaker=f"spk{i}",
            positions=[PositionEpoch(0.0, positions[i])],
            activity=activity[i],
            signal={"type": "band_noise", "bands": comb_bands(i)},
            gain=1.0,
        )
        for i in range(4)
    ]
    return SceneSpec(
        mic_positions=mics,
        sources=sources,
        sample_rate=16000,
        duration=duration,
        noise_floor=-40.0,
    )


def phantom_scene() -> SceneSpec:
    """Two white-noise speakers plus a strong (0.7 gain) image of the first."""
    rng = np.random.default_rng(42)
    mics = spread_mics(rng)
    s0 = Source(
        id="s0",
        speaker="spk0",
        positions=[PositionEpoch(0.0, [2.4, 1.8, 1.6])],
        activity=[(1.0, 5.0), (11.0, 15.0)],
        signal={"type": "white_noise"},
        gain=1.0,
    )
    s1 = Source(
        id="s1",
        speaker="spk1",
        positions=[PositionEpoch(0.0, [-2.2, 1.5, 1.4])],
        activity=[(6.0, 10.0), (16.0, 20.0)],
        signal={"type": "white_noise"},
        gain=1.0,
    )
    reflection = Reflection("s0", np.array([2.4, 6.2, 1.6]), 0.7)
    return SceneSpec(
        mic_positions=mics,
        sources=[s0, s1],
        reflections=[reflection],
        sample_rate=16000,
        duration=21.0,
        noise_floor=-40.0,
    )


def semistatic_halves() -> tuple[SceneSpec, SceneSpec]:
    """Two 15 s halves for the position-change scenario.

    First half: spk1 at P1, spk2 at P2. Second half: spk1 moved to P3 and a
    new speaker spk3 reusing P2 — the case a purely spatial labeling cannot
    get right.
    """
    rng = np.random.default_rng(42)
    mics = spread_mics(rng)
    p1 = [2.4, 1.8, 1.6]
    p2 = [-2.2, 1.5, 1.4]
    p3 = [-1.9, -2.1, 1.7]

    def half(speaker_positions: list[tuple[str, list[float]]]) -> SceneSpec:
        sources = []
        for i, (speaker, position) in enumerate(speaker_positions):
            offset = 1.0 + 3.5 * i
            sources.append(
                Source(
                    id=speaker,
                    speaker=speaker,
                    positions=[PositionEpoch(0.0, position)],
                    activity=[(offset, offset + 3.0), (offset + 7.0, offset + 10.0)],
                    signal={"type": "white_noise"},
                    gain=1.0,
                )
            )
        return SceneSpec(
            mic_positions=mics,
            sources=sources,
            sample_rate=16000,
            duration=15.0,
            noise_floor=-40.0,
        )

    return half([("spk1", p1), ("spk2", p2)]), half([("spk1", p3), ("spk3", p2)])


def spatial_baseline(
    segment_times: list[tuple[float, float]],
    median_tdoas: list[np.ndarray],
    link_threshold: float = 2.0,
) -> Diarization:
    """Spatial-only diarization baseline: single-linkage on median TDOAs.

    Two segments link whenever their median TDOA vectors are within
    ``link_threshold`` samples (L-infinity); connected components become
    speakers. This labels by *position* only, so it splits a speaker who
    moved and merges two speakers who shared a position.
    """
    count = len(median_tdoas)
    parent = list(range(count))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(count):
        for j in range(i + 1, count):
            close = np.max(np.abs(np.asarray(median_tdoas[i]) - median_tdoas[j]))
            if close < link_threshold:
                parent[find(i)] = find(j)

    roots = [find(i) for i in range(count)]
    relabel = {root: k for k, root in enumerate(dict.fromkeys(roots))}
    labels = np.array([relabel[root] for root in roots])
    return merge_and_emit(segment_times, labels)
