"""End-to-end diarization: STFT -> TDOA -> segments -> masks -> MVDR ->
embeddings -> clustering -> RTTM."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import MultichannelAudio, write_wav
from .cacgmm import cacgmm_refine
from .clustering import cluster_embeddings, reassign_outliers
from .config import PipelineConfig
from .diarization import Diarization, merge_and_emit
from .embeddings import (
    ExternalEmbedder,
    default_embed,
    write_embedding_sidecar,
)
from .errors import InvalidConfig, NeedFourChannels
from .masking import (
    assign_bins,
    band_bins,
    estimate_noise_mask,
    mvdr_beamform,
    reflection_filter,
    steering_vector,
)
from .segments import Segment, detect_segments, segments_to_jsonl
from .stft import SpectrogramTensor, istft, stft
from .tdoa import estimate_tdoa_stream


@dataclass
class PipelineResult:
    diarization: Diarization
    segments: list[Segment] = field(default_factory=list)
    segment_times: list[tuple[float, float]] = field(default_factory=list)
    kept: list[bool] = field(default_factory=list)
    reflection_activity: list[float] = field(default_factory=list)
    cluster_labels: dict[int, int] = field(default_factory=dict)  # segment -> cluster
    embeddings: dict[int, np.ndarray] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def corrected_boundaries(
    segment: Segment, spec: SpectrogramTensor, context_frames: int
) -> tuple[int, int]:
    """Boundary frames of a segment, corrected for the detection smear.

    GCC activity fires as soon as the analysis window catches speech, i.e.
    up to ``fft_size / frame_shift - 1`` frames before the onset sample, and
    the symmetric cross-spectrum context extends activity by
    ``context_frames // 2`` frames on both sides. Both effects are undone
    here; the corrected frame index marks the frame whose start sample is
    the estimated boundary.
    """
    onset_bias = context_frames // 2 + spec.fft_size // spec.frame_shift - 1
    offset_bias = context_frames // 2
    onset = segment.onset_frame + onset_bias
    offset = segment.offset_frame - offset_bias
    if onset > offset:  # very short segment, keep the uncorrected midpoint
        mid = (segment.onset_frame + segment.offset_frame) // 2
        onset = offset = mid
    return onset, offset


def segment_time_span(
    segment: Segment, spec: SpectrogramTensor, context_frames: int
) -> tuple[float, float]:
    """Map segment frames to seconds, smear-corrected."""
    onset, offset = corrected_boundaries(segment, spec, context_frames)
    start = onset * spec.frame_shift / spec.sample_rate
    end = offset * spec.frame_shift / spec.sample_rate
    end = max(end, start + spec.frame_shift / spec.sample_rate)
    return start, end


def _overlapping(segments: list[Segment], index: int) -> list[int]:
    """Indices of segments temporally overlapping the given one (incl. it)."""
    seg = segments[index]
    return [
        j
        for j, other in enumerate(segments)
        if other.onset_frame <= seg.offset_frame and other.offset_frame >= seg.onset_frame
    ]


def _oracle_label(
    span: tuple[float, float], reference: Diarization
) -> str:
    start, end = span
    best_speaker = None
    best_overlap = -1.0
    for speaker in reference.speakers():
        overlap = sum(
            max(0.0, min(end, e.end) - max(start, e.start))
            for e in reference.entries
            if e.speaker == speaker
        )
        if overlap > best_overlap:
            best_speaker, best_overlap = speaker, overlap
    return best_speaker if best_speaker is not None else "spk?"


def write_mask_array(path: str | Path, array: np.ndarray) -> None:
    """Dump format: uint32 ndim, uint32 dims, then little-endian float32."""
    array = np.asarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def read_mask_array(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (ndim,) = struct.unpack_from("<I", raw, 0)
    shape = struct.unpack_from(f"<{ndim}I", raw, 4)
    data = np.frombuffer(raw[4 + 4 * ndim :], dtype="<f4")
    return data.reshape(shape).astype(np.float64)


def run_pipeline(
    audio: MultichannelAudio,
    config: PipelineConfig | None = None,
    oracle_reference: Diarization | None = None,
    dump_dir: str | Path | None = None,
) -> PipelineResult:
    """Diarize one multichannel recording.

    ``oracle_reference`` is required for the test-only oracle embedder.
    ``dump_dir`` enables per-stage artifact dumps.
    """
    config = config or PipelineConfig()
    if audio.num_channels < 4:
        raise NeedFourChannels(
            f"pipeline needs >= 4 channels, got {audio.num_channels}"
        )
    if config.embedder == "oracle" and oracle_reference is None:
        raise InvalidConfig("oracle embedder needs a reference diarization")

    spec = stft(audio, config.fft_size, config.frame_shift, config.window)
    stream = estimate_tdoa_stream(
        spec,
        num_peaks=config.num_peaks,
        tau_th=config.tau_th,
        max_delay=config.max_delay,
        activity_threshold=config.activity_threshold,
        context_frames=config.context_frames,
        max_vectors=config.max_vectors,
    )

    frame_rate = spec.frame_rate
    segments = detect_segments(
        stream,
        delta_tau_max=config.delta_tau_max,
        max_gap=int(round(config.max_gap_seconds * frame_rate)),
        min_duration=max(1, int(round(config.min_duration_seconds * frame_rate))),
    )
    result = PipelineResult(diarization=Diarization(), segments=segments)
    dump = Path(dump_dir) if dump_dir is not None else None
    if dump is not None:
        dump.mkdir(parents=True, exist_ok=True)
        _dump_stream(dump / "tdoa_stream.csv", stream)
        (dump / "segments.jsonl").write_text(
            segments_to_jsonl(segments, spec.frame_shift, spec.sample_rate)
        )
    if not segments:
        result.warnings.append("no speech segments detected; emitting empty output")
        return result

    result.segment_times = [
        segment_time_span(s, spec, config.context_frames) for s in segments
    ]

    steerings = [
        steering_vector(s.median_tdoa, spec.num_channels, spec.fft_size)
        for s in segments
    ]
    bins = band_bins(
        spec.fft_size, spec.sample_rate, *config.reflection_band
    )

    # first mask pass + phantom-reflection filtering
    noise_masks: list[np.ndarray] = []
    kept: list[bool] = []
    activities: list[float] = []
    for i, seg in enumerate(segments):
        extent = spec.values[:, seg.onset_frame : seg.offset_frame + 1, :]
        noise = estimate_noise_mask(extent, config.scm_context, config.gap_threshold)
        noise_masks.append(noise)
        prototypes = [(j, steerings[j]) for j in _overlapping(segments, i)]
        labels = assign_bins(extent, prototypes, noise)
        verdict, activity = reflection_filter(
            labels, i, bins, config.reflection_activity_threshold
        )
        kept.append(verdict)
        activities.append(activity)
    result.kept = kept
    result.reflection_activity = activities
    survivors = [i for i, keep in enumerate(kept) if keep]
    if not survivors:
        result.warnings.append("all segments filtered as reflections; emitting empty output")
        return result

    # refinement on the surviving segment set + beamforming + embedding
    external = (
        ExternalEmbedder(config.embedder_path) if config.embedder == "external" else None
    )
    embeddings: dict[int, np.ndarray] = {}
    for i in survivors:
        seg = segments[i]
        extent = spec.values[:, seg.onset_frame : seg.offset_frame + 1, :]
        prototypes = [
            (j, steerings[j]) for j in _overlapping(segments, i) if kept[j]
        ]
        labels = assign_bins(extent, prototypes, noise_masks[i])

        if config.refinement == "cacgmm":
            class_ids = [j for j, _ in prototypes]
            init = np.stack(
                [labels == -1] + [labels == j for j in class_ids]
            ).astype(np.float64)
            refined = cacgmm_refine(extent, init, config.cacgmm_iterations)
            target = refined.masks[1 + class_ids.index(i)]
            other = 1.0 - target
            if dump is not None:
                write_mask_array(dump / f"mask_seg{i:04d}.f32", refined.masks)
        else:
            target = (labels == i).astype(np.float64)
            other = 1.0 - target
            if dump is not None:
                write_mask_array(dump / f"mask_seg{i:04d}.f32", target)

        beamformed = mvdr_beamform(extent, target, other, config.ref_mic)
        mono = SpectrogramTensor(
            values=beamformed.values[None, :, :],
            frame_shift=spec.frame_shift,
            fft_size=spec.fft_size,
            sample_rate=spec.sample_rate,
        )
        waveform = istft(mono, config.window).samples[0]

        if config.embedder == "oracle":
            assert oracle_reference is not None
            speakers = oracle_reference.speakers()
            vec = np.zeros(max(1, len(speakers)))
            vec[speakers.index(_oracle_label(result.segment_times[i], oracle_reference))] = 1.0
            embeddings[i] = vec
        elif external is not None:
            embeddings[i] = external.embed_segment(i)
        else:
            embeddings[i] = default_embed(waveform, spec.sample_rate)
        if dump is not None:
            write_wav(
                dump / f"enhanced_seg{i:04d}.wav",
                MultichannelAudio(waveform[None, :], spec.sample_rate),
            )
    result.embeddings = embeddings
    if dump is not None:
        write_embedding_sidecar(dump / "embeddings.bin", embeddings)

    matrix = np.stack([embeddings[i] for i in survivors])
    labels = cluster_embeddings(
        matrix, config.min_cluster_size, config.min_samples
    )
    labels = reassign_outliers(labels, matrix)
    result.cluster_labels = {i: int(c) for i, c in zip(survivors, labels)}
    result.diarization = merge_and_emit(
        [result.segment_times[i] for i in survivors], labels
    )
    return result


def _dump_stream(path: Path, stream) -> None:
    lines = ["frame,score," + ",".join(f"d{k}" for k in range(len(stream[0].delays) if stream else 0))]
    for vec in stream:
        lines.append(
            f"{vec.frame},{vec.score:.4f}," + ",".join(f"{d:.4f}" for d in vec.delays)
        )
    path.write_text("\n".join(lines) + "\n")
