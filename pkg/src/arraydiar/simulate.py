"""Synthetic multichannel meeting scenes with exact ground truth.

Propagation is modeled as a pure fractional delay (exact linear-phase shift
in the frequency domain) plus a 1/distance amplitude law; reflections are
explicit single image sources tied to the same ground-truth speaker. This
keeps every ground-truth quantity (activity, pairwise delays, per-source
stems) exact, which is what the oracle-based tests need. Full room impulse
responses are out of scope.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import MultichannelAudio, read_wav
from .diarization import DiarEntry, Diarization, union_intervals
from .errors import InvalidScene
from .tdoa import mic_pairs

SPEED_OF_SOUND = 343.0  # m/s
MIN_DISTANCE = 0.01  # m, collocation guard
RAMP_SECONDS = 0.005


@dataclass
class PositionEpoch:
    time: float  # epoch is valid from this time onward
    position: np.ndarray  # (3,) meters

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)


@dataclass
class Source:
    id: str
    speaker: str
    positions: list[PositionEpoch]
    activity: list[tuple[float, float]]
    signal: dict
    gain: float = 1.0


@dataclass
class Reflection:
    source: str
    position: np.ndarray
    gain: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)


@dataclass
class SceneSpec:
    mic_positions: np.ndarray  # (C, 3) meters
    sources: list[Source]
    sample_rate: int
    duration: float
    reflections: list[Reflection] = field(default_factory=list)
    noise_floor: float | None = None  # dB relative to unit source RMS at 1 m

    def __post_init__(self):
        self.mic_positions = np.asarray(self.mic_positions, dtype=np.float64)
        if self.mic_positions.ndim != 2 or self.mic_positions.shape[1] != 3:
            raise InvalidScene("mic_positions must have shape (C, 3)")
        if self.mic_positions.shape[0] < 4:
            raise InvalidScene("need at least 4 microphones for loop-checked TDOA vectors")
        if self.sample_rate <= 0 or self.duration <= 0:
            raise InvalidScene("sample_rate and duration must be positive")
        ids = [s.id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise InvalidScene("duplicate source ids")
        for s in self.sources:
            for start, end in s.activity:
                if not (0 <= start < end <= self.duration + 1e-9):
                    raise InvalidScene(
                        f"activity [{start}, {end}] of source {s.id} outside the scene"
                    )
        for r in self.reflections:
            if r.source not in ids:
                raise InvalidScene(f"reflection references unknown source {r.source}")

    @property
    def num_channels(self) -> int:
        return self.mic_positions.shape[0]


def scene_from_dict(doc: dict) -> SceneSpec:
    try:
        sources = []
        for s in doc["sources"]:
            raw_pos = s.get("positions", s.get("position"))
            if raw_pos is None:
                raise InvalidScene(f"source {s.get('id')} has no position")
            if isinstance(raw_pos[0], (int, float)):
                epochs = [PositionEpoch(0.0, raw_pos)]
            else:
                epochs = [
                    PositionEpoch(float(p.get("time", 0.0)), p["position"])
                    for p in raw_pos
                ]
            sources.append(
                Source(
                    id=str(s["id"]),
                    speaker=str(s.get("speaker", s["id"])),
                    positions=sorted(epochs, key=lambda e: e.time),
                    activity=[(float(a), float(b)) for a, b in s["activity"]],
                    signal=dict(s.get("signal", {"type": "white_noise"})),
                    gain=float(s.get("gain", 1.0)),
                )
            )
        reflections = [
            Reflection(str(r["source"]), r["position"], float(r.get("gain", 0.5)))
            for r in doc.get("reflections", [])
        ]
        return SceneSpec(
            mic_positions=np.asarray(doc["mic_positions"], dtype=np.float64),
            sources=sources,
            reflections=reflections,
            sample_rate=int(doc["sample_rate"]),
            duration=float(doc["duration"]),
            noise_floor=doc.get("noise_floor"),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InvalidScene(f"malformed scene document: {exc}") from exc


def load_scene(path: str | Path) -> SceneSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidScene(f"scene file is not valid JSON: {exc}") from exc
    return scene_from_dict(doc)


@dataclass
class TdoaTableRow:
    source: str
    speaker: str
    kind: str  # "direct" | "reflection"
    epoch: int
    start: float
    end: float
    delays: np.ndarray  # samples, pair order as in tdoa.mic_pairs


@dataclass
class SimulationResult:
    audio: MultichannelAudio
    ground_truth: Diarization
    tdoa_table: list[TdoaTableRow]
    stems: dict[str, np.ndarray]  # source id -> (C, N)


def exact_delays(
    position: np.ndarray, mic_positions: np.ndarray, sample_rate: int
) -> np.ndarray:
    """Pairwise ground-truth TDOA vector (samples) of a point source."""
    dist = np.linalg.norm(mic_positions - position[None, :], axis=1)
    arrival = dist / SPEED_OF_SOUND * sample_rate
    return np.array([arrival[j] - arrival[i] for i, j in mic_pairs(len(mic_positions))])


def _speaker_rng(seed: int, speaker: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(speaker.encode())])
    )


def _source_signal(
    source: Source, num_samples: int, sample_rate: int, seed: int
) -> np.ndarray:
    kind = source.signal.get("type", "white_noise")
    if kind == "white_noise":
        sig = _speaker_rng(seed, source.speaker).standard_normal(num_samples)
    elif kind == "band_noise":
        sig = _speaker_rng(seed, source.speaker).standard_normal(num_samples)
        spectrum = np.fft.rfft(sig)
        freqs = np.fft.rfftfreq(num_samples, 1.0 / sample_rate)
        if "bands" in source.signal:  # union of pass bands
            bands = [(float(lo), float(hi)) for lo, hi in source.signal["bands"]]
        else:
            bands = [
                (
                    float(source.signal.get("low", 100.0)),
                    float(source.signal.get("high", sample_rate / 2)),
                )
            ]
        keep = np.zeros(freqs.shape, dtype=bool)
        for low, high in bands:
            keep |= (freqs >= low) & (freqs <= high)
        spectrum[~keep] = 0.0
        sig = np.fft.irfft(spectrum, n=num_samples)
    elif kind == "file":
        audio = read_wav(source.signal["path"])
        if audio.sample_rate != sample_rate:
            raise InvalidScene(
                f"source file {source.signal['path']} has sample rate "
                f"{audio.sample_rate}, scene uses {sample_rate}"
            )
        mono = audio.samples[0]
        reps = -(-num_samples // max(1, len(mono)))
        sig = np.tile(mono, reps)[:num_samples].copy()
    else:
        raise InvalidScene(f"unknown signal type {kind!r} for source {source.id}")

    # activity gating with short cosine ramps against broadband clicks
    gate = np.zeros(num_samples)
    ramp = max(1, int(RAMP_SECONDS * sample_rate))
    fade = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, ramp)))
    for start, end in source.activity:
        a, b = int(round(start * sample_rate)), int(round(end * sample_rate))
        b = min(b, num_samples)
        gate[a:b] = 1.0
        gate[a : min(a + ramp, b)] = np.minimum(gate[a : min(a + ramp, b)], fade[: b - a])
        lo = max(a, b - ramp)
        gate[lo:b] = np.minimum(gate[lo:b], fade[::-1][-(b - lo) :])
    sig = sig * gate

    active = gate > 0
    if active.any():
        rms = np.sqrt(np.mean(sig[active] ** 2))
        if rms > 1e-12:
            sig = sig / rms
    return sig


def _delay_to_mics(
    signal: np.ndarray,
    position: np.ndarray,
    mic_positions: np.ndarray,
    sample_rate: int,
    gain: float,
) -> np.ndarray:
    """Propagate one signal to all mics: fractional delay + 1/distance law."""
    dist = np.linalg.norm(mic_positions - position[None, :], axis=1)
    if np.any(dist < MIN_DISTANCE):
        raise InvalidScene("source and microphone are collocated")
    delays = dist / SPEED_OF_SOUND * sample_rate
    pad = int(np.ceil(delays.max())) + 8
    padded_len = len(signal) + pad
    spectrum = np.fft.rfft(signal, n=padded_len)
    freqs = np.fft.rfftfreq(padded_len)  # cycles per sample
    out = np.empty((len(mic_positions), len(signal)))
    for c, (delay, d_m) in enumerate(zip(delays, dist)):
        shifted = np.fft.irfft(
            spectrum * np.exp(-2j * np.pi * freqs * delay), n=padded_len
        )
        out[c] = gain / d_m * shifted[: len(signal)]
    return out


def synthesize(scene: SceneSpec, seed: int = 0) -> SimulationResult:
    """Render a scene: mixture audio, ground truth and per-source stems.

    Deterministic given ``seed``; per-source RNGs are keyed by the speaker
    label (so a speaker keeps their signal character across scenes) and the
    sensor-noise RNG is keyed by the seed alone.
    """
    fs = scene.sample_rate
    num_samples = int(round(scene.duration * fs))
    num_channels = scene.num_channels

    stems: dict[str, np.ndarray] = {}
    table: list[TdoaTableRow] = []
    sources_by_id = {s.id: s for s in scene.sources}
    signals: dict[str, np.ndarray] = {}

    for source in scene.sources:
        sig = _source_signal(source, num_samples, fs, seed)
        signals[source.id] = sig
        stem = np.zeros((num_channels, num_samples))
        epochs = source.positions
        times = [e.time for e in epochs] + [scene.duration]
        for e, epoch in enumerate(epochs):
            lo = int(round(times[e] * fs))
            hi = int(round(times[e + 1] * fs))
            if hi <= lo:
                continue
            piece = np.zeros(num_samples)
            piece[lo:hi] = sig[lo:hi]
            if not np.any(piece):
                continue
            stem += _delay_to_mics(
                piece, epoch.position, scene.mic_positions, fs, source.gain
            )
        for e, epoch in enumerate(epochs):
            table.append(
                TdoaTableRow(
                    source=source.id,
                    speaker=source.speaker,
                    kind="direct",
                    epoch=e,
                    start=times[e],
                    end=times[e + 1],
                    delays=exact_delays(epoch.position, scene.mic_positions, fs),
                )
            )
        stems[source.id] = stem

    for reflection in scene.reflections:
        source = sources_by_id[reflection.source]
        contribution = _delay_to_mics(
            signals[source.id],
            reflection.position,
            scene.mic_positions,
            fs,
            source.gain * reflection.gain,
        )
        stems[source.id] = stems[source.id] + contribution
        table.append(
            TdoaTableRow(
                source=source.id,
                speaker=source.speaker,
                kind="reflection",
                epoch=0,
                start=0.0,
                end=scene.duration,
                delays=exact_delays(reflection.position, scene.mic_positions, fs),
            )
        )

    mixture = np.zeros((num_channels, num_samples))
    for stem in stems.values():
        mixture += stem
    if scene.noise_floor is not None and np.isfinite(scene.noise_floor):
        noise_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA5A5]))
        sigma = 10.0 ** (scene.noise_floor / 20.0)
        mixture += sigma * noise_rng.standard_normal(mixture.shape)

    by_speaker: dict[str, list[tuple[float, float]]] = {}
    for source in scene.sources:
        by_speaker.setdefault(source.speaker, []).extend(source.activity)
    entries = [
        DiarEntry(speaker, start, end)
        for speaker in sorted(by_speaker)
        for start, end in union_intervals(by_speaker[speaker])
    ]
    entries.sort(key=lambda e: (e.start, e.speaker))

    return SimulationResult(
        audio=MultichannelAudio(samples=mixture, sample_rate=fs),
        ground_truth=Diarization(entries),
        tdoa_table=table,
        stems=stems,
    )


def tdoa_table_to_csv(table: list[TdoaTableRow], num_channels: int) -> str:
    header = ["source", "speaker", "kind", "epoch", "start", "end"] + [
        f"tau_{i}{j}" for i, j in mic_pairs(num_channels)
    ]
    lines = [",".join(header)]
    for row in table:
        lines.append(
            ",".join(
                [row.source, row.speaker, row.kind, str(row.epoch)]
                + [f"{row.start:.3f}", f"{row.end:.3f}"]
                + [f"{d:.6f}" for d in row.delays]
            )
        )
    return "\n".join(lines) + "\n"


def make_semistatic(
    scene_a: SceneSpec,
    scene_b: SceneSpec,
    speaker_map: dict[str, str] | None = None,
) -> SceneSpec:
    """Concatenate two scenes into one semi-static meeting.

    ``speaker_map`` renames speakers of the second half to ground-truth
    identities of the first half (same speaker, possibly at a new position).
    Unmapped speakers of the second half stay distinct, so a position can be
    reused by a different speaker.
    """
    if scene_a.sample_rate != scene_b.sample_rate:
        raise InvalidScene("scenes to concatenate must share the sample rate")
    if scene_a.mic_positions.shape != scene_b.mic_positions.shape or not np.allclose(
        scene_a.mic_positions, scene_b.mic_positions
    ):
        raise InvalidScene("scenes to concatenate must share the microphone array")
    speaker_map = speaker_map or {}
    offset = scene_a.duration

    sources = [
        Source(
            id=f"a:{s.id}",
            speaker=s.speaker,
            positions=s.positions,
            activity=s.activity,
            signal=s.signal,
            gain=s.gain,
        )
        for s in scene_a.sources
    ]
    for s in scene_b.sources:
        sources.append(
            Source(
                id=f"b:{s.id}",
                speaker=speaker_map.get(s.speaker, s.speaker),
                positions=[
                    PositionEpoch(e.time + offset, e.position) for e in s.positions
                ],
                activity=[(a + offset, b + offset) for a, b in s.activity],
                signal=s.signal,
                gain=s.gain,
            )
        )
    reflections = [
        Reflection(f"a:{r.source}", r.position, r.gain) for r in scene_a.reflections
    ] + [Reflection(f"b:{r.source}", r.position, r.gain) for r in scene_b.reflections]

    return SceneSpec(
        mic_positions=scene_a.mic_positions,
        sources=sources,
        reflections=reflections,
        sample_rate=scene_a.sample_rate,
        duration=scene_a.duration + scene_b.duration,
        noise_floor=scene_a.noise_floor,
    )
