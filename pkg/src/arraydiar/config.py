"""Pipeline configuration and the two shipped parameter presets.

``compact`` and ``distributed`` differ only in the loop-consistency
threshold ``tau_th`` and the segment-join radius ``delta_tau_max``; every
other parameter is scenario-independent.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import InvalidConfig

PRESETS: dict[str, dict[str, float]] = {
    "compact": {"tau_th": 1.0, "delta_tau_max": 1.0},
    "distributed": {"tau_th": 2.0, "delta_tau_max": 0.75},
}


@dataclass
class PipelineConfig:
    preset: str = "compact"
    # TDOA estimation
    tau_th: float = 1.0
    delta_tau_max: float = 1.0
    num_peaks: int = 2
    max_delay: float = 100.0
    activity_threshold: float = 0.1
    context_frames: int = 4
    max_vectors: int = 4
    # STFT
    fft_size: int = 1024
    frame_shift: int = 256
    window: str = "hann"
    # segmentation
    max_gap_seconds: float = 1.0
    min_duration_seconds: float = 0.25
    # masking / beamforming
    gap_threshold: float = 10.0
    scm_context: int = 5
    reflection_band: tuple[float, float] = (150.0, 3500.0)
    reflection_activity_threshold: float = 0.2
    refinement: str = "reassign"  # or "cacgmm"
    cacgmm_iterations: int = 5
    ref_mic: int = 0
    # clustering
    embedder: str = "default"  # "default" | "oracle" | "external"
    embedder_path: str | None = None
    min_cluster_size: int = 2
    min_samples: int = 1

    def __post_init__(self):
        if self.preset not in (*PRESETS, "custom"):
            raise InvalidConfig(f"unknown preset {self.preset!r}")
        if self.refinement not in ("reassign", "cacgmm"):
            raise InvalidConfig(f"unknown refinement {self.refinement!r}")
        if self.embedder not in ("default", "oracle", "external"):
            raise InvalidConfig(f"unknown embedder {self.embedder!r}")
        if self.embedder == "external" and not self.embedder_path:
            raise InvalidConfig("embedder 'external' requires embedder_path")
        self.reflection_band = tuple(self.reflection_band)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "PipelineConfig":
        if name not in PRESETS:
            raise InvalidConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        params = dict(PRESETS[name])
        params.update(overrides)
        return cls(preset=name, **params)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["reflection_band"] = list(self.reflection_band)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())
