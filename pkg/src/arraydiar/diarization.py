"""Diarization container, RTTM serialization and same-speaker merging."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig


@dataclass(frozen=True)
class DiarEntry:
    speaker: str
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise InvalidConfig(f"entry needs start < end, got [{self.start}, {self.end}]")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Diarization:
    """Who spoke when: (speaker, start, end) entries, overlap allowed."""

    entries: list[DiarEntry] = field(default_factory=list)

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in sorted(self.entries, key=lambda e: (e.start, e.speaker)):
            seen.setdefault(e.speaker, None)
        return list(seen)

    def total_speech(self) -> float:
        return sum(e.duration for e in self.entries)

    def shifted(self, offset: float) -> "Diarization":
        return Diarization(
            [DiarEntry(e.speaker, e.start + offset, e.end + offset) for e in self.entries]
        )

    def relabeled(self, mapping: dict[str, str]) -> "Diarization":
        return Diarization(
            [DiarEntry(mapping.get(e.speaker, e.speaker), e.start, e.end) for e in self.entries]
        )


def union_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of intervals; overlapping or abutting intervals are merged."""
    merged: list[tuple[float, float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def merge_and_emit(
    segment_times: list[tuple[float, float]], labels: np.ndarray | list[int]
) -> Diarization:
    """Union same-cluster segment intervals and name speakers by appearance.

    ``segment_times`` are (start, end) seconds per segment, ``labels`` the
    cluster id per segment. Cluster names are ``spk0..spkN`` ordered by the
    earliest start time of each cluster.
    """
    labels = list(labels)
    if len(labels) != len(segment_times):
        raise InvalidConfig("one label per segment required")
    by_cluster: dict[int, list[tuple[float, float]]] = {}
    for (start, end), label in zip(segment_times, labels):
        by_cluster.setdefault(int(label), []).append((start, end))

    order = sorted(by_cluster, key=lambda c: (min(s for s, _ in by_cluster[c]), c))
    names = {c: f"spk{i}" for i, c in enumerate(order)}
    entries = [
        DiarEntry(names[c], start, end)
        for c in order
        for start, end in union_intervals(by_cluster[c])
    ]
    entries.sort(key=lambda e: (e.start, e.speaker))
    return Diarization(entries)


def to_rttm(diar: Diarization, file_id: str = "rec") -> str:
    """Standard 10-field SPEAKER lines, 2-decimal second precision."""
    lines = []
    for e in sorted(diar.entries, key=lambda e: (e.start, e.speaker)):
        lines.append(
            f"SPEAKER {file_id} 1 {e.start:.2f} {e.duration:.2f} "
            f"<NA> <NA> {e.speaker} <NA> <NA>"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def from_rttm(text: str) -> Diarization:
    entries = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER" or len(fields) < 8:
            raise InvalidConfig(f"not an RTTM SPEAKER line (line {line_no}): {line!r}")
        start = float(fields[3])
        duration = float(fields[4])
        if duration <= 0:
            continue
        entries.append(DiarEntry(fields[7], start, start + duration))
    return Diarization(entries)


def write_rttm(path: str | Path, diar: Diarization, file_id: str = "rec") -> None:
    Path(path).write_text(to_rttm(diar, file_id))


def read_rttm(path: str | Path) -> Diarization:
    return from_rttm(Path(path).read_text())
