"""Temporally constrained leader-follower grouping of TDOA vectors.

A single online pass turns the per-frame TDOA stream into speech segments:
a vector joins the nearest open cluster if it is within ``delta_tau_max``
(Euclidean) of that cluster's leader and the cluster saw a member within
``max_gap`` frames; otherwise it opens a new cluster. The leader is the
running component-wise median of the members, which is also the segment
summary emitted at the end. Clusters may overlap in time, so concurrent
speakers come out as concurrent segments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tdoa import TdoaVector


@dataclass
class Segment:
    """A contiguous speech region attributed to one (unlabeled) source."""

    onset_frame: int
    offset_frame: int
    median_tdoa: np.ndarray
    member_frames: list[tuple[int, TdoaVector]]

    @property
    def num_frames(self) -> int:
        return self.offset_frame - self.onset_frame + 1


class _OpenCluster:
    __slots__ = ("members", "leader", "last_frame")

    def __init__(self, frame: int, vector: TdoaVector):
        self.members = [(frame, vector)]
        self.leader = vector.delays.copy()
        self.last_frame = frame

    def add(self, frame: int, vector: TdoaVector) -> None:
        self.members.append((frame, vector))
        self.last_frame = frame
        stacked = np.stack([v.delays for _, v in self.members])
        self.leader = np.median(stacked, axis=0)

    def to_segment(self) -> Segment:
        return Segment(
            onset_frame=self.members[0][0],
            offset_frame=self.members[-1][0],
            median_tdoa=self.leader.copy(),
            member_frames=list(self.members),
        )


def detect_segments(
    tdoa_stream: list[TdoaVector],
    delta_tau_max: float,
    max_gap: int,
    min_duration: int = 1,
) -> list[Segment]:
    """Group a frame-sorted TDOA stream into segments.

    ``max_gap`` and ``min_duration`` are in frames. Clusters with no new
    member for more than ``max_gap`` frames are closed; closed clusters
    shorter than ``min_duration`` frames are dropped. Within one frame, a
    cluster accepts at most one vector (one source per cluster per frame).
    Ties on equal distance go to the cluster opened first, which makes the
    pass deterministic.
    """
    open_clusters: list[_OpenCluster] = []
    closed: list[Segment] = []

    def close_expired(now: int) -> None:
        still_open = []
        for cluster in open_clusters:
            if now - cluster.last_frame > max_gap:
                closed.append(cluster.to_segment())
            else:
                still_open.append(cluster)
        open_clusters[:] = still_open

    current_frame = None
    taken: set[int] = set()
    for vector in tdoa_stream:
        frame = vector.frame
        if current_frame is None or frame != current_frame:
            if current_frame is not None and frame < current_frame:
                raise ValueError("tdoa_stream must be sorted by frame")
            current_frame = frame
            taken = set()
            close_expired(frame)

        best = None
        best_dist = None
        for c, cluster in enumerate(open_clusters):
            if c in taken:
                continue
            dist = float(np.linalg.norm(vector.delays - cluster.leader))
            if dist <= delta_tau_max and (best_dist is None or dist < best_dist):
                best, best_dist = c, dist
        if best is None:
            open_clusters.append(_OpenCluster(frame, vector))
            taken.add(len(open_clusters) - 1)
        else:
            open_clusters[best].add(frame, vector)
            taken.add(best)

    closed.extend(cluster.to_segment() for cluster in open_clusters)
    segments = [s for s in closed if s.num_frames >= min_duration]
    segments.sort(key=lambda s: (s.onset_frame, s.offset_frame))
    return segments


def segments_to_jsonl(
    segments: list[Segment], frame_shift: int, sample_rate: int
) -> str:
    """Debug dump: one JSON object per segment with times in seconds."""
    lines = []
    for s in segments:
        lines.append(
            json.dumps(
                {
                    "onset": round(s.onset_frame * frame_shift / sample_rate, 4),
                    "offset": round(s.offset_frame * frame_shift / sample_rate, 4),
                    "num_frames": s.num_frames,
                    "median_tdoa": [round(float(d), 4) for d in s.median_tdoa],
                }
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")
