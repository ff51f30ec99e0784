"""Diarization error rate with optimal speaker mapping and no collar.

The time axis is partitioned at every reference/hypothesis boundary (after
quantization to a 10 ms grid); within each region the counts of active
reference and hypothesis speakers determine missed speech, false alarm and
speaker confusion, using the one-to-one label mapping that maximizes the
total co-active time (Hungarian assignment on the overlap matrix).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .diarization import Diarization
from .errors import DerUndefined

GRID = 0.01  # RTTM precision


@dataclass
class DerReport:
    der: float
    miss: float
    false_alarm: float
    speaker_confusion: float
    overlap_der: float
    mapping: dict[str, str]  # hypothesis label -> reference label
    scored_time: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "der": self.der,
                "miss": self.miss,
                "false_alarm": self.false_alarm,
                "speaker_confusion": self.speaker_confusion,
                "overlap_der": self.overlap_der,
                "mapping": self.mapping,
                "scored_time": self.scored_time,
            },
            indent=2,
        )

    def to_table(self) -> str:
        rows = [
            ("DER", self.der),
            ("  missed speech", self.miss),
            ("  false alarm", self.false_alarm),
            ("  speaker confusion", self.speaker_confusion),
            ("DER (overlap regions)", self.overlap_der),
        ]
        lines = [f"{name:<24s} {100 * value:6.2f} %" for name, value in rows]
        lines.append(f"{'scored speech time':<24s} {self.scored_time:6.2f} s")
        return "\n".join(lines)


def _quantize(diar: Diarization, collar_shift: float = 0.0) -> dict[str, list[tuple[int, int]]]:
    by_speaker: dict[str, list[tuple[int, int]]] = {}
    for e in diar.entries:
        start = int(round((e.start + collar_shift) / GRID))
        end = int(round((e.end - collar_shift) / GRID))
        if end > start:
            by_speaker.setdefault(e.speaker, []).append((start, end))
    return by_speaker


def _active_counts(
    intervals: dict[str, list[tuple[int, int]]], boundaries: np.ndarray
) -> np.ndarray:
    """Per speaker x region boolean activity, regions between boundaries."""
    speakers = list(intervals)
    active = np.zeros((len(speakers), len(boundaries) - 1), dtype=bool)
    for s, spk in enumerate(speakers):
        for start, end in intervals[spk]:
            lo = np.searchsorted(boundaries, start)
            hi = np.searchsorted(boundaries, end)
            active[s, lo:hi] = True
    return active


def compute_der(ref: Diarization, hyp: Diarization, collar: float = 0.0) -> DerReport:
    """Score a hypothesis diarization against a reference.

    ``collar`` (seconds, default 0 per the evaluation protocol) shrinks each
    reference boundary's contribution symmetrically by removing a collar
    around reference segment boundaries from scoring.
    """
    ref_iv = _quantize(ref)
    if not ref_iv:
        raise DerUndefined("reference contains no speech")
    hyp_iv = _quantize(hyp)

    points = {0}
    for ivs in list(ref_iv.values()) + list(hyp_iv.values()):
        for start, end in ivs:
            points.update((start, end))
    if collar > 0:
        half = int(round(collar / GRID))
        for ivs in ref_iv.values():
            for start, end in ivs:
                points.update((start - half, start + half, end - half, end + half))
    boundaries = np.array(sorted(points))
    durations = np.diff(boundaries) * GRID

    ref_speakers = list(ref_iv)
    hyp_speakers = list(hyp_iv)
    ref_active = _active_counts(ref_iv, boundaries)
    hyp_active = _active_counts(hyp_iv, boundaries)

    scored = np.ones(len(durations), dtype=bool)
    if collar > 0:
        half = int(round(collar / GRID))
        excluded = np.zeros(len(durations), dtype=bool)
        for ivs in ref_iv.values():
            for start, end in ivs:
                for b in (start, end):
                    lo = np.searchsorted(boundaries, b - half)
                    hi = np.searchsorted(boundaries, b + half)
                    excluded[lo:hi] = True
        scored = ~excluded

    # optimal mapping on the co-active-time matrix
    overlap = np.einsum(
        "rn,hn,n->rh",
        ref_active[:, scored],
        hyp_active[:, scored],
        durations[scored],
    )
    mapping: dict[str, str] = {}
    pair_matrix = np.zeros((len(ref_speakers), len(hyp_speakers)), dtype=bool)
    if overlap.size:
        rows, cols = linear_sum_assignment(-overlap)
        for r, h in zip(rows, cols):
            if overlap[r, h] > 0:
                mapping[hyp_speakers[h]] = ref_speakers[r]
                pair_matrix[r, h] = True

    def tally(region_mask: np.ndarray) -> tuple[float, float, float, float]:
        n_ref = ref_active[:, region_mask].sum(axis=0)
        n_hyp = hyp_active[:, region_mask].sum(axis=0)
        # float cast: einsum over all-boolean operands would saturate at 1
        n_correct = np.einsum(
            "rn,hn,rh->n",
            ref_active[:, region_mask].astype(np.float64),
            hyp_active[:, region_mask].astype(np.float64),
            pair_matrix.astype(np.float64),
        )
        dur = durations[region_mask]
        miss = float(np.sum(np.maximum(n_ref - n_hyp, 0) * dur))
        fa = float(np.sum(np.maximum(n_hyp - n_ref, 0) * dur))
        conf = float(np.sum((np.minimum(n_ref, n_hyp) - n_correct) * dur))
        total = float(np.sum(n_ref * dur))
        return miss, fa, conf, total

    miss, fa, conf, total = tally(scored)
    if total <= 0:
        raise DerUndefined("no scored reference speech")

    overlap_regions = scored & (ref_active.sum(axis=0) >= 2)
    if overlap_regions.any():
        o_miss, o_fa, o_conf, o_total = tally(overlap_regions)
        overlap_der = (o_miss + o_fa + o_conf) / o_total
    else:
        overlap_der = 0.0

    return DerReport(
        der=(miss + fa + conf) / total,
        miss=miss / total,
        false_alarm=fa / total,
        speaker_confusion=conf / total,
        overlap_der=overlap_der,
        mapping=mapping,
        scored_time=total,
    )
