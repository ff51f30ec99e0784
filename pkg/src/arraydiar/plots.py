"""Report figures rendered to files alongside the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .diarization import Diarization
from .segments import Segment


def _timeline(ax, diar: Diarization, title: str) -> None:
    speakers = diar.speakers()
    colors = plt.cm.tab10.colors
    for e in diar.entries:
        row = speakers.index(e.speaker)
        ax.barh(
            row,
            e.duration,
            left=e.start,
            height=0.6,
            color=colors[row % len(colors)],
            edgecolor="none",
        )
    ax.set_yticks(range(len(speakers)))
    ax.set_yticklabels(speakers)
    ax.set_ylim(-0.5, max(len(speakers) - 0.5, 0.5))
    ax.invert_yaxis()
    ax.set_xlabel("time / s")
    ax.set_title(title)


def save_diarization_figure(
    path: str | Path,
    hypothesis: Diarization,
    reference: Diarization | None = None,
) -> Path:
    """Activity timeline of a diarization, optionally against a reference."""
    rows = 2 if reference is not None else 1
    fig, axes = plt.subplots(rows, 1, figsize=(10, 2 + 1.2 * rows), sharex=True)
    axes = [axes] if rows == 1 else list(axes)
    _timeline(axes[0], hypothesis, "hypothesis")
    if reference is not None:
        _timeline(axes[1], reference, "reference")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_segment_figure(
    path: str | Path,
    segments: list[Segment],
    segment_times: list[tuple[float, float]],
    kept: list[bool],
) -> Path:
    """Detected segments over time; discarded (phantom) ones are hatched."""
    fig, ax = plt.subplots(figsize=(10, 2 + 0.25 * max(1, len(segments))))
    for i, (start, end) in enumerate(segment_times):
        ax.barh(
            i,
            end - start,
            left=start,
            height=0.6,
            color="tab:blue" if kept[i] else "lightgray",
            hatch=None if kept[i] else "//",
            edgecolor="black",
            linewidth=0.4,
        )
    ax.set_xlabel("time / s")
    ax.set_ylabel("segment")
    ax.set_title("detected segments (gray = discarded as reflection)")
    ax.invert_yaxis()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
