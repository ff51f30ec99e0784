"""Command line interface: simulate, diarize, score.

Exit codes: 0 success, 1 internal error, 2 bad input.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import __version__
from .audio import read_wav, read_wavs, write_wav
from .config import PRESETS, PipelineConfig
from .diarization import read_rttm, write_rttm
from .errors import ArrayDiarError, DerUndefined, InvalidConfig, InvalidScene, NeedFourChannels
from .pipeline import run_pipeline
from .plots import save_diarization_figure, save_segment_figure
from .scoring import compute_der
from .simulate import load_scene, synthesize, tdoa_table_to_csv

BAD_INPUT = 2


def _fail(message: str, code: int = BAD_INPUT) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Multichannel speaker diarization toolbox."""


@main.command()
@click.argument("scene_json", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--seed", default=0, show_default=True, help="Simulation seed.")
@click.option("--stems", is_flag=True, help="Also write per-source stem WAVs.")
def simulate(scene_json: Path, out_dir: Path, seed: int, stems: bool) -> None:
    """Render a scene JSON into mixture WAV + ground-truth RTTM + TDOA CSV."""
    if not scene_json.exists():
        _fail(f"scene file not found: {scene_json}")
    try:
        scene = load_scene(scene_json)
        result = synthesize(scene, seed=seed)
    except InvalidScene as exc:
        _fail(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_wav(out_dir / "mixture.wav", result.audio)
    write_rttm(out_dir / "ref.rttm", result.ground_truth, file_id=scene_json.stem)
    (out_dir / "tdoa_table.csv").write_text(
        tdoa_table_to_csv(result.tdoa_table, scene.num_channels)
    )
    if stems:
        from .audio import MultichannelAudio

        for source_id, stem in result.stems.items():
            safe = source_id.replace(":", "_").replace("/", "_")
            write_wav(
                out_dir / f"stem_{safe}.wav",
                MultichannelAudio(stem, scene.sample_rate),
            )
    click.echo(f"wrote mixture.wav, ref.rttm, tdoa_table.csv to {out_dir}")


@main.command()
@click.argument("wavs", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_rttm", type=click.Path(path_type=Path), default=Path("hyp.rttm"), show_default=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="compact", show_default=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="JSON config overriding the preset.")
@click.option("--refinement", type=click.Choice(["reassign", "cacgmm"]), default=None, help="Mask refinement path.")
@click.option("--embedder", type=click.Choice(["default", "oracle", "external"]), default=None)
@click.option("--embeddings", "embeddings_path", type=click.Path(path_type=Path), default=None, help="Sidecar file for --embedder external.")
@click.option("--oracle-rttm", type=click.Path(path_type=Path), default=None, help="Reference RTTM for --embedder oracle (test use).")
@click.option("--dump-stages", "dump_dir", type=click.Path(path_type=Path), default=None, help="Write per-stage artifacts to this directory.")
@click.option("--figures", "figures_dir", type=click.Path(path_type=Path), default=None, help="Render timeline figures to this directory.")
def diarize(
    wavs,
    out_rttm: Path,
    preset: str,
    config_path,
    refinement,
    embedder,
    embeddings_path,
    oracle_rttm,
    dump_dir,
    figures_dir,
) -> None:
    """Diarize one multichannel WAV (or several zipped single-channel WAVs)."""
    for w in wavs:
        if not Path(w).exists():
            _fail(f"WAV file not found: {w}")
    try:
        if config_path is not None:
            config = PipelineConfig.load(config_path)
        else:
            config = PipelineConfig.from_preset(preset)
        if refinement is not None:
            config.refinement = refinement
        if embedder is not None:
            config.embedder = embedder
        if embeddings_path is not None:
            config.embedder_path = str(embeddings_path)
        if config.embedder == "external" and not config.embedder_path:
            _fail("--embedder external needs --embeddings")

        audio = read_wav(wavs[0]) if len(wavs) == 1 else read_wavs(wavs)
        reference = read_rttm(oracle_rttm) if oracle_rttm else None
        if config.embedder == "oracle" and reference is None:
            _fail("--embedder oracle needs --oracle-rttm")
        result = run_pipeline(
            audio, config, oracle_reference=reference, dump_dir=dump_dir
        )
    except (InvalidConfig, InvalidScene, NeedFourChannels) as exc:
        _fail(str(exc))
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)
    write_rttm(out_rttm, result.diarization, file_id=Path(wavs[0]).stem)
    if figures_dir is not None:
        figures_dir = Path(figures_dir)
        figures_dir.mkdir(parents=True, exist_ok=True)
        save_diarization_figure(figures_dir / "diarization.png", result.diarization)
        if result.segments:
            save_segment_figure(
                figures_dir / "segments.png",
                result.segments,
                result.segment_times,
                result.kept,
            )
    click.echo(
        f"{len(result.diarization.entries)} entries, "
        f"{len(result.diarization.speakers())} speakers -> {out_rttm}"
    )


@main.command()
@click.argument("ref_rttm", type=click.Path(path_type=Path))
@click.argument("hyp_rttm", type=click.Path(path_type=Path))
@click.option("--collar", default=0.0, show_default=True, help="Forgiveness collar in seconds.")
@click.option("--json", "json_path", type=click.Path(path_type=Path), default=None, help="Write the report as JSON.")
@click.option("--figures", "figures_dir", type=click.Path(path_type=Path), default=None, help="Render a ref/hyp timeline figure.")
def score(ref_rttm: Path, hyp_rttm: Path, collar: float, json_path, figures_dir) -> None:
    """Score a hypothesis RTTM against a reference RTTM (DER, no collar)."""
    for p in (ref_rttm, hyp_rttm):
        if not Path(p).exists():
            _fail(f"RTTM file not found: {p}")
    try:
        ref = read_rttm(ref_rttm)
        hyp = read_rttm(hyp_rttm)
        report = compute_der(ref, hyp, collar=collar)
    except (InvalidConfig, DerUndefined) as exc:
        _fail(str(exc))
    click.echo(report.to_table())
    if json_path is not None:
        Path(json_path).write_text(report.to_json() + "\n")
    if figures_dir is not None:
        figures_dir = Path(figures_dir)
        figures_dir.mkdir(parents=True, exist_ok=True)
        save_diarization_figure(figures_dir / "timeline.png", hyp, ref)


def entrypoint() -> None:  # pragma: no cover
    try:
        main()
    except ArrayDiarError as exc:
        _fail(str(exc), code=1)


if __name__ == "__main__":  # pragma: no cover
    entrypoint()
