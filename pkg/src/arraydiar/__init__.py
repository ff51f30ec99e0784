"""Multichannel speaker diarization.

Local segmentation from TDOA estimates, segment-level mask-based MVDR
beamforming with phantom-reflection rejection, and global embedding-based
clustering; plus a synthetic scene simulator and a DER scorer.
"""

__version__ = "0.1.0"

from .audio import MultichannelAudio, read_wav, read_wavs, write_wav
from .config import PipelineConfig
from .diarization import Diarization, DiarEntry, from_rttm, read_rttm, to_rttm, write_rttm
from .pipeline import PipelineResult, run_pipeline
from .scoring import DerReport, compute_der
from .simulate import SceneSpec, load_scene, make_semistatic, synthesize
from .stft import SpectrogramTensor, istft, stft

__all__ = [
    "MultichannelAudio",
    "SpectrogramTensor",
    "PipelineConfig",
    "PipelineResult",
    "Diarization",
    "DiarEntry",
    "DerReport",
    "SceneSpec",
    "stft",
    "istft",
    "read_wav",
    "read_wavs",
    "write_wav",
    "from_rttm",
    "to_rttm",
    "read_rttm",
    "write_rttm",
    "run_pipeline",
    "compute_der",
    "load_scene",
    "synthesize",
    "make_semistatic",
]
