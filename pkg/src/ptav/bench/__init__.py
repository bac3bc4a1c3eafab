"""Sequences, synthetic data, metrics and one-pass evaluation."""

from .io import Sequence, SequenceError, load_sequence, read_boxes, save_sequence, write_boxes
from .metrics import MetricsReport, aggregate, cle, compute_metrics, format_report, iou
from .ope import OpeResult, RunConfig, run_ope, track_sequence
from .synth import ScriptError, SynthScript, parse_script, synth_generate

__all__ = [
    "MetricsReport", "OpeResult", "RunConfig", "ScriptError", "Sequence", "SequenceError",
    "SynthScript", "aggregate", "cle", "compute_metrics", "format_report", "iou",
    "load_sequence", "parse_script", "read_boxes", "run_ope", "save_sequence",
    "synth_generate", "track_sequence", "write_boxes",
]
