"""One-pass evaluation: initialize once from ground truth, never reset."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..runtime import RuntimeConfig, TrackRun, run
from ..tracker import TrackerConfig
from ..verifier import VerifierConfig
from .metrics import MetricsReport, aggregate, compute_metrics


@dataclass
class RunConfig:
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)


@dataclass
class OpeResult:
    per_sequence: dict[str, MetricsReport]
    aggregate: MetricsReport
    runs: dict[str, TrackRun] = field(repr=False, default_factory=dict)


def track_sequence(seq, config: RunConfig | None = None) -> TrackRun:
    if seq.ground_truth is None:
        raise ValueError(f"{seq.name}: OPE needs first-frame ground truth")
    config = config or RunConfig()
    return run(seq, seq.ground_truth[0], config.runtime, config.tracker, config.verifier)


def run_ope(config: RunConfig | None, sequences) -> OpeResult:
    """Track every sequence once; FPS is frames over the tracking-loop wall time."""
    per, runs = {}, {}
    for seq in sequences:
        r = track_sequence(seq, config)
        if r.aborted:
            raise RuntimeError(f"{seq.name}: run aborted: {r.error}")
        per[seq.name] = compute_metrics(r.boxes, seq.ground_truth, fps=r.fps)
        runs[seq.name] = r
    if not per:
        raise ValueError("no sequences")
    per = dict(sorted(per.items()))
    return OpeResult(per, aggregate(per.values()), runs)
