"""Parallel tracking and verifying: a fast correlation-filter tracker checked by a slower verifier."""

from .imgproc import BoundingBox
from .runtime import RuntimeConfig, TrackRun, run
from .tracker import Tracker, TrackerConfig
from .verifier import Verifier, VerifierConfig

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "RuntimeConfig", "TrackRun", "Tracker", "TrackerConfig", "Verifier",
    "VerifierConfig", "run",
]
