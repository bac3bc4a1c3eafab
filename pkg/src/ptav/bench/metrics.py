"""One-pass-evaluation metrics: center error, overlap, precision and success curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..imgproc import BoundingBox

PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)  # pixels
SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 101)
DPR_THRESHOLD = 20.0
OSR_THRESHOLD = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = a.intersection_area(b)
    union = a.area + b.area - inter
    # (x + w) - x can round above w, so clamp into [0, 1]
    return min(inter / union, 1.0) if union > 0 else 0.0


def cle(a: BoundingBox, b: BoundingBox) -> float:
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


@dataclass
class MetricsReport:
    dpr: float
    osr: float
    mean_cle: float
    fps: float | None
    precision: np.ndarray = field(repr=False)
    success: np.ndarray = field(repr=False)
    n_frames: int = 0
    mean_iou: float = 0.0

    def as_dict(self) -> dict:
        out = {
            "frames": self.n_frames,
            "dpr20": self.dpr,
            "osr50": self.osr,
            "mean_cle": self.mean_cle,
            "mean_iou": self.mean_iou,
            "auc": float(self.success.mean()),
        }
        if self.fps is not None:  # unknown when scoring a results file
            out["fps"] = self.fps
        return out


def compute_metrics(results, gt, fps=None) -> MetricsReport:
    if gt is None:
        raise ValueError("no ground truth available for evaluation")
    if len(results) != len(gt):
        raise ValueError(f"{len(results)} results for {len(gt)} ground-truth frames")
    if not results:
        raise ValueError("nothing to evaluate")
    errs = np.array([cle(r, g) for r, g in zip(results, gt)])
    ovl = np.array([iou(r, g) for r, g in zip(results, gt)])
    precision = (errs[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)
    success = (ovl[None, :] >= SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return MetricsReport(
        dpr=float((errs <= DPR_THRESHOLD).mean()),
        osr=float(success[50]),
        mean_cle=float(errs.mean()),
        fps=fps,
        precision=precision,
        success=success,
        n_frames=len(results),
        mean_iou=float(ovl.mean()),
    )


def aggregate(reports) -> MetricsReport:
    """Unweighted mean over sequences."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    fps = [r.fps for r in reports if r.fps is not None]
    return MetricsReport(
        dpr=float(np.mean([r.dpr for r in reports])),
        osr=float(np.mean([r.osr for r in reports])),
        mean_cle=float(np.mean([r.mean_cle for r in reports])),
        fps=float(np.mean(fps)) if fps else None,
        precision=np.mean([r.precision for r in reports], axis=0),
        success=np.mean([r.success for r in reports], axis=0),
        n_frames=sum(r.n_frames for r in reports),
        mean_iou=float(np.mean([r.mean_iou for r in reports])),
    )


def format_report(report: MetricsReport) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in report.as_dict().items())


def parse_report(text) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            out[k.strip()] = float(v)
    return out


def curves_csv(report: MetricsReport) -> tuple[str, str]:
    prec = "threshold_px,precision\n" + "".join(
        f"{t:g},{p!r}\n" for t, p in zip(PRECISION_THRESHOLDS, report.precision)
    )
    succ = "overlap,success\n" + "".join(
        f"{t:g},{s!r}\n" for t, s in zip(SUCCESS_THRESHOLDS, report.success)
    )
    return prec, succ
