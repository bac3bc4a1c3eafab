"""OTB-style sequence layout and results files.

A sequence directory holds ``img/0001.png`` (or ``.ppm`` / ``.jpg``) frames and
an optional ``groundtruth_rect.txt`` with one ``x,y,w,h`` line per frame.
Coordinates in files are 1-based; everything in memory is 0-based.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..imgproc import BoundingBox, to_float_image

FRAME_RE = re.compile(r"^(\d+)\.(png|ppm|jpg|jpeg)$", re.IGNORECASE)


class SequenceError(Exception):
    pass


@dataclass
class Sequence:
    """Frames are uint8 arrays or file paths; indexing yields float [0, 1] frames."""

    name: str
    frames: list = field(default_factory=list)
    ground_truth: list | None = None

    def __post_init__(self):
        if self.ground_truth is not None and len(self.ground_truth) != len(self.frames):
            raise SequenceError(
                f"{self.name}: {len(self.frames)} frames but {len(self.ground_truth)} ground-truth boxes"
            )

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i) -> np.ndarray:
        item = self.frames[i]
        if isinstance(item, (str, Path)):
            return read_image(item)
        return to_float_image(item)

    def raw(self, i) -> np.ndarray:
        item = self.frames[i]
        if isinstance(item, (str, Path)):
            return _read_uint8(item)
        return np.asarray(item)


def _read_uint8(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.asarray(im)
    except (OSError, ValueError) as exc:
        raise SequenceError(f"unreadable image {path}: {exc}") from None


def read_image(path) -> np.ndarray:
    return to_float_image(_read_uint8(path))


def parse_box_line(line, one_based=True) -> BoundingBox:
    parts = [p for p in re.split(r"[,\s]+", line.strip()) if p]
    if len(parts) != 4:
        raise SequenceError(f"expected x,y,w,h, got {line!r}")
    x, y, w, h = (float(p) for p in parts)
    off = 1.0 if one_based else 0.0
    return BoundingBox(x - off, y - off, w, h)


def read_boxes(path) -> list[BoundingBox]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        return [parse_box_line(ln) for ln in lines]
    except ValueError as exc:
        raise SequenceError(f"{path}: {exc}") from None


def write_boxes(path, boxes):
    """One ``x,y,w,h`` line per box, 1-based, repr-exact floats."""
    with open(path, "w") as fh:
        for b in boxes:
            fh.write(",".join(_fmt(v) for v in (b.x + 1.0, b.y + 1.0, b.w, b.h)) + "\n")


def _fmt(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def load_sequence(directory) -> Sequence:
    d = Path(directory)
    img_dir = d / "img"
    if not img_dir.is_dir():
        raise SequenceError(f"{d}: missing img/ directory")
    numbered = []
    for p in img_dir.iterdir():
        m = FRAME_RE.match(p.name)
        if m:
            numbered.append((int(m.group(1)), p))
    if not numbered:
        raise SequenceError(f"{img_dir}: no frames")
    numbered.sort()
    frames = [p for _, p in numbered]
    gt_path = d / "groundtruth_rect.txt"
    gt = read_boxes(gt_path) if gt_path.exists() else None
    return Sequence(d.name, frames=frames, ground_truth=gt)


def save_sequence(seq: Sequence, directory, ext="png"):
    d = Path(directory)
    (d / "img").mkdir(parents=True, exist_ok=True)
    for i in range(len(seq)):
        Image.fromarray(seq.raw(i)).save(d / "img" / f"{i + 1:04d}.{ext}")
    if seq.ground_truth is not None:
        write_boxes(d / "groundtruth_rect.txt", seq.ground_truth)
