"""Fast tracker: correlation filter fused with a color-histogram response.

The tracker works on a fixed normalized grid.  At init the search window
(target size times ``1 + search_padding``) is mapped to roughly
``model_size x model_size`` pixels, rounded to whole HOG cells; later frames
crop a window of the same aspect scaled with the target and resample it to
that grid, so filters learned on different frames always line up.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import imgproc
from .imgproc import BoundingBox
from .numerics import fft2, gaussian_label, hann_window, ifft2

HIST_EPS = 1e-6
TIE_TOL = 1e-12


class ArchiveUnderflowError(LookupError):
    """The snapshot needed for a trace-back has already been evicted."""


@dataclass
class TrackerConfig:
    alpha: float = 0.3
    lam: float = 1e-3
    learning_rate_cf: float = 0.01
    learning_rate_hist: float = 0.04
    label_sigma_factor: float = 1.0 / 16.0
    search_padding: float = 1.5
    scale_factors: tuple = (0.985, 1.0, 1.015)
    scale_damping: float = 0.6
    archive_capacity: int = 25
    model_size: int = 96
    cell_size: int = 4
    n_orientations: int = 9
    hist_bins: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        for lr in (self.learning_rate_cf, self.learning_rate_hist):
            if not 0.0 <= lr <= 1.0:
                raise ValueError("learning rates must be in [0, 1]")
        if self.archive_capacity < 2:
            raise ValueError("archive_capacity must be >= 2")
        if not self.scale_factors:
            raise ValueError("scale_factors must not be empty")
        self.scale_factors = tuple(float(s) for s in self.scale_factors)


@dataclass
class CorrelationFilterModel:
    num: np.ndarray  # (C, gy, gx) complex
    den: np.ndarray  # (gy, gx) real, already includes lambda

    def blend(self, fresh: CorrelationFilterModel, lr) -> CorrelationFilterModel:
        return CorrelationFilterModel(
            (1.0 - lr) * self.num + lr * fresh.num,
            (1.0 - lr) * self.den + lr * fresh.den,
        )


@dataclass
class HistogramModel:
    fg: np.ndarray
    bg: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.fg / (self.fg + self.bg + HIST_EPS)

    def blend(self, fresh: HistogramModel, lr) -> HistogramModel:
        return HistogramModel(
            (1.0 - lr) * self.fg + lr * fresh.fg,
            (1.0 - lr) * self.bg + lr * fresh.bg,
        )


@dataclass
class TargetState:
    cx: float
    cy: float
    w: float
    h: float
    peak: float = 1.0

    @property
    def box(self) -> BoundingBox:
        return BoundingBox.from_center(self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True)
class Geometry:
    """Fixed mapping between the frame and the normalized model grid."""

    base_w: float  # initial target size
    base_h: float
    window_w: float  # window size in frame pixels at scale 1
    window_h: float
    model_w: int  # normalized window in model pixels
    model_h: int
    target_w: float  # target size in model pixels
    target_h: float
    cell: int

    @property
    def grid(self) -> tuple[int, int]:
        return self.model_h // self.cell, self.model_w // self.cell


@dataclass
class TrackerState:
    cf: CorrelationFilterModel
    hist: HistogramModel
    target: TargetState
    geometry: Geometry
    frame_index: int = 0

    @property
    def scale(self) -> float:
        return math.sqrt(self.target.w * self.target.h / (self.geometry.base_w * self.geometry.base_h))


@dataclass
class Snapshot:
    frame_index: int
    cf: CorrelationFilterModel
    hist: HistogramModel
    target: TargetState

    @classmethod
    def of(cls, state: TrackerState) -> Snapshot:
        return cls(
            state.frame_index,
            copy.deepcopy(state.cf),
            copy.deepcopy(state.hist),
            copy.deepcopy(state.target),
        )


class SnapshotArchive:
    """Bounded FIFO of per-frame snapshots with contiguous frame indices."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Snapshot] = deque()

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    @property
    def indices(self) -> list[int]:
        return [s.frame_index for s in self._items]

    @property
    def last_index(self) -> int | None:
        return self._items[-1].frame_index if self._items else None

    def push(self, snapshot: Snapshot):
        if self._items and snapshot.frame_index != self._items[-1].frame_index + 1:
            raise ValueError(
                f"non-contiguous snapshot {snapshot.frame_index} after {self._items[-1].frame_index}"
            )
        self._items.append(snapshot)
        while len(self._items) > self.capacity:
            self._items.popleft()

    def get(self, frame_index) -> Snapshot:
        if not self._items or frame_index < self._items[0].frame_index:
            raise ArchiveUnderflowError(f"archive underflow: frame {frame_index} not retained")
        pos = frame_index - self._items[0].frame_index
        if pos >= len(self._items):
            raise KeyError(f"frame {frame_index} not archived yet")
        return self._items[pos]

    def discard_from(self, frame_index):
        while self._items and self._items[-1].frame_index >= frame_index:
            self._items.pop()

    def rollback(self, k, corrected_box: BoundingBox, geometry: Geometry) -> TrackerState:
        """State from the snapshot of frame k-1 with the target moved to ``corrected_box``.

        Snapshots for frames >= k are dropped.
        """
        snap = self.get(k - 1)
        self.discard_from(k)
        target = TargetState(corrected_box.cx, corrected_box.cy, corrected_box.w, corrected_box.h, 1.0)
        return TrackerState(
            copy.deepcopy(snap.cf), copy.deepcopy(snap.hist), target, geometry, k - 1
        )


def make_geometry(box: BoundingBox, config: TrackerConfig) -> Geometry:
    pad = 1.0 + config.search_padding
    ww, wh = box.w * pad, box.h * pad
    f = config.model_size / math.sqrt(ww * wh)
    cell = config.cell_size
    gx = max(4, int(round(ww * f / cell)))
    gy = max(4, int(round(wh * f / cell)))
    mw, mh = gx * cell, gy * cell
    # window size rederived from the rounded grid so the aspect matches exactly
    fx, fy = mw / ww, mh / wh
    return Geometry(
        base_w=box.w,
        base_h=box.h,
        window_w=ww,
        window_h=wh,
        model_w=mw,
        model_h=mh,
        target_w=box.w * fx,
        target_h=box.h * fy,
        cell=cell,
    )


class Tracker:
    """Staple-style tracker owning its state and snapshot archive."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.state: TrackerState | None = None
        self.archive = SnapshotArchive(self.config.archive_capacity)
        self._label_f = None
        self._cos = None

    # feature plumbing ------------------------------------------------------

    def _prepare(self, geometry: Geometry, frame):
        gy, gx = geometry.grid
        diag = math.hypot(geometry.target_w, geometry.target_h)
        sigma = max(diag * self.config.label_sigma_factor / geometry.cell, 0.25)
        self._label_f = fft2(gaussian_label(gx, gy, sigma))
        self._cos = hann_window(gx, gy)
        self._bins = self.config.hist_bins or (16 if frame.ndim == 3 else 32)

    def window_box(self, cx, cy, scale) -> BoundingBox:
        g = self.state.geometry
        return BoundingBox.from_center(cx, cy, g.window_w * scale, g.window_h * scale)

    def _patch(self, frame, cx, cy, scale, geometry=None):
        g = geometry or self.state.geometry
        box = BoundingBox.from_center(cx, cy, g.window_w * scale, g.window_h * scale)
        return imgproc.crop_resize(frame, box, (g.model_w, g.model_h))

    def _features(self, patch, geometry=None):
        g = geometry or self.state.geometry
        gray = imgproc.to_gray(patch)
        hog = imgproc.hog_many(gray[None], g.cell, self.config.n_orientations)[0]
        gy, gx = g.grid
        mean = gray.reshape(gy, g.cell, gx, g.cell).mean(axis=(1, 3)) - 0.5
        feats = np.concatenate([np.moveaxis(hog, 2, 0), mean[None]], axis=0)
        return feats * self._cos

    def _fresh_cf(self, feats) -> CorrelationFilterModel:
        xf = fft2(feats)
        num = self._label_f[None] * np.conj(xf)
        den = (np.abs(xf) ** 2).sum(axis=0) + self.config.lam
        return CorrelationFilterModel(num, den)

    def _fresh_hist(self, patch, geometry=None) -> HistogramModel:
        g = geometry or self.state.geometry
        idx = imgproc.color_bin_index(patch, self._bins)
        nb = imgproc.n_color_bins(3 if patch.ndim == 3 else 1, self._bins)
        x0 = (g.model_w - g.target_w) / 2.0
        y0 = (g.model_h - g.target_h) / 2.0
        cols = np.arange(g.model_w) + 0.5
        rows = np.arange(g.model_h) + 0.5
        inside = ((rows >= y0) & (rows < y0 + g.target_h))[:, None] & (
            (cols >= x0) & (cols < x0 + g.target_w)
        )[None, :]
        fg = np.bincount(idx[inside], minlength=nb).astype(np.float64)
        bg = np.bincount(idx[~inside], minlength=nb).astype(np.float64)
        fg /= max(fg.sum(), 1.0)
        bg /= max(bg.sum(), 1.0)
        return HistogramModel(fg, bg)

    def _cf_response(self, feats, cf=None):
        cf = cf or self.state.cf
        zf = fft2(feats)
        return np.real(ifft2((cf.num * zf).sum(axis=0) / cf.den))

    # public operations -----------------------------------------------------

    def init(self, frame, box: BoundingBox, frame_index=0) -> TrackerState:
        imgproc.check_image(frame)
        if box.intersection_area(imgproc.frame_box(frame)) <= 0:
            raise ValueError("box outside frame")
        geometry = make_geometry(box, self.config)
        self._prepare(geometry, frame)
        patch = self._patch(frame, box.cx, box.cy, 1.0, geometry)
        feats = self._features(patch, geometry)
        self.state = TrackerState(
            self._fresh_cf(feats),
            self._fresh_hist(patch, geometry),
            TargetState(box.cx, box.cy, box.w, box.h, 1.0),
            geometry,
            frame_index,
        )
        self.archive = SnapshotArchive(self.config.archive_capacity)
        self.archive.push(Snapshot.of(self.state))
        return self.state

    def template_response(self, frame) -> np.ndarray:
        """CF response over the search window; index (dy, dx) is a circular cell shift."""
        t = self.state.target
        patch = self._patch(frame, t.cx, t.cy, self.state.scale)
        return self._cf_response(self._features(patch))

    def histogram_response(self, frame, patch=None) -> np.ndarray:
        """Dense likelihood map box-averaged at target size.

        Entry (i, j) scores the target box whose top-left corner sits at
        model pixel (j, i) of the search window.
        """
        g = self.state.geometry
        if patch is None:
            t = self.state.target
            patch = self._patch(frame, t.cx, t.cy, self.state.scale)
        like = self.state.hist.ratio[imgproc.color_bin_index(patch, self._bins)]
        bw = max(1, int(round(g.target_w)))
        bh = max(1, int(round(g.target_h)))
        return imgproc.box_mean_map(like, min(bw, g.model_w), min(bh, g.model_h))

    def hist_on_grid(self, hist_map) -> np.ndarray:
        """Resample a dense histogram response to the circular CF cell grid."""
        g = self.state.geometry
        gy, gx = g.grid
        bw = min(max(1, int(round(g.target_w))), g.model_w)
        bh = min(max(1, int(round(g.target_h))), g.model_h)
        dy = np.fft.fftfreq(gy, 1.0 / gy) * g.cell
        dx = np.fft.fftfreq(gx, 1.0 / gx) * g.cell
        # top-left of a target-size box centred at window centre + shift
        ys = g.model_h / 2.0 + dy - bh / 2.0
        xs = g.model_w / 2.0 + dx - bw / 2.0
        return _bilinear_or_zero(hist_map, ys, xs)

    def fuse(self, y_tmpl, y_hist_grid) -> np.ndarray:
        a = self.config.alpha
        return (1.0 - a) * y_tmpl + a * y_hist_grid

    def locate(self, frame) -> TargetState:
        """New target position from the fused response (size unchanged)."""
        t = self.state.target
        patch = self._patch(frame, t.cx, t.cy, self.state.scale)
        y_tmpl = self._cf_response(self._features(patch))
        y_hist = self.hist_on_grid(self.histogram_response(frame, patch))
        return self.locate_from_maps(y_tmpl, y_hist)

    def locate_from_maps(self, y_tmpl, y_hist_grid) -> TargetState:
        y = self.fuse(y_tmpl, y_hist_grid)
        dy, dx, peak = peak_shift(y)
        g = self.state.geometry
        t = self.state.target
        # model pixels -> frame pixels at the current scale
        sx = g.window_w * self.state.scale / g.model_w
        sy = g.window_h * self.state.scale / g.model_h
        return TargetState(t.cx + dx * g.cell * sx, t.cy + dy * g.cell * sy, t.w, t.h, peak)

    def estimate_scale(self, frame, center) -> float:
        cx, cy = center
        best, best_peak = 1.0, -np.inf
        for s in self.config.scale_factors:
            patch = self._patch(frame, cx, cy, self.state.scale * s)
            peak = float(self._cf_response(self._features(patch)).max())
            if peak > best_peak or (peak == best_peak and abs(s - 1.0) < abs(best - 1.0)):
                best, best_peak = s, peak
        return 1.0 + self.config.scale_damping * (best - 1.0)

    def update_models(self, frame, final_box: BoundingBox, lr_cf=None, lr_hist=None):
        lr_cf = self.config.learning_rate_cf if lr_cf is None else lr_cf
        lr_hist = self.config.learning_rate_hist if lr_hist is None else lr_hist
        st = self.state
        st.target = TargetState(final_box.cx, final_box.cy, final_box.w, final_box.h, st.target.peak)
        patch = self._patch(frame, final_box.cx, final_box.cy, st.scale)
        st.cf = st.cf.blend(self._fresh_cf(self._features(patch)), lr_cf)
        st.hist = st.hist.blend(self._fresh_hist(patch), lr_hist)

    def track(self, frame, frame_index, update=True) -> BoundingBox:
        """Process one frame: locate, rescale, update models, archive."""
        located = self.locate(frame)
        factor = self.estimate_scale(frame, (located.cx, located.cy))
        box = BoundingBox.from_center(located.cx, located.cy, located.w * factor, located.h * factor)
        self.state.target = TargetState(box.cx, box.cy, box.w, box.h, located.peak)
        if update:
            self.update_models(frame, box)
        self.state.frame_index = frame_index
        self.archive.push(Snapshot.of(self.state))
        return box

    def rollback(self, k, corrected_box: BoundingBox) -> TrackerState:
        self.state = self.archive.rollback(k, corrected_box, self.state.geometry)
        return self.state

    def restart(self, frame, frame_index, box: BoundingBox) -> BoundingBox:
        """Adopt ``box`` as the result of ``frame_index`` after a rollback."""
        self.update_models(frame, box)
        self.state.frame_index = frame_index
        self.archive.push(Snapshot.of(self.state))
        return box

    def reinitialize(self, frame, frame_index, box: BoundingBox) -> BoundingBox:
        """Fresh models from ``box`` (used when the archive cannot serve a rollback)."""
        target = TargetState(box.cx, box.cy, box.w, box.h, 1.0)
        self.state = TrackerState(self.state.cf, self.state.hist, target, self.state.geometry, frame_index)
        self.update_models(frame, box, lr_cf=1.0, lr_hist=1.0)
        self.archive = SnapshotArchive(self.config.archive_capacity)
        self.archive.push(Snapshot.of(self.state))
        return box

    @classmethod
    def from_snapshot(cls, snapshot: Snapshot, geometry: Geometry, config, frame) -> Tracker:
        """Tracker whose state equals ``snapshot``; archive holds just that snapshot."""
        tr = cls(config)
        tr._prepare(geometry, frame)
        tr.state = TrackerState(
            copy.deepcopy(snapshot.cf),
            copy.deepcopy(snapshot.hist),
            copy.deepcopy(snapshot.target),
            geometry,
            snapshot.frame_index,
        )
        tr.archive.push(Snapshot.of(tr.state))
        return tr


def _bilinear_or_zero(img, ys, xs):
    """Sample ``img`` on the outer product of ``ys`` x ``xs``; zero outside."""
    h, w = img.shape
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    padded = np.pad(img, 1)

    def at(yy, xx):
        yy = np.clip(yy + 1, 0, h + 1)
        xx = np.clip(xx + 1, 0, w + 1)
        return padded[yy[:, None], xx[None, :]]

    out = (
        at(y0, x0) * (1 - fy) * (1 - fx)
        + at(y0, x0 + 1) * (1 - fy) * fx
        + at(y0 + 1, x0) * fy * (1 - fx)
        + at(y0 + 1, x0 + 1) * fy * fx
    )
    valid = ((ys >= 0) & (ys <= h - 1))[:, None] & ((xs >= 0) & (xs <= w - 1))[None, :]
    return np.where(valid, out, 0.0)


def circular_offsets(n) -> np.ndarray:
    """Signed shift represented by each index of a length-n circular axis."""
    idx = np.arange(n)
    return np.where(idx > n // 2, idx - n, idx)


def peak_shift(y) -> tuple[float, float, float]:
    """Sub-cell peak of a circular response map.

    Values within a relative 1e-12 of the maximum count as ties and go to the
    smallest shift (flat plateaus carry FFT round-off); the chosen integer
    peak is refined with a 1-D parabola per axis.
    """
    gy, gx = y.shape
    top = y.max()
    oy = circular_offsets(gy)
    ox = circular_offsets(gx)
    cand = np.argwhere(y >= top - TIE_TOL * max(abs(top), 1e-300))
    dist = oy[cand[:, 0]] ** 2 + ox[cand[:, 1]] ** 2
    iy, ix = cand[int(np.argmin(dist))]
    peak = y[iy, ix]
    dy = float(oy[iy]) + _parabola(y[(iy - 1) % gy, ix], peak, y[(iy + 1) % gy, ix])
    dx = float(ox[ix]) + _parabola(y[iy, (ix - 1) % gx], peak, y[iy, (ix + 1) % gx])
    return dy, dx, float(peak)


def _parabola(left, mid, right) -> float:
    denom = left - 2.0 * mid + right
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))
