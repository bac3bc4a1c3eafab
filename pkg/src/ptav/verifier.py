"""Verifier: template embeddings, the adaptive template pool and detection."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import _kernels, imgproc
from .imgproc import BoundingBox
from .numerics import kmeans

SCORE_MODES = ("cluster-mean", "literal-sum")


class Embedder(Protocol):
    """Maps canonical patches to unit-norm vectors of a fixed dimension."""

    patch_size: tuple[int, int]
    descriptor: str

    def embed_many(self, patches) -> np.ndarray: ...


def _unit_rows(m):
    norm = np.sqrt((m * m).sum(axis=1, keepdims=True))
    return np.divide(m, norm, out=np.zeros_like(m), where=norm > 0)


class HogColorEmbedder:
    """HOG and color histogram, each unit-normalized, weighted, concatenated."""

    def __init__(self, patch_size=64, cell_size=4, n_orientations=9, bins=None, hog_weight=0.5):
        self.patch_size = (patch_size, patch_size)
        self.cell_size = cell_size
        self.n_orientations = n_orientations
        self.bins = bins
        self.hog_weight = hog_weight
        self.descriptor = f"hog{cell_size}x{n_orientations}+color"

    def _bins_for(self, patches):
        return self.bins or (16 if patches.ndim == 4 else 32)

    def embed_many(self, patches) -> np.ndarray:
        patches = np.asarray(patches)
        hog = imgproc.hog_many(imgproc.to_gray(patches), self.cell_size, self.n_orientations)
        hog = _unit_rows(hog.reshape(len(patches), -1))
        color = _unit_rows(imgproc.color_histograms(patches, self._bins_for(patches)))
        out = np.concatenate([self.hog_weight * hog, (1.0 - self.hog_weight) * color], axis=1)
        return _unit_rows(out)

    def embed(self, patch) -> np.ndarray:
        return self.embed_many(np.asarray(patch)[None])[0]

    def embed_boxes(self, frame, boxes) -> np.ndarray:
        """Crop-and-embed fast path; matches ``embed_many`` on cropped patches to rounding."""
        frame_area = imgproc.frame_box(frame)
        if any(b.intersection_area(frame_area) <= 0.0 for b in boxes):
            raise ValueError("box outside frame")
        bins = self.bins or (16 if frame.ndim == 3 else 32)
        return _kernels.embed_boxes(frame, boxes, self.patch_size, self.cell_size,
                                    self.n_orientations, bins, self.hog_weight)


@dataclass
class VerifierConfig:
    tau0: float = 0.6
    tau1: float = 0.33
    tau2: float = 0.53
    gamma_init: float = 1.5
    gamma_step: float = 1.5
    gamma_max: float = 4.0
    stride_fraction: float = 0.05
    candidate_scales: tuple = (0.95, 1.0, 1.05)
    score_mode: str = "cluster-mean"
    cluster_size: int = 5  # L
    max_clusters: int = 10  # N_Cmax
    patch_size: int = 64
    seed: int = 0
    chunk: int = 256
    threads: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.tau1 <= self.tau2 < 1.0:
            raise ValueError("thresholds must satisfy 0 <= tau1 <= tau2 < 1")
        if self.gamma_init < 1.0:
            raise ValueError("gamma_init must be >= 1")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}")
        if self.cluster_size < 1 or self.max_clusters < 1:
            raise ValueError("cluster_size and max_clusters must be >= 1")
        self.candidate_scales = tuple(float(s) for s in self.candidate_scales)


def score_fixed(obj, x) -> float:
    return float(np.dot(obj, x))


def pool_weights(n_clusters) -> tuple[float, float]:
    """(w_o, w_c) for the first-frame template and for each cluster.

    With no clusters the first-frame template carries all the weight.  w_o is
    formed as ``1 - n * w_c``; since ``n * w_c`` lies in [0.5, 1) the
    subtraction is exact, so ``w_o + n * w_c == 1`` holds exactly in floats.
    """
    if n_clusters < 0:
        raise ValueError("n_clusters must be >= 0")
    if n_clusters == 0:
        return 1.0, 0.0
    e_c = math.exp(0.5 / n_clusters)
    w_c = e_c / (math.exp(0.5) + n_clusters * e_c)
    return 1.0 - n_clusters * w_c, w_c


class TemplatePool:
    """Fixed first-frame template plus k-means clustered admitted templates."""

    def __init__(self, first, first_hog=None, cluster_size=5, max_clusters=10, tau0=0.6,
                 score_mode="cluster-mean", seed=0):
        self.fixed = np.array(first, dtype=np.float64)
        self.fixed.setflags(write=False)
        self.cluster_size = cluster_size
        self.max_clusters = max_clusters
        self.tau0 = tau0
        self.score_mode = score_mode
        self.seed = seed
        self.dynamic: list[np.ndarray] = []
        self.dynamic_hog: list[np.ndarray] = []
        self.staging: list[tuple[np.ndarray, np.ndarray]] = []
        self.clusters: list[np.ndarray] = []
        self.admitted = 0
        self._refresh()

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def dim(self) -> int:
        return self.fixed.shape[0]

    def _refresh(self):
        self.w_o, self.w_c = pool_weights(self.n_clusters)
        tmpl = self.w_o * self.fixed
        for members in self.clusters:
            vecs = np.stack([self.dynamic[j] for j in members])
            if self.score_mode == "cluster-mean":
                tmpl = tmpl + self.w_c * vecs.mean(axis=0)
            else:
                tmpl = tmpl + self.w_c * vecs.sum(axis=0)
        # the score is linear in x, so the whole pool folds into one vector
        self.template = tmpl

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"embedding dimension {x.shape} != pool dimension {self.dim}")
        return float(self.score_many(x[None])[0])

    def score_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"embedding dimension {xs.shape} != pool dimension {self.dim}")
        return (xs * self.template).sum(axis=1)

    def recluster(self):
        k = len(self.dynamic) // self.cluster_size
        if k == 0:
            self.clusters = []
        else:
            cs = kmeans(np.stack(self.dynamic_hog), k, seed=self.seed)
            self.clusters = [cs.members(i) for i in range(k)]
        self._refresh()

    def maybe_admit(self, x, hog, score) -> bool:
        """Stage ``x`` when ``score > tau0``; flush the stage into the pool every L admissions."""
        if not score > self.tau0:
            return False
        self.admitted += 1
        self.staging.append((np.asarray(x, dtype=np.float64), np.asarray(hog, dtype=np.float64).ravel()))
        if len(self.staging) < self.cluster_size:
            return True
        for emb, h in self.staging:
            self.dynamic.append(emb)
            self.dynamic_hog.append(h)
        self.staging = []
        if len(self.dynamic) > self.cluster_size * self.max_clusters:
            del self.dynamic[: self.cluster_size]
            del self.dynamic_hog[: self.cluster_size]
        self.recluster()
        return True


@dataclass
class Verification:
    score: float
    passed: bool
    embedding: np.ndarray
    hog: np.ndarray


@dataclass
class Detection:
    best: BoundingBox
    score: float
    reliable: bool
    n_candidates: int


def grid_positions(lo, hi, size, stride) -> np.ndarray:
    """Window origins stepping by ``stride`` from ``lo`` while the window fits before ``hi``."""
    span = hi - lo - size
    if span < 0:
        return np.array([lo + span / 2.0])
    return lo + stride * np.arange(int(math.floor(span / stride + 1e-9)) + 1)


def generate_candidates(frame, box: BoundingBox, gamma, config: VerifierConfig) -> list[BoundingBox]:
    """Sliding windows over the square search region around ``box``."""
    H, W = frame.shape[:2]
    side = gamma * box.diagonal
    x0, x1 = max(box.cx - side / 2.0, 0.0), min(box.cx + side / 2.0, float(W))
    y0, y1 = max(box.cy - side / 2.0, 0.0), min(box.cy + side / 2.0, float(H))
    if x1 <= x0 or y1 <= y0:
        raise ValueError("empty search region after clamping to the frame")
    stride = max(1, int(round(config.stride_fraction * min(box.w, box.h))))
    out = []
    for s in config.candidate_scales:
        cw, ch = box.w * s, box.h * s
        xs = grid_positions(x0, x1, cw, stride)
        ys = grid_positions(y0, y1, ch, stride)
        if cw <= W:
            xs = np.clip(xs, 0.0, W - cw)
        if ch <= H:
            ys = np.clip(ys, 0.0, H - ch)
        out.extend(BoundingBox(float(x), float(y), cw, ch) for y in ys for x in xs)
    if box not in set(out):
        out.append(box)
    return out


def _threads(config):
    if config.threads:
        return config.threads
    try:
        return max(1, int(os.environ.get("PTAV_THREADS", "1")))
    except ValueError:
        return 1


class Verifier:
    """Owns the template pool and the embedder; used only by the verifying loop."""

    def __init__(self, config: VerifierConfig | None = None, embedder: Embedder | None = None):
        self.config = config or VerifierConfig()
        self.embedder = embedder or HogColorEmbedder(self.config.patch_size)
        self.pool: TemplatePool | None = None

    def _patches(self, frame, boxes):
        return imgproc.crop_resize_many(frame, boxes, self.embedder.patch_size)

    def _embed(self, frame, boxes):
        fast = getattr(self.embedder, "embed_boxes", None)
        if fast is not None:
            return fast(frame, boxes)
        return self.embedder.embed_many(self._patches(frame, boxes))

    def _hog(self, patch):
        return imgproc.compute_hog(patch).ravel()

    def init(self, frame, box: BoundingBox) -> TemplatePool:
        patch = self._patches(frame, [box])[0]
        c = self.config
        self.pool = TemplatePool(
            self.embedder.embed_many(patch[None])[0],
            self._hog(patch),
            cluster_size=c.cluster_size,
            max_clusters=c.max_clusters,
            tau0=c.tau0,
            score_mode=c.score_mode,
            seed=c.seed,
        )
        return self.pool

    def verify(self, frame, box: BoundingBox, tau1=None) -> Verification:
        tau1 = self.config.tau1 if tau1 is None else tau1
        patch = self._patches(frame, [box])[0]
        emb = self.embedder.embed_many(patch[None])[0]
        score = self.pool.score(emb)
        return Verification(score, score >= tau1, emb, self._hog(patch))

    def maybe_admit(self, v: Verification) -> bool:
        return self.pool.maybe_admit(v.embedding, v.hog, v.score)

    def score_candidates(self, frame, candidates) -> np.ndarray:
        """Crop, embed and score candidates in chunks; equal to scoring them one by one."""
        chunk = self.config.chunk
        parts = [candidates[i : i + chunk] for i in range(0, len(candidates), chunk)]

        def run(part):
            return self.pool.score_many(self._embed(frame, part))

        n_threads = _threads(self.config)
        if n_threads > 1 and len(parts) > 1:
            with ThreadPoolExecutor(n_threads) as ex:
                scores = list(ex.map(run, parts))
        else:
            scores = [run(p) for p in parts]
        return np.concatenate(scores) if scores else np.empty(0)

    def detect(self, frame, box: BoundingBox, gamma) -> Detection:
        cands = generate_candidates(frame, box, gamma, self.config)
        scores = self.score_candidates(frame, cands)
        return pick_best(cands, scores, box, self.config.tau2)


def pick_best(cands, scores, box: BoundingBox, tau2) -> Detection:
    """Argmax of the scores; ties go to the candidate nearest ``box``."""
    top = scores.max()
    tied = np.flatnonzero(scores == top)
    best = min(tied, key=lambda i: ((cands[i].cx - box.cx) ** 2 + (cands[i].cy - box.cy) ** 2, i))
    return Detection(cands[best], float(top), bool(top >= tau2), len(cands))
