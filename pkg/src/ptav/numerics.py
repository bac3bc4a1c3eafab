"""FFT helpers, correlation-filter windows/labels and k-means."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KMEANS_MAX_ITER = 100


def fft2(plane) -> np.ndarray:
    """Unscaled forward 2-D DFT over the last two axes (any size)."""
    return np.fft.fft2(plane, axes=(-2, -1))


def ifft2(cplane) -> np.ndarray:
    """Inverse of :func:`fft2`, scaled by 1/(W*H)."""
    return np.fft.ifft2(cplane, axes=(-2, -1))


def circular_xcorr(a, b) -> np.ndarray:
    """out[dy, dx] = sum_{y,x} a[y, x] * b[(y+dy) % H, (x+dx) % W]."""
    return np.real(ifft2(np.conj(fft2(a)) * fft2(b)))


def gaussian_label(width, height, sigma) -> np.ndarray:
    """Gaussian regression target with its peak at index (0, 0), wrapped circularly."""
    dx = np.arange(width)
    dy = np.arange(height)
    dx = np.minimum(dx, width - dx)
    dy = np.minimum(dy, height - dy)
    d2 = dy[:, None] ** 2 + dx[None, :] ** 2
    return np.exp(-d2 / (2.0 * sigma**2))


def hann_window(width, height) -> np.ndarray:
    """Separable raised-cosine window, zero on the border samples."""

    def hann(n):
        if n == 1:
            return np.ones(1)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))

    return hann(height)[:, None] * hann(width)[None, :]


@dataclass
class ClusterSet:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    sse: float
    history: list = field(default_factory=list)

    def members(self, i) -> np.ndarray:
        return np.flatnonzero(self.assignments == i)


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _centroids(points, assign, k):
    return np.stack([points[assign == i].mean(axis=0) for i in range(k)])


def _sse(points, assign, centroids):
    return float(((points - centroids[assign]) ** 2).sum())


def _farthest_point_init(points, k, first):
    chosen = [first]
    d = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(points, assign, centroids):
    k = len(centroids)
    for i in range(k):
        if np.any(assign == i):
            continue
        # reseed with the point farthest from its current centroid, taken
        # from a cluster that can spare it
        d = ((points - centroids[assign]) ** 2).sum(axis=1)
        counts = np.bincount(assign, minlength=k)
        d[counts[assign] <= 1] = -1.0
        j = int(np.argmax(d))
        assign[j] = i
        centroids[i] = points[j]
    return assign


def _lloyd(points, centroids, history):
    k = len(centroids)
    assign = None
    for _ in range(KMEANS_MAX_ITER):
        new = np.argmin(_sq_dists(points, centroids), axis=1)
        new = _repair_empty(points, new, centroids)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        centroids = _centroids(points, assign, k)
        history.append(_sse(points, assign, centroids))
    return assign, centroids


def _hartigan(points, assign, k, history):
    """Single-point transfers that strictly lower SSE (Hartigan's criterion)."""
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    centroids = _centroids(points, assign, k)
    improved = True
    while improved:
        improved = False
        for j in range(len(points)):
            a = assign[j]
            if counts[a] <= 1:
                continue
            d = ((centroids - points[j]) ** 2).sum(axis=1)
            loss = counts[a] / (counts[a] - 1.0) * d[a]
            gain = counts / (counts + 1.0) * d
            gain[a] = np.inf
            b = int(np.argmin(gain))
            if gain[b] < loss - 1e-12 * max(loss, 1.0):
                centroids[a] = (centroids[a] * counts[a] - points[j]) / (counts[a] - 1.0)
                centroids[b] = (centroids[b] * counts[b] + points[j]) / (counts[b] + 1.0)
                counts[a] -= 1.0
                counts[b] += 1.0
                assign[j] = b
                improved = True
        if improved:
            centroids = _centroids(points, assign, k)
            history.append(_sse(points, assign, centroids))
    return assign, centroids


def kmeans(points, k, seed=0, n_init=None) -> ClusterSet:
    """Deterministic k-means.

    Each restart seeds with greedy farthest-point spreading from a start point
    drawn from ``seed``; Lloyd iterations run to an assignment fixpoint (at
    most 100), followed by Hartigan single-point moves.  The lowest-SSE
    restart wins, earliest restart on ties.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= {n} points")
    rng = np.random.default_rng(seed)
    if n_init is None:
        n_init = min(n, 8)
    starts = rng.permutation(n)[:n_init]
    best = None
    for first in starts:
        history = []
        centroids = _farthest_point_init(points, k, int(first))
        assign, centroids = _lloyd(points, centroids, history)
        assign, centroids = _hartigan(points, assign, k, history)
        sse = _sse(points, assign, centroids)
        if best is None or sse < best.sse:
            best = ClusterSet(k, assign, centroids, sse, history)
    return best
