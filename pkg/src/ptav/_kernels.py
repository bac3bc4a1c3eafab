"""Compiled inner loop for candidate scoring.

``embed_boxes`` crops, resamples and embeds a batch of boxes in one pass per
box, without materializing the intermediate patch stacks.  It follows the
same arithmetic as ``imgproc.crop_resize_many`` + ``HogColorEmbedder`` and
agrees with that path to rounding (see tests/test_verifier.py).
"""

from __future__ import annotations

import math

import numba
import numpy as np

HOG_EPS = 1e-5


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _coords(start, extent, n_out, limit, i0, i1, frac):
    step = extent / n_out
    for i in range(n_out):
        pos = start + (i + 0.5) * step - 0.5
        if pos < 0.0:
            pos = 0.0
        elif pos > limit - 1:
            pos = float(limit - 1)
        f = math.floor(pos)
        i0[i] = int(f)
        i1[i] = min(int(f) + 1, limit - 1)
        frac[i] = pos - f


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _embed_boxes(image, boxes, out_w, out_h, cell, n_orient, bins, hog_weight, out):
    H, W, C = image.shape
    cy, cx = out_h // cell, out_w // cell
    n_hog = cy * cx * n_orient
    n_col = bins**3 if C == 3 else bins
    r0 = np.empty(out_h, np.int64)
    r1 = np.empty(out_h, np.int64)
    fy = np.empty(out_h)
    c0 = np.empty(out_w, np.int64)
    c1 = np.empty(out_w, np.int64)
    fx = np.empty(out_w)
    rows = np.empty((out_h, W, C))
    patch = np.empty((out_h, out_w, C))
    gray = np.empty((out_h + 2, out_w + 2))
    hist = np.empty((cy, cx, n_orient))
    energy = np.empty((cy + 2, cx + 2))
    counts = np.empty(n_col)
    for k in range(boxes.shape[0]):
        bx, by, bw, bh = boxes[k, 0], boxes[k, 1], boxes[k, 2], boxes[k, 3]
        _coords(by, bh, out_h, H, r0, r1, fy)
        _coords(bx, bw, out_w, W, c0, c1, fx)
        lo, hi = c0[0], c1[out_w - 1] + 1
        for i in range(out_h):
            wy = fy[i]
            for x in range(lo, hi):
                for c in range(C):
                    rows[i, x, c] = image[r0[i], x, c] * (1.0 - wy) + image[r1[i], x, c] * wy
        for i in range(out_h):
            for j in range(out_w):
                wx = fx[j]
                for c in range(C):
                    patch[i, j, c] = rows[i, c0[j], c] * (1.0 - wx) + rows[i, c1[j], c] * wx

        # gray with a replicated one-pixel border
        for i in range(out_h):
            for j in range(out_w):
                if C == 3:
                    g = patch[i, j, 0] * 0.299 + patch[i, j, 1] * 0.587 + patch[i, j, 2] * 0.114
                else:
                    g = patch[i, j, 0]
                gray[i + 1, j + 1] = g
        for j in range(1, out_w + 1):
            gray[0, j] = gray[1, j]
            gray[out_h + 1, j] = gray[out_h, j]
        for i in range(out_h + 2):
            gray[i, 0] = gray[i, 1]
            gray[i, out_w + 1] = gray[i, out_w]

        hist[:] = 0.0
        for i in range(out_h):
            for j in range(out_w):
                gx = gray[i + 1, j + 2] - gray[i + 1, j]
                gy = gray[i + 2, j + 1] - gray[i, j + 1]
                mag = math.hypot(gx, gy)
                a = math.atan2(gy, gx)
                if a < 0.0:
                    a += math.pi
                if a >= math.pi:
                    a -= math.pi
                pos = a * (n_orient / math.pi)
                f = math.floor(pos)
                frac = pos - f
                b0 = int(f) % n_orient
                b1 = (b0 + 1) % n_orient
                hist[i // cell, j // cell, b0] += mag * (1.0 - frac)
                hist[i // cell, j // cell, b1] += mag * frac

        energy[:] = 0.0
        for i in range(cy):
            for j in range(cx):
                s = 0.0
                for o in range(n_orient):
                    s += hist[i, j, o] ** 2
                energy[i + 1, j + 1] = s
        hog_sq = 0.0
        p = 0
        for i in range(cy):
            for j in range(cx):
                e = 0.0
                for dy in range(3):
                    for dx in range(3):
                        e += energy[i + dy, j + dx]
                d = math.sqrt(e + HOG_EPS * HOG_EPS)
                for o in range(n_orient):
                    v = hist[i, j, o] / d
                    out[k, p] = v
                    hog_sq += v * v
                    p += 1

        counts[:] = 0.0
        for i in range(out_h):
            for j in range(out_w):
                idx = 0
                for c in range(C):
                    q = min(int(patch[i, j, c] * bins), bins - 1)
                    idx = idx * bins + q
                counts[idx] += 1.0
        npix = out_h * out_w
        col_sq = 0.0
        for b in range(n_col):
            counts[b] /= npix
            col_sq += counts[b] ** 2

        hs = hog_weight / math.sqrt(hog_sq) if hog_sq > 0 else 0.0
        cs = (1.0 - hog_weight) / math.sqrt(col_sq) if col_sq > 0 else 0.0
        tot = 0.0
        for p in range(n_hog):
            out[k, p] *= hs
            tot += out[k, p] ** 2
        for b in range(n_col):
            v = counts[b] * cs
            out[k, n_hog + b] = v
            tot += v * v
        if tot > 0:
            inv = math.sqrt(tot)
            for p in range(n_hog + n_col):
                out[k, p] /= inv


def embed_boxes(image, boxes, out_size, cell, n_orient, bins, hog_weight) -> np.ndarray:
    out_w, out_h = out_size
    img = np.ascontiguousarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)
    n_col = bins**3 if img.shape[2] == 3 else bins
    out = np.empty((len(arr), (out_h // cell) * (out_w // cell) * n_orient + n_col))
    _embed_boxes(img, arr, out_w, out_h, cell, n_orient, bins, hog_weight, out)
    return out


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _crop_resize(image, boxes, out_w, out_h, out):
    H, W, C = image.shape
    r0 = np.empty(out_h, np.int64)
    r1 = np.empty(out_h, np.int64)
    fy = np.empty(out_h)
    c0 = np.empty(out_w, np.int64)
    c1 = np.empty(out_w, np.int64)
    fx = np.empty(out_w)
    rows = np.empty((out_h, W, C))
    for k in range(boxes.shape[0]):
        _coords(boxes[k, 1], boxes[k, 3], out_h, H, r0, r1, fy)
        _coords(boxes[k, 0], boxes[k, 2], out_w, W, c0, c1, fx)
        for i in range(out_h):
            wy = fy[i]
            for x in range(c0[0], c1[out_w - 1] + 1):
                for c in range(C):
                    rows[i, x, c] = image[r0[i], x, c] * (1.0 - wy) + image[r1[i], x, c] * wy
        for i in range(out_h):
            for j in range(out_w):
                wx = fx[j]
                for c in range(C):
                    out[k, i, j, c] = rows[i, c0[j], c] * (1.0 - wx) + rows[i, c1[j], c] * wx


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _hog(patches, cell, n_orient, out):
    n, H, W = patches.shape
    cy, cx = H // cell, W // cell
    hist = np.empty((cy, cx, n_orient))
    energy = np.empty((cy + 2, cx + 2))
    for k in range(n):
        hist[:] = 0.0
        for i in range(H):
            up, down = max(i - 1, 0), min(i + 1, H - 1)
            ci = i // cell
            for j in range(W):
                left, right = max(j - 1, 0), min(j + 1, W - 1)
                gx = patches[k, i, right] - patches[k, i, left]
                gy = patches[k, down, j] - patches[k, up, j]
                mag = math.sqrt(gx * gx + gy * gy)
                a = math.atan2(gy, gx)
                if a < 0.0:
                    a += math.pi
                if a >= math.pi:
                    a -= math.pi
                pos = a * (n_orient / math.pi)
                f = math.floor(pos)
                frac = pos - f
                b0 = int(f)
                if b0 >= n_orient:
                    b0 -= n_orient
                b1 = b0 + 1 if b0 + 1 < n_orient else 0
                cj = j // cell
                hist[ci, cj, b0] += mag * (1.0 - frac)
                hist[ci, cj, b1] += mag * frac
        energy[:] = 0.0
        for i in range(cy):
            for j in range(cx):
                s = 0.0
                for o in range(n_orient):
                    s += hist[i, j, o] ** 2
                energy[i + 1, j + 1] = s
        for i in range(cy):
            for j in range(cx):
                e = 0.0
                for dy in range(3):
                    for dx in range(3):
                        e += energy[i + dy, j + dx]
                d = math.sqrt(e + HOG_EPS * HOG_EPS)
                for o in range(n_orient):
                    out[k, i, j, o] = hist[i, j, o] / d


def crop_resize(image, boxes, out_size) -> np.ndarray:
    out_w, out_h = out_size
    img = np.ascontiguousarray(image, dtype=np.float64)
    img3 = img[:, :, None] if img.ndim == 2 else img
    arr = np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)
    out = np.empty((len(arr), out_h, out_w, img3.shape[2]))
    _crop_resize(img3, arr, out_w, out_h, out)
    return out[..., 0] if img.ndim == 2 else out


def hog(patches, cell, n_orient) -> np.ndarray:
    n, H, W = patches.shape
    out = np.empty((n, H // cell, W // cell, n_orient))
    _hog(np.ascontiguousarray(patches, dtype=np.float64), cell, n_orient, out)
    return out
