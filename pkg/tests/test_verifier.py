import math

import mpmath
import numpy as np
import pytest

from ptav import imgproc
from ptav.bench.synth import parse_script, synth_generate
from ptav.imgproc import BoundingBox
from ptav.verifier import (
    HogColorEmbedder,
    TemplatePool,
    Verifier,
    VerifierConfig,
    generate_candidates,
    grid_positions,
    pick_best,
    pool_weights,
    score_fixed,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def weights_oracle(n):
    mpmath.mp.dps = 50
    e = mpmath.e ** mpmath.mpf("0.5")
    w_o = e / (e + n * mpmath.e ** (mpmath.mpf("0.5") / n))
    return w_o, (1 - w_o) / n


def test_score_fixed_examples(rng):
    v = unit(rng.normal(size=6))
    u = rng.normal(size=6)
    u = unit(u - (u @ v) * v)
    assert score_fixed(v, v) == pytest.approx(1.0)
    assert score_fixed(v, u) == pytest.approx(0.0, abs=1e-12)
    assert score_fixed(v, unit(v + u)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_pool_weight_values():
    assert pool_weights(0) == (1.0, 0.0)
    assert pool_weights(1) == (0.5, 0.5)
    w_o, w_c = weights_oracle(2)
    got = pool_weights(2)
    assert abs(got[0] - float(w_o)) < 1e-12 and abs(got[1] - float(w_c)) < 1e-12
    # the quoted five-digit approximations agree with the oracle to 1e-5
    assert abs(got[0] - 0.39098) < 2e-5 and abs(got[1] - 0.30451) < 1e-5
    with pytest.raises(ValueError):
        pool_weights(-1)


def test_pool_weight_identity_and_monotone():
    for n in range(0, 11):
        w_o, w_c = pool_weights(n)
        assert w_o + n * w_c == 1.0
    w = [pool_weights(n)[0] for n in range(1, 11)]
    assert all(b < a for a, b in zip(w, w[1:]))


def _pool(dim=4, **kw):
    return TemplatePool(unit(np.arange(1, dim + 1)), np.zeros(3), **kw)


def test_pool_empty_reduces_to_fixed(rng):
    pool = _pool()
    x = unit(rng.random(4))
    assert pool.score(x) == pytest.approx(score_fixed(pool.fixed, x), abs=1e-15)
    with pytest.raises(ValueError):
        pool.score(np.ones(5))
    with pytest.raises(ValueError):
        pool.fixed[0] = 1.0


def test_pool_admission_staging():
    pool = _pool()
    for i in range(4):
        assert pool.maybe_admit(pool.fixed, np.full(3, i), 0.9)
    assert len(pool.staging) == 4 and pool.dynamic == []
    assert not pool.maybe_admit(pool.fixed, np.zeros(3), 0.6)  # strict threshold
    pool.maybe_admit(pool.fixed, np.zeros(3), 0.61)
    assert len(pool.dynamic) == 5 and pool.n_clusters == 1 and pool.w_o == 0.5
    assert pool.staging == []


def test_cluster_mean_perfect_match_scores_one():
    pool = _pool()
    for i in range(15):
        pool.maybe_admit(pool.fixed, np.array([i, 0.0, 0.0]), 0.99)
    assert pool.n_clusters == 3
    assert pool.score(pool.fixed) == pytest.approx(1.0, abs=1e-12)


def test_literal_sum_diverges():
    e1 = np.eye(4)[0]
    pool = TemplatePool(e1, np.zeros(2), score_mode="literal-sum")
    for _ in range(5):
        pool.maybe_admit(e1, np.zeros(2), 0.9)
    assert pool.score(e1) == pytest.approx(3.0, abs=1e-12)


def test_55_admissions_simulation_oracle(rng):
    pool = _pool(cluster_size=5, max_clusters=10)
    stream = [(unit(rng.random(4)), rng.random(3)) for _ in range(55)]
    sim_d, sim_t = [], []
    for emb, hog in stream:
        pool.maybe_admit(emb, hog, 0.7)
        sim_t.append(emb)
        if len(sim_t) == 5:
            sim_d += sim_t
            sim_t = []
            if len(sim_d) > 50:
                sim_d = sim_d[5:]
    assert len(pool.dynamic) == 50 and pool.n_clusters == 10
    assert all(np.array_equal(a, b) for a, b in zip(pool.dynamic, sim_d))
    assert np.array_equal(pool.dynamic[0], stream[5][0])
    assert pool.w_o + 10 * pool.w_c == 1.0


def test_cluster_mean_order_invariance(rng):
    pool = _pool()
    for _ in range(10):
        pool.maybe_admit(unit(rng.random(4)), rng.random(3), 0.9)
    x = unit(rng.random(4))
    before = pool.score(x)
    perm = rng.permutation(10)
    pool.dynamic = [pool.dynamic[j] for j in perm]
    inverse = np.argsort(perm)
    pool.clusters = [np.sort(inverse[m]) for m in pool.clusters]
    pool._refresh()
    assert pool.score(x) == pytest.approx(before, abs=1e-15)


def two_texture_scene(target_xy=(100, 100), with_target=True):
    """Target texture on a smooth background; returns float frame and box."""
    script = parse_script(f"""
width = 320
height = 240
frames = 1
target = {target_xy[0]},{target_xy[1]},24,24
texture_seed = 1
""")
    seq = synth_generate(script, seed=0)
    if with_target:
        return seq[0], seq.ground_truth[0]
    # same background, target parked in the far corner
    script.target = (290, 210, 24, 24)
    return synth_generate(script, seed=0)[0], seq.ground_truth[0]


def test_embedder_unit_norm_nonnegative(rng):
    emb = HogColorEmbedder()
    patches = rng.random((5, 64, 64, 3))
    v = emb.embed_many(patches)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-9)
    assert v.min() >= 0.0
    assert np.array_equal(v, emb.embed_many(patches))


@pytest.mark.parametrize("gray", [False, True])
def test_fast_path_matches_numpy_embedding(gray, rng):
    img = rng.random((120, 160, 3))
    if gray:
        img = imgproc.to_gray(img)
    boxes = [BoundingBox(*rng.uniform([-10, -10, 8, 8], [150, 110, 40, 40])) for _ in range(20)]
    emb = HogColorEmbedder()
    slow = emb.embed_many(imgproc.crop_resize_many(img, boxes, (64, 64)))
    fast = emb.embed_boxes(img, boxes)
    assert np.abs(slow - fast).max() < 1e-12
    assert all(np.array_equal(emb.embed_boxes(img, [b])[0], f) for b, f in zip(boxes, fast))


def test_verify_on_first_frame_target():
    frame, box = two_texture_scene()
    v = Verifier()
    v.init(frame, box)
    res = v.verify(frame, box)
    assert res.score == pytest.approx(1.0, abs=1e-12) and res.passed


def test_verify_orthogonal_region():
    frame = np.zeros((80, 120, 3))
    frame[10:34, 10:34] = (0.9, 0.1, 0.1)
    frame[20:24, 10:34] = (0.1, 0.1, 0.9)  # stripe gives the target some gradient
    frame[40:80, 60:120] = (0.1, 0.8, 0.2)
    v = Verifier()
    v.init(frame, BoundingBox(10, 10, 24, 24))
    res = v.verify(frame, BoundingBox(70, 50, 24, 24))
    assert res.score == pytest.approx(0.0, abs=1e-12) and not res.passed
    assert v.verify(frame, BoundingBox(70, 50, 24, 24), tau1=0.0).passed


def test_config_validation():
    with pytest.raises(ValueError):
        VerifierConfig(tau1=0.6, tau2=0.5)
    with pytest.raises(ValueError):
        VerifierConfig(gamma_init=0.5)
    with pytest.raises(ValueError):
        VerifierConfig(score_mode="median")


def test_grid_counting_oracle():
    assert len(grid_positions(0.0, 40.0, 20.0, 4)) == 6
    frame = np.zeros((200, 200, 3))
    box = BoundingBox(94, 92, 12, 16)  # diagonal 20, gamma 2 -> square of side 40
    cfg = VerifierConfig(stride_fraction=1 / 3, candidate_scales=(1.0,))
    cands = generate_candidates(frame, box, 2.0, cfg)
    # stride 4: floor((40 - 12) / 4) + 1 columns, floor((40 - 16) / 4) + 1 rows, plus the box itself
    assert len(cands) == 8 * 7 + 1
    assert cands[-1] == box


def test_candidates_inside_clamped_square():
    frame = np.zeros((100, 100, 3))
    box = BoundingBox(2, 3, 20, 20)
    cands = generate_candidates(frame, box, 3.0, VerifierConfig(stride_fraction=0.2))
    assert all(c.x >= 0 and c.y >= 0 and c.x + c.w <= 100 and c.y + c.h <= 100 for c in cands)
    tiny = generate_candidates(frame, BoundingBox(40, 40, 20, 20), 1e-6, VerifierConfig())
    assert {(c.cx, c.cy) for c in tiny} == {(50.0, 50.0)}


def test_detect_finds_moved_target():
    frame0, box0 = two_texture_scene((100, 100))
    frame1, box1 = two_texture_scene((130, 100))
    v = Verifier(VerifierConfig(stride_fraction=0.1))
    v.init(frame0, box0)
    det = v.detect(frame1, box0, 2.5)
    assert abs(det.best.cx - box1.cx) <= 2 and abs(det.best.cy - box1.cy) <= 2
    assert det.reliable


def test_detect_without_target_is_unreliable():
    frame0, box0 = two_texture_scene((100, 100))
    empty, _ = two_texture_scene(with_target=False)
    v = Verifier(VerifierConfig(stride_fraction=0.1))
    v.init(frame0, box0)
    assert not v.detect(empty, box0, 1.5).reliable


def test_batch_scoring_equals_sequential():
    frame0, box0 = two_texture_scene()
    v = Verifier(VerifierConfig(chunk=7, stride_fraction=0.2))
    v.init(frame0, box0)
    cands = generate_candidates(frame0, box0, 1.5, v.config)
    batch = v.score_candidates(frame0, cands)
    seq = np.array([v.score_candidates(frame0, [c])[0] for c in cands])
    assert np.array_equal(batch, seq)
    threaded = Verifier(VerifierConfig(chunk=7, stride_fraction=0.2, threads=3))
    threaded.pool = v.pool
    assert np.array_equal(threaded.score_candidates(frame0, cands), batch)


def test_argmax_invariant_to_monotone_transform(rng):
    box = BoundingBox(10, 10, 5, 5)
    cands = [box.shifted(i, 0) for i in range(-5, 6)]
    scores = rng.random(len(cands))
    a = pick_best(cands, scores, box, 0.5)
    b = pick_best(cands, np.exp(3 * scores) + 1, box, 0.5)
    assert a.best == b.best
    tied = pick_best(cands, np.ones(len(cands)), box, 0.5)
    assert tied.best == box
