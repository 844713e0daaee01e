import logging

import numpy as np
import pytest

from vcdet.pca import PcaModel, pca_fit
from vcdet.postproc import (EPSILON_FLOOR, NoisePool, ScoreNormConfig, TemporalConcatConfig,
                            ZeroRowError, concat_windows, consistency_weight, fit_temporal_pca,
                            gram_mean, l2_normalize, score_normalize, temporal_concat)
from vcdet.retrieval import CandidatePair
from vcdet.store import Corpus, DescriptorSet, Role

from conftest import random_corpus, unit_rows
from oracles import window_oracle


def ds(m, vid="v"):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return DescriptorSet(vid, np.arange(len(m), dtype=float), m)


def test_l2_345():
    out = l2_normalize(ds([[3.0, 4.0]]))
    assert np.allclose(out.matrix, [[0.6, 0.8]], atol=1e-7)


def test_l2_idempotent(rng):
    s = ds(unit_rows(rng, 5, 8))
    assert np.allclose(l2_normalize(s).matrix, s.matrix, atol=1e-6)


def test_l2_random_norms(rng):
    out = l2_normalize(ds(rng.standard_normal((20, 16)) * 7))
    assert np.allclose(np.linalg.norm(out.matrix.astype(float), axis=1), 1.0, atol=1e-6)


def test_l2_zero_row():
    with pytest.raises(ZeroRowError, match="frame 1") as exc:
        l2_normalize(ds([[1.0, 0.0], [0.0, 0.0]], vid="clip"))
    assert exc.value.video_id == "clip"


def test_cw_single_frame():
    s = ds([[0.5, -0.5, 0.5, 0.5]])
    out, st = consistency_weight(s)
    assert st.gram_mean == 1.0
    assert np.array_equal(out.matrix, s.matrix)


def test_cw_divides_exactly(rng):
    s = ds(unit_rows(rng, 7, 5))
    out, st = consistency_weight(s)
    assert np.array_equal(out.matrix, (s.matrix.astype(float) / st.gram_mean).astype(np.float32))


def test_cw_identical_rows():
    s = ds(np.tile([[0.0, 1.0, 0.0]], (6, 1)))
    out, st = consistency_weight(s)
    assert st.gram_mean == 1.0
    assert np.array_equal(out.matrix, s.matrix)


def test_cw_orthonormal_pair():
    s = ds(np.eye(2))
    out, st = consistency_weight(s)
    assert st.gram_mean == 0.5
    assert np.array_equal(out.matrix, 2 * s.matrix)


def test_gram_mean_matches_full_gram(rng):
    x = unit_rows(rng, 9, 5)
    assert gram_mean(x) == pytest.approx((x @ x.T).mean(), abs=1e-12)


def test_cw_argmax_preserved():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        s = ds(unit_rows(rng, n, 6))
        r = rng.standard_normal(6)
        out, _ = consistency_weight(s)
        assert np.argmax(out.matrix @ r) == np.argmax(s.matrix @ r)
        assert np.array_equal(out.timestamps, s.timestamps)


def test_cw_monotone(rng):
    # both videos contain the reference's frame; the one with a scene cut
    # has the lower gram mean and the higher weighted similarity
    ref = np.array([1.0, 0.0, 0.0, 0.0])
    steady = ds(np.tile(ref, (4, 1)))
    cut = ds(np.vstack([ref, ref, [0, 1.0, 0, 0], [0, 0, 1.0, 0]]))
    a, sa = consistency_weight(steady)
    b, sb = consistency_weight(cut)
    assert sb.gram_mean < sa.gram_mean
    assert (b.matrix @ ref).max() > (a.matrix @ ref).max()


def test_cw_clamp(caplog):
    s = ds([[1.0, 0.0], [-1.0, 0.0]])
    with caplog.at_level(logging.WARNING):
        out, st = consistency_weight(s)
    assert st.clamped and st.divisor == EPSILON_FLOOR
    assert np.allclose(out.matrix, s.matrix / EPSILON_FLOOR)
    assert "clamped" in caplog.text


def test_tc_config_validation():
    for bad in [dict(window=2, weights=(1, 1)), dict(window=3, weights=(1, 0.5, 1)),
                dict(window=3, weights=(0.2, 1, 0.5)), dict(window=3, weights=(1, 1))]:
        with pytest.raises(ValueError):
            TemporalConcatConfig(**bad)


def test_tc_window_one_identity(rng):
    s = ds(rng.standard_normal((6, 4)))
    cfg = TemporalConcatConfig(window=1, weights=(1.0,))
    ident = PcaModel(np.zeros(4), np.eye(4), np.ones(4))
    out = temporal_concat(s, cfg, ident)
    ref = l2_normalize(s)
    assert np.allclose(out.matrix, ref.matrix, atol=1e-6)


def test_tc_window_one_preserves_geometry(rng):
    # a fitted full-rank PCA is a rigid motion: pairwise distances survive
    x = unit_rows(rng, 40, 5)
    cfg = TemporalConcatConfig(window=1, weights=(1.0,))
    model = pca_fit(x, 5)
    s = ds(x)
    y = pca_model_apply = (x - model.mean) @ model.components.T
    out = temporal_concat(s, cfg, model)
    assert np.allclose(out.matrix, y / np.linalg.norm(y, axis=1, keepdims=True), atol=1e-6)
    d_in = np.linalg.norm(x[:, None] - x[None], axis=2)
    d_pca = np.linalg.norm(pca_model_apply[:, None] - pca_model_apply[None], axis=2)
    assert np.allclose(d_in, d_pca, atol=1e-9)


def test_tc_constant_input(rng):
    cfg = TemporalConcatConfig()
    train = Corpus.from_sets(Role.REFERENCE, [ds(unit_rows(rng, 30, 4), "r")])
    model = fit_temporal_pca(train, cfg)
    s = ds(np.tile(unit_rows(rng, 1, 4), (7, 1)))
    out = temporal_concat(s, cfg, model)
    assert np.allclose(out.matrix, out.matrix[0], atol=1e-7)


def test_tc_window_oracle(rng):
    cfg = TemporalConcatConfig()
    refs = random_corpus(rng, Role.REFERENCE, 10, 4, n_max=8)
    model = fit_temporal_pca(refs, cfg)
    s = ds(unit_rows(rng, 5, 4))
    win = window_oracle(s.matrix, cfg.weights)
    assert np.allclose(concat_windows(s.matrix, cfg), win)
    expect = np.array([model.components @ (row - model.mean) for row in win])
    expect /= np.linalg.norm(expect, axis=1, keepdims=True)
    out = temporal_concat(s, cfg, model)
    assert out.dim == 4 and np.array_equal(out.timestamps, s.timestamps)
    assert np.allclose(out.matrix, expect, atol=1e-6)


def test_tc_dim_mismatch(rng):
    cfg = TemporalConcatConfig()
    model = PcaModel(np.zeros(9), np.eye(9)[:3], np.ones(3))
    with pytest.raises(ValueError):
        temporal_concat(ds(unit_rows(rng, 3, 4)), cfg, model)


def _cands(scores):
    return [CandidatePair("q", f"r{i}", s) for i, s in enumerate(scores)]


def test_sn_beta_zero(rng):
    noise = random_corpus(rng, Role.NOISE, 3, 4, prefix="N")
    q = ds(unit_rows(rng, 3, 4))
    out = score_normalize(_cands([0.9, 0.5]), q, noise, ScoreNormConfig(rank_k=1, beta=0.0))
    assert [c.score for c in out] == [0.9, 0.5]


def test_sn_orthogonal_noise():
    noise = Corpus.from_sets(Role.NOISE, [ds([[0, 0, 1.0], [0, 0, -0.0]], "n")])
    q = ds([[1.0, 0, 0], [0, 1.0, 0]])
    out = score_normalize([0.7, 0.2], q, noise, ScoreNormConfig(rank_k=1))
    assert out == [0.7, 0.2]


def test_sn_rank1_enumeration():
    pool = np.array([[0.2, 0.9, 0.1], [0.8, -0.3, 0.4], [0.0, 0.5, 0.5]])
    noise = Corpus.from_sets(Role.NOISE, [ds(pool, "n")])
    q = ds([[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]])
    best = max(float(a @ b) for a in q.matrix.astype(float) for b in pool)
    out = score_normalize(_cands([1.0, 0.4]), q, noise, ScoreNormConfig(rank_k=1))
    assert out[0].score == pytest.approx(1.0 - best, abs=1e-6)
    assert out[1].score == pytest.approx(0.4 - best, abs=1e-6)


def test_sn_rank_k_enumeration(rng):
    noise = random_corpus(rng, Role.NOISE, 4, 6, prefix="N")
    q = ds(unit_rows(rng, 5, 6))
    sims = sorted((float(a @ b) for a in q.matrix.astype(float)
                   for s in noise for b in s.matrix.astype(float)), reverse=True)
    pool = NoisePool.from_corpus(noise)
    pool.block = 3  # force several blocks
    assert pool.baseline(q, 4) == pytest.approx(sims[3], abs=1e-6)


def test_sn_uniform_shift(rng):
    noise = random_corpus(rng, Role.NOISE, 3, 4, prefix="N")
    q = ds(unit_rows(rng, 3, 4))
    scores = list(rng.uniform(-1, 1, 12))
    out = score_normalize(scores, q, noise, ScoreNormConfig(rank_k=2, beta=0.7))
    shift = np.array(scores) - np.array(out)
    assert np.allclose(shift, shift[0]) and np.array_equal(np.argsort(out), np.argsort(scores))


def test_sn_empty_noise(rng):
    with pytest.raises(ValueError):
        score_normalize([1.0], ds([[1.0]]), Corpus.from_sets(Role.NOISE, []), ScoreNormConfig())
