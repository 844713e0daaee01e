import numpy as np
import pytest

from vcdet import kernels
from vcdet.alignment import (MATCH_HEADER, SegmentMatch, SimilarityMatrix, TnConfig, best_path,
                             collapse_views, pipeline_matching_track, read_matches,
                             similarity_matrix, sort_matches, tn_align, write_matches)
from vcdet.retrieval import CandidatePair
from vcdet.store import Corpus, DescriptorSet, Role

from conftest import unit_rows
from oracles import enumerate_best_path

backends = [kernels.python] + ([kernels.native] if kernels.native is not None else [])


def sim_of(values, q_times=None, r_times=None):
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    return SimilarityMatrix("q", "r",
                            np.arange(n, dtype=float) if q_times is None else np.asarray(q_times),
                            np.arange(m, dtype=float) if r_times is None else np.asarray(r_times),
                            values)


def test_similarity_identity(rng):
    basis = np.linalg.qr(rng.standard_normal((6, 6)))[0][:4]
    s = DescriptorSet("a", np.arange(4.0), basis)
    assert np.allclose(similarity_matrix(s, s).values, np.eye(4), atol=1e-6)


def test_similarity_transpose_and_oracle(rng):
    q = DescriptorSet("q", np.arange(4.0), rng.standard_normal((4, 5)))
    r = DescriptorSet("r", np.arange(3.0), rng.standard_normal((3, 5)))
    qr, rq = similarity_matrix(q, r), similarity_matrix(r, q)
    assert np.array_equal(qr.values, rq.values.T)
    for i in range(4):
        for j in range(3):
            dot = sum(float(a) * float(b) for a, b in zip(q.matrix[i], r.matrix[j]))
            assert abs(qr.values[i, j] - dot) < 1e-6
    assert np.array_equal(qr.T.values, rq.values)


def test_similarity_dim_mismatch(rng):
    with pytest.raises(ValueError):
        similarity_matrix(DescriptorSet("a", [0.0], np.ones((1, 2))),
                          DescriptorSet("b", [0.0], np.ones((1, 3))))


def test_perfect_diagonal():
    out = tn_align(sim_of(np.eye(10)), TnConfig(sim_threshold=0.5))
    assert out == [SegmentMatch("q", "r", 0.0, 9.0, 0.0, 9.0, 10.0)]


def test_all_below_threshold(rng):
    assert tn_align(sim_of(rng.uniform(0, 0.4, (6, 6))), TnConfig(sim_threshold=0.5)) == []


@pytest.mark.parametrize("backend", backends, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
def test_enumeration_oracle(backend):
    rng = np.random.default_rng(11)
    for _ in range(100):
        n, m = rng.integers(1, 9, size=2)
        values = rng.uniform(-0.2, 1.0, (n, m))
        thr = float(rng.uniform(0.0, 0.7))
        step = int(rng.integers(1, 4))
        want_w, want_nodes = enumerate_best_path(values, thr, step)
        path, w = backend.tn_best_path(values, (values >= thr).astype(np.uint8), step)
        if want_w is None:
            assert path is None
            continue
        assert abs(w - want_w) < 1e-6
        assert sorted(map(tuple, path)) == sorted(want_nodes)


def test_backends_agree_on_ties():
    if kernels.native is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(3)
    for _ in range(300):
        n, m = rng.integers(1, 14, size=2)
        values = rng.integers(-1, 3, (n, m)).astype(float)
        mask = (values >= rng.integers(-1, 2)).astype(np.uint8)
        step = int(rng.integers(1, 5))
        pa, wa = kernels.python.tn_best_path(values, mask, step)
        pb, wb = kernels.native.tn_best_path(values, mask, step)
        assert wa == wb
        assert (pa is None and pb is None) or np.array_equal(pa, pb)


def test_tie_prefers_smaller_nodes():
    # two equal-weight diagonals; the lexicographically smaller end and chain win
    v = np.zeros((4, 4))
    v[0, 0] = v[1, 1] = 1.0
    v[2, 2] = v[3, 3] = 1.0
    v[0, 2] = v[1, 3] = 0.0
    path, w = best_path(v, v >= 0.5, 1)
    assert w == 4.0 and path.tolist() == [[0, 0], [1, 1], [2, 2], [3, 3]]
    u = np.zeros((3, 3))
    u[0, 1] = u[1, 0] = 1.0
    path, w = best_path(u, u >= 0.5, 2)
    assert w == 1.0 and path.tolist() == [[0, 1]]


@pytest.mark.parametrize("backend", backends, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
def test_segment_topk_sum_oracle(backend):
    rng = np.random.default_rng(4)
    for _ in range(50):
        sizes = rng.integers(1, 8, size=int(rng.integers(1, 6)))
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        block = rng.standard_normal((int(rng.integers(1, 5)), offsets[-1])).astype(np.float32)
        k = int(rng.integers(1, 10))
        got = backend.segment_topk_sum(block, offsets, k)
        want = [np.sort(block[:, a:b].ravel())[::-1][:k].sum()
                for a, b in zip(offsets[:-1], offsets[1:])]
        assert np.allclose(got, want, atol=1e-5)


def test_path_monotone(rng):
    for _ in range(20):
        v = rng.uniform(0, 1, (12, 12))
        _, paths = tn_align(sim_of(v), TnConfig(sim_threshold=0.3, max_segments=4), with_paths=True)
        for p in paths:
            assert np.all(np.diff(p[:, 0]) > 0) and np.all(np.diff(p[:, 1]) > 0)


def test_below_threshold_entries_irrelevant(rng):
    v = rng.uniform(0, 1, (10, 10))
    cfg = TnConfig(sim_threshold=0.6)
    w = v.copy()
    w[w < 0.6] = -5.0
    assert tn_align(sim_of(v), cfg) == tn_align(sim_of(w), cfg)


def test_two_segments():
    v = np.zeros((20, 20))
    for k in range(5):
        v[k, 10 + k] = 0.9
        v[12 + k, 2 + k] = 0.8
    out = tn_align(sim_of(v), TnConfig(sim_threshold=0.5, max_step=2, max_segments=4))
    assert [(m.q_start, m.q_end, m.r_start, m.r_end) for m in out] == [
        (0.0, 4.0, 10.0, 14.0), (12.0, 16.0, 2.0, 6.0)]
    assert out[0].score == pytest.approx(4.5)
    one = tn_align(sim_of(v), TnConfig(sim_threshold=0.5, max_step=2, max_segments=1))
    assert len(one) == 1


def test_short_paths_skipped():
    v = np.zeros((10, 10))
    v[0, 0] = v[1, 1] = 0.9          # 2 nodes, too short
    for k in range(4):
        v[4 + k, 4 + k] = 0.5        # 4 nodes, weight 2.0
    out = tn_align(sim_of(v), TnConfig(sim_threshold=0.4, max_step=1, min_path_score=1.0))
    assert len(out) == 1 and out[0].q_start == 4.0
    low = tn_align(sim_of(v), TnConfig(sim_threshold=0.4, max_step=1, min_path_score=2.5))
    assert low == []


def test_mean_score_mode():
    out = tn_align(sim_of(np.eye(4) * 0.8), TnConfig(sim_threshold=0.5, score_mode="mean"))
    assert out[0].score == pytest.approx(0.8)


def test_collapse_views():
    v = np.arange(12, dtype=float).reshape(4, 3)
    s = collapse_views(sim_of(v, q_times=[0, 0, 1, 1], r_times=[0, 1, 1]))
    assert s.values.tolist() == [[3, 5], [9, 11]]
    assert s.q_times.tolist() == [0, 1] and s.r_times.tolist() == [0, 1]


def test_repeated_timestamps_allowed():
    v = np.eye(6)
    out = tn_align(sim_of(v, q_times=[0, 0, 1, 1, 2, 2]), TnConfig(sim_threshold=0.5, max_step=1))
    assert out[0].q_start <= out[0].q_end


def test_config_validation():
    for bad in [dict(max_step=0), dict(min_nodes=1), dict(max_segments=0), dict(score_mode="x")]:
        with pytest.raises(ValueError):
            TnConfig(**bad)


def test_matching_track_empty(rng):
    q = Corpus.from_sets(Role.QUERY, [DescriptorSet("q", [0.0], unit_rows(rng, 1, 3))])
    assert pipeline_matching_track([], q, q) == []


def test_matching_track_planted(rng):
    d = 32
    ref = unit_rows(rng, 30, d)
    qm = unit_rows(rng, 25, d)
    qm[5:15] = ref[12:22]
    q = Corpus.from_sets(Role.QUERY, [DescriptorSet("q", np.arange(25.0), qm)])
    r = Corpus.from_sets(Role.REFERENCE, [DescriptorSet("r", np.arange(30.0), ref)])
    out = pipeline_matching_track([CandidatePair("q", "r", 1.0)], q, r, TnConfig())
    assert (out[0].q_start, out[0].q_end, out[0].r_start, out[0].r_end) == (5.0, 14.0, 12.0, 21.0)
    assert pipeline_matching_track([CandidatePair("q", "r", 1.0)], q, r, threads=3) == out


def test_sort_and_csv(tmp_path):
    ms = [SegmentMatch("b", "r", 0, 1, 0, 1, 0.5), SegmentMatch("a", "r", 0, 1, 0, 1, 0.5),
          SegmentMatch("a", "r", 2, 3, 2, 3, 0.9)]
    ordered = sort_matches(ms)
    assert [m.query_id for m in ordered] == ["a", "a", "b"] and ordered[0].score == 0.9
    p = tmp_path / "m.csv"
    write_matches(ordered, p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(MATCH_HEADER)
    assert lines[1] == "a,r,2.000,3.000,2.000,3.000,0.900000"
    assert read_matches(p) == ordered
    p.write_text(",".join(MATCH_HEADER) + "\na,r,3,2,0,1,0.1\n")
    with pytest.raises(ValueError, match=":2:"):
        read_matches(p)
