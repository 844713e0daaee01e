"""Exhaustive frame-level search and the descriptor-track pipeline."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .postproc import (EPSILON_FLOOR, NoisePool, ScoreNormConfig, TemporalConcatConfig,
                       consistency_weight, fit_temporal_pca, l2_normalize, temporal_concat)
from .store import Corpus, DescriptorSet, Role
from .views import infer_view_count, merge_views, route_scheme, split_views, view_count

log = logging.getLogger(__name__)

AGGREGATIONS = ("max_pair", "sum_topk_pairs")


class CandidatePair(NamedTuple):
    query_id: str
    ref_id: str
    score: float


@dataclass(frozen=True)
class SearchConfig:
    top_k: int = 1200
    aggregation: str = "max_pair"
    agg_k: int = 5
    block_size: int = 16384   # reference frames per matmul block

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.agg_k < 1:
            raise ValueError("agg_k must be >= 1")


class _RefIndex:
    """Reference frames stacked into one matrix, with per-video column offsets."""

    def __init__(self, refs: Corpus):
        self.ids = refs.ids
        mats = [s.matrix for s in refs]
        self.matrix = np.ascontiguousarray(np.concatenate(mats), dtype=np.float32)
        self.offsets = np.concatenate([[0], np.cumsum([m.shape[0] for m in mats])]).astype(np.int64)

    def video_scores(self, q: np.ndarray, cfg: SearchConfig) -> np.ndarray:
        n_videos = len(self.ids)
        if cfg.aggregation == "max_pair":
            out = np.full(n_videos, -np.inf)
        else:
            partial = []
        # blocks are cut on video boundaries so each video is reduced in one piece
        start = 0
        while start < n_videos:
            stop = start + 1
            while (stop < n_videos
                   and self.offsets[stop + 1] - self.offsets[start] <= cfg.block_size):
                stop += 1
            a, b = self.offsets[start], self.offsets[stop]
            block = q @ self.matrix[a:b].T
            local = self.offsets[start:stop + 1] - a
            if cfg.aggregation == "max_pair":
                out[start:stop] = np.maximum.reduceat(block.max(axis=0), local[:-1])
            else:
                partial.append(kernels.segment_topk_sum(np.ascontiguousarray(block), local, cfg.agg_k))
            start = stop
        return out if cfg.aggregation == "max_pair" else np.concatenate(partial)


def _rank(query_id, ref_ids, scores, top_k) -> list[CandidatePair]:
    pairs = [CandidatePair(query_id, r, float(s)) for r, s in zip(ref_ids, scores)]
    pairs.sort(key=lambda c: (-c.score, c.ref_id))
    return pairs[:top_k]


def exhaustive_search(queries: Corpus, refs: Corpus, cfg: SearchConfig = SearchConfig(),
                      threads: int = 1) -> dict[str, list[CandidatePair]]:
    """Score every (query video, reference video) pair and keep the top ``cfg.top_k``.

    Frame-pair inner products are computed as blocked matrix products and
    reduced per reference video (``max_pair``: the largest pair;
    ``sum_topk_pairs``: the sum of the ``agg_k`` largest). Lists are sorted by
    descending score, ties by ascending reference id.
    """
    if len(queries) == 0 or len(refs) == 0:
        raise ValueError("exhaustive search needs non-empty query and reference corpora")
    if queries.dim != refs.dim:
        raise ValueError(f"dimension mismatch: queries {queries.dim}, references {refs.dim}")
    index = _RefIndex(refs)

    def one(s: DescriptorSet):
        scores = index.video_scores(s.matrix.astype(np.float32), cfg)
        return _rank(s.video_id, index.ids, scores, cfg.top_k)

    sets = list(queries)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, sets))
    else:
        results = [one(s) for s in sets]
    return {s.video_id: r for s, r in zip(sets, results)}


def flatten(ranked) -> list[CandidatePair]:
    if isinstance(ranked, dict):
        return [c for qid in ranked for c in ranked[qid]]
    return list(ranked)


def write_candidates(ranked, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "ref_id", "score"])
        for c in flatten(ranked):
            w.writerow([c.query_id, c.ref_id, f"{c.score:.6f}"])


def read_candidates(path) -> list[CandidatePair]:
    out = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return out
        missing = {"query_id", "ref_id", "score"} - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            key = (row["query_id"], row["ref_id"])
            if key in seen:
                raise ValueError(f"{path}:{lineno}: duplicate pair {key}")
            score = float(row["score"])
            if not math.isfinite(score):
                raise ValueError(f"{path}:{lineno}: non-finite score")
            seen.add(key)
            out.append(CandidatePair(key[0], key[1], score))
    return out


@dataclass(frozen=True)
class PipelineConfig:
    """Stage switches and parameters of the descriptor track."""

    multi_view: bool = False
    consistency_weight: bool = False
    temporal_concat: bool = False
    score_norm: bool = False
    weight_refs: bool = False
    cw_before_tc: bool = False
    cw_floor: float = EPSILON_FLOOR
    tc: TemporalConcatConfig = field(default_factory=TemporalConcatConfig)
    sn: ScoreNormConfig = field(default_factory=ScoreNormConfig)
    search: SearchConfig = field(default_factory=SearchConfig)


@dataclass
class DescriptorTrackResult:
    candidates: dict[str, list[CandidatePair]]
    queries: Corpus
    refs: Corpus
    pca: object = None
    gram: dict = field(default_factory=dict)       # query_id -> ConsistencyStats
    baselines: dict = field(default_factory=dict)  # query_id -> score-norm shift


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (ValueError, ArithmeticError) as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


def query_view_stack(s: DescriptorSet, labels=None) -> list[DescriptorSet]:
    """Split a stored query into views and keep those its routed scheme uses."""
    views = split_views(s, infer_view_count(s))
    if labels is not None and s.video_id in labels:
        need = view_count(route_scheme(labels[s.video_id]))
        if len(views) < need:
            raise ValueError(
                f"{s.video_id}: routed scheme needs {need} views, file has {len(views)}")
        views = views[:need]
    return views


def pipeline_descriptor_track(queries: Corpus, refs: Corpus, noise: Corpus | None,
                              cfg: PipelineConfig = PipelineConfig(), labels=None,
                              threads: int = 1) -> DescriptorTrackResult:
    """Normalize, optionally stack views, concatenate, weight, search and shift scores.

    ``queries`` holds each query's view stack (view rows interleaved with
    repeated timestamps, full frame first); without ``multi_view`` only the
    full-frame view is used. Temporal concatenation runs per view before the
    views are re-interleaved.
    """
    tc_on = cfg.temporal_concat

    @_stage("l2_normalize")
    def prep_queries():
        out = {}
        for s in queries:
            views = query_view_stack(s, labels) if cfg.multi_view else split_views(s)[:1]
            out[s.video_id] = [l2_normalize(v) for v in views]
        return out

    q_views = prep_queries()
    r_sets = _stage("l2_normalize")(lambda: refs.map(l2_normalize))()
    n_sets = _stage("l2_normalize")(lambda: noise.map(l2_normalize))() if noise is not None else None

    pca = None
    if tc_on:
        pca = _stage("temporal_concat")(fit_temporal_pca)(r_sets, cfg.tc)
        tc = _stage("temporal_concat")(lambda s: temporal_concat(s, cfg.tc, pca))
    gram = {}

    def weight(s, store):
        out, stats = _stage("consistency_weight")(consistency_weight)(s, cfg.cw_floor)
        if store is not None:
            store[s.video_id] = stats
        return out

    def process_query(views):
        if cfg.consistency_weight and cfg.cw_before_tc:
            merged = merge_views(views)
            out, stats = _stage("consistency_weight")(consistency_weight)(merged, cfg.cw_floor)
            gram[merged.video_id] = stats
            views = split_views(out, len(views))
        if tc_on:
            views = [tc(v) for v in views]
        merged = merge_views(views)
        if cfg.consistency_weight and not cfg.cw_before_tc:
            merged = weight(merged, gram)
        return merged

    def process_ref(s):
        if cfg.consistency_weight and cfg.weight_refs and cfg.cw_before_tc:
            s = weight(s, None)
        if tc_on:
            s = tc(s)
        if cfg.consistency_weight and cfg.weight_refs and not cfg.cw_before_tc:
            s = weight(s, None)
        return s

    q_proc = Corpus.from_sets(Role.QUERY, (process_query(v) for v in q_views.values()))
    r_proc = r_sets.map(process_ref)
    if q_proc.dim > 512 or r_proc.dim > 512:
        raise StageError("temporal_concat", ValueError("output exceeds 512 dimensions"))

    ranked = _stage("exhaustive_search")(exhaustive_search)(q_proc, r_proc, cfg.search, threads)

    baselines = {}
    if cfg.score_norm:
        if n_sets is None:
            raise StageError("score_norm", ValueError("score normalization needs a noise corpus"))
        n_proc = n_sets.map(tc) if tc_on else n_sets
        pool = _stage("score_norm")(NoisePool.from_corpus)(n_proc)

        @_stage("score_norm")
        def shift(qid):
            if cfg.sn.beta == 0:
                return 0.0
            return cfg.sn.beta * pool.baseline(q_proc[qid], cfg.sn.rank_k)

        for qid in ranked:
            b = shift(qid)
            baselines[qid] = b
            ranked[qid] = [CandidatePair(c.query_id, c.ref_id, c.score - b) for c in ranked[qid]]
    return DescriptorTrackResult(ranked, q_proc, r_proc, pca, gram, baselines)
