"""Frame similarity matrices and Temporal Network segment localization."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .store import Corpus, DescriptorSet


class SegmentMatch(NamedTuple):
    query_id: str
    ref_id: str
    q_start: float
    q_end: float
    r_start: float
    r_end: float
    score: float = 0.0


@dataclass(frozen=True)
class SimilarityMatrix:
    query_id: str
    ref_id: str
    q_times: np.ndarray
    r_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.q_times), len(self.r_times)):
            raise ValueError(f"matrix {self.values.shape} does not match time axes "
                             f"({len(self.q_times)}, {len(self.r_times)})")

    @property
    def T(self) -> "SimilarityMatrix":
        return SimilarityMatrix(self.ref_id, self.query_id, self.r_times, self.q_times,
                                self.values.T.copy())


def similarity_matrix(q: DescriptorSet, r: DescriptorSet) -> SimilarityMatrix:
    if q.dim != r.dim:
        raise ValueError(f"dimension mismatch: {q.video_id} has {q.dim}, {r.video_id} has {r.dim}")
    values = q.matrix.astype(np.float64) @ r.matrix.astype(np.float64).T
    return SimilarityMatrix(q.video_id, r.video_id, q.timestamps.astype(np.float64),
                            r.timestamps.astype(np.float64), values)


def collapse_views(sim: SimilarityMatrix) -> SimilarityMatrix:
    """Max over rows (and columns) that share a timestamp."""
    def groups(t):
        return np.flatnonzero(np.r_[True, np.diff(t) != 0])

    gq, gr = groups(sim.q_times), groups(sim.r_times)
    if len(gq) == len(sim.q_times) and len(gr) == len(sim.r_times):
        return sim
    v = np.maximum.reduceat(sim.values, gq, axis=0)
    v = np.maximum.reduceat(v, gr, axis=1)
    return SimilarityMatrix(sim.query_id, sim.ref_id, sim.q_times[gq], sim.r_times[gr], v)


@dataclass(frozen=True)
class TnConfig:
    sim_threshold: float = 0.45
    max_step: int = 5
    min_nodes: int = 3
    max_segments: int = 4
    min_path_score: float = 1.0
    score_mode: str = "sum"   # or "mean"

    def __post_init__(self):
        if self.max_step < 1:
            raise ValueError("max_step must be >= 1")
        if self.min_nodes < 2:
            raise ValueError("min_nodes must be >= 2")
        if self.max_segments < 1:
            raise ValueError("max_segments must be >= 1")
        if self.score_mode not in ("sum", "mean"):
            raise ValueError("score_mode must be 'sum' or 'mean'")


def best_path(values, mask, max_step):
    """Maximum-weight path through admitted cells; edges need a gap of 1..max_step on both axes."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    return kernels.tn_best_path(v, m, int(max_step))


def tn_align(sim: SimilarityMatrix, cfg: TnConfig = TnConfig(), with_paths: bool = False):
    """Extract up to ``cfg.max_segments`` copied segments from one similarity matrix.

    Cells at or above ``sim_threshold`` are graph nodes weighted by their
    similarity. The heaviest monotone path is reported as a segment when it is
    long and heavy enough; its rows and columns are then withdrawn and the
    search repeats. Stops early once the best remaining path is lighter than
    ``min_path_score``.
    """
    values = sim.values
    mask = values >= cfg.sim_threshold
    out, paths = [], []
    while len(out) < cfg.max_segments and mask.any():
        path, weight = best_path(values, mask, cfg.max_step)
        if path is None or weight < cfg.min_path_score:
            break
        rows, cols = path[:, 0], path[:, 1]
        if len(path) >= cfg.min_nodes:
            score = weight if cfg.score_mode == "sum" else weight / len(path)
            out.append(SegmentMatch(sim.query_id, sim.ref_id,
                                    float(sim.q_times[rows[0]]), float(sim.q_times[rows[-1]]),
                                    float(sim.r_times[cols[0]]), float(sim.r_times[cols[-1]]),
                                    float(score)))
            paths.append(path)
        mask[rows, :] = False
        mask[:, cols] = False
    return (out, paths) if with_paths else out


def sort_matches(matches):
    return sorted(matches, key=lambda m: (-m.score, m.query_id, m.ref_id,
                                           m.q_start, m.q_end, m.r_start, m.r_end))


def pipeline_matching_track(candidates, queries: Corpus, refs: Corpus, cfg: TnConfig = TnConfig(),
                            collapse: bool = True, score_scale=None, threads: int = 1):
    """Align every candidate pair and pool the segments, best first.

    ``collapse`` merges stacked view rows (repeated timestamps) by maximum
    before alignment. ``score_scale`` optionally maps a query id to a factor
    applied to its similarity matrix before thresholding.
    """
    pairs = [(c.query_id, c.ref_id) for c in candidates]

    def one(pair):
        qid, rid = pair
        sim = similarity_matrix(queries[qid], refs[rid])
        if collapse:
            sim = collapse_views(sim)
        if score_scale is not None:
            sim = SimilarityMatrix(sim.query_id, sim.ref_id, sim.q_times, sim.r_times,
                                   sim.values * score_scale.get(qid, 1.0))
        return tn_align(sim, cfg)

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    return sort_matches(m for r in results for m in r)


MATCH_HEADER = ["query_id", "ref_id", "query_start", "query_end", "ref_start", "ref_end", "score"]


def write_matches(matches, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCH_HEADER)
        for m in matches:
            w.writerow([m.query_id, m.ref_id, f"{m.q_start:.3f}", f"{m.q_end:.3f}",
                        f"{m.r_start:.3f}", f"{m.r_end:.3f}", f"{m.score:.6f}"])


def read_matches(path, require_score: bool = True) -> list[SegmentMatch]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return out
        need = MATCH_HEADER if require_score else MATCH_HEADER[:-1]
        missing = set(need) - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                m = SegmentMatch(row["query_id"], row["ref_id"],
                                 float(row["query_start"]), float(row["query_end"]),
                                 float(row["ref_start"]), float(row["ref_end"]),
                                 float(row.get("score") or 0.0))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if m.q_start > m.q_end or m.r_start > m.r_end:
                raise ValueError(f"{path}:{lineno}: interval start after end")
            out.append(m)
    return out
