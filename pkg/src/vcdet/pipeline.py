"""Both tracks end to end."""
from __future__ import annotations

from .alignment import TnConfig, pipeline_matching_track, sort_matches
from .retrieval import PipelineConfig, flatten, pipeline_descriptor_track


def matching_weights(d_res):
    """Per-query factor that undoes consistency weighting on similarity values."""
    return {qid: st.divisor for qid, st in d_res.gram.items()}


def run_matching(d_res, tn_cfg: TnConfig = TnConfig(), threads: int = 1, rescore: bool = True,
                 collapse: bool = True):
    """Localize segments for every candidate of a descriptor-track result.

    With ``rescore`` (default), nodes are admitted on the unweighted cosine
    similarity and the segment score is divided by the query's consistency
    divisor afterwards, so the threshold keeps its meaning while weighted
    queries still rank higher.
    """
    cands = flatten(d_res.candidates)
    if not rescore or not d_res.gram:
        return pipeline_matching_track(cands, d_res.queries, d_res.refs, tn_cfg,
                                       collapse=collapse, threads=threads)
    weights = matching_weights(d_res)
    matches = pipeline_matching_track(cands, d_res.queries, d_res.refs, tn_cfg,
                                      collapse=collapse, score_scale=weights, threads=threads)
    return sort_matches(m._replace(score=m.score / weights.get(m.query_id, 1.0)) for m in matches)


def run_both_tracks(queries, refs, noise, cfg: PipelineConfig, labels=None,
                    tn_cfg: TnConfig = TnConfig(), threads: int = 1, rescore: bool = True):
    d_res = pipeline_descriptor_track(queries, refs, noise, cfg, labels=labels, threads=threads)
    return d_res, run_matching(d_res, tn_cfg, threads=threads, rescore=rescore)
