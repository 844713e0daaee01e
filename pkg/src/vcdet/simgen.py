"""Synthetic corpora with planted copies, in descriptor space.

Every video is a spherical random walk of unit descriptors (adjacent frames
correlated). Edited queries carry a noisy copy of a contiguous reference
segment surrounded by distractor content. Stacked queries hold several
contents side by side: their full-frame descriptor mixes all of them (and is
further corrupted), while the crop views see each content separately.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .alignment import SegmentMatch
from .evaluation import GroundTruth
from .store import Corpus, DescriptorSet, Role
from .views import CropScheme, EditLabel, EditLabels, merge_views, route_scheme, view_count

DISTRACTOR_MODES = ("random", "near_duplicate")

_STACK_LABELS = (EditLabel.STACK_VERTICAL, EditLabel.STACK_HORIZONTAL, EditLabel.STACK_GRID)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 7
    n_refs: int = 200
    n_queries: int = 60
    n_noise: int = 100
    d: int = 128
    frames_min: int = 30
    frames_max: int = 60
    fps: float = 1.0
    copy_fraction: float = 0.5
    noise_sigma: float = 0.35       # norm of the perturbation added to each copied frame
    distractor_mode: str = "near_duplicate"
    stack_fraction: float = 0.3
    walk_step_min: float = 0.15     # per-video random-walk step norm range
    walk_step_max: float = 0.35
    near_dup_min: float = 0.5       # perturbation norm range of a near-duplicate's anchor frame
    near_dup_max: float = 0.9
    stack_corruption: float = 0.5   # extra noise norm on full-frame views of stacked copies
    view_sigma: float = 0.8         # noise norm of partial-crop views of unstacked frames
    cut_fraction: float = 0.3       # fraction of unedited queries containing a scene cut
    generic_prob: float = 0.005     # per-frame chance of an isolated stock frame (any video)
    n_generic: int = 64            # size of the shared stock-frame pool
    generic_sigma: float = 0.5

    def __post_init__(self):
        for name in ("n_refs", "n_queries", "n_noise", "d", "frames_min"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.frames_max < self.frames_min:
            raise ValueError("frames_max < frames_min")
        if not 1 <= self.d <= 512:
            raise ValueError("d must be in [1, 512]")
        if self.n_generic < 1:
            raise ValueError("n_generic must be >= 1")
        for name in ("copy_fraction", "stack_fraction", "cut_fraction", "generic_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.distractor_mode not in DISTRACTOR_MODES:
            raise ValueError(f"distractor_mode must be one of {DISTRACTOR_MODES}")
        if self.noise_sigma < 0 or self.fps <= 0:
            raise ValueError("noise_sigma must be >= 0 and fps > 0")

    def as_dict(self) -> dict:
        return asdict(self)


class SimData(NamedTuple):
    queries: Corpus            # full-frame descriptors
    query_views: dict          # query_id -> list of DescriptorSet, full frame first
    refs: Corpus
    noise: Corpus
    gt: GroundTruth
    labels: dict               # query_id -> EditLabels

    def query_stacks(self) -> Corpus:
        """Queries with their views interleaved (the on-disk form)."""
        return Corpus.from_sets(Role.QUERY, (merge_views(self.query_views[q])
                                             for q in self.queries.ids))


class InfeasibleConfig(ValueError):
    pass


def _unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


class _Gen:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.generic = _unit(self.rng.standard_normal((cfg.n_generic, cfg.d)))

    def noise(self, shape, scale):
        # perturbation whose expected norm along the last axis is ~scale
        return self.rng.standard_normal(shape) * (scale / np.sqrt(self.cfg.d))

    def walk(self, n, start=None):
        c = self.cfg
        step = self.rng.uniform(c.walk_step_min, c.walk_step_max)
        x = np.empty((n, c.d))
        x[0] = _unit(self.rng.standard_normal(c.d)) if start is None else start
        steps = self.noise((n, c.d), step)
        for t in range(1, n):
            x[t] = _unit(x[t - 1] + steps[t])
        return x

    def sprinkle(self, x):
        """Replace isolated frames by perturbed stock frames, in place."""
        c = self.cfg
        hit = np.flatnonzero(self.rng.random(len(x)) < c.generic_prob)
        for t in hit:
            k = int(self.rng.integers(c.n_generic))
            x[t] = _unit(self.generic[k] + self.noise(c.d, c.generic_sigma))
        return x

    def length(self):
        return int(self.rng.integers(self.cfg.frames_min, self.cfg.frames_max + 1))

    def times(self, n):
        return np.arange(n) / self.cfg.fps

    def distractor(self, n, refs):
        # content of unedited queries: unrelated, or a look-alike that starts
        # near some reference frame and then drifts away
        c = self.cfg
        if c.distractor_mode == "random":
            return self.walk(n)
        ref = refs[int(self.rng.integers(len(refs)))]
        anchor = ref[int(self.rng.integers(len(ref)))]
        off = self.rng.uniform(c.near_dup_min, c.near_dup_max)
        return self.walk(n, _unit(anchor + self.noise(c.d, off)))

    def perturb(self, x, scale):
        if scale == 0:
            return x.copy()
        return _unit(x + self.noise(x.shape, scale))


def generate(cfg: SimConfig) -> SimData:
    """Build reference, noise and query corpora with ground truth and edit labels.

    Fully deterministic for a given ``cfg.seed``.
    """
    g = _Gen(cfg)
    ref_mats = [g.sprinkle(g.walk(g.length())) for _ in range(cfg.n_refs)]
    noise_mats = [g.sprinkle(g.walk(g.length())) for _ in range(cfg.n_noise)]
    width = max(4, len(str(max(cfg.n_refs, cfg.n_queries, cfg.n_noise))))
    ref_ids = [f"R{i:0{width}d}" for i in range(cfg.n_refs)]
    refs = Corpus.from_sets(Role.REFERENCE, (DescriptorSet(rid, g.times(len(m)), m)
                                             for rid, m in zip(ref_ids, ref_mats)))
    noise = Corpus.from_sets(Role.NOISE, (DescriptorSet(f"N{i:0{width}d}", g.times(len(m)), m)
                                          for i, m in enumerate(noise_mats)))

    n_edit = int(round(cfg.copy_fraction * cfg.n_queries))
    n_stack = int(round(cfg.stack_fraction * n_edit))
    order = g.rng.permutation(cfg.n_queries)
    edited = set(order[:n_edit].tolist())
    stacked = set(order[:n_stack].tolist())

    query_views, full_sets, gt_recs, labels = {}, [], [], {}
    for qi in range(cfg.n_queries):
        qid = f"Q{qi:0{width}d}"
        n = g.length()
        ts = g.times(n)
        if qi not in edited:
            labels[qid] = EditLabels(qid, frozenset({EditLabel.NONE}))
            content = g.distractor(n, ref_mats)
            if n >= 4 and g.rng.random() < cfg.cut_fraction:
                cut = int(g.rng.integers(n // 4, n - n // 4))
                content[cut:] = g.walk(n - cut)
            views = [content]
        else:
            seg = int(round(g.rng.uniform(0.2, 0.6) * n))
            seg = max(2, min(seg, n))
            fits = [k for k, m in enumerate(ref_mats) if len(m) >= seg]
            if not fits:
                raise InfeasibleConfig(f"{qid}: no reference has {seg} frames")
            rk = fits[int(g.rng.integers(len(fits)))]
            r_off = int(g.rng.integers(len(ref_mats[rk]) - seg + 1))
            q_off = int(g.rng.integers(n - seg + 1))
            copied = g.perturb(ref_mats[rk][r_off:r_off + seg], cfg.noise_sigma)
            gt_recs.append(SegmentMatch(qid, ref_ids[rk], float(ts[q_off]),
                                        float(ts[q_off + seg - 1]),
                                        float(r_off / cfg.fps), float((r_off + seg - 1) / cfg.fps)))
            if qi in stacked:
                label = _STACK_LABELS[int(g.rng.integers(len(_STACK_LABELS)))]
                labels[qid] = EditLabels(qid, frozenset({label}))
                n_boxes = view_count(route_scheme(labels[qid])) - 1
                slot = int(g.rng.integers(n_boxes))
                boxes = [g.walk(n) for _ in range(n_boxes)]
                boxes[slot][q_off:q_off + seg] = copied
                full = _unit(np.sum(boxes, axis=0) / np.sqrt(n_boxes))
                full[q_off:q_off + seg] = g.perturb(full[q_off:q_off + seg], cfg.stack_corruption)
                views = [full] + boxes
            else:
                labels[qid] = EditLabels(qid, frozenset({EditLabel.OTHER}))
                content = g.walk(n)
                content[q_off:q_off + seg] = copied
                views = [content]
        g.sprinkle(views[0])
        scheme = route_scheme(labels[qid])
        while len(views) < view_count(scheme):
            views.append(g.perturb(views[0], cfg.view_sigma))
        sets = [DescriptorSet(qid, ts, v) for v in views]
        query_views[qid] = sets
        full_sets.append(sets[0])
        assert scheme is CropScheme.FULL_ONLY or len(sets) > 1

    return SimData(Corpus.from_sets(Role.QUERY, full_sets), query_views, refs, noise,
                   GroundTruth(tuple(gt_recs)), labels)
