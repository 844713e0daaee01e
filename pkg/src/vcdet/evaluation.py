"""Micro-AP for both tracks and the ablation table."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .alignment import SegmentMatch, read_matches
from .retrieval import flatten


@dataclass(frozen=True)
class GroundTruth:
    records: tuple

    def __post_init__(self):
        recs = tuple(SegmentMatch(*r[:6], 0.0) for r in self.records)
        for r in recs:
            if r.q_start > r.q_end or r.r_start > r.r_end:
                raise ValueError(f"invalid interval in ground truth: {r}")
        if len(set(recs)) != len(recs):
            raise ValueError("duplicate ground-truth records")
        object.__setattr__(self, "records", recs)

    @property
    def pair_set(self) -> frozenset:
        return frozenset((r.query_id, r.ref_id) for r in self.records)

    def __len__(self):
        return len(self.records)


GT_HEADER = ["query_id", "ref_id", "query_start", "query_end", "ref_start", "ref_end"]


def read_ground_truth(path) -> GroundTruth:
    return GroundTruth(tuple(read_matches(path, require_score=False)))


def write_ground_truth(gt: GroundTruth, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_HEADER)
        for r in gt.records:
            w.writerow([r.query_id, r.ref_id, f"{r.q_start:.3f}", f"{r.q_end:.3f}",
                        f"{r.r_start:.3f}", f"{r.r_end:.3f}"])


def descriptor_muap(ranked, gt: GroundTruth) -> float:
    """Average precision over one global ranking of (query, reference) pairs.

    Positives absent from ``ranked`` still count in the denominator.
    """
    positives = gt.pair_set
    if not positives:
        raise ValueError("ground truth has no positive pairs")
    pairs = sorted(flatten(ranked), key=lambda c: (-c.score, c.query_id, c.ref_id))
    hits = 0
    total = 0.0
    seen = set()
    for rank, c in enumerate(pairs, start=1):
        key = (c.query_id, c.ref_id)
        if key in seen:
            raise ValueError(f"duplicate candidate pair {key}")
        seen.add(key)
        if key in positives:
            hits += 1
            total += hits / rank
    return total / len(positives)


class _Plane:
    """Coverage bookkeeping for one (query, reference) time-time plane.

    All rectangle edges are compressed into a grid of cells; each cell is
    either entirely inside or entirely outside every rectangle, so areas are
    exact sums of cell areas.
    """

    def __init__(self, rects, gt_rects):
        xs = sorted({v for r in rects + gt_rects for v in (r[0], r[1])})
        ys = sorted({v for r in rects + gt_rects for v in (r[2], r[3])})
        self.xs, self.ys = np.asarray(xs), np.asarray(ys)
        self.cell_area = np.outer(np.diff(self.xs), np.diff(self.ys))
        self.covered = np.zeros(self.cell_area.shape, dtype=bool)
        self.gt = np.zeros(self.cell_area.shape, dtype=bool)
        for r in gt_rects:
            self.gt[self._slices(r)] = True

    def _slices(self, r):
        x0, x1 = np.searchsorted(self.xs, [r[0], r[1]])
        y0, y1 = np.searchsorted(self.ys, [r[2], r[3]])
        return slice(x0, x1), slice(y0, y1)

    def gt_area(self) -> float:
        return float(self.cell_area[self.gt].sum())

    def add(self, r):
        """Cover ``r``; return (new area, new area inside ground truth)."""
        sl = self._slices(r)
        fresh = ~self.covered[sl]
        area = self.cell_area[sl][fresh]
        inside = self.gt[sl][fresh]
        self.covered[sl] = True
        return float(area.sum()), float(area[inside].sum())


def _rect(m):
    return (m.q_start, m.q_end, m.r_start, m.r_end)


def matching_muap(pred, gt: GroundTruth) -> float:
    """Area-based micro-AP of segment predictions.

    Each match is a rectangle in its pair's (query time x reference time)
    plane. Predictions are walked by descending score; precision is the
    fraction of the predicted union lying inside the ground-truth union and
    recall the fraction of ground-truth area covered. The result is the sum of
    precision times recall increment over the walk.
    """
    gt_by_pair = defaultdict(list)
    for r in gt.records:
        gt_by_pair[(r.query_id, r.ref_id)].append(_rect(r))
    preds = sorted(pred, key=lambda m: (-m.score, m.query_id, m.ref_id,
                                        m.q_start, m.q_end, m.r_start, m.r_end))
    pred_by_pair = defaultdict(list)
    for m in preds:
        pred_by_pair[(m.query_id, m.ref_id)].append(_rect(m))
    planes = {}
    for key in set(gt_by_pair) | set(pred_by_pair):
        planes[key] = _Plane(pred_by_pair.get(key, []), gt_by_pair.get(key, []))
    total_gt = sum(p.gt_area() for p in planes.values())
    if total_gt <= 0:
        raise ValueError("ground truth has zero total area")
    pred_area = tp_area = 0.0
    ap = 0.0
    for m in preds:
        da, dtp = planes[(m.query_id, m.ref_id)].add(_rect(m))
        pred_area += da
        tp_area += dtp
        if dtp > 0:
            ap += (tp_area / pred_area) * (dtp / total_gt)
    return ap


@dataclass
class AblationRow:
    multi_view: bool
    consistency_weight: bool
    temporal_concat: bool
    descriptor_muap: float
    matching_muap: float
    extra: dict = field(default_factory=dict)


# stage switches of the four cumulative configurations, baseline first
ABLATION_STEPS = [
    dict(multi_view=False, consistency_weight=False, temporal_concat=False),
    dict(multi_view=True, consistency_weight=False, temporal_concat=False),
    dict(multi_view=True, consistency_weight=True, temporal_concat=False),
    dict(multi_view=True, consistency_weight=True, temporal_concat=True),
]

REPORT_HEADER = ["multi_crop", "consistency_weighting", "temporal_concat",
                 "muap_descriptor", "muap_matching"]

METRIC_NOTE = ("matching uAP: area overlap in each (query, reference) time plane, "
               "unions taken per pair and summed globally")


def ablation_report(configs, queries, refs, noise, gt: GroundTruth, labels=None,
                    tn_cfg=None, threads: int = 1) -> list[AblationRow]:
    """Run both tracks for each :class:`~vcdet.retrieval.PipelineConfig`."""
    from .alignment import TnConfig
    from .pipeline import run_both_tracks

    rows = []
    for cfg in configs:
        d_res, matches = run_both_tracks(queries, refs, noise, cfg, labels=labels,
                                         tn_cfg=tn_cfg or TnConfig(), threads=threads)
        rows.append(AblationRow(cfg.multi_view, cfg.consistency_weight, cfg.temporal_concat,
                                descriptor_muap(d_res.candidates, gt),
                                matching_muap(matches, gt),
                                extra={"n_matches": len(matches)}))
    return rows


def _mark(flag):
    return "x" if flag else ""


def format_report(rows) -> str:
    lines = [f"# {METRIC_NOTE}"]
    head = ["Multi-crop", "Consistency Weighting", "Temporal Concat",
            "uAP (Descriptor)", "uAP (Matching)"]
    body = [[_mark(r.multi_view), _mark(r.consistency_weight), _mark(r.temporal_concat),
             f"{r.descriptor_muap:.4f}", f"{r.matching_muap:.4f}"] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(head)]
    lines.append("  ".join(h.center(w) for h, w in zip(head, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for b in body:
        lines.append("  ".join(c.center(w) for c, w in zip(b, widths)))
    return "\n".join(lines) + "\n"


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in rows:
        w.writerow([int(r.multi_view), int(r.consistency_weight), int(r.temporal_concat),
                    repr(float(r.descriptor_muap)), repr(float(r.matching_muap))])
    return buf.getvalue()


def parse_report_csv(text: str) -> list[AblationRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(AblationRow(bool(int(rec["multi_crop"])),
                                bool(int(rec["consistency_weighting"])),
                                bool(int(rec["temporal_concat"])),
                                float(rec["muap_descriptor"]), float(rec["muap_matching"])))
    return rows
