"""Multi-crop geometry, view stacking and edit-label routing."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .store import DescriptorSet, InvariantError


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int


class CropScheme(str, Enum):
    TWO_VIEW_VERTICAL = "two_view_vertical"
    TWO_VIEW_HORIZONTAL = "two_view_horizontal"
    FOUR_VIEW = "four_view"
    FIVE_VIEW = "five_view"
    FULL_ONLY = "full_only"


BOX_COUNT = {
    CropScheme.TWO_VIEW_VERTICAL: 2,
    CropScheme.TWO_VIEW_HORIZONTAL: 2,
    CropScheme.FOUR_VIEW: 4,
    CropScheme.FIVE_VIEW: 5,
    CropScheme.FULL_ONLY: 1,
}


class EditLabel(str, Enum):
    STACK_VERTICAL = "stack_vertical"
    STACK_HORIZONTAL = "stack_horizontal"
    STACK_GRID = "stack_grid"
    OVERLAY = "overlay"
    OTHER = "other"
    NONE = "none"


@dataclass(frozen=True)
class EditLabels:
    video_id: str
    labels: frozenset

    def __post_init__(self):
        labels = frozenset(EditLabel(x) for x in self.labels)
        if not labels:
            raise ValueError(f"{self.video_id}: empty label set")
        if EditLabel.NONE in labels and len(labels) > 1:
            raise ValueError(f"{self.video_id}: 'none' cannot be combined with other labels")
        object.__setattr__(self, "labels", labels)

    @property
    def edited(self) -> bool:
        return EditLabel.NONE not in self.labels


def _quadrants(w, h):
    sx, sy = w // 2, h // 2
    return [Rect(0, 0, sx, sy), Rect(sx, 0, w - sx, sy),
            Rect(0, sy, sx, h - sy), Rect(sx, sy, w - sx, h - sy)]


def crop_boxes(scheme, frame_w: int, frame_h: int, corner_fraction: float = 0.5) -> list[Rect]:
    """Crop rectangles ``(x, y, w, h)`` for one scheme.

    Halves and quadrants split at ``floor(dim / 2)``; the second box takes the
    remainder. ``corner_fraction`` only affects ``five_view``: at 0.5 the four
    partial views are the quadrants, larger values give overlapping corner
    crops of ``floor(dim * fraction)`` pixels anchored at each corner.
    """
    scheme = CropScheme(scheme)
    w, h = int(frame_w), int(frame_h)
    if w < 2 or h < 2:
        raise ValueError(f"degenerate frame {w}x{h}")
    full = Rect(0, 0, w, h)
    if scheme is CropScheme.FULL_ONLY:
        return [full]
    if scheme is CropScheme.TWO_VIEW_VERTICAL:
        sy = h // 2
        return [Rect(0, 0, w, sy), Rect(0, sy, w, h - sy)]
    if scheme is CropScheme.TWO_VIEW_HORIZONTAL:
        sx = w // 2
        return [Rect(0, 0, sx, h), Rect(sx, 0, w - sx, h)]
    if scheme is CropScheme.FOUR_VIEW:
        return _quadrants(w, h)
    if not 0.5 <= corner_fraction < 1.0:
        raise ValueError("corner_fraction must be in [0.5, 1)")
    if corner_fraction == 0.5:
        return [full] + _quadrants(w, h)
    cw, ch = max(1, int(w * corner_fraction)), max(1, int(h * corner_fraction))
    return [full, Rect(0, 0, cw, ch), Rect(w - cw, 0, cw, ch),
            Rect(0, h - ch, cw, ch), Rect(w - cw, h - ch, cw, ch)]


def view_count(scheme) -> int:
    """Rows per frame in a query's view stack: the full frame plus each partial crop."""
    scheme = CropScheme(scheme)
    if scheme is CropScheme.FIVE_VIEW:
        return 5
    if scheme is CropScheme.FULL_ONLY:
        return 1
    return 1 + BOX_COUNT[scheme]


# more specific geometry wins when several labels are present
_PRIORITY = [
    (EditLabel.STACK_GRID, CropScheme.FOUR_VIEW),
    (EditLabel.STACK_VERTICAL, CropScheme.TWO_VIEW_VERTICAL),
    (EditLabel.STACK_HORIZONTAL, CropScheme.TWO_VIEW_HORIZONTAL),
    (EditLabel.OVERLAY, CropScheme.FIVE_VIEW),
    (EditLabel.OTHER, CropScheme.FIVE_VIEW),
]


def route_scheme(labels: EditLabels) -> CropScheme:
    for label, scheme in _PRIORITY:
        if label in labels.labels:
            return scheme
    return CropScheme.FULL_ONLY


def merge_views(views: Sequence[DescriptorSet]) -> DescriptorSet:
    """Interleave per-view sequences: for each frame, the V view rows in input order."""
    if not views:
        raise ValueError("no views to merge")
    first = views[0]
    for v in views[1:]:
        if v.video_id != first.video_id:
            raise InvariantError(f"view video ids differ: {first.video_id} vs {v.video_id}")
        if v.matrix.shape != first.matrix.shape:
            raise InvariantError(
                f"{first.video_id}: view shapes differ {first.matrix.shape} vs {v.matrix.shape}")
        if not np.array_equal(v.timestamps, first.timestamps):
            raise InvariantError(f"{first.video_id}: view timestamps differ")
    if len(views) == 1:
        return first
    stacked = np.stack([v.matrix for v in views], axis=1)  # (n, V, d)
    n, V, d = stacked.shape
    return DescriptorSet(first.video_id, np.repeat(first.timestamps, V), stacked.reshape(n * V, d))


def infer_view_count(s: DescriptorSet) -> int:
    """Rows per distinct timestamp, which must be uniform across the video."""
    _, counts = np.unique(s.timestamps, return_counts=True)
    if not np.all(counts == counts[0]):
        raise InvariantError(f"{s.video_id}: irregular view stack (rows per timestamp vary)")
    return int(counts[0])


def split_views(s: DescriptorSet, n_views: int | None = None) -> list[DescriptorSet]:
    """Inverse of :func:`merge_views`."""
    V = infer_view_count(s) if n_views is None else int(n_views)
    if V < 1 or s.n % V:
        raise InvariantError(f"{s.video_id}: {s.n} rows do not split into {V} views")
    ts = s.timestamps[::V]
    return [DescriptorSet(s.video_id, ts, s.matrix[v::V]) for v in range(V)]


def read_edit_labels(path) -> dict[str, EditLabels]:
    """Parse ``video_id,label1|label2`` rows (an optional header is skipped)."""
    out: dict[str, EditLabels] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0] == "video_id"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            vid, raw = row[0].strip(), row[1].strip()
            try:
                labels = EditLabels(vid, frozenset(x.strip() for x in raw.split("|")))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if vid in out:
                raise ValueError(f"{path}:{lineno}: duplicate video_id {vid!r}")
            out[vid] = labels
    return out


_LABEL_ORDER = [e.value for e in EditLabel]


def write_edit_labels(labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "labels"])
        for item in labels:
            names = sorted((x.value for x in item.labels), key=_LABEL_ORDER.index)
            w.writerow([item.video_id, "|".join(names)])


def stub_labels(video_ids) -> dict[str, EditLabels]:
    """Label every query ``other`` (five views) when no predictions are available."""
    return {v: EditLabels(v, frozenset({EditLabel.OTHER})) for v in video_ids}
