"""Descriptor post-processing: normalization, consistency weighting,
temporal concatenation and per-query score normalization."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pca import PcaModel, pca_fit, pca_transform
from .store import Corpus, DescriptorSet

log = logging.getLogger(__name__)

EPSILON_FLOOR = 0.05


class ZeroRowError(ValueError):
    def __init__(self, video_id: str, frame: int):
        super().__init__(f"{video_id}: descriptor at frame {frame} has zero norm")
        self.video_id = video_id
        self.frame = frame


def l2_normalize(s: DescriptorSet) -> DescriptorSet:
    x = s.matrix.astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroRowError(s.video_id, int(zero[0]))
    return s.replace(matrix=x / norms[:, None])


@dataclass(frozen=True)
class ConsistencyStats:
    gram_mean: float   # mean of all entries of X X^T, diagonal included
    divisor: float     # value actually divided by (gram_mean or the floor)
    clamped: bool


def gram_mean(matrix) -> float:
    """Mean of all entries of ``X @ X.T``, computed as ``||mean row||^2``."""
    x = np.asarray(matrix, dtype=np.float64)
    mu = x.mean(axis=0)
    return float(mu @ mu)


def consistency_weight(s: DescriptorSet, floor: float = EPSILON_FLOOR):
    """Divide every descriptor of a video by its mean frame-Gram entry.

    Videos whose frames agree with each other (one continuous scene) have a
    mean close to 1 and are left nearly unchanged; videos with an inserted
    clip have a smaller mean and are scaled up. A mean at or below ``floor``
    is clamped to ``floor`` and flagged in the returned stats.
    """
    g = gram_mean(s.matrix)
    clamped = g <= floor
    divisor = floor if clamped else g
    if clamped:
        log.warning("%s: gram mean %.4g clamped to %.4g", s.video_id, g, floor)
    out = s.replace(matrix=s.matrix.astype(np.float64) / divisor)
    return out, ConsistencyStats(gram_mean=g, divisor=divisor, clamped=bool(clamped))


@dataclass(frozen=True)
class TemporalConcatConfig:
    window: int = 3
    weights: tuple = (0.5, 1.0, 0.5)
    output_dim: int | None = None   # None keeps the input descriptor dimension

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        w = self.weights
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if len(w) != self.window:
            raise ValueError(f"{len(w)} weights for window {self.window}")
        if any(x <= 0 for x in w):
            raise ValueError("weights must be positive")
        if any(abs(a - b) > 1e-12 for a, b in zip(w, reversed(w))):
            raise ValueError("weights must be symmetric about the center")
        if w[self.window // 2] != max(w):
            raise ValueError("center weight must be the largest")
        if self.output_dim is not None and not 1 <= self.output_dim <= 512:
            raise ValueError(f"output_dim {self.output_dim} outside [1, 512]")

    def out_dim(self, d: int) -> int:
        return self.output_dim or d


def concat_windows(matrix, cfg: TemporalConcatConfig) -> np.ndarray:
    """Weighted, edge-replicated sliding-window concatenation: (n, d) -> (n, window*d)."""
    x = np.asarray(matrix, dtype=np.float64)
    n = x.shape[0]
    h = cfg.window // 2
    idx = np.clip(np.arange(n)[:, None] + np.arange(-h, h + 1)[None, :], 0, n - 1)
    w = np.asarray(cfg.weights)
    return (x[idx] * w[None, :, None]).reshape(n, -1)


def fit_temporal_pca(corpus: Corpus, cfg: TemporalConcatConfig) -> PcaModel:
    """Fit the reduction on the concatenated windows of every video in ``corpus``."""
    windows = np.concatenate([concat_windows(s.matrix, cfg) for s in corpus])
    return pca_fit(windows, cfg.out_dim(corpus.dim))


def temporal_concat(s: DescriptorSet, cfg: TemporalConcatConfig, pca: PcaModel) -> DescriptorSet:
    D = cfg.window * s.dim
    if pca.input_dim != D:
        raise ValueError(
            f"{s.video_id}: PCA expects {pca.input_dim}-d windows, got window {cfg.window} x d {s.dim}")
    if cfg.output_dim is not None and pca.output_dim != cfg.output_dim:
        raise ValueError(f"PCA output {pca.output_dim} != configured {cfg.output_dim}")
    y = pca_transform(pca, concat_windows(s.matrix, cfg))
    norms = np.linalg.norm(y, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroRowError(s.video_id, int(zero[0]))
    return s.replace(matrix=y / norms[:, None])


@dataclass(frozen=True)
class ScoreNormConfig:
    rank_k: int = 10
    beta: float = 1.0

    def __post_init__(self):
        if self.rank_k < 1:
            raise ValueError("rank_k must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


@dataclass
class NoisePool:
    """Noise frames stacked once for repeated baseline lookups."""

    matrix: np.ndarray
    block: int = field(default=8192)

    @classmethod
    def from_corpus(cls, noise: Corpus) -> "NoisePool":
        if len(noise) == 0:
            raise ValueError("noise corpus is empty")
        return cls(np.concatenate([s.matrix for s in noise]).astype(np.float32))

    def __len__(self):
        return self.matrix.shape[0]

    def baseline(self, query: DescriptorSet, rank_k: int) -> float:
        """``rank_k``-th largest inner product between any query frame and any noise frame."""
        if rank_k > len(self):
            raise ValueError(f"rank_k={rank_k} exceeds noise pool of {len(self)} frames")
        q = query.matrix.astype(np.float32)
        keep = np.empty(0, dtype=np.float32)
        for a in range(0, len(self), self.block):
            sims = (q @ self.matrix[a:a + self.block].T).ravel()
            pool = np.concatenate([keep, sims])
            if pool.size > rank_k:
                pool = np.partition(pool, pool.size - rank_k)[pool.size - rank_k:]
            keep = pool
        if keep.size < rank_k:
            raise ValueError(f"only {keep.size} query-noise pairs for rank_k={rank_k}")
        return float(np.sort(keep)[-rank_k])


def score_normalize(scores: Sequence, query_set: DescriptorSet, noise, cfg: ScoreNormConfig):
    """Shift one query's candidate scores down by ``beta`` times its noise baseline.

    ``scores`` is a sequence of :class:`~vcdet.retrieval.CandidatePair` (or of
    floats); the same type comes back. ``noise`` is a :class:`Corpus` or a
    prepared :class:`NoisePool`.
    """
    pool = noise if isinstance(noise, NoisePool) else NoisePool.from_corpus(noise)
    if cfg.beta == 0:
        return list(scores)
    shift = cfg.beta * pool.baseline(query_set, cfg.rank_k)
    out = []
    for c in scores:
        if hasattr(c, "score"):
            out.append(type(c)(c.query_id, c.ref_id, float(c.score) - shift))
        else:
            out.append(float(c) - shift)
    return out
