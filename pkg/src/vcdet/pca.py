"""Principal component analysis via eigendecomposition of the sample covariance."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"VPCA"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

# eigenvalues below this fraction of the largest are treated as zero
RANK_RTOL = 1e-9


class RankDeficientError(ValueError):
    def __init__(self, rank: int, k: int):
        super().__init__(
            f"sample covariance has rank {rank} < k={k}; achievable k is 1..{rank}")
        self.rank = rank
        self.k = k


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray                # (D,)
    components: np.ndarray          # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def output_dim(self) -> int:
        return self.components.shape[0]

    def transform(self, x):
        return pca_transform(self, x)

    def inverse_transform(self, y):
        y = np.asarray(y, dtype=np.float64)
        return y @ self.components + self.mean


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    # vectors: (k, D); make the largest-|.| coordinate of each row positive
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def pca_fit(samples, k: int) -> PcaModel:
    """Fit a ``k``-component PCA on an ``(m, D)`` sample matrix.

    The covariance uses the unbiased ``1/(m-1)`` normalization; each
    component's sign is fixed so its largest-magnitude coordinate is positive.

    Raises
    ------
    ValueError
        If ``m < k``, ``D < k`` or ``k < 1``.
    RankDeficientError
        If the covariance rank is below ``k``.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("samples must be a 2-D matrix")
    m, D = X.shape
    if k < 1 or D < k:
        raise ValueError(f"k={k} must satisfy 1 <= k <= D={D}")
    if m < k:
        raise ValueError(f"need at least k={k} samples, got {m}")
    mean = X.mean(axis=0)
    if m < 2:
        raise RankDeficientError(0, k)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (m - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    top = evals[0] if evals.size else 0.0
    rank = int(np.sum(evals > RANK_RTOL * max(top, np.finfo(float).tiny)))
    if top <= 0:
        rank = 0
    if rank < k:
        raise RankDeficientError(rank, k)
    comps = _canonical_signs(evecs[:, :k].T.copy())
    return PcaModel(mean=mean, components=comps,
                    explained_variance=np.maximum(evals[:k], 0.0))


def pca_transform(model: PcaModel, x) -> np.ndarray:
    """Project a vector ``(D,)`` or a row matrix ``(m, D)`` onto the components."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim or x.ndim not in (1, 2):
        raise ValueError(
            f"input dimension {x.shape[-1] if x.ndim else 0} != model dimension {model.input_dim}")
    return (x - model.mean) @ model.components.T


def save_pca(model: PcaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, model.input_dim, model.output_dim))
        fh.write(model.mean.astype("<f4").tobytes())
        fh.write(model.components.astype("<f4").tobytes(order="C"))
        fh.write(model.explained_variance.astype("<f4").tobytes())


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    _, version, D, k = _HEADER.unpack_from(data)
    if version != VERSION:
        raise ValueError(f"{path}: version {version}, expected {VERSION}")
    need = _HEADER.size + 4 * (D + k * D + k)
    if len(data) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    return PcaModel(mean=arr[:D], components=arr[D:D + k * D].reshape(k, D),
                    explained_variance=arr[D + k * D:])
