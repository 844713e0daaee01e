"""Frame descriptor sets and the VDSC binary container.

Layout (little-endian, no padding)::

    "VDSC" | version u32 | d u32 | count u32
    per video: id_len u16 | id utf-8 | n u32 | n x f32 timestamps | n*d x f32 matrix

Matrices and timestamps are held as float32 in memory so that a
write/read round trip is bit-exact.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Mapping

import numpy as np

MAGIC = b"VDSC"
VERSION = 1
MAX_DIM = 512

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<4sIII")


class VdscError(Exception):
    """Base class for VDSC decoding failures."""


class BadMagicError(VdscError):
    pass


class VersionMismatchError(VdscError):
    pass


class TruncatedPayloadError(VdscError):
    pass


class NonFiniteError(VdscError, ValueError):
    pass


class InvariantError(ValueError):
    """A descriptor set or corpus violates its structural invariants."""


class Role(str, Enum):
    QUERY = "query"
    REFERENCE = "reference"
    NOISE = "noise"


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Frame descriptors of a single video.

    ``timestamps`` has shape ``(n,)`` and ``matrix`` shape ``(n, d)``; both are
    coerced to float32. Equal consecutive timestamps are allowed (stacked
    views of the same frame).
    """

    video_id: str
    timestamps: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.float32)
        mat = np.ascontiguousarray(self.matrix, dtype=np.float32)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "matrix", mat)
        self.validate()

    def validate(self) -> None:
        ts, mat = self.timestamps, self.matrix
        if not isinstance(self.video_id, str) or not self.video_id:
            raise InvariantError("video_id must be a non-empty string")
        if len(self.video_id.encode("utf-8")) > 0xFFFF:
            raise InvariantError(f"video_id too long: {self.video_id[:32]}...")
        if ts.ndim != 1 or mat.ndim != 2:
            raise InvariantError(f"{self.video_id}: timestamps must be 1-D and matrix 2-D")
        n, d = mat.shape
        if n < 1:
            raise InvariantError(f"{self.video_id}: at least one frame required")
        if not 1 <= d <= MAX_DIM:
            raise InvariantError(f"{self.video_id}: dimension {d} outside [1, {MAX_DIM}]")
        if ts.shape[0] != n:
            raise InvariantError(
                f"{self.video_id}: {ts.shape[0]} timestamps for {n} descriptor rows")
        if not np.all(np.isfinite(ts)):
            raise NonFiniteError(f"{self.video_id}: non-finite timestamp")
        if not np.all(np.isfinite(mat)):
            bad = int(np.argwhere(~np.isfinite(mat))[0, 0])
            raise NonFiniteError(f"{self.video_id}: non-finite descriptor at frame {bad}")
        if n > 1 and np.any(np.diff(ts) < 0):
            bad = int(np.argmax(np.diff(ts) < 0)) + 1
            raise InvariantError(f"{self.video_id}: timestamps decrease at frame {bad}")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def replace(self, timestamps=None, matrix=None) -> "DescriptorSet":
        return DescriptorSet(
            self.video_id,
            self.timestamps if timestamps is None else timestamps,
            self.matrix if matrix is None else matrix,
        )

    def __eq__(self, other):
        if not isinstance(other, DescriptorSet):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and np.array_equal(self.timestamps.view(np.uint32), other.timestamps.view(np.uint32))
            and self.matrix.shape == other.matrix.shape
            and np.array_equal(self.matrix.view(np.uint32), other.matrix.view(np.uint32))
        )

    def __repr__(self):
        return f"DescriptorSet({self.video_id!r}, n={self.n}, d={self.dim})"


@dataclass(frozen=True, eq=False)
class Corpus:
    """A role-tagged, insertion-ordered collection of descriptor sets."""

    role: Role
    sets: Mapping[str, DescriptorSet] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "sets", dict(self.sets))
        self.validate()

    @classmethod
    def from_sets(cls, role, sets: Iterable[DescriptorSet]) -> "Corpus":
        out: dict[str, DescriptorSet] = {}
        for s in sets:
            if s.video_id in out:
                raise InvariantError(f"duplicate video_id {s.video_id!r}")
            out[s.video_id] = s
        return cls(role, out)

    def validate(self) -> None:
        dims = set()
        for key, s in self.sets.items():
            if not isinstance(s, DescriptorSet):
                raise InvariantError(f"{key!r} is not a DescriptorSet")
            if key != s.video_id:
                raise InvariantError(f"corpus key {key!r} does not match video_id {s.video_id!r}")
            dims.add(s.dim)
        if len(dims) > 1:
            raise InvariantError(f"mixed descriptor dimensions in corpus: {sorted(dims)}")

    @property
    def dim(self) -> int:
        for s in self.sets.values():
            return s.dim
        return 0

    @property
    def ids(self) -> list[str]:
        return list(self.sets)

    def __len__(self):
        return len(self.sets)

    def __iter__(self) -> Iterator[DescriptorSet]:
        return iter(self.sets.values())

    def __getitem__(self, video_id: str) -> DescriptorSet:
        return self.sets[video_id]

    def __contains__(self, video_id) -> bool:
        return video_id in self.sets

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (self.role == other.role and list(self.sets) == list(other.sets)
                and all(self.sets[k] == other.sets[k] for k in self.sets))

    def map(self, fn, role=None) -> "Corpus":
        return Corpus.from_sets(role or self.role, (fn(s) for s in self))


def _write_set(fh: BinaryIO, s: DescriptorSet) -> None:
    vid = s.video_id.encode("utf-8")
    fh.write(_U16.pack(len(vid)))
    fh.write(vid)
    fh.write(_U32.pack(s.n))
    fh.write(s.timestamps.astype("<f4", copy=False).tobytes())
    fh.write(s.matrix.astype("<f4", copy=False).tobytes(order="C"))


def write_corpus(corpus: Corpus, path) -> None:
    """Serialize ``corpus`` to ``path``; invariants are re-checked before opening."""
    corpus.validate()
    for s in corpus:
        s.validate()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, corpus.dim, len(corpus)))
        for s in corpus:
            _write_set(fh, s)


def _read_exact(fh: BinaryIO, size: int, what: str) -> bytes:
    buf = fh.read(size)
    if len(buf) != size:
        raise TruncatedPayloadError(f"truncated payload while reading {what}")
    return buf


def iter_vdsc(path) -> Iterator[DescriptorSet]:
    """Stream descriptor sets from a VDSC file one video at a time."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise BadMagicError(f"{path}: bad magic {head[:4]!r}")
        if len(head) != _HEADER.size:
            raise TruncatedPayloadError(f"{path}: truncated header")
        _, version, d, count = _HEADER.unpack(head)
        if version != VERSION:
            raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
        for k in range(count):
            (id_len,) = _U16.unpack(_read_exact(fh, 2, f"video {k} id length"))
            vid = _read_exact(fh, id_len, f"video {k} id").decode("utf-8")
            (n,) = _U32.unpack(_read_exact(fh, 4, f"{vid} frame count"))
            ts = np.frombuffer(_read_exact(fh, 4 * n, f"{vid} timestamps"), dtype="<f4")
            mat = np.frombuffer(_read_exact(fh, 4 * n * d, f"{vid} matrix"), dtype="<f4")
            if not np.all(np.isfinite(mat)):
                raise NonFiniteError(f"{path}: NaN or infinite entry in {vid}")
            yield DescriptorSet(vid, ts.astype(np.float32), mat.reshape(n, d).astype(np.float32))
        if fh.read(1):
            raise VdscError(f"{path}: trailing bytes after {count} videos")


def read_corpus(path, role=Role.REFERENCE) -> Corpus:
    """Load and validate a whole VDSC file.

    The container carries no role, so the caller supplies it.
    """
    return Corpus.from_sets(role, iter_vdsc(path))
