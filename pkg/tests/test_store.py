import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vcdet.store import (BadMagicError, Corpus, DescriptorSet, InvariantError, NonFiniteError,
                         Role, TruncatedPayloadError, VdscError, VersionMismatchError,
                         iter_vdsc, read_corpus, write_corpus)

from conftest import random_corpus


def test_zero_vector_payload(tmp_path):
    c = Corpus.from_sets(Role.REFERENCE, [DescriptorSet("a", [0.0], np.zeros((1, 4)))])
    p = tmp_path / "z.vdsc"
    write_corpus(c, p)
    raw = p.read_bytes()
    # header 16 + id len 2 + id 1 + n 4 + ts 4, then the matrix
    assert len(raw) == 16 + 2 + 1 + 4 + 4 + 16
    assert raw[-16:] == b"\x00" * 16
    assert raw[:4] == b"VDSC"
    assert struct.unpack("<III", raw[4:16]) == (1, 4, 1)


def test_round_trip_random(tmp_path, rng):
    c = random_corpus(rng, Role.QUERY, 7, 33, unit=False)
    p = tmp_path / "c.vdsc"
    write_corpus(c, p)
    back = read_corpus(p, Role.QUERY)
    assert back == c
    for s in c:
        assert back[s.video_id].matrix.tobytes() == s.matrix.tobytes()
        assert back[s.video_id].timestamps.tobytes() == s.timestamps.tobytes()


ids = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=12)


@st.composite
def corpora(draw):
    d = draw(st.integers(1, 16))
    names = draw(st.lists(ids, min_size=0, max_size=4, unique=True))
    sets = []
    for name in names:
        n = draw(st.integers(1, 5))
        mat = draw(arrays(np.float32, (n, d), elements=st.floats(-1e6, 1e6, width=32)))
        ts = np.sort(draw(arrays(np.float32, n, elements=st.floats(0, 1e5, width=32))))
        sets.append(DescriptorSet(name, ts, mat))
    return Corpus.from_sets(Role.NOISE, sets)


@settings(max_examples=60, deadline=None)
@given(corpora())
def test_round_trip_property(tmp_path_factory, c):
    p = tmp_path_factory.mktemp("rt") / "c.vdsc"
    write_corpus(c, p)
    assert read_corpus(p, Role.NOISE) == c


def test_mixed_dims_rejected(tmp_path):
    a = DescriptorSet("a", [0.0], np.ones((1, 128)))
    b = DescriptorSet("b", [0.0], np.ones((1, 256)))
    with pytest.raises(InvariantError):
        Corpus.from_sets(Role.REFERENCE, [a, b])


def test_duplicate_ids_rejected():
    a = DescriptorSet("a", [0.0], np.ones((1, 3)))
    with pytest.raises(InvariantError):
        Corpus.from_sets(Role.REFERENCE, [a, a])


@pytest.mark.parametrize("kwargs", [
    dict(timestamps=[1.0, 0.0], matrix=np.ones((2, 2))),
    dict(timestamps=[0.0], matrix=np.ones((1, 513))),
    dict(timestamps=[0.0, 1.0], matrix=np.ones((1, 2))),
    dict(timestamps=[], matrix=np.ones((0, 2))),
])
def test_set_invariants(kwargs):
    with pytest.raises(InvariantError):
        DescriptorSet("v", **kwargs)


def test_equal_timestamps_allowed():
    s = DescriptorSet("v", [0.0, 0.0, 1.0], np.ones((3, 2)))
    assert s.n == 3


def test_nan_rejected_in_memory():
    m = np.ones((2, 2))
    m[1, 0] = np.nan
    with pytest.raises(NonFiniteError, match="frame 1"):
        DescriptorSet("v", [0.0, 1.0], m)


def _valid_file(tmp_path):
    c = Corpus.from_sets(Role.REFERENCE, [DescriptorSet("abc", [0.0, 1.0], np.ones((2, 3)))])
    p = tmp_path / "v.vdsc"
    write_corpus(c, p)
    return p, bytearray(p.read_bytes())


def test_bad_magic(tmp_path):
    p, raw = _valid_file(tmp_path)
    raw[:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_corpus(p)


def test_version_mismatch(tmp_path):
    p, raw = _valid_file(tmp_path)
    raw[4:8] = struct.pack("<I", 2)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        read_corpus(p)


def test_truncated_mid_matrix(tmp_path):
    p, raw = _valid_file(tmp_path)
    p.write_bytes(bytes(raw[:-5]))
    with pytest.raises(TruncatedPayloadError):
        read_corpus(p)


def test_nan_on_disk(tmp_path):
    p, raw = _valid_file(tmp_path)
    raw[-4:] = struct.pack("<f", float("nan"))
    p.write_bytes(bytes(raw))
    with pytest.raises(NonFiniteError):
        read_corpus(p)


def test_trailing_bytes(tmp_path):
    p, raw = _valid_file(tmp_path)
    p.write_bytes(bytes(raw) + b"\x00")
    with pytest.raises(VdscError):
        read_corpus(p)


def test_errors_are_distinct():
    kinds = {BadMagicError, VersionMismatchError, TruncatedPayloadError, NonFiniteError}
    assert len(kinds) == 4
    assert all(issubclass(k, VdscError) for k in kinds)


def test_streaming_reads_lazily(tmp_path, rng):
    c = random_corpus(rng, Role.REFERENCE, 3, 4)
    p = tmp_path / "s.vdsc"
    write_corpus(c, p)
    it = iter_vdsc(p)
    assert next(it) == c[c.ids[0]]


def test_invalid_corpus_not_written(tmp_path):
    c = Corpus.from_sets(Role.REFERENCE, [DescriptorSet("a", [0.0], np.ones((1, 2)))])
    # bypass the frozen dataclass to break an invariant after construction
    object.__setattr__(c["a"], "matrix", np.full((1, 2), np.inf, dtype=np.float32))
    p = tmp_path / "bad.vdsc"
    with pytest.raises(NonFiniteError):
        write_corpus(c, p)
    assert not p.exists()


def test_empty_corpus(tmp_path):
    c = Corpus.from_sets(Role.NOISE, [])
    p = tmp_path / "e.vdsc"
    write_corpus(c, p)
    assert len(read_corpus(p)) == 0
