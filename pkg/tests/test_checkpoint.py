import json
import struct

import numpy as np
import pytest

from macbig import checkpoint as C
from macbig.textprep import build_vocab


@pytest.fixture
def blob(tiny):
    hp, params, _ = tiny
    vocab = build_vocab([["w%d" % i for i in range(18)]], max_size=20)
    return C.to_bytes(params, hp, vocab), params, hp, vocab


def _manifest(b):
    (n,) = struct.unpack_from("<I", b, 8)
    return json.loads(b[12 : 12 + n]), 12 + n


def _rebuild(manifest, data):
    text = json.dumps(manifest, indent=1, sort_keys=True).encode()
    return C.MAGIC + struct.pack("<I", len(text)) + text + data


def test_roundtrip_bit_identical(blob, tmp_path):
    b, params, hp, vocab = blob
    p2, hp2, words = C.from_bytes(b)
    assert hp2 == hp and words == vocab.words
    for k, w in params.named().items():
        np.testing.assert_array_equal(p2.named()[k], w)
    C.save(tmp_path / "a.ckpt", p2, hp2, words)
    assert (tmp_path / "a.ckpt").read_bytes() == b


def test_bad_magic(blob):
    b = blob[0]
    with pytest.raises(C.CheckpointError, match="bad magic") as e:
        C.from_bytes(b"XACBIG01" + b[8:])
    assert e.value.code == C.CheckpointError.BAD_MAGIC
    with pytest.raises(C.CheckpointError) as e:
        C.from_bytes(b"")
    assert e.value.code == "bad_magic"


@pytest.mark.parametrize("cut", [10, 200, -1])
def test_truncated(blob, cut):
    b = blob[0]
    with pytest.raises(C.CheckpointError, match="truncated") as e:
        C.from_bytes(b[:cut])
    assert e.value.code == C.CheckpointError.TRUNCATED


def test_offset_past_end(blob):
    b = blob[0]
    m, start = _manifest(b)
    m["layers"][-1]["offset"] += 10_000
    with pytest.raises(C.CheckpointError, match="truncated checkpoint") as e:
        C.from_bytes(_rebuild(m, b[start:]))
    assert e.value.code == "truncated"


def test_inconsistent(blob):
    b = blob[0]
    m, start = _manifest(b)
    m["layers"][0]["shape"] = [3, 3]
    with pytest.raises(C.CheckpointError) as e:
        C.from_bytes(_rebuild(m, b[start:]))
    assert e.value.code == C.CheckpointError.INCONSISTENT
    with pytest.raises(C.CheckpointError) as e:
        C.from_bytes(b + b"\0\0\0\0")
    assert e.value.code == "inconsistent"
    m, _ = _manifest(b)
    m["hyperparams"]["gru_hidden"] = 7
    with pytest.raises(C.CheckpointError) as e:
        C.from_bytes(_rebuild(m, b[start:]))
    assert e.value.code == "inconsistent"
