import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nodulecad.detect import Candidate, Source
from nodulecad.formats import (
    CANDIDATE_HEADER,
    FormatError,
    annotations_from_csv,
    annotations_to_csv,
    candidates_from_csv,
    candidates_to_csv,
    decode_volume,
    decode_weights,
    encode_volume,
    encode_weights,
    froc_from_csv,
    froc_to_csv,
    read_text,
)
from nodulecad.metrics import FrocCurve, NoduleAnnotation
from nodulecad.volume import CtVolume, GrayVolume

HEADER_SIZE = 69  # magic, 3 u32 dims, 6 f64 geometry, u8 dtype tag


@settings(max_examples=30)
@given(
    arrays(np.int16, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))),
    st.tuples(*[st.floats(0.1, 5)] * 3),
    st.tuples(*[st.floats(-500, 500)] * 3),
)
def test_volume_round_trip(a, spacing, origin):
    v = CtVolume(a, spacing, origin)
    buf = encode_volume(v)
    assert len(buf) == HEADER_SIZE + a.size * 2
    w = decode_volume(buf)
    assert np.array_equal(w.voxels, a) and w.spacing == v.spacing and w.origin == v.origin


def test_gray_volume_round_trip_keeps_type():
    g = GrayVolume(np.arange(8, dtype=np.uint8).reshape(2, 2, 2))
    out = decode_volume(encode_volume(g))
    assert isinstance(out, GrayVolume) and np.array_equal(out.voxels, g.voxels)


def test_volume_errors_report_offsets():
    buf = encode_volume(CtVolume(np.zeros((2, 2, 2), dtype=np.int16)))
    with pytest.raises(FormatError) as e:
        decode_volume(b"XXXXXXXX" + buf[8:])
    assert e.value.offset == 0
    with pytest.raises(FormatError) as e:
        decode_volume(buf[:-3])
    assert e.value.offset == len(buf) - 3 and "byte offset" in str(e.value)
    with pytest.raises(FormatError) as e:
        decode_volume(buf[:30])
    assert e.value.offset == 30
    bad = bytearray(buf)
    bad[HEADER_SIZE - 1] = 7
    with pytest.raises(FormatError) as e:
        decode_volume(bytes(bad))
    assert e.value.offset == HEADER_SIZE - 1
    bad = bytearray(buf)
    bad[20:28] = struct.pack("<d", 0.0)
    with pytest.raises(FormatError):
        decode_volume(bytes(bad))


def test_weights_round_trip_and_errors():
    w = {"a.weight": np.arange(6, dtype=float).reshape(2, 3), "b": np.array(1.5)}
    buf = encode_weights(w)
    out = decode_weights(buf)
    assert set(out) == set(w) and all(np.array_equal(out[k], w[k]) for k in w)
    with pytest.raises(FormatError) as e:
        decode_weights(buf[:-2])
    assert e.value.offset > 8
    with pytest.raises(FormatError):
        decode_weights(buf + b"\0")
    with pytest.raises(FormatError):
        decode_weights(b"NOPE0000")


def test_candidate_csv_round_trip():
    cs = [
        Candidate("s1", (1.25, -0.0, 3.0), 2.5, 0.75, Source.FUSED),
        Candidate("s2", (0.1, 0.2, 0.3), 1.0, 0.125, Source.AXIAL_1MM, 0.5),
    ]
    text = candidates_to_csv(cs)
    lines = text.splitlines()
    assert lines[0] == ",".join(CANDIDATE_HEADER + ["fpr_score"])
    assert lines[1] == "s1,1.250000,0.000000,3.000000,2.500000,0.750000,Fused,"
    back = candidates_from_csv(text)
    assert [(c.scan_id, c.center, c.radius_mm, c.score, c.source, c.fpr_score) for c in back] == [
        ("s1", (1.25, 0.0, 3.0), 2.5, 0.75, Source.FUSED, None),
        ("s2", (0.1, 0.2, 0.3), 1.0, 0.125, Source.AXIAL_1MM, 0.5),
    ]
    assert candidates_to_csv(back) == text
    assert candidates_from_csv(candidates_to_csv([])) == []


def test_candidate_csv_errors_point_at_the_row():
    head = ",".join(CANDIDATE_HEADER) + "\n"
    good = "s,1,2,3,4,0.5,Fused\n"
    with pytest.raises(FormatError) as e:
        candidates_from_csv(head + good + "s,1,x,3,4,0.5,Fused\n")
    assert e.value.offset == len(head) + len(good)
    with pytest.raises(FormatError) as e:
        candidates_from_csv(head + "s,1,2,3,4,0.5,Nowhere\n")
    assert e.value.offset == len(head)
    with pytest.raises(FormatError):
        candidates_from_csv(head + "s,1,2,3,-4,0.5,Fused\n")
    with pytest.raises(FormatError):
        candidates_from_csv(head + "s,1,2\n")
    with pytest.raises(FormatError) as e:
        candidates_from_csv("a,b\n")
    assert e.value.offset == 0
    with pytest.raises(FormatError):
        candidates_from_csv("")


def test_annotation_and_froc_round_trip():
    anns = [NoduleAnnotation("s", (1, 2, 3), 6.5, (5, 5, 4), 3), NoduleAnnotation("t", (0, 0, 0), 4.0)]
    back = annotations_from_csv(annotations_to_csv(anns))
    assert back == anns
    with pytest.raises(FormatError):
        annotations_from_csv(annotations_to_csv(anns).replace("5;5;4", "5;9;4"))
    curve = FrocCurve((0.0, 0.5), (0.25, 0.75))
    assert froc_from_csv(froc_to_csv(curve)) == [(0.0, 0.25), (0.5, 0.75)]


def test_read_text_rejects_non_utf8(tmp_path):
    p = tmp_path / "x.csv"
    p.write_bytes(b"ab\xffcd")
    with pytest.raises(FormatError) as e:
        read_text(p)
    assert e.value.offset == 2
