import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avtx.errors import ParameterError, ParseError
from avtx.quant import (
    QMatrix,
    QuantParams,
    dequantize,
    dequantize_array,
    effective_qindex,
    max_qindex,
    qm_deserialize,
    qm_serialize,
    qstep_from_index,
    quantize_array,
    scalar_quantize,
)

# Oracle values computed with mpmath at 50 digits: round(2 ** ((q + 127) / 24)).
FROZEN_BASE = {1: 40, 2: 41, 3: 43, 6: 47, 12: 55, 18: 66, 23: 76, 24: 78}


@pytest.mark.parametrize("q,want", sorted(FROZEN_BASE.items()))
def test_closed_form_anchors(q, want):
    assert qstep_from_index(q) == want


def test_qstep_zero_and_recursion():
    assert qstep_from_index(0) == 32
    assert qstep_from_index(25) == 2 * qstep_from_index(1) == 80
    assert qstep_from_index(49) == 4 * qstep_from_index(1)
    assert qstep_from_index(255) == 60 << 10


@pytest.mark.parametrize("bd", [8, 10, 12])
def test_qstep_monotone_and_doubling(bd):
    v = [qstep_from_index(q, bd) for q in range(max_qindex(bd) + 1)]
    assert all(b > a for a, b in zip(v, v[1:]))
    assert all(v[q + 24] == 2 * v[q] for q in range(25, len(v) - 24))


@pytest.mark.parametrize("bd,off,mult", [(10, 48, 4), (12, 96, 16)])
def test_high_bit_depth_fold(bd, off, mult):
    for q in range(256, max_qindex(bd) + 1):
        assert qstep_from_index(q, bd) == mult * qstep_from_index(q - off, 8)
    assert qstep_from_index(200, bd) == qstep_from_index(200, 8)


def test_qstep_range_errors():
    with pytest.raises(ParameterError):
        qstep_from_index(256, 8)
    with pytest.raises(ParameterError):
        qstep_from_index(-1)
    with pytest.raises(ParameterError):
        qstep_from_index(10, 9)


def test_effective_qindex():
    assert effective_qindex(QuantParams(200, y_dc_delta=23), 0, True) == 223
    assert effective_qindex(QuantParams(250, y_dc_delta=23), 0, True) == 255
    assert effective_qindex(QuantParams(100, y_dc_delta=23), 0, False) == 100
    assert effective_qindex(QuantParams(3, uv_dc_delta=-8), 1, True) == 0
    assert effective_qindex(QuantParams(300, y_dc_delta=5, bit_depth=10), 0, True) == 303
    with pytest.raises(ParameterError):
        QuantParams(10, y_dc_delta=24)


def test_dequant_examples():
    assert dequantize(3, 256) == 24
    assert dequantize(-3, 256) == -24
    assert dequantize(0, 999) == 0
    assert dequantize(10**6, 61440, bit_depth=8) == 2**15 - 1


def test_exact_multiples_quantize_to_n():
    qstep = 256
    for n in range(-100, 101):
        assert scalar_quantize(n * qstep // 32, qstep) == n


def test_unit_step_is_identity():
    for c in range(-5000, 5001, 7):
        lv = scalar_quantize(c, 32)
        assert lv == c and dequantize(lv, 32) == c


@settings(max_examples=300, deadline=None)
@given(c=st.integers(-(2**17), 2**17), q=st.integers(0, 255), w=st.sampled_from([16, 32, 48, 64]), r=st.sampled_from([3, 4]))
def test_reconstruction_within_one_step(c, q, w, r):
    qs = qstep_from_index(q)
    rec = dequantize(scalar_quantize(c, qs, r, w), qs, w)
    assert abs(rec - c) <= qs * w / 1024 + 1


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    c = rng.integers(-40000, 40000, 500)
    q = rng.integers(32, 5000, 500)
    w = rng.integers(8, 100, 500)
    lv = quantize_array(c, q, 3, w)
    assert lv.tolist() == [scalar_quantize(int(a), int(b), 3, int(x)) for a, b, x in zip(c, q, w)]
    assert dequantize_array(lv, q, w).tolist() == [dequantize(int(a), int(b), int(x)) for a, b, x in zip(lv, q, w)]


def test_qm_flat_collapses():
    blob = qm_serialize(QMatrix.flat(8, 8, 16))
    assert blob == bytes([8, 8, 1, 16, 0])
    assert qm_deserialize(blob) == QMatrix.flat(8, 8, 16)


def test_qm_symmetric_upper_triangle_bound():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a = rng.integers(1, 256, (8, 8))
        a = np.triu(a) + np.triu(a, 1).T
        m = QMatrix(a.tolist(), symmetric=True)
        blob = qm_serialize(m)
        assert len(blob) - 4 <= 36
        assert qm_deserialize(blob) == m


@settings(max_examples=200, deadline=None)
@given(shape=st.sampled_from([(4, 4), (4, 8), (8, 4), (8, 8)]), data=st.data())
def test_qm_round_trip(shape, data):
    vals = data.draw(st.lists(st.integers(1, 255), min_size=shape[0] * shape[1], max_size=shape[0] * shape[1]))
    grid = [vals[r * shape[1] : (r + 1) * shape[1]] for r in range(shape[0])]
    m = QMatrix(grid)
    assert qm_deserialize(qm_serialize(m)) == m


@pytest.mark.parametrize(
    "blob,offset",
    [(b"\x08", 1), (b"\x05\x05\x00\x10\x00", 0), (b"\x04\x04\x00\x10", 4), (b"\x04\x04\x00\x00", 3), (b"\x04\x04\x00\x10\x00\x01", 5)],
)
def test_qm_parse_errors(blob, offset):
    with pytest.raises(ParseError) as exc:
        qm_deserialize(blob)
    assert exc.value.offset == offset
