import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avtx.errors import ParameterError
from avtx.lossless import (
    LosslessKind,
    LosslessTx,
    RbrMode,
    code_lossless_tx,
    lossless_forward,
    lossless_inverse,
    lossless_tx_select,
    parse_lossless_tx,
    rbr_forward,
    rbr_inverse,
    rbr_mode_for,
)
from avtx.partition import IntraMode
from avtx.syntax import Reader, Writer

SIZES = [4, 8, 16, 32]


def w_matrix(n):
    # Printed 4x4 form generalized: ones on the diagonal, -1 below it.
    return np.eye(n, dtype=np.int64) - np.eye(n, k=-1, dtype=np.int64)


def test_vertical_column_example():
    col = np.ones((4, 1), dtype=int)
    assert rbr_forward(col, RbrMode.VERTICAL).ravel().tolist() == [1, 0, 0, 0]


def test_none_is_identity():
    x = np.arange(16).reshape(4, 4)
    assert np.array_equal(rbr_forward(x, RbrMode.NONE), x)
    assert np.array_equal(rbr_inverse(x, RbrMode.NONE), x)


@pytest.mark.parametrize("h", SIZES)
@pytest.mark.parametrize("w", SIZES)
def test_rbr_matches_matrix_form_and_inverts(h, w):
    rng = np.random.default_rng(h * 64 + w)
    for _ in range(20):
        r = rng.integers(-(2**15), 2**15, (h, w))
        v = rbr_forward(r, RbrMode.VERTICAL)
        hz = rbr_forward(r, RbrMode.HORIZONTAL)
        assert np.array_equal(v, w_matrix(h) @ r)
        assert np.array_equal(hz, r @ w_matrix(w).T)
        lower = np.tril(np.ones((h, h), dtype=np.int64))
        assert np.array_equal(rbr_inverse(v, RbrMode.VERTICAL), lower @ v)
        assert np.array_equal(rbr_inverse(v, RbrMode.VERTICAL), r)
        assert np.array_equal(rbr_inverse(hz, RbrMode.HORIZONTAL), r)


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, (8, 8), elements=st.integers(-(2**15), 2**15 - 1)), st.sampled_from(list(RbrMode)))
def test_rbr_round_trip_property(r, mode):
    assert np.array_equal(rbr_inverse(rbr_forward(r, mode), mode), r)


def test_rbr_sparsifies_gradients():
    g = np.add.outer(np.arange(8) * 3, np.arange(8))
    assert np.abs(rbr_forward(g, RbrMode.VERTICAL)).sum() < np.abs(g).sum()
    assert np.abs(rbr_forward(g, RbrMode.HORIZONTAL)).sum() < np.abs(g).sum()


def test_rbr_mode_rules():
    assert rbr_mode_for(False, IntraMode.V_PRED) == RbrMode.VERTICAL
    assert rbr_mode_for(False, IntraMode.H_PRED) == RbrMode.HORIZONTAL
    assert rbr_mode_for(False, IntraMode.DC_PRED) == RbrMode.NONE
    assert rbr_mode_for(True, IntraMode.V_PRED) == RbrMode.NONE


def test_transforms_exact():
    rng = np.random.default_rng(2)
    for _ in range(200):
        b = rng.integers(-(2**15), 2**15, (4, 4))
        for k in LosslessKind:
            assert np.array_equal(lossless_inverse(lossless_forward(b, k), k), b)


def _coded(tx, inter, fsc, w, h):
    wr = Writer(trace=True)
    code_lossless_tx(wr, tx, inter, fsc, w, h)
    back = parse_lossless_tx(Reader(wr.finish()), inter, fsc, w, h)
    return wr.trace, back


def test_intra_fsc_size_choice():
    for tx in (LosslessTx(LosslessKind.IDTX, 4, 4), LosslessTx(LosslessKind.IDTX, 32, 32)):
        trace, back = _coded(tx, False, True, 64, 64)
        assert back == tx and [r.name for r in trace] == ["lossless_tx"]
    assert lossless_tx_select(0, False, True, 64, 32) == LosslessTx(LosslessKind.IDTX, 32, 32)


def test_intra_without_fsc_is_free_wht():
    tx = lossless_tx_select(0, False, False, 16, 16)
    assert tx == LosslessTx(LosslessKind.WHT, 4, 4)
    trace, back = _coded(tx, False, False, 16, 16)
    assert trace == [] and back == tx


def test_inter_signaling():
    big = LosslessTx(LosslessKind.IDTX, 16, 16)
    trace, back = _coded(big, True, False, 16, 16)
    assert back == big and [(r.ctx, r.symbol) for r in trace] == [(0, 1)]
    for k in LosslessKind:
        tx = LosslessTx(k, 4, 4)
        trace, back = _coded(tx, True, False, 16, 16)
        assert back == tx and [(r.ctx, r.symbol) for r in trace] == [(0, 0), (1, int(k))]
    trace, back = _coded(LosslessTx(LosslessKind.IDTX, 4, 4), True, False, 4, 4)
    assert [r.ctx for r in trace] == [1]


def test_chroma_follows_luma():
    assert lossless_tx_select(1, True, False, 8, 8, luma_kind=LosslessKind.IDTX) == LosslessTx(LosslessKind.IDTX, 4, 4)


def test_invalid_choices():
    with pytest.raises(ParameterError):
        code_lossless_tx(Writer(), LosslessTx(LosslessKind.WHT, 16, 16), True, False, 16, 16)
    with pytest.raises(ParameterError):
        code_lossless_tx(Writer(), LosslessTx(LosslessKind.IDTX, 4, 4), False, False, 16, 16)


def test_inter_selection_prefers_identity_for_sparse_residual():
    r = np.zeros((16, 16), dtype=int)
    r[3, 5] = 40
    assert lossless_tx_select(0, True, False, 16, 16, r).kind == LosslessKind.IDTX
    smooth = np.full((16, 16), 30)
    assert lossless_tx_select(0, True, False, 16, 16, smooth).kind == LosslessKind.WHT
