"""Transform partitioning, transform sets and transform-type syntax."""

from __future__ import annotations

import enum
import json
from functools import lru_cache
from pathlib import Path

from .errors import ConformanceError, ParameterError
from .transforms import TxType

CB_SIZES = (4, 8, 16, 32, 64)
MAX_ASPECT = 16


class PartitionType(enum.IntEnum):
    NONE = 0
    SPLIT = 1
    HORZ = 2
    VERT = 3
    HORZ4 = 4
    VERT4 = 5
    HORZ5 = 6
    VERT5 = 7


P = PartitionType
_HORZ_AXIS = (P.HORZ, P.HORZ4, P.HORZ5)
_VERT_AXIS = (P.VERT, P.VERT4, P.VERT5)


def _layout(ptype, w, h):
    # (x, y, w, h) rectangles in coding order.
    if ptype == P.NONE:
        return [(0, 0, w, h)]
    if ptype == P.SPLIT:
        return [(x, y, w // 2, h // 2) for y in (0, h // 2) for x in (0, w // 2)]
    if ptype == P.HORZ:
        return [(0, y, w, h // 2) for y in (0, h // 2)]
    if ptype == P.VERT:
        return [(x, 0, w // 2, h) for x in (0, w // 2)]
    if ptype == P.HORZ4:
        return [(0, i * h // 4, w, h // 4) for i in range(4)]
    if ptype == P.VERT4:
        return [(i * w // 4, 0, w // 4, h) for i in range(4)]
    if ptype == P.HORZ5:
        q, hw = h // 4, w // 2
        return [(0, 0, hw, q), (hw, 0, hw, q), (0, q, w, h // 2), (0, 3 * q, hw, q), (hw, 3 * q, hw, q)]
    # VERT5
    q, hh = w // 4, h // 2
    return [(0, 0, q, hh), (0, hh, q, hh), (q, 0, w // 2, h), (3 * q, 0, q, hh), (3 * q, hh, q, hh)]


def _legal_tb(w, h):
    return w >= 4 and h >= 4 and max(w, h) <= MAX_ASPECT * min(w, h)


def check_cb_size(w, h):
    if w not in CB_SIZES or h not in CB_SIZES or max(w, h) > MAX_ASPECT * min(w, h):
        raise ParameterError(f"unsupported CB size {w}x{h}")


@lru_cache(maxsize=None)
def allowed_partitions(w, h):
    check_cb_size(w, h)
    return frozenset(p for p in P if all(_legal_tb(r[2], r[3]) for r in _layout(p, w, h)))


def partition_layout(ptype, w, h):
    """TB rectangles ``(x, y, w, h)`` for a partition of a ``w x h`` CB."""
    ptype = P(ptype)
    if ptype not in allowed_partitions(w, h):
        raise ParameterError(f"{ptype.name} not allowed for {w}x{h}")
    return _layout(ptype, w, h)


def _size_ctx(w, h):
    return (w.bit_length() - 3) * 5 + (h.bit_length() - 3)


def _axes(w, h):
    allowed = allowed_partitions(w, h)
    return P.HORZ in allowed, P.VERT in allowed


def code_partition(wr, w, h, ptype):
    ptype = P(ptype)
    allowed = allowed_partitions(w, h)
    if ptype not in allowed:
        raise ParameterError(f"{ptype.name} not allowed for {w}x{h}")
    hz, vt = _axes(w, h)
    if not (hz or vt):
        return
    ctx = _size_ctx(w, h)
    wr.sym("do_partition", ctx, int(ptype != P.NONE))
    if ptype == P.NONE:
        return
    if hz and vt:
        wr.sym("partition7", ctx, ptype - 1)
    else:
        axis = _HORZ_AXIS if hz else _VERT_AXIS
        wr.sym("partition3", 2 * ctx + (not hz), axis.index(ptype))


def parse_partition(rd, w, h):
    allowed = allowed_partitions(w, h)
    hz, vt = _axes(w, h)
    if not (hz or vt):
        return P.NONE
    ctx = _size_ctx(w, h)
    if not rd.sym("do_partition", ctx):
        return P.NONE
    if hz and vt:
        ptype = P(rd.sym("partition7", ctx) + 1)
    else:
        axis = _HORZ_AXIS if hz else _VERT_AXIS
        ptype = axis[rd.sym("partition3", 2 * ctx + (not hz))]
    if ptype not in allowed:
        raise ConformanceError(f"partition {ptype.name} not allowed for {w}x{h}")
    return ptype


# --- intra modes and MDTX ------------------------------------------------

MDTX_PATH = Path(__file__).with_name("data") / "mdtx_v1.json"


class IntraMode(enum.IntEnum):
    DC_PRED = 0
    V_PRED = 1
    H_PRED = 2
    D45_PRED = 3
    D135_PRED = 4
    D113_PRED = 5
    D157_PRED = 6
    D203_PRED = 7
    D67_PRED = 8
    SMOOTH_PRED = 9
    SMOOTH_V_PRED = 10
    SMOOTH_H_PRED = 11
    PAETH_PRED = 12


NUM_INTRA_MODES = len(IntraMode)


@lru_cache(maxsize=None)
def mdtx_table():
    doc = json.loads(MDTX_PATH.read_text())
    if doc["modes"] != [m.name for m in IntraMode]:
        raise ParameterError("MDTX table mode order does not match IntraMode")
    return tuple(tuple(TxType(t) for t in row) for row in doc["table"])


def size_group(w, h):
    """0/1/2 for min side 4/8/16 with max side < 32; None for the DCT-only sizes."""
    if max(w, h) >= 32:
        return None
    return {4: 0, 8: 1, 16: 2}[min(w, h)]


def mdtx_class(mode, w, h):
    g = size_group(w, h)
    return None if g is None else g * NUM_INTRA_MODES + int(IntraMode(mode))


def mdtx_set(m):
    return mdtx_table()[m]


# Inter sets reused from the AV1 size mapping.
SET_DCTONLY = (TxType.DCT_DCT,)
SET_DCT_IDTX = (TxType.DCT_DCT, TxType.IDTX)
SET_DTT9_IDTX_1DDCT = tuple(TxType(i) for i in range(12))
SET_ALL16 = tuple(TxType)


def inter_set(w, h):
    if max(w, h) == 64:
        return SET_DCTONLY
    if max(w, h) == 32:
        return SET_DCT_IDTX
    if min(w, h) == 16:
        return SET_DTT9_IDTX_1DDCT
    return SET_ALL16


_INTER_GROUP = {16: "tx_type_inter16", 12: "tx_type_inter12", 2: "tx_type_inter2"}


def tx_candidates(w, h, is_inter, mode=None):
    if is_inter:
        return inter_set(w, h)
    m = mdtx_class(mode, w, h)
    return SET_DCTONLY if m is None else mdtx_set(m)


def _tx_syntax(w, h, is_inter, mode):
    """(group, ctx, candidate tuple) or None when nothing is coded."""
    if is_inter:
        cands = inter_set(w, h)
        if len(cands) == 1:
            return None
        g = size_group(w, h)
        return _INTER_GROUP[len(cands)], 0 if g is None else g, cands
    m = mdtx_class(mode, w, h)
    if m is None:
        return None
    return "tx_type_intra", m, mdtx_set(m)


def code_tx_type(wr, w, h, tx_type, eob, is_inter, mode=None):
    """Luma transform type.  Nothing is coded for eob <= 1 (DC-only infers
    DCT_DCT) or for single-candidate sets."""
    syn = _tx_syntax(w, h, is_inter, mode)
    if eob <= 1 or syn is None:
        if tx_type != TxType.DCT_DCT:
            raise ParameterError("DC-only and DCT-only blocks must use DCT_DCT")
        return
    group, ctx, cands = syn
    if tx_type not in cands:
        raise ParameterError(f"{TxType(tx_type).name} not in the candidate set")
    wr.sym(group, ctx, cands.index(tx_type))


def parse_tx_type(rd, w, h, eob, is_inter, mode=None):
    syn = _tx_syntax(w, h, is_inter, mode)
    if eob <= 1 or syn is None:
        return TxType.DCT_DCT
    group, ctx, cands = syn
    idx = rd.sym(group, ctx)
    if idx >= len(cands):
        raise ConformanceError(f"transform index {idx} outside set of {len(cands)}")
    return cands[idx]


def chroma_tx_type(is_inter, luma_type, w, h):
    """Chroma never signals a type: intra uses DCT_DCT, inter inherits luma
    when that type is usable at the chroma size."""
    if not is_inter:
        return TxType.DCT_DCT
    return luma_type if luma_type in inter_set(w, h) else TxType.DCT_DCT
