"""Lossless tools: residual block refinement (RBR) and transform selection.

RBR takes first differences along the prediction direction of a V_PRED or
H_PRED intra block before the transform; the inverse is a running sum.  The
mode is implied by the intra mode, so it costs no bits.

Lossless transforms are the unit-gain 4x4 WHT and the identity.  Luma intra
uses IDTX when the CB's FSC flag is set (with a size choice between 4x4 and
the CB clipped to 32) and WHT 4x4 otherwise.  Luma inter codes the size and,
at 4x4 only, the type; larger sizes imply IDTX.  Chroma follows the
colocated luma type at 4x4 with nothing coded.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .partition import IntraMode
from .transforms import idtx_unit_forward, idtx_unit_inverse, wht_lift_forward, wht_lift_inverse


class RbrMode(enum.IntEnum):
    NONE = 0
    VERTICAL = 1
    HORIZONTAL = 2


def rbr_mode_for(is_inter, intra_mode=None):
    if is_inter or intra_mode is None:
        return RbrMode.NONE
    if intra_mode == IntraMode.V_PRED:
        return RbrMode.VERTICAL
    if intra_mode == IntraMode.H_PRED:
        return RbrMode.HORIZONTAL
    return RbrMode.NONE


def rbr_forward(block, mode):
    x = np.array(block, dtype=np.int64)
    if mode == RbrMode.VERTICAL:
        x[1:] -= np.array(block, dtype=np.int64)[:-1]
    elif mode == RbrMode.HORIZONTAL:
        x[:, 1:] -= np.array(block, dtype=np.int64)[:, :-1]
    return x


def rbr_inverse(block, mode):
    x = np.asarray(block, dtype=np.int64)
    if mode == RbrMode.VERTICAL:
        return np.cumsum(x, axis=0)
    if mode == RbrMode.HORIZONTAL:
        return np.cumsum(x, axis=1)
    return x.copy()


class LosslessKind(enum.IntEnum):
    WHT = 0
    IDTX = 1


@dataclass(frozen=True)
class LosslessTx:
    kind: LosslessKind
    h: int
    w: int


def large_size(cb_w, cb_h):
    return min(cb_h, 32), min(cb_w, 32)


def lossless_forward(block, kind):
    """Unit-gain transform of one TB; WHT blocks must be 4x4."""
    return wht_lift_forward(block) if kind == LosslessKind.WHT else idtx_unit_forward(block)


def lossless_inverse(coeffs, kind):
    return wht_lift_inverse(coeffs) if kind == LosslessKind.WHT else idtx_unit_inverse(coeffs)


def _tiles(x, h, w):
    H, W = x.shape
    return [x[r : r + h, c : c + w] for r in range(0, H, h) for c in range(0, W, w)]


def _cost(blocks):
    return float(sum(np.log2(1 + np.abs(b)).sum() + np.count_nonzero(b) for b in blocks))


def lossless_tx_select(plane, is_inter, fsc, cb_w, cb_h, residual=None, luma_kind=LosslessKind.WHT):
    """Encoder pick of the lossless transform for one plane of a CB.

    ``residual`` (after RBR) drives the inter type choice; without it inter
    blocks take WHT 4x4.  Chroma dimensions are the chroma plane's.
    """
    if plane:
        return LosslessTx(luma_kind, 4, 4)
    lh, lw = large_size(cb_w, cb_h)
    if not is_inter:
        if fsc:
            return LosslessTx(LosslessKind.IDTX, lh, lw)
        return LosslessTx(LosslessKind.WHT, 4, 4)
    if residual is None:
        return LosslessTx(LosslessKind.WHT, 4, 4)
    r = np.asarray(residual, dtype=np.int64)
    wht = _cost(wht_lift_forward(t) for t in _tiles(r, 4, 4))
    if _cost([r]) < wht:
        return LosslessTx(LosslessKind.IDTX, lh, lw)
    return LosslessTx(LosslessKind.WHT, 4, 4)


def check_lossless_tx(tx, plane, is_inter, fsc, cb_w, cb_h):
    lh, lw = large_size(cb_w, cb_h)
    ok_sizes = {(4, 4), (lh, lw)}
    if (tx.h, tx.w) not in ok_sizes or (plane and (tx.h, tx.w) != (4, 4)):
        raise ParameterError(f"lossless TB size {tx.w}x{tx.h} not allowed")
    if tx.kind == LosslessKind.WHT and (tx.h, tx.w) != (4, 4):
        raise ParameterError("lossless WHT is 4x4 only")
    if plane == 0 and not is_inter and tx.kind != (LosslessKind.IDTX if fsc else LosslessKind.WHT):
        raise ParameterError("intra lossless type follows the FSC flag")


def code_lossless_tx(wr, tx, is_inter, fsc, cb_w, cb_h):
    """Luma lossless transform syntax; chroma codes nothing."""
    check_lossless_tx(tx, 0, is_inter, fsc, cb_w, cb_h)
    has_size = large_size(cb_w, cb_h) != (4, 4)
    big = (tx.h, tx.w) != (4, 4)
    if is_inter:
        if has_size:
            wr.sym("lossless_tx", 0, int(big))
        if not big:
            wr.sym("lossless_tx", 1, int(tx.kind))
    elif fsc and has_size:
        wr.sym("lossless_tx", 0, int(big))


def parse_lossless_tx(rd, is_inter, fsc, cb_w, cb_h):
    lh, lw = large_size(cb_w, cb_h)
    has_size = (lh, lw) != (4, 4)
    if is_inter:
        big = bool(rd.sym("lossless_tx", 0)) if has_size else False
        if big:
            return LosslessTx(LosslessKind.IDTX, lh, lw)
        return LosslessTx(LosslessKind(rd.sym("lossless_tx", 1)), 4, 4)
    if not fsc:
        return LosslessTx(LosslessKind.WHT, 4, 4)
    big = bool(rd.sym("lossless_tx", 0)) if has_size else False
    return LosslessTx(LosslessKind.IDTX, lh, lw) if big else LosslessTx(LosslessKind.IDTX, 4, 4)
