"""Coefficient level coding.

Per TB the syntax is: all-zero flag, EOB (or BOB in FSC mode), then the
level passes.  Standard and TCQ modes run a reverse-scan BR pass with the LR
symbol interleaved wherever BR escapes, followed by a forward pass carrying
the high range (truncated Rice) and the signs.  FSC runs every pass forward
from BOB with two-neighbour contexts and context-coded signs.

Magnitudes split as ``v = min(|l|, top)`` with ``top`` 8 in the LF region
and 6 in the Default region; ``HR = |l| - top`` when ``v == top``.  Under
TCQ the two highest combined values ``top - 1`` and ``top`` are escapes that
keep the level parity, and ``|l| = v + 2 * HR``.

Neighbour sums and contexts read ``v`` of already coded positions from a
padded buffer, so positions outside the block or past EOB read zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConformanceError, ParameterError
from .scans import ScanClass, scan_order
from .tcq import DEFAULT_SM, RateModel

MAX_LEVEL = 1 << 22
MAX_COEFFS = 1024
PAD = 3


class CoeffMode(enum.IntEnum):
    STANDARD = 0
    TCQ = 1
    FSC = 2


@dataclass(frozen=True)
class TbInfo:
    """Coefficient-coding view of a TB.  ``h``/``w`` are the coded extent
    (64-point axes already folded to 32).  ``ph`` allows parity hiding."""

    h: int
    w: int
    plane: int = 0
    scan: ScanClass = ScanClass.DIAG
    mode: CoeffMode = CoeffMode.STANDARD
    ph: bool = False

    def __post_init__(self):
        if self.h < 4 or self.w < 4 or self.h * self.w > MAX_COEFFS:
            raise ParameterError(f"coefficient block {self.w}x{self.h} outside 4x4..32x32")
        if self.plane not in (0, 1, 2):
            raise ParameterError(f"plane {self.plane} outside 0..2")
        if self.mode == CoeffMode.FSC and (self.plane or self.scan != ScanClass.DIAG):
            raise ParameterError("FSC applies to luma 2D blocks only")
        if self.mode == CoeffMode.TCQ and (self.plane or self.scan != ScanClass.DIAG):
            raise ParameterError("TCQ applies to luma 2D blocks only")
        if self.ph and (self.plane or self.mode != CoeffMode.STANDARD):
            raise ParameterError("parity hiding applies to luma standard-mode blocks only")

    @property
    def n(self):
        return self.h * self.w


# --- neighbour statistics and contexts --------------------------------------


def nstats(levels):
    return (sum(abs(int(x)) for x in levels) + 1) >> 1


def is_lf(plane, scan, r, c):
    if scan == ScanClass.DIAG:
        return r + c < 4 if plane == 0 else r == 0 and c == 0
    k = r if scan == ScanClass.ROW else c
    return k < (2 if plane == 0 else 1)


def br_context(plane, lf, scan, r, c, ns):
    """Row in the BR group of the plane type and region."""
    voff = 4 if plane == 2 else 0
    if plane:
        if lf and scan != ScanClass.DIAG:
            return min(ns, 3) + 8
        return min(ns, 3) + voff
    if lf:
        if scan == ScanClass.DIAG:
            if r + c == 0:
                return min(ns, 8)
            if r + c < 2:
                return min(ns, 6) + 9
            return min(ns, 4) + 16
        k = r if scan == ScanClass.ROW else c
        return min(ns, 6) + 21 if k == 0 else min(ns, 4) + 28
    if scan != ScanClass.DIAG:
        return min(ns, 4) + 15
    if r + c < 6:
        return min(ns, 4)
    if r + c < 8:
        return min(ns, 4) + 5
    return min(ns, 4) + 10


def lr_context(plane, lf, r, c, ns):
    if plane:
        if lf:
            return min(ns, 3) if r == 0 and c == 0 else min(ns, 3) + 4
        return min(ns, 3)
    if lf:
        return min(ns, 6) if r == 0 and c == 0 else min(ns, 6) + 7
    return min(ns, 6)


BR_ROWS = {True: 33, False: 20}
_BR_GROUP = {(0, True): "br_lf_luma", (0, False): "br_def_luma", (1, True): "br_lf_chroma", (1, False): "br_def_chroma"}
_LR_GROUP = {(0, True): "lr_lf_luma", (0, False): "lr_def_luma", (1, True): "lr_lf_chroma", (1, False): "lr_def_chroma"}
_TCQ_GROUP = {True: "br_tcq_lf", False: "br_tcq_def"}


def top_value(lf):
    return 8 if lf else 6


def br_max(lf):
    return 5 if lf else 3


def _offsets(stride, plane, scan):
    if plane == 0:
        if scan == ScanClass.DIAG:
            return (1, 2, stride, 2 * stride, stride + 1)
        if scan == ScanClass.ROW:
            return (1, 2, 3, stride)
        return (stride, 2 * stride, 3 * stride, 1)
    if scan == ScanClass.DIAG:
        return (1, stride, stride + 1)
    if scan == ScanClass.ROW:
        return (1, 2)
    return (stride, 2 * stride)


@dataclass(frozen=True)
class _Plan:
    n: int
    stride: int
    size: int
    pos: tuple  # padded buffer index per scan position
    rc: tuple  # (r, c) per scan position
    lf: tuple
    offs: tuple
    brg: tuple  # (group, ctx offset, clip) per position
    lrg: tuple
    tcqg: tuple  # (group, ctx offset, clip, rows) per position; luma 2D only
    eob_ctx: tuple


@lru_cache(maxsize=None)
def _plan(h, w, plane, scan):
    stride = w + 2 * PAD
    order = scan_order(h, w, scan)
    pk = min(plane, 1)
    n = h * w
    pos, rc, lf, brg, lrg, tcqg, ectx = [], [], [], [], [], [], []
    for i, (r, c) in enumerate(order.tolist()):
        pos.append((r + PAD) * stride + c + PAD)
        rc.append((r, c))
        reg = is_lf(plane, scan, r, c)
        lf.append(reg)
        # Contexts are min(ns, clip) + offset; recover both from two probes.
        base = br_context(plane, reg, scan, r, c, 0)
        clip = next(k for k in range(10) if br_context(plane, reg, scan, r, c, k + 1) == base + k)
        brg.append((_BR_GROUP[pk, reg], base, clip))
        lbase = lr_context(plane, reg, r, c, 0)
        lclip = next(k for k in range(10) if lr_context(plane, reg, r, c, k + 1) == lbase + k)
        lrg.append((_LR_GROUP[pk, reg], lbase, lclip))
        tcqg.append((_TCQ_GROUP[reg], base, clip, BR_ROWS[reg]))
        bucket = 0 if i == 0 else 1 if i < n // 8 else 2 if i < n // 4 else 3
        ectx.append(bucket + 4 * pk)
    return _Plan(
        n, stride, (h + 2 * PAD) * stride, tuple(pos), tuple(rc), tuple(lf), _offsets(stride, plane, scan),
        tuple(brg), tuple(lrg), tuple(tcqg), tuple(ectx),
    )


# --- truncated Rice ---------------------------------------------------------

_RICE_THRESHOLDS = (4, 8, 16, 32, 64)


def rice_param(ctx):
    m = 1
    for t in _RICE_THRESHOLDS:
        if ctx >= t:
            m += 1
    return m


def hr_ctx_update(ctx, hr):
    return (ctx + hr) >> 1


def _cmax(m):
    return min(m + 4, 6)


def tr_bits(value, m):
    cmax = _cmax(m)
    q = value >> m
    if q < cmax:
        return q + 1 + m
    k = m + 1
    x = value - (cmax << m) + (1 << k)
    return cmax + 2 * x.bit_length() - 1 - k


def tr_encode(wr, value, m, name="hr"):
    """Bypass bits go out in the same call pattern the decoder reads them:
    prefix bits one at a time, then each literal field in one call."""
    if value < 0:
        raise ParameterError("truncated Rice value must be non-negative")
    cmax = _cmax(m)
    q = min(value >> m, cmax)
    for _ in range(q):
        wr.bits(1, 1, name)
    if q < cmax:
        wr.bits(0, 1, name)
        wr.bits(value & ((1 << m) - 1), m, name)
        return
    k = m + 1
    x = value - (cmax << m) + (1 << k)
    z = x.bit_length() - 1 - k
    for _ in range(z):
        wr.bits(0, 1, name)
    wr.bits(1, 1, name)
    wr.bits(x & ((1 << (z + k)) - 1), z + k, name)


_MAX_EG_ZEROS = 40


def tr_decode(rd, m, name="hr"):
    cmax = _cmax(m)
    q = 0
    while q < cmax and rd.bits(1, name):
        q += 1
    if q < cmax:
        return (q << m) | rd.bits(m, name)
    k = m + 1
    z = 0
    while not rd.bits(1, name):
        z += 1
        if z > _MAX_EG_ZEROS:
            raise ConformanceError("Exp-Golomb prefix too long")
    x = (1 << (z + k)) | rd.bits(z + k, name)
    return x - (1 << k) + (cmax << m)


# --- EOB / BOB --------------------------------------------------------------


def all_zero_ctx(plane, n):
    return plane * 4 + min((n.bit_length() - 5) // 2, 3)


def eob_class(e):
    return e.bit_length() - 1


def _code_pos(wr, group, row, n, e):
    if not 1 <= e <= n:
        raise ParameterError(f"position {e} outside 1..{n}")
    cls = eob_class(e)
    wr.sym(group, row, cls)
    wr.bits(e - (1 << cls), cls, "eob_extra")


def _parse_pos(rd, group, row, n):
    cls = rd.sym(group, row)
    e = (1 << cls) + rd.bits(cls, "eob_extra")
    if e > n:
        raise ConformanceError(f"position {e} beyond block size {n}")
    return e


def code_eob(wr, n, plane, eob):
    _code_pos(wr, f"eob_c{n.bit_length()}", min(plane, 1), n, eob)


def parse_eob(rd, n, plane):
    return _parse_pos(rd, f"eob_c{n.bit_length()}", min(plane, 1), n)


def code_bob(wr, n, bob):
    """BOB is the first nonzero scan position; coded as ``bob + 1``."""
    _code_pos(wr, f"bob_c{n.bit_length()}", 0, n, bob + 1)


def parse_bob(rd, n):
    return _parse_pos(rd, f"bob_c{n.bit_length()}", 0, n) - 1


# --- signs ------------------------------------------------------------------


def dc_sign_ctx(plane, mag):
    return plane * 3 + min(mag - 1, 2)


def fsc_size_offset(h, w):
    a = h * w
    return 0 if a <= 64 else 1 if a <= 256 else 2


def fsc_sign_ctx(s, level, size_class):
    soff = 9 * size_class
    if s == 0:
        return soff
    d = soff + 2 if level > 3 else soff
    if s == 3:
        return 5 + d
    if s == -3:
        return 6 + d
    return (1 if s > 0 else 2) + d


# --- parity hiding ----------------------------------------------------------

PH_MIN_AC = 4


def ph_values(mags, lf):
    """BR + LR values ``min(|l|, top)`` per scan position."""
    return [min(a, 8 if g else 6) for a, g in zip(mags, lf)]


def ph_parity(ac_values):
    return sum(int(v) for v in ac_values if v) & 1


def ph_active(mags):
    return sum(1 for a in mags[1:] if a) >= PH_MIN_AC


def ph_apply(dc_code, parity, negative):
    mag = 2 * dc_code + parity
    return -mag if negative else mag


def _ph_ok(mags, lf):
    if not ph_active(mags):
        return True
    vals = ph_values(mags, lf)
    return (mags[0] & 1) == ph_parity(vals[1:])


def ph_block_ok(levels_scan, tb):
    """True when a scan-ordered block satisfies the PH parity rule (or PH is
    inactive for it)."""
    p = _plan(tb.h, tb.w, tb.plane, tb.scan)
    return _ph_ok([abs(int(x)) for x in levels_scan], p.lf)


def _rate_est(a):
    return np.where(a == 0, 0.0, 2.0 + 2.0 * np.log2(np.maximum(a, 1)))


def ph_encoder_adjust(levels_scan, coeffs_scan, lf, lam=0.12):
    """Single +-1 move that satisfies the PH rule at the lowest estimated
    ``D + lam * R``, distortion and rate in step units and bits.

    ``coeffs_scan`` are the unquantized values divided by the step.  When a
    block with 3 nonzero ACs can gain a hidden bit by promoting a zero it is
    compared with leaving PH off.  Returns the adjusted levels.
    """
    lv = np.asarray(levels_scan, dtype=np.int64).copy()
    x = np.abs(np.asarray(coeffs_scan, dtype=np.float64))
    mags = np.abs(lv)
    lfa = np.asarray(lf, dtype=bool)
    top = np.where(lfa, 8, 6)
    ml = mags.tolist()
    nz_ac = int(np.count_nonzero(mags[1:]))
    # Below 3 ACs no single move activates PH; a valid active block is kept.
    if nz_ac < PH_MIN_AC - 1 or (nz_ac >= PH_MIN_AC and _ph_ok(ml, lf)):
        return lv
    base_d = (x - mags) ** 2
    base_r = _rate_est(mags)
    best = None
    if _ph_ok(ml, lf):
        best = (-lam * (nz_ac >= PH_MIN_AC), -1, 0)
    vsum = int(np.minimum(mags[1:], top[1:]).sum())
    for delta in (1, -1):
        new = mags + delta
        ok = new >= 0
        cnt = nz_ac + np.where(np.arange(len(mags)) == 0, 0, (new > 0).astype(int) - (mags > 0).astype(int))
        vs = vsum + np.where(np.arange(len(mags)) == 0, 0, np.minimum(new, top) - np.minimum(mags, top))
        dc = np.where(np.arange(len(mags)) == 0, new, mags[0])
        valid = ok & ((cnt < PH_MIN_AC) | ((dc & 1) == (vs & 1)))
        gain = lam * (cnt >= PH_MIN_AC)
        cost = (x - new) ** 2 - base_d + lam * (_rate_est(np.maximum(new, 0)) - base_r) - gain
        for i in np.flatnonzero(valid):
            c = float(cost[i])
            if best is None or c < best[0]:
                best = (c, int(i), delta)
    _, i, delta = best
    if i >= 0:
        sign = np.sign(lv[i]) or (1 if (np.asarray(coeffs_scan)[i] >= 0) else -1)
        lv[i] = sign * (mags[i] + delta)
    return lv


# --- level passes -----------------------------------------------------------


def _tcq_value(a, top):
    if a < top - 1:
        return a
    return top - 1 + ((a - top + 1) & 1)


def _check_levels(levels, tb):
    blk = np.asarray(levels)
    if blk.shape != (tb.h, tb.w):
        raise ParameterError(f"levels shape {blk.shape} does not match {tb.h}x{tb.w}")
    if blk.size and int(np.abs(blk).max()) > MAX_LEVEL:
        raise ParameterError("level magnitude above 2^22")
    order = scan_order(tb.h, tb.w, tb.scan)
    return blk[order[:, 0], order[:, 1]].astype(np.int64).tolist()


def last_nonzero(vec):
    for i in range(len(vec) - 1, -1, -1):
        if vec[i]:
            return i + 1
    return 0


def first_nonzero(vec):
    for i, x in enumerate(vec):
        if x:
            return i
    return len(vec)


def code_tb_head(wr, tb, levels):
    """All-zero flag and EOB (BOB in FSC mode).  Returns the scan-ordered
    levels and the position coded (EOB, BOB, or 0 for an all-zero TB)."""
    vec = _check_levels(levels, tb)
    n = tb.n
    eob = last_nonzero(vec)
    wr.sym("all_zero", all_zero_ctx(tb.plane, n), int(eob == 0))
    if eob == 0:
        return vec, 0
    if tb.mode == CoeffMode.FSC:
        bob = first_nonzero(vec)
        code_bob(wr, n, bob)
        return vec, bob
    code_eob(wr, n, tb.plane, eob)
    return vec, eob


def parse_tb_head(rd, tb, fsc=False):
    """Returns ``(all_zero, position)``; position is EOB, or BOB when ``fsc``."""
    n = tb.n
    if rd.sym("all_zero", all_zero_ctx(tb.plane, n)):
        return True, 0
    if fsc:
        return False, parse_bob(rd, n)
    return False, parse_eob(rd, n, tb.plane)


def code_tb_body(wr, tb, vec, sm=DEFAULT_SM):
    """Level passes for a scan-ordered vector whose head was already coded."""
    if not any(vec):
        return
    if tb.mode == CoeffMode.FSC:
        _fsc_encode(wr, tb, vec)
    else:
        _encode_std(wr, tb, vec, sm)


def parse_tb_body(rd, tb, pos, sm=DEFAULT_SM):
    """Inverse of :func:`code_tb_body`; returns the ``h x w`` level block."""
    p = _plan(tb.h, tb.w, tb.plane, tb.scan)
    if tb.mode == CoeffMode.FSC:
        vec = _fsc_decode(rd, tb, p, pos)
    else:
        vec = _decode_std(rd, tb, p, pos, sm)
    out = np.zeros((tb.h, tb.w), dtype=np.int64)
    order = scan_order(tb.h, tb.w, tb.scan)
    out[order[:, 0], order[:, 1]] = vec
    return out


def encode_tb(wr, tb, levels, sm=DEFAULT_SM):
    vec, _ = code_tb_head(wr, tb, levels)
    code_tb_body(wr, tb, vec, sm)


def decode_tb(rd, tb, sm=DEFAULT_SM):
    zero, pos = parse_tb_head(rd, tb, tb.mode == CoeffMode.FSC)
    if zero:
        return np.zeros((tb.h, tb.w), dtype=np.int64)
    return parse_tb_body(rd, tb, pos, sm)


def _encode_std(wr, tb, vec, sm):
    p = _plan(tb.h, tb.w, tb.plane, tb.scan)
    mags = [abs(x) for x in vec]
    eob = last_nonzero(mags)
    tcq = tb.mode == CoeffMode.TCQ
    ph = tb.ph and eob > 1 and ph_active(mags[:eob])
    if ph and not _ph_ok(mags[:eob], p.lf):
        raise ParameterError("levels violate the parity-hiding rule")
    nxt, qsel = sm.next, sm.quantizer
    buf = [0] * p.size
    vals = [0] * eob
    offs, pos, lfs = p.offs, p.pos, p.lf
    sym = wr.sym
    state = 0
    for i in range(eob - 1, -1, -1):
        a = mags[i]
        q = pos[i]
        lf = lfs[i]
        top = 8 if lf else 6
        bm = top - 3
        if i == 0 and ph:
            a = a >> 1
            v = min(a, top)
            _code_ph_dc(wr, buf, q, p.stride, v)
            vals[0] = v
            break
        v = _tcq_value(a, top) if tcq else min(a, top)
        b = min(v, bm)
        ns = 0
        for o in offs:
            ns += buf[q + o]
        ns = (ns + 1) >> 1
        if i == eob - 1:
            sym("br_eob_lf" if lf else "br_eob_def", p.eob_ctx[i], b - 1)
        elif tcq:
            g, base, clip, rows = p.tcqg[i]
            sym(g, qsel[state] * rows + base + min(ns, clip), b)
        else:
            g, base, clip = p.brg[i]
            sym(g, base + min(ns, clip), b)
        if b == bm:
            g, base, clip = p.lrg[i]
            sym(g, base + min(ns, clip), v - bm)
        buf[q] = v
        vals[i] = v
        if tcq:
            state = nxt[state][v & 1]
    hctx = 0
    for i in range(eob):
        a = mags[i]
        v = vals[i]
        top = 8 if lfs[i] else 6
        if i == 0 and ph:
            if v == top:
                hr = (a >> 1) - top
                tr_encode(wr, hr, rice_param(hctx))
                hctx = (hctx + hr) >> 1
        elif tcq and v >= top - 1:
            hr = (a - v) >> 1
            tr_encode(wr, hr, rice_param(hctx))
            hctx = (hctx + hr) >> 1
        elif not tcq and v == top:
            hr = a - top
            tr_encode(wr, hr, rice_param(hctx))
            hctx = (hctx + hr) >> 1
        if a:
            neg = int(vec[i] < 0)
            if i == 0:
                sym("dc_sign", dc_sign_ctx(tb.plane, a), neg)
            else:
                wr.bits(neg, 1, "sign")


def _ph_ctx(buf, q, stride):
    r, rr, b, bb, rb = buf[q + 1], buf[q + 2], buf[q + stride], buf[q + 2 * stride], buf[q + stride + 1]
    return min((r + rr + b + bb + rb + 1) >> 1, 4), min((r + b + rb + 1) >> 1, 6)


def _code_ph_dc(wr, buf, q, stride, v):
    cb, cl = _ph_ctx(buf, q, stride)
    b = min(v, 5)
    wr.sym("ph_br", cb, b)
    if b == 5:
        wr.sym("ph_lr", cl, v - 5)


def _parse_ph_dc(rd, buf, q, stride):
    cb, cl = _ph_ctx(buf, q, stride)
    b = rd.sym("ph_br", cb)
    if b == 5:
        return 5 + rd.sym("ph_lr", cl)
    return b


def _decode_std(rd, tb, p, eob, sm):
    tcq = tb.mode == CoeffMode.TCQ
    nxt, qsel = sm.next, sm.quantizer
    buf = [0] * p.size
    vals = [0] * eob
    offs, pos, lfs = p.offs, p.pos, p.lf
    sym = rd.sym
    state = 0
    ph = False
    nz_ac = 0
    for i in range(eob - 1, -1, -1):
        q = pos[i]
        lf = lfs[i]
        top = 8 if lf else 6
        bm = top - 3
        if i == 0 and tb.ph and nz_ac >= PH_MIN_AC:
            ph = True
            vals[0] = _parse_ph_dc(rd, buf, q, p.stride)
            break
        ns = 0
        for o in offs:
            ns += buf[q + o]
        ns = (ns + 1) >> 1
        if i == eob - 1:
            b = sym("br_eob_lf" if lf else "br_eob_def", p.eob_ctx[i]) + 1
        elif tcq:
            g, base, clip, rows = p.tcqg[i]
            b = sym(g, qsel[state] * rows + base + min(ns, clip))
        else:
            g, base, clip = p.brg[i]
            b = sym(g, base + min(ns, clip))
        v = b
        if b == bm:
            g, base, clip = p.lrg[i]
            v = bm + sym(g, base + min(ns, clip))
        buf[q] = v
        vals[i] = v
        if v and i:
            nz_ac += 1
        if tcq:
            state = nxt[state][v & 1]
    out = [0] * eob
    hctx = 0
    parity = sum(vals[1:]) & 1 if ph else 0
    for i in range(eob):
        v = vals[i]
        top = 8 if lfs[i] else 6
        a = v
        if tcq and v >= top - 1:
            hr = tr_decode(rd, rice_param(hctx))
            hctx = (hctx + hr) >> 1
            a = v + (hr << 1)
        elif not tcq and v == top:
            hr = tr_decode(rd, rice_param(hctx))
            hctx = (hctx + hr) >> 1
            a = v + hr
        if i == 0 and ph:
            a = 2 * a + parity
        if a > MAX_LEVEL:
            raise ConformanceError("decoded level above 2^22")
        if a:
            if i == 0:
                neg = sym("dc_sign", dc_sign_ctx(tb.plane, a))
            else:
                neg = rd.bits(1, "sign")
            out[i] = -a if neg else a
    return out + [0] * (p.n - eob)


# --- FSC --------------------------------------------------------------------


def _fsc_encode(wr, tb, vec):
    p = _plan(tb.h, tb.w, 0, ScanClass.DIAG)
    bob = first_nonzero(vec)
    n, pos, st = p.n, p.pos, p.stride
    szc = fsc_size_offset(tb.h, tb.w)
    off = 7 * szc
    mags = [abs(x) for x in vec]
    buf = [0] * p.size
    for i in range(bob, n):
        q = pos[i]
        b = min(mags[i], 3)
        wr.sym("fsc_br", min(buf[q - 1] + buf[q - st], 6) + off, b)
        buf[q] = b
    for i in range(bob, n):
        q = pos[i]
        a = mags[i]
        if a >= 3:
            wr.sym("fsc_lr", min(buf[q - 1] + buf[q - st], 6) + off, min(a, 6) - 3)
        buf[q] = min(a, 6)
    sgn = [0] * p.size
    hctx = 0
    for i in range(bob, n):
        a = mags[i]
        if a >= 6:
            hr = a - 6
            tr_encode(wr, hr, rice_param(hctx))
            hctx = (hctx + hr) >> 1
        if a:
            q = pos[i]
            s = sgn[q - 1] + sgn[q - st] + sgn[q - st - 1]
            neg = int(vec[i] < 0)
            wr.sym("fsc_sign", fsc_sign_ctx(s, a, szc), neg)
            sgn[q] = -1 if neg else 1


def _fsc_decode(rd, tb, p, bob):
    n, pos, st = p.n, p.pos, p.stride
    szc = fsc_size_offset(tb.h, tb.w)
    off = 7 * szc
    buf = [0] * p.size
    mags = [0] * n
    for i in range(bob, n):
        q = pos[i]
        b = rd.sym("fsc_br", min(buf[q - 1] + buf[q - st], 6) + off)
        buf[q] = b
        mags[i] = b
    if not mags[bob]:
        raise ConformanceError("BOB position decoded as zero")
    for i in range(bob, n):
        q = pos[i]
        if mags[i] == 3:
            mags[i] = 3 + rd.sym("fsc_lr", min(buf[q - 1] + buf[q - st], 6) + off)
        buf[q] = mags[i]
    sgn = [0] * p.size
    out = [0] * n
    hctx = 0
    for i in range(bob, n):
        a = mags[i]
        if a == 6:
            hr = tr_decode(rd, rice_param(hctx))
            hctx = (hctx + hr) >> 1
            a += hr
            if a > MAX_LEVEL:
                raise ConformanceError("decoded level above 2^22")
        if a:
            q = pos[i]
            s = sgn[q - 1] + sgn[q - st] + sgn[q - st - 1]
            neg = rd.sym("fsc_sign", fsc_sign_ctx(s, a, szc))
            sgn[q] = -1 if neg else 1
            out[i] = -a if neg else a
    return out


# --- TCQ rate model from live contexts --------------------------------------


def _tcq_costs(bank, lf, tcqg, lrg, kmax):
    top = top_value(lf)
    bm = top - 3
    g, base, clip, rows = tcqg
    lg, lbase, lclip = lrg
    lr = bank[lg][lbase + min(1, lclip)]
    out = np.zeros((2, kmax), dtype=np.int64)
    for qq in range(2):
        br = bank[g][qq * rows + base + min(1, clip)]
        for k in range(kmax):
            v = _tcq_value(k, top)
            b = min(v, bm)
            c = br.cost(b)
            if b == bm:
                c += lr.cost(v - bm)
            if v >= top - 1:
                c += 512 * tr_bits((k - v) >> 1, 1)
            if k:
                c += 512
            out[qq, k] = c
    return out


def tcq_rate_model(bank, tb, kmax=12):
    """Per-position level costs (1/512 bit, sign included) and EOB costs for
    the trellis, read from the current CDFs.  Neighbour statistics are taken
    as 1, which is what a sparse block mostly sees."""
    p = _plan(tb.h, tb.w, tb.plane, tb.scan)
    n = p.n
    level = np.zeros((n, 2, kmax), dtype=np.int64)
    memo = {}
    for i in range(n):
        key = (p.lf[i], p.tcqg[i], p.lrg[i])
        if key not in memo:
            memo[key] = _tcq_costs(bank, *key, kmax)
        level[i] = memo[key]
    az = bank["all_zero"][all_zero_ctx(tb.plane, n)]
    eg = bank[f"eob_c{n.bit_length()}"][min(tb.plane, 1)]
    eob = np.zeros(n + 1, dtype=np.int64)
    eob[0] = az.cost(1)
    for e in range(1, n + 1):
        cls = eob_class(e)
        eob[e] = az.cost(0) + eg.cost(cls) + 512 * cls
    return RateModel(level, eob)
