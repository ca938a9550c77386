"""Compiled bulk path for the range coder.

:func:`encode_stream` and :func:`decode_stream` run a whole symbol sequence
through the same arithmetic and adaptation as :class:`avtx.entropy.RangeEncoder`
and :class:`avtx.entropy.RangeDecoder`, with the context bank packed into
arrays.  Output is byte-identical to the per-symbol coder; the test suite
holds the two against each other.  Use it for large synthetic streams where
the interpreter would dominate.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .entropy import MAX_ALPHABET, CdfEntry
from .errors import TruncationError

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF
_PROB_TOP = 1 << 15


def pack_bank(entries):
    """Pack a list of :class:`CdfEntry` into ``(cdfs, sizes, counters, paras)``."""
    n = len(entries)
    cdfs = np.zeros((n, MAX_ALPHABET), dtype=np.int64)
    sizes = np.zeros(n, dtype=np.int64)
    counters = np.zeros(n, dtype=np.int64)
    paras = np.zeros((n, 3), dtype=np.int64)
    for i, e in enumerate(entries):
        cdfs[i, : e.size] = e.cdf
        sizes[i] = e.size
        counters[i] = e.counter
        paras[i] = e.para
    return cdfs, sizes, counters, paras


def unpack_bank(cdfs, sizes, counters, paras):
    return [
        CdfEntry(cdfs[i, : sizes[i]].tolist(), int(counters[i]), tuple(int(a) for a in paras[i]))
        for i in range(len(sizes))
    ]


@njit(cache=True)
def _adapt(cdfs, sizes, counters, paras, e, k):
    m = sizes[e]
    n = counters[e]
    t = 0 if n <= 15 else (1 if n <= 31 else 2)
    rate = 3 + t + (1 if m <= 3 else 2) + paras[e, t]
    if n < 0xFFFF:
        counters[e] = n + 1
    prev = 0
    for i in range(k):
        c = cdfs[e, i]
        c -= c >> rate
        if c <= prev:
            c = prev + 1
        cdfs[e, i] = c
        prev = c
    nxt = _PROB_TOP
    for i in range(m - 2, k - 1, -1):
        c = cdfs[e, i]
        c += (_PROB_TOP - c) >> rate
        if c >= nxt:
            c = nxt - 1
        cdfs[e, i] = c
        nxt = c


@njit(cache=True)
def _valid(cdfs, sizes, e):
    m = sizes[e]
    if cdfs[e, m - 1] != _PROB_TOP:
        return False
    prev = 0
    for i in range(m):
        if cdfs[e, i] <= prev:
            return False
        prev = cdfs[e, i]
    return True


@njit(cache=True)
def _encode(cdfs, sizes, counters, paras, ctx, syms, check):
    out = np.empty(len(syms) * 2 + 16, dtype=np.uint8)
    pos = 0
    low = 0
    rng = _MASK32
    cache = 0
    cache_size = 1
    bad = -1
    for j in range(len(syms)):
        e = ctx[j]
        s = syms[j]
        lo = cdfs[e, s - 1] if s else 0
        r = rng >> 15
        low += r * lo
        rng = r * (cdfs[e, s] - lo)
        while rng < _TOP:
            rng <<= 8
            if low < 0xFF000000 or low > _MASK32:
                carry = low >> 32
                temp = cache
                while True:
                    if pos == len(out):
                        grown = np.empty(len(out) * 2, dtype=np.uint8)
                        grown[:pos] = out[:pos]
                        out = grown
                    out[pos] = (temp + carry) & 0xFF
                    pos += 1
                    temp = 0xFF
                    cache_size -= 1
                    if cache_size == 0:
                        break
                cache = (low >> 24) & 0xFF
            cache_size += 1
            low = (low & 0x00FFFFFF) << 8
        _adapt(cdfs, sizes, counters, paras, e, s)
        if check and bad < 0 and not _valid(cdfs, sizes, e):
            bad = j
    for _ in range(5):
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            temp = cache
            while True:
                if pos == len(out):
                    grown = np.empty(len(out) * 2, dtype=np.uint8)
                    grown[:pos] = out[:pos]
                    out = grown
                out[pos] = (temp + carry) & 0xFF
                pos += 1
                temp = 0xFF
                cache_size -= 1
                if cache_size == 0:
                    break
            cache = (low >> 24) & 0xFF
        cache_size += 1
        low = (low & 0x00FFFFFF) << 8
    return out[1:pos], bad


@njit(cache=True)
def _decode(cdfs, sizes, counters, paras, ctx, data, check):
    n = len(ctx)
    syms = np.empty(n, dtype=np.int64)
    if len(data) < 4:
        return syms, -1, -2
    code = 0
    for i in range(4):
        code = (code << 8) | data[i]
    pos = 4
    rng = _MASK32
    bad = -1
    for j in range(n):
        e = ctx[j]
        r = rng >> 15
        v = code // r
        if v >= _PROB_TOP:
            v = _PROB_TOP - 1
        k = 0
        while cdfs[e, k] <= v:
            k += 1
        lo = cdfs[e, k - 1] if k else 0
        code -= r * lo
        rng = r * (cdfs[e, k] - lo)
        while rng < _TOP:
            if pos >= len(data):
                return syms, bad, j
            rng <<= 8
            code = (code << 8) | data[pos]
            pos += 1
        syms[j] = k
        _adapt(cdfs, sizes, counters, paras, e, k)
        if check and bad < 0 and not _valid(cdfs, sizes, e):
            bad = j
    return syms, bad, -1


def encode_stream(bank, ctx, syms, check=False):
    """Code ``syms[j]`` with packed context ``ctx[j]``; the bank adapts in place.

    ``bank`` is the tuple from :func:`pack_bank`.  Returns ``(bytes, bad)``
    where ``bad`` is the index of the first update that left a CDF invalid,
    or -1 (only tracked when ``check`` is set).
    """
    ctx = np.ascontiguousarray(ctx, dtype=np.int64)
    syms = np.ascontiguousarray(syms, dtype=np.int64)
    out, bad = _encode(*bank, ctx, syms, check)
    return out.tobytes(), int(bad)


def decode_stream(bank, ctx, data, check=False):
    """Inverse of :func:`encode_stream`; returns ``(symbols, bad)``."""
    ctx = np.ascontiguousarray(ctx, dtype=np.int64)
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    syms, bad, stop = _decode(*bank, ctx, buf, check)
    if stop == -2:
        raise TruncationError("coded stream shorter than the 4-byte preamble")
    if stop >= 0:
        raise TruncationError(f"coded stream exhausted at symbol {stop}")
    return syms, int(bad)
