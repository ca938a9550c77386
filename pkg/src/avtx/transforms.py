"""Integer separable primary transforms.

Every matrix kernel is ``64 * sqrt(N) * B`` for an orthonormal basis ``B``
(rows are basis functions), rounded to signed bytes and then tuned toward
``K @ K.T == 4096 * N * I`` (see :mod:`avtx.kernelgen`).

Fixed-point schedule, per 1D pass over an axis of length ``N``:

* forward: ``y = (K @ x + r) >> (log2(N) + 4)``; the first (column) pass
  pre-scales the input by 4;
* inverse: ``x = (K.T @ y + 128) >> 8``; after both passes ``(x + 2) >> 2``.

The 2D forward gain is ``64 / sqrt(H * W)`` and the inverse undoes it.
Identity kernels are ``s * I`` with a power-of-two ``s``; they use shift 0
forward and ``2 * log2(s)`` inverse so IDTX round trips exactly.

Axes of length 64 are coded with 32 coefficients: the forward path averages
sample pairs, the inverse duplicates every output sample.
"""

from __future__ import annotations

import enum
import functools
import math

import numpy as np

from . import kernelgen
from .errors import ParameterError

KERNEL_SEED = kernelgen.KERNEL_SEED
SIZES = (4, 8, 16, 32, 64)
CODED_MAX = 32


class TxType(enum.IntEnum):
    DCT_DCT = 0
    ADST_DCT = 1
    DCT_ADST = 2
    ADST_ADST = 3
    FLIPADST_DCT = 4
    DCT_FLIPADST = 5
    FLIPADST_FLIPADST = 6
    ADST_FLIPADST = 7
    FLIPADST_ADST = 8
    IDTX = 9
    V_DCT = 10
    H_DCT = 11
    V_ADST = 12
    H_ADST = 13
    V_FLIPADST = 14
    H_FLIPADST = 15


# (vertical, horizontal) 1D families per type id.
TX_AXES = {
    TxType.DCT_DCT: ("DCT", "DCT"),
    TxType.ADST_DCT: ("ADST", "DCT"),
    TxType.DCT_ADST: ("DCT", "ADST"),
    TxType.ADST_ADST: ("ADST", "ADST"),
    TxType.FLIPADST_DCT: ("FLIPADST", "DCT"),
    TxType.DCT_FLIPADST: ("DCT", "FLIPADST"),
    TxType.FLIPADST_FLIPADST: ("FLIPADST", "FLIPADST"),
    TxType.ADST_FLIPADST: ("ADST", "FLIPADST"),
    TxType.FLIPADST_ADST: ("FLIPADST", "ADST"),
    TxType.IDTX: ("IDTX", "IDTX"),
    TxType.V_DCT: ("DCT", "IDTX"),
    TxType.H_DCT: ("IDTX", "DCT"),
    TxType.V_ADST: ("ADST", "IDTX"),
    TxType.H_ADST: ("IDTX", "ADST"),
    TxType.V_FLIPADST: ("FLIPADST", "IDTX"),
    TxType.H_FLIPADST: ("IDTX", "FLIPADST"),
}

ONE_D_TYPES = frozenset(t for t, (v, h) in TX_AXES.items() if (v == "IDTX") != (h == "IDTX"))
IDTX_SCALE = {4: 2, 8: 2, 16: 2, 32: 1}


def is_1d(tx_type):
    return TxType(tx_type) in ONE_D_TYPES


# --- kernels -----------------------------------------------------------------

_MATRIX_NAMES = {("DCT2", 4), ("DCT2", 8), ("DCT2", 16), ("DCT2", 32), ("DST4", 4), ("LADST8", 8), ("DST7", 16), ("DDT8", 8), ("DDT16", 16)}


@functools.lru_cache(maxsize=None)
def _table(seed):
    if seed == KERNEL_SEED:
        stored_seed, table = kernelgen.load_table()
        if stored_seed == seed:
            return table
    return kernelgen.build_all(seed)


@functools.lru_cache(maxsize=None)
def _kernel_cached(kid, n, seed):
    if (kid, n) in _MATRIX_NAMES:
        k = _table(seed)[f"{kid}_{n}"].copy()
    elif kid == "IDTX":
        if n not in IDTX_SCALE:
            raise ParameterError(f"IDTX has no {n}-point kernel")
        k = IDTX_SCALE[n] * np.eye(n, dtype=np.int64)
    elif kid == "WHT4" and n == 4:
        k = np.array([[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, -1, 1], [1, -1, 1, -1]], dtype=np.int64)
    elif kid in KERNEL_IDS:
        raise ParameterError(f"{kid} has no {n}-point kernel")
    else:
        raise ParameterError(f"unknown kernel {kid!r}")
    k.setflags(write=False)
    return k


def kernel(kid, n, seed=KERNEL_SEED):
    """Integer kernel matrix (rows are basis functions); read-only."""
    return _kernel_cached(kid, n, seed)


KERNEL_IDS = ("DCT2", "DST4", "LADST8", "DST7", "DDT8", "DDT16", "IDTX", "WHT4")
MATRIX_KERNELS = tuple(sorted(_MATRIX_NAMES))


def all_kernels(seed=KERNEL_SEED):
    """Every kernel as ``{(id, N): matrix}`` (for dumps and audits)."""
    out = {key: kernel(*key, seed=seed) for key in MATRIX_KERNELS}
    for n in IDTX_SCALE:
        out[("IDTX", n)] = kernel("IDTX", n)
    out[("WHT4", 4)] = kernel("WHT4", 4)
    return out


def ddt_kernels(seed=KERNEL_SEED):
    """Inter data-driven kernels; the flipped variants reverse sample order."""
    return {
        "DDT8": kernel("DDT8", 8, seed),
        "FLIPDDT8": kernel("DDT8", 8, seed)[:, ::-1],
        "DDT16": kernel("DDT16", 16, seed),
        "FLIPDDT16": kernel("DDT16", 16, seed)[:, ::-1],
    }


def axis_kernel(family, n, inter=False):
    """Resolve a 1D family on an axis of ``n`` coded samples to ``(kid, flip)``."""
    if family == "DCT":
        return "DCT2", False
    if family == "IDTX":
        return "IDTX", False
    if family in ("ADST", "FLIPADST"):
        flip = family == "FLIPADST"
        if n == 4:
            return "DST4", flip
        if n == 8:
            return ("DDT8" if inter else "LADST8"), flip
        if n == 16:
            return ("DDT16" if inter else "DST7"), flip
        raise ParameterError(f"no ADST-family kernel for length {n}")
    raise ParameterError(f"unknown 1D family {family!r}")


# --- 1D passes ---------------------------------------------------------------


def _fwd_shift(kid, n):
    return 0 if kid == "IDTX" else int(math.log2(n)) + 4


def _inv_shift(kid, n):
    return 2 * int(math.log2(IDTX_SCALE[n])) if kid == "IDTX" else 8


def _round_shift(v, s):
    if s == 0:
        return v
    return (v + (1 << (s - 1))) >> s


def forward_1d(kid, x, prescale=False, seed=KERNEL_SEED):
    """One forward pass over the last axis of ``x``."""
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[-1]
    k = kernel(kid, n, seed)
    if prescale:
        x = x << 2
    return _round_shift(x @ k.T, _fwd_shift(kid, n))


def inverse_1d(kid, y, seed=KERNEL_SEED):
    """One inverse pass over the last axis of ``y`` (transpose kernel)."""
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[-1]
    k = kernel(kid, n, seed)
    return _round_shift(y @ k, _inv_shift(kid, n))


# --- 2D ----------------------------------------------------------------------


def _check_dims(h, w):
    if h not in SIZES or w not in SIZES:
        raise ParameterError(f"unsupported TB size {w}x{h}")
    if max(h, w) > 16 * min(h, w):
        raise ParameterError(f"TB aspect ratio of {w}x{h} exceeds 1:16")


def coded_shape(h, w):
    return min(h, CODED_MAX), min(w, CODED_MAX)


def _axis_plan(tx_type, h, w, inter):
    v_fam, h_fam = TX_AXES[TxType(tx_type)]
    for fam, n in ((v_fam, h), (h_fam, w)):
        if n == 64 and fam != "DCT":
            raise ParameterError(f"64-point axes support DCT only, not {fam}")
    ch, cw = coded_shape(h, w)
    return axis_kernel(v_fam, ch, inter), axis_kernel(h_fam, cw, inter)


def long64_downsample(x, axis):
    """Average sample pairs along a 64-length axis (forward side)."""
    a = np.take(x, np.arange(0, 64, 2), axis=axis)
    b = np.take(x, np.arange(1, 64, 2), axis=axis)
    return (a + b + 1) >> 1


def long64_inverse(x, axis):
    """Duplicate each sample along ``axis``: ``[a0, a0, a1, a1, ...]``."""
    return np.repeat(x, 2, axis=axis)


def forward_2d(block, tx_type, inter=False, seed=KERNEL_SEED):
    """Residual block ``(..., H, W)`` to coefficients ``(..., min(H,32), min(W,32))``.

    Columns are transformed first, then rows.
    """
    x = np.asarray(block, dtype=np.int64)
    h, w = x.shape[-2:]
    _check_dims(h, w)
    (vk, vflip), (hk, hflip) = _axis_plan(tx_type, h, w, inter)
    if h == 64:
        x = long64_downsample(x, -2)
    if w == 64:
        x = long64_downsample(x, -1)
    if vflip:
        x = x[..., ::-1, :]
    x = np.swapaxes(forward_1d(vk, np.swapaxes(x, -1, -2), prescale=True, seed=seed), -1, -2)
    if hflip:
        x = x[..., ::-1]
    return forward_1d(hk, x, seed=seed)


def inverse_2d(coeffs, tx_type, shape, inter=False, seed=KERNEL_SEED):
    """Coefficients back to a ``shape == (H, W)`` residual block (columns first)."""
    c = np.asarray(coeffs, dtype=np.int64)
    h, w = shape
    _check_dims(h, w)
    if c.shape[-2:] != coded_shape(h, w):
        raise ParameterError(f"coefficient grid {c.shape[-2:]} does not match TB {w}x{h}")
    (vk, vflip), (hk, hflip) = _axis_plan(tx_type, h, w, inter)
    x = np.swapaxes(inverse_1d(vk, np.swapaxes(c, -1, -2), seed=seed), -1, -2)
    if vflip:
        x = x[..., ::-1, :]
    x = inverse_1d(hk, x, seed=seed)
    if hflip:
        x = x[..., ::-1]
    x = (x + 2) >> 2
    if h == 64:
        x = long64_inverse(x, -2)
    if w == 64:
        x = long64_inverse(x, -1)
    return x


def forward_gain(h, w, tx_type=TxType.DCT_DCT):
    """Nominal amplitude gain of :func:`forward_2d` for this size and type."""
    ch, cw = coded_shape(h, w)
    v_fam, h_fam = TX_AXES[TxType(tx_type)]
    g = 4.0
    for fam, n in ((v_fam, ch), (h_fam, cw)):
        if fam == "IDTX":
            g *= IDTX_SCALE[n]
        else:
            g *= 64 * math.sqrt(n) / 2 ** (math.log2(n) + 4)
    return g


# --- Walsh-Hadamard ------------------------------------------------------------


def _wht_fwd_1d(a, b, c, d):
    a = a + b
    d = d - c
    e = (a - d) >> 1
    b = e - b
    c = e - c
    a = a - c
    d = d + b
    return a, c, d, b


def _wht_inv_1d(a, c, d, b):
    a = a + c
    d = d - b
    e = (a - d) >> 1
    b = e - b
    c = e - c
    a = a - b
    d = d + c
    return a, b, c, d


def _wht_pass(x, axis, fn):
    parts = fn(*(np.take(x, i, axis=axis) for i in range(4)))
    return np.stack(parts, axis=axis)


def wht_lift_forward(block):
    """Lifting 4x4 WHT with unit quantizer scale (columns, then rows)."""
    x = np.asarray(block, dtype=np.int64)
    if x.shape[-2:] != (4, 4):
        raise ParameterError("WHT operates on 4x4 blocks")
    return _wht_pass(_wht_pass(x, -2, _wht_fwd_1d), -1, _wht_fwd_1d)


def wht_lift_inverse(coeffs):
    """Exact inverse of :func:`wht_lift_forward`; undoes rows, then columns."""
    x = np.asarray(coeffs, dtype=np.int64)
    if x.shape[-2:] != (4, 4):
        raise ParameterError("WHT operates on 4x4 blocks")
    return _wht_pass(_wht_pass(x, -1, _wht_inv_1d), -2, _wht_inv_1d)


WHT_GAIN = 4


def wht4x4_forward(block):
    """4x4 WHT with its total gain of 4 folded into the output."""
    return wht_lift_forward(block) * WHT_GAIN


def wht4x4_inverse(coeffs):
    return wht_lift_inverse(np.asarray(coeffs, dtype=np.int64) >> 2)


# --- lossless identity ---------------------------------------------------------


def idtx_unit_forward(block):
    """Unit-gain identity used by lossless coding."""
    return np.array(block, dtype=np.int64)


idtx_unit_inverse = idtx_unit_forward
