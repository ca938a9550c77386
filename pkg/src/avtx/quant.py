"""Quantization: q_index to step size, scalar (de)quantization, matrices.

Step sizes carry 3 extra fractional bits relative to the classic 8-bit
tables, so ``QStep / 32`` is the step in coefficient units when the
matrix weight is unity (32).  ``QStep(0) == 32`` therefore gives a unit
step, which is what lossless coding relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ParseError

QM_UNITY = 32
DELTA_RANGE = (-8, 23)
BIT_DEPTHS = (8, 10, 12)

# Extended index ceiling and the (offset, multiplier) fold above 255.
_MAX_Q = {8: 255, 10: 303, 12: 351}
_FOLD = {8: (0, 1), 10: (48, 4), 12: (96, 16)}

# Rounding offsets in eighths of a step.
ROUND_INTRA = 4
ROUND_INTER = 3

_BASE = [32] + [round(2 ** ((q + 127) / 24)) for q in range(1, 25)]


def max_qindex(bit_depth):
    try:
        return _MAX_Q[bit_depth]
    except KeyError:
        raise ParameterError(f"bit depth {bit_depth} not in {BIT_DEPTHS}") from None


def _qstep8(q):
    if q <= 24:
        return _BASE[q]
    return _BASE[(q - 1) % 24 + 1] << ((q - 1) // 24)


def qstep_from_index(q, bit_depth=8):
    """Step size for ``q`` at ``bit_depth`` (8x the classic precision)."""
    top = max_qindex(bit_depth)
    if not 0 <= q <= top:
        raise ParameterError(f"q_index {q} outside [0, {top}] for {bit_depth}-bit")
    if q > 255:
        off, mult = _FOLD[bit_depth]
        return _qstep8(q - off) * mult
    return _qstep8(q)


@dataclass(frozen=True)
class QMatrix:
    """Per-coefficient weights for one transform size; 32 means unity."""

    weights: tuple
    symmetric: bool = False

    def __post_init__(self):
        w = tuple(tuple(int(v) for v in row) for row in self.weights)
        object.__setattr__(self, "weights", w)
        rows, cols = len(w), len(w[0]) if w else 0
        if (rows, cols) not in QM_SIZES:
            raise ParameterError(f"QM size {rows}x{cols} not in {sorted(QM_SIZES)}")
        if any(len(r) != cols for r in w) or any(not 1 <= v <= 255 for r in w for v in r):
            raise ParameterError("QM weights must be a full grid of values in [1, 255]")
        if self.symmetric:
            if rows != cols or any(w[r][c] != w[c][r] for r in range(rows) for c in range(cols)):
                raise ParameterError("symmetric QM must be square with w[r][c] == w[c][r]")

    @property
    def shape(self):
        return len(self.weights), len(self.weights[0])

    @classmethod
    def flat(cls, rows, cols, value=QM_UNITY):
        return cls(((value,) * cols,) * rows, symmetric=rows == cols)

    def array(self):
        return np.array(self.weights, dtype=np.int64)


QM_SIZES = {(4, 4), (4, 8), (8, 4), (8, 8)}
_QM_STOP = 0


def qm_serialize(m):
    """Header ``rows, cols, flags`` then weights with the trailing run collapsed.

    Symmetric 8x8 matrices store the upper triangle (row-major, c >= r).
    The value list ends at the first element of the trailing run of equal
    values, followed by a zero stop byte; the decoder repeats that value.
    """
    rows, cols = m.shape
    sym = m.symmetric and rows == 8
    if sym:
        vals = [m.weights[r][c] for r in range(rows) for c in range(r, cols)]
    else:
        vals = [v for row in m.weights for v in row]
    end = len(vals) - 1
    while end > 0 and vals[end - 1] == vals[-1]:
        end -= 1
    return bytes([rows, cols, int(m.symmetric)] + vals[: end + 1] + [_QM_STOP])


def qm_deserialize(data):
    data = bytes(data)
    if len(data) < 3:
        raise ParseError("QM header truncated", len(data))
    rows, cols, flags = data[0], data[1], data[2]
    if (rows, cols) not in QM_SIZES:
        raise ParseError(f"QM size {rows}x{cols} unsupported", 0)
    if flags > 1:
        raise ParseError(f"unknown QM flags {flags:#x}", 2)
    symmetric = bool(flags)
    if symmetric and rows != cols:
        raise ParseError("symmetric flag on a non-square QM", 2)
    sym = symmetric and rows == 8
    count = rows * (rows + 1) // 2 if sym else rows * cols
    vals = []
    pos = 3
    while True:
        if pos >= len(data):
            raise ParseError("QM values missing stop symbol", pos)
        v = data[pos]
        if v == _QM_STOP:
            break
        if len(vals) == count:
            raise ParseError("QM has more values than its size allows", pos)
        vals.append(v)
        pos += 1
    if not vals:
        raise ParseError("QM has no values before the stop symbol", pos)
    if pos + 1 != len(data):
        raise ParseError("trailing bytes after QM stop symbol", pos + 1)
    vals += [vals[-1]] * (count - len(vals))
    grid = [[0] * cols for _ in range(rows)]
    it = iter(vals)
    for r in range(rows):
        for c in range(r if sym else 0, cols):
            grid[r][c] = next(it)
            if sym:
                grid[c][r] = grid[r][c]
    try:
        return QMatrix(grid, symmetric)
    except ParameterError as exc:
        raise ParseError(str(exc), 3) from None


@dataclass(frozen=True)
class QuantParams:
    base_q_idx: int
    y_dc_delta: int = 0
    uv_dc_delta: int = 0
    bit_depth: int = 8
    qms: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        top = max_qindex(self.bit_depth)
        if not 0 <= self.base_q_idx <= top:
            raise ParameterError(f"base_q_idx {self.base_q_idx} outside [0, {top}]")
        lo, hi = DELTA_RANGE
        for name in ("y_dc_delta", "uv_dc_delta"):
            if not lo <= getattr(self, name) <= hi:
                raise ParameterError(f"{name} outside [{lo}, {hi}]")

    def qindex(self, plane, is_dc):
        return effective_qindex(self, plane, is_dc)

    def qstep(self, plane, is_dc):
        return qstep_from_index(self.qindex(plane, is_dc), self.bit_depth)

    def qm(self, plane, rows, cols):
        """Weight matrix for a TB, or None when unweighted."""
        return self.qms.get((min(plane, 1), rows, cols))


def effective_qindex(params, plane, is_dc):
    """Index actually used for a coefficient; plane 0 is luma."""
    q = params.base_q_idx
    if is_dc:
        q += params.y_dc_delta if plane == 0 else params.uv_dc_delta
    return min(max(q, 0), max_qindex(params.bit_depth))


def scalar_quantize(coeff, qstep, rounding=ROUND_INTRA, weight=QM_UNITY):
    """Dead-zone quantizer; ``rounding`` is the offset in eighths of a step."""
    if qstep <= 0 or weight <= 0:
        raise ParameterError("step and weight must be positive")
    den = qstep * weight
    level = (abs(coeff) * 8192 + rounding * den) // (8 * den)
    return -level if coeff < 0 else level


def dequantize(level, qstep, weight=QM_UNITY, bit_depth=None):
    """``sign * ((|level| * QStep * w) >> 10)``, clipped when ``bit_depth`` is given."""
    mag = (abs(level) * qstep * weight) >> 10
    c = -mag if level < 0 else mag
    if bit_depth is not None:
        c = clip_coeff(c, bit_depth)
    return c


def clip_coeff(c, bit_depth):
    lim = 1 << (7 + bit_depth)
    return min(max(c, -lim), lim - 1)


def quantize_array(coeffs, qstep, rounding=ROUND_INTRA, weights=None):
    """Vectorized :func:`scalar_quantize`; ``qstep`` may be an array."""
    c = np.asarray(coeffs, dtype=np.int64)
    w = QM_UNITY if weights is None else np.asarray(weights, dtype=np.int64)
    den = np.asarray(qstep, dtype=np.int64) * w
    level = (np.abs(c) * 8192 + rounding * den) // (8 * den)
    return np.where(c < 0, -level, level)


def dequantize_array(levels, qstep, weights=None, bit_depth=None):
    lv = np.asarray(levels, dtype=np.int64)
    w = QM_UNITY if weights is None else np.asarray(weights, dtype=np.int64)
    mag = (np.abs(lv) * np.asarray(qstep, dtype=np.int64) * w) >> 10
    c = np.where(lv < 0, -mag, mag)
    if bit_depth is not None:
        lim = 1 << (7 + bit_depth)
        c = np.clip(c, -lim, lim - 1)
    return c


def step_in_coeff_units(qstep, weight=QM_UNITY):
    return qstep * weight / 1024


def default_lambda(qstep, scale=0.12, weight=QM_UNITY):
    """RD multiplier on squared-error units, ``scale * step**2``."""
    return scale * step_in_coeff_units(qstep, weight) ** 2

