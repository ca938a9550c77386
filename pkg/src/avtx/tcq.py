"""Trellis-coded quantization.

Two scalar quantizers share the zero point: Q0 reconstructs at even
multiples of half a step, Q1 at odd multiples.  An 8-state machine driven
by the parity of each coded level picks the quantizer for the next
coefficient.  Coefficients are visited in reverse scan order, the order
the decoder reads them, and the state resets to 0 at the first coded
(EOB) coefficient.

The encoder search is a Viterbi pass over nine states, the eight machine
states plus a "nothing coded yet" state that stands for the zero tail
beyond the EOB, followed by a backtracking pass from the cheapest final
state.

Reconstruction, in units where the step is ``s = QStep * w``::

    Q0:  m = 2 * level
    Q1:  m = 2 * level - 1   (0 for level 0)
    coeff = sign * ((m * s) >> 11)

which matches scalar dequantization exactly for Q0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ParameterError
from .quant import QM_UNITY

N_STATES = 8
ZERO_STATE = N_STATES
Q0, Q1 = 0, 1


def _default_table():
    # Shift-register machine: the next state drops the top bit and appends
    # the parity, flipped by the bit that was shifted out.
    return tuple(tuple(((s << 1) & 6) | (p ^ ((s >> 2) & 1)) for p in (0, 1)) for s in range(N_STATES))


@dataclass(frozen=True)
class TcqStateMachine:
    """Transition table ``next[state][parity]`` and quantizer map."""

    next: tuple = _default_table()
    quantizer: tuple = tuple(s & 1 for s in range(N_STATES))

    def __post_init__(self):
        if len(self.next) != N_STATES or any(len(r) != 2 for r in self.next):
            raise ParameterError("transition table must be 8 x 2")
        if any(not 0 <= t < N_STATES for r in self.next for t in r):
            raise ParameterError("transition target out of range")
        if any(r[0] == r[1] for r in self.next):
            raise ParameterError("parities must lead to distinct states")
        if len(self.quantizer) != N_STATES or set(self.quantizer) - {Q0, Q1}:
            raise ParameterError("quantizer map must give Q0/Q1 for 8 states")

    @classmethod
    def from_config(cls, text):
        """Parse ``s p0 p1 q`` lines (one per state); ``#`` starts a comment."""
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([int(v) for v in line.split()])
        if len(rows) != N_STATES or sorted(r[0] for r in rows) != list(range(N_STATES)):
            raise ParameterError("state machine config needs one line per state 0..7")
        rows.sort()
        return cls(tuple((r[1], r[2]) for r in rows), tuple(r[3] for r in rows))

    def arrays(self):
        return np.array(self.next, dtype=np.int64), np.array(self.quantizer, dtype=np.int64)


DEFAULT_SM = TcqStateMachine()


def next_state(sm, state, parity):
    if not 0 <= state < N_STATES or parity not in (0, 1):
        raise ParameterError(f"bad state/parity {state}/{parity}")
    return sm.next[state][parity]


def quantizer_of(sm, state):
    return sm.quantizer[state]


def tcq_applicability(plane, scan_is_2d, fsc, enabled=True):
    return bool(enabled and plane == 0 and scan_is_2d and not fsc)


def half_index(level, quantizer):
    """Reconstruction index in half steps for a non-negative level."""
    if level == 0:
        return 0
    return 2 * level - (quantizer == Q1)


def tcq_reconstruct(level, quantizer, qstep):
    """Magnitude reconstruction in step units (``level`` >= 0)."""
    if level < 0:
        raise ParameterError("level must be non-negative")
    return half_index(level, quantizer) * qstep // 2


def tcq_dequantize(level, quantizer, qstep, weight=QM_UNITY):
    mag = (half_index(abs(level), quantizer) * qstep * weight) >> 11
    return -mag if level < 0 else mag


def state_sequence(levels_reverse, sm=DEFAULT_SM):
    """States in force for each level of a reverse-order run from the EOB."""
    states = []
    s = 0
    for lv in levels_reverse:
        states.append(s)
        s = sm.next[s][abs(lv) & 1]
    return states


def tcq_dequantize_scan(levels, qsteps, weights=None, sm=DEFAULT_SM):
    """Decoder-side replay: reconstruct a scan-ordered level vector."""
    levels = [int(v) for v in levels]
    n = len(levels)
    w = [QM_UNITY] * n if weights is None else [int(v) for v in weights]
    qs = [int(qsteps)] * n if np.isscalar(qsteps) else [int(v) for v in qsteps]
    eob = _eob(levels)
    out = [0] * n
    s = 0
    for i in range(eob - 1, -1, -1):
        out[i] = tcq_dequantize(levels[i], sm.quantizer[s], qs[i], w[i])
        s = sm.next[s][abs(levels[i]) & 1]
    return out


def _eob(levels):
    for i in range(len(levels) - 1, -1, -1):
        if levels[i]:
            return i + 1
    return 0


# --- rate model ---------------------------------------------------------


def eg0_bits(v):
    return 2 * (int(v) + 1).bit_length() - 1


@dataclass
class RateModel:
    """Separable rate estimate in 1/512 bit.

    ``level[i, q, k]`` is the cost of magnitude ``k`` (sign included) at scan
    position ``i`` under quantizer ``q`` for ``k < K - 1``; larger magnitudes
    cost ``level[i, q, K-1]`` plus an order-0 Exp-Golomb suffix for
    ``k - (K-1)``.  ``eob[e]`` is the cost of signalling EOB ``e``
    (``e = 0`` means the all-zero block).
    """

    level: np.ndarray
    eob: np.ndarray

    def __post_init__(self):
        self.level = np.ascontiguousarray(self.level, dtype=np.int64)
        self.eob = np.ascontiguousarray(self.eob, dtype=np.int64)
        if self.level.ndim != 3 or self.level.shape[1] != 2 or self.eob.shape != (self.level.shape[0] + 1,):
            raise ParameterError("rate model shapes must be (n, 2, K) and (n + 1,)")

    @property
    def n(self):
        return self.level.shape[0]

    def cost(self, i, q, k):
        top = self.level.shape[2] - 1
        if k < top:
            return int(self.level[i, q, k])
        return int(self.level[i, q, top]) + 512 * eg0_bits(k - top)

    @classmethod
    def simple(cls, n, k=16):
        """Static estimate: cheap zeros near the end of the scan, ~unary levels."""
        pos = np.arange(n)[:, None, None]
        lv = np.arange(k)[None, None, :]
        zero = 256 + 256 * (pos < n // 4)
        nz = 1024 + 512 + 600 * lv + 8 * pos
        tab = np.where(lv == 0, zero, nz) * np.ones((1, 2, 1), dtype=np.int64)
        eob = 512 * np.array([1] + [1 + 2 * e.bit_length() for e in range(1, n + 1)])
        return cls(tab.astype(np.int64), eob)


def evaluate_cost(coeffs, levels, steps, lam, rate, sm=DEFAULT_SM):
    """Total ``D + lam * R`` of a level assignment.

    Written independently of the search: walks the decoder's order with the
    reference state machine and charges every term explicitly.  ``steps`` is
    ``QStep * w`` per position (or a scalar); distortion is in squared
    coefficient units.
    """
    n = len(coeffs)
    st = [int(steps)] * n if np.isscalar(steps) else [int(v) for v in steps]
    eob = _eob(list(levels))
    total = 0.0
    for i in range(eob, n):
        total += float(coeffs[i]) ** 2
    s = 0
    bits = rate.eob[eob]
    for i in range(eob - 1, -1, -1):
        lv = abs(int(levels[i]))
        q = sm.quantizer[s]
        rec = half_index(lv, q) * st[i] / 2048.0
        total += (abs(float(coeffs[i])) - rec) ** 2
        bits += rate.cost(i, q, lv)
        s = sm.next[s][lv & 1]
    return total + lam * bits / 512.0


# --- search ---------------------------------------------------------------


@njit(cache=True)
def _eg0(v):
    b = 0
    v += 1
    while v:
        b += 1
        v >>= 1
    return 2 * b - 1


@njit(cache=True)
def _level_rate(tab, i, q, k):
    top = tab.shape[2] - 1
    if k < top:
        return tab[i, q, k]
    return tab[i, q, top] + 512 * _eg0(k - top)


@njit(cache=True)
def _viterbi(a, steps, lam, tab, eobc, cands, start, nxt, qmap):
    n = a.shape[0]
    inf = 1e300
    cost = np.full(9, inf)
    cost[8] = 0.0
    # Zero tail past the search start is fixed.
    tail = 0.0
    for i in range(start, n):
        tail += float(a[i]) * float(a[i])
    cost[8] = tail
    back_state = np.full((n, 9), -1, np.int64)
    back_level = np.zeros((n, 9), np.int64)
    scale = lam / 512.0
    for i in range(start - 1, -1, -1):
        new = np.full(9, inf)
        ai = float(a[i])
        st = float(steps[i]) / 2048.0
        for s in range(9):
            c0 = cost[s]
            if c0 >= inf:
                continue
            if s == 8:
                # Stay all-zero, or code the EOB coefficient from state 0.
                d = c0 + ai * ai
                if d < new[8]:
                    new[8] = d
                    back_state[i, 8] = 8
                    back_level[i, 8] = 0
                q = qmap[0]
                for j in range(cands.shape[2]):
                    k = cands[i, q, j]
                    if k <= 0:
                        continue
                    r = ai - (2 * k - q) * st
                    d = c0 + r * r + scale * (_level_rate(tab, i, q, k) + eobc[i + 1])
                    t = nxt[0, k & 1]
                    if d < new[t]:
                        new[t] = d
                        back_state[i, t] = 8
                        back_level[i, t] = k
            else:
                q = qmap[s]
                for j in range(cands.shape[2]):
                    k = cands[i, q, j]
                    if k < 0:
                        continue
                    m = 0 if k == 0 else 2 * k - q
                    r = ai - m * st
                    d = c0 + r * r + scale * _level_rate(tab, i, q, k)
                    t = nxt[s, k & 1]
                    if d < new[t]:
                        new[t] = d
                        back_state[i, t] = s
                        back_level[i, t] = k
        cost = new
    cost[8] += scale * eobc[0]
    best = 0
    for s in range(1, 9):
        if cost[s] < cost[best]:
            best = s
    levels = np.zeros(n, np.int64)
    s = best
    for i in range(0, start):
        levels[i] = back_level[i, s]
        s = back_state[i, s]
    return levels, cost[best], best


def _candidates(a, steps, full_cap):
    n = a.shape[0]
    if full_cap is not None:
        c = np.arange(full_cap + 1, dtype=np.int64)
        return np.broadcast_to(c, (n, 2, full_cap + 1)).copy()
    x = a.astype(np.float64) * 2048.0 / steps.astype(np.float64)
    l0 = np.floor(x / 2 + 0.5).astype(np.int64)
    l1 = np.floor((x + 1) / 2 + 0.5).astype(np.int64)
    out = np.empty((n, 2, 4), dtype=np.int64)
    for q, est in ((0, l0), (1, l1)):
        out[:, q, 0] = est - 1
        out[:, q, 1] = est
        out[:, q, 2] = est + 1
        out[:, q, 3] = 0
    # Duplicated zeros and negatives are skipped by the search.
    out[:, :, :3][out[:, :, :3] == 0] = -1
    return out


def scalar_start(a, steps):
    """One past the last position whose Q0 nearest level is nonzero."""
    nz = np.flatnonzero(a.astype(np.float64) * 1024.0 / steps >= 0.5)
    return int(nz[-1]) + 1 if nz.size else 0


@dataclass
class TrellisResult:
    levels: np.ndarray
    eob: int
    final_state: int
    cost: float


def trellis_quantize(coeffs, steps, lam, rate=None, sm=DEFAULT_SM, full_cap=None):
    """Joint level/EOB decision for one scan-ordered coefficient vector.

    ``steps`` is ``QStep * w`` per position (scalar allowed).  With
    ``full_cap`` every level ``0..full_cap`` is tried at every position and
    the whole scan is searched; otherwise candidates are pruned to
    ``{l-1, l, l+1, 0}`` around each quantizer's nearest level and the search
    starts at the last scalar-nonzero position.
    """
    c = np.asarray(coeffs, dtype=np.int64).ravel()
    n = c.shape[0]
    if n == 0:
        raise ParameterError("empty scan")
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    st = np.broadcast_to(np.asarray(steps, dtype=np.int64), (n,)).copy()
    if np.any(st <= 0):
        raise ParameterError("steps must be positive")
    rate = RateModel.simple(n) if rate is None else rate
    if rate.n != n:
        raise ParameterError("rate model length does not match the scan")
    a = np.abs(c)
    cands = _candidates(a, st, full_cap)
    start = n if full_cap is not None else scalar_start(a, st)
    nxt, qmap = sm.arrays()
    mags, cost, final = _viterbi(a, st, float(lam), rate.level, rate.eob, cands, start, nxt, qmap)
    levels = np.where(c < 0, -mags, mags)
    return TrellisResult(levels, _eob(levels.tolist()), int(final), float(cost))


def greedy_quantize(coeffs, steps, sm=DEFAULT_SM):
    """Nearest-reconstruction walk through the state machine (reference path)."""
    c = np.asarray(coeffs, dtype=np.int64).ravel()
    n = c.shape[0]
    st = np.broadcast_to(np.asarray(steps, dtype=np.int64), (n,))
    a = np.abs(c)
    levels = [0] * n
    s = 0
    for i in range(scalar_start(a, st) - 1, -1, -1):
        q = sm.quantizer[s]
        x = float(a[i]) * 2048.0 / float(st[i])
        best = min(range(max(0, int(x // 2) - 1), int(x // 2) + 3), key=lambda k: (abs(x - half_index(k, q)), k))
        levels[i] = -best if c[i] < 0 else best
        s = sm.next[s][best & 1]
    return np.array(levels, dtype=np.int64)
