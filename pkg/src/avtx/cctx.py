"""Cross-chroma component transform: a 2D rotation of colocated Cb/Cr pairs.

Angles are integerized at scale 256.  The 30 degree pair (220, 131) is the
closest pair to the true angle whose rotate/transpose round trip stays
within +-1 over the full 12-bit input range; (222, 128) and (221, 129) miss
that bound.  The other angles reuse it through the complement relations,
so rotations 90 degrees apart give exactly swapped magnitudes.

Rounding is symmetric (half away from zero) so negating an input negates
the output exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ConformanceError, ParameterError

ANGLES = (0, 45, 30, 60, -45, -30, -60)
_C30, _S30 = 220, 131
_C45 = 181

# (cos, sin) * 256 per mode index.
ROTATIONS = (
    (256, 0),
    (_C45, _C45),
    (_C30, _S30),
    (_S30, _C30),
    (_C45, -_C45),
    (_C30, -_S30),
    (_S30, -_C30),
)
NUM_MODES = len(ANGLES)


def mode_of_angle(deg):
    return ANGLES.index(deg)


def _rs(y):
    y = np.asarray(y, dtype=np.int64)
    return np.sign(y) * ((np.abs(y) + 128) >> 8)


def _rot(mode):
    if not 0 <= mode < NUM_MODES:
        raise ParameterError(f"CCTX mode {mode} outside 0..{NUM_MODES - 1}")
    return ROTATIONS[mode]


def cctx_forward(xu, xv, mode):
    """(Cb, Cr) -> (C1, C2).  Works elementwise on arrays."""
    if mode == 0:
        return np.array(xu, dtype=np.int64, copy=True), np.array(xv, dtype=np.int64, copy=True)
    c, s = _rot(mode)
    xu = np.asarray(xu, dtype=np.int64)
    xv = np.asarray(xv, dtype=np.int64)
    return _rs(c * xu + s * xv), _rs(-s * xu + c * xv)


def cctx_inverse(c1, c2, mode):
    if mode == 0:
        return np.array(c1, dtype=np.int64, copy=True), np.array(c2, dtype=np.int64, copy=True)
    c, s = _rot(mode)
    c1 = np.asarray(c1, dtype=np.int64)
    c2 = np.asarray(c2, dtype=np.int64)
    return _rs(c * c1 - s * c2), _rs(s * c1 + c * c2)


def complement(mode):
    """Mode whose angle is 90 degrees below, where one exists in the set."""
    pairs = {2: 6, 1: 4, 3: 5}
    return pairs.get(mode)


def cctx_signal_constraint(c1_all_zero, c2_all_zero):
    """True when the plane pattern is allowed (no zero C1 with nonzero C2)."""
    return not (c1_all_zero and not c2_all_zero)


def check_planes(c1, c2):
    if not cctx_signal_constraint(not np.any(c1), not np.any(c2)):
        raise ConformanceError("CCTX with an all-zero C1 plane and nonzero C2 plane")


def choose_mode(xu, xv, candidates=range(NUM_MODES)):
    """Encoder pick: smallest L1 energy after rotation, skipping modes that
    would leave an all-zero C1 with a nonzero C2."""
    best = None
    for m in candidates:
        a, b = cctx_forward(xu, xv, m)
        if not cctx_signal_constraint(not a.any(), not b.any()):
            continue
        cost = int(np.abs(a).sum() + np.abs(b).sum())
        if best is None or cost < best[0]:
            best = (cost, m)
    return 0 if best is None else best[1]
