"""Coefficient scan orders.

2D blocks use one up-right diagonal scan regardless of shape: anti-diagonals
``r + c = d`` in increasing ``d``, each walked from bottom-left to
top-right.  1D transforms scan row by row (vertical 1D) or column by column
(horizontal 1D).
"""

from __future__ import annotations

from enum import IntEnum
from functools import lru_cache

import numpy as np


class ScanClass(IntEnum):
    DIAG = 0
    ROW = 1
    COL = 2


@lru_cache(maxsize=None)
def _scan(h, w, cls):
    if cls == ScanClass.ROW:
        pos = [(r, c) for r in range(h) for c in range(w)]
    elif cls == ScanClass.COL:
        pos = [(r, c) for c in range(w) for r in range(h)]
    else:
        pos = [(r, d - r) for d in range(h + w - 1) for r in range(min(d, h - 1), -1, -1) if d - r < w]
    arr = np.array(pos, dtype=np.int64).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def scan_order(h, w, cls=ScanClass.DIAG):
    """``(h*w, 2)`` array of (row, col) positions in scan order."""
    return _scan(int(h), int(w), ScanClass(cls))


@lru_cache(maxsize=None)
def _flat(h, w, cls):
    rc = _scan(h, w, cls)
    out = rc[:, 0] * w + rc[:, 1]
    out.setflags(write=False)
    return out


def scan_index(h, w, cls=ScanClass.DIAG):
    """Raster indices in scan order, for ``block.ravel()[idx]``."""
    return _flat(int(h), int(w), ScanClass(cls))


def to_scan(block, cls=ScanClass.DIAG):
    h, w = block.shape
    return np.asarray(block).ravel()[scan_index(h, w, cls)]


def from_scan(vec, h, w, cls=ScanClass.DIAG):
    out = np.zeros(h * w, dtype=np.asarray(vec).dtype)
    out[scan_index(h, w, cls)] = vec
    return out.reshape(h, w)
