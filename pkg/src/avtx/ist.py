"""Intra/inter secondary transform.

A reduced non-separable transform over the low-frequency corner of the
primary coefficients.  The support region is read in diagonal-scan order
into ``v`` (length N), ``u = K v`` keeps M < N outputs, which are written
back to the first M support positions; the remaining support positions
become zero.  The inverse reads those M values and applies ``K^T``.

Kernels are 8-bit with rows of norm 128, so both directions use
``(x + 64) >> 7``.

Kernel classes and registry sizes (1 byte per entry)::

    small       8 x 16   TB < 8x8            14 sets x 3 =  42 kernels  5.25 KB
    large-dct  32 x 48   TB >= 8x8, DCT_DCT   7 sets x 3 =  21 kernels
    large-adst 20 x 48   TB >= 8x8, ADST      4 sets x 3 =  12 kernels
                                              large total              42.75 KB
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .scans import scan_order
from .transforms import TX_AXES

IST_SEED = 0x1F7
DATA_PATH = Path(__file__).with_name("data") / "ist_v1.json"
KERNELS_PER_SET = 3
SHIFT = 7

# name: (M, N, sets)
CLASSES = {
    "small": (8, 16, 14),
    "large-dct": (32, 48, 7),
    "large-adst": (20, 48, 4),
}


@lru_cache(maxsize=None)
def support_mask(size_class):
    """(row, col) support positions in vector order."""
    if size_class == "small":
        pos = scan_order(4, 4)
    else:
        pos = scan_order(8, 8)[:48]
    out = np.array(pos, dtype=np.int64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class IstKernel:
    matrix: np.ndarray
    size_class: str
    set_index: int
    kernel_index: int

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    @property
    def mask(self):
        return support_mask(self.size_class)


def _generate(size_class, set_index, kernel_index, seed=IST_SEED):
    m, n, _ = CLASSES[size_class]
    cls_id = list(CLASSES).index(size_class)
    rng = np.random.default_rng([seed, cls_id, set_index, kernel_index])
    q, r = np.linalg.qr(rng.normal(size=(n, m)))
    q = q * np.sign(np.diag(r))
    return np.clip(np.rint(128 * q.T), -127, 127).astype(np.int64)


def build_registry(seed=IST_SEED):
    return {
        name: np.stack([_generate(name, s, k, seed) for s in range(sets) for k in range(KERNELS_PER_SET)])
        for name, (_, _, sets) in CLASSES.items()
    }


def write_registry(path=DATA_PATH, seed=IST_SEED):
    reg = build_registry(seed)
    doc = {
        "version": 1,
        "seed": seed,
        "kernels_per_set": KERNELS_PER_SET,
        "classes": {
            k: {"shape": list(v.shape), "int8": base64.b64encode(v.astype(np.int8).tobytes()).decode()} for k, v in reg.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


@lru_cache(maxsize=None)
def _registry():
    doc = json.loads(DATA_PATH.read_text())
    out = {}
    for name, rec in doc["classes"].items():
        a = np.frombuffer(base64.b64decode(rec["int8"]), dtype=np.int8).astype(np.int64).reshape(rec["shape"])
        a.setflags(write=False)
        out[name] = a
    return out


def registry_bytes():
    """ROM bytes per class at one byte per entry."""
    return {k: int(v.size) for k, v in _registry().items()}


def num_sets(size_class):
    return CLASSES[size_class][2]


def size_class_for(h, w, tx_type):
    if min(h, w) < 8:
        return "small"
    return "large-dct" if TX_AXES[tx_type] == ("DCT", "DCT") else "large-adst"


def ist_kernel_lookup(set_index, kernel_index, size_class):
    if size_class not in CLASSES:
        raise ParameterError(f"unknown IST class {size_class!r}")
    if not 0 <= set_index < num_sets(size_class):
        raise ParameterError(f"IST set {set_index} out of range for {size_class}")
    if not 0 <= kernel_index < KERNELS_PER_SET:
        raise ParameterError(f"IST kernel {kernel_index} out of range")
    mat = _registry()[size_class][set_index * KERNELS_PER_SET + kernel_index]
    return IstKernel(mat, size_class, set_index, kernel_index)


def ist_eligibility(plane, is_inter, tx_type):
    if plane != 0:
        return False
    v, h = TX_AXES[tx_type]
    if is_inter:
        return v == h == "DCT"
    return v in ("DCT", "ADST") and h in ("DCT", "ADST")


def gather_support(coeffs, kernel):
    mask = kernel.mask
    h, w = coeffs.shape[-2:]
    if h < 4 or w < 4 or mask[:, 0].max() >= h or mask[:, 1].max() >= w:
        raise ParameterError(f"IST support does not fit a {h}x{w} block")
    return coeffs[..., mask[:, 0], mask[:, 1]]


def scatter_support(coeffs, kernel, vec):
    mask = kernel.mask
    out = np.array(coeffs, copy=True)
    out[..., mask[:, 0], mask[:, 1]] = vec
    return out


def _round_shift(x):
    return (x + (1 << (SHIFT - 1))) >> SHIFT


def ist_forward(v, kernel):
    return _round_shift(np.asarray(v, dtype=np.int64) @ kernel.matrix.T)


def ist_inverse(u, kernel):
    return _round_shift(np.asarray(u, dtype=np.int64) @ kernel.matrix)


def apply_forward(coeffs, kernel):
    """Primary coefficients to IST-domain coefficients (support rewritten)."""
    u = ist_forward(gather_support(coeffs, kernel), kernel)
    vec = np.zeros(u.shape[:-1] + (kernel.n,), dtype=np.int64)
    vec[..., : kernel.m] = u
    return scatter_support(coeffs, kernel, vec)


def apply_inverse(coeffs, kernel):
    u = gather_support(coeffs, kernel)[..., : kernel.m]
    return scatter_support(coeffs, kernel, ist_inverse(u, kernel))


def mults_per_pixel(size_class, h, w):
    """Multiplications per output pixel of one inverse IST on an h x w TB."""
    m, n, _ = CLASSES[size_class]
    return m * n / (h * w)


if __name__ == "__main__":
    write_registry()
