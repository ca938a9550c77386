"""Deterministic generator for the integer primary-transform kernels.

The shipped table ``data/kernels_v1.json`` is the output of :func:`build_all`
for ``KERNEL_SEED``; ``python -m avtx.kernelgen`` rewrites it.

Integerization: each basis is scaled by ``64 * sqrt(N)`` and rounded, then
a greedy search nudges entries by +-1 (singly or in pairs within a row,
never more than 3 away from the scaled float value) while that lowers
``||K K^T - 4096 N I||^2``.  DCT-II kernels keep the even/odd structure:
even rows are the half-size DCT mirrored, odd rows a DCT-IV block
anti-mirrored, so even/odd cross products are exactly zero and only the
DCT-IV blocks need searching.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
from numba import njit

KERNEL_SEED = 0xA5
DATA_PATH = Path(__file__).with_name("data") / "kernels_v1.json"
MAX_DEV = 3.0


def dct2_basis(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    b = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2 / n)
    b[0] /= math.sqrt(2)
    return b


def dct4_basis(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    return np.cos(np.pi * (2 * i + 1) * (2 * k + 1) / (4 * n)) * math.sqrt(2 / n)


def dst4_basis(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    return np.sin(np.pi * (2 * i + 1) * (2 * k + 1) / (4 * n)) * math.sqrt(2 / n)


def dst7_basis(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    return np.sin(np.pi * (2 * i + 1) * (k + 1) / (2 * n + 1)) * (2 / math.sqrt(2 * n + 1))


def ladst8_basis(seed):
    # Stand-in for the learned 8-point ADST: DST-IV nudged by small seeded
    # Givens rotations between neighbouring basis rows.
    b = dst4_basis(8)
    rng = np.random.default_rng([seed, 8, 1])
    for k in range(7):
        t = rng.uniform(-0.06, 0.06)
        c, s = math.cos(t), math.sin(t)
        b[[k, k + 1]] = np.array([[c, s], [-s, c]]) @ b[[k, k + 1]]
    return b


def ddt_basis(n, seed):
    # KLT of a seeded inter-like residual covariance: AR(1) with rho 0.7 plus
    # a little random structure, rows ordered by decreasing eigenvalue.
    rng = np.random.default_rng([seed, n, 2])
    i = np.arange(n)
    cov = 0.7 ** np.abs(i[:, None] - i[None, :])
    noise = rng.normal(0, 0.02, (n, n))
    cov = cov + noise @ noise.T
    w, v = np.linalg.eigh(cov)
    b = v[:, np.argsort(w)[::-1]].T.copy()
    for row in b:
        j = np.flatnonzero(np.abs(row) > 1e-9)[0]
        if row[j] < 0:
            row *= -1
    return b


@njit(cache=True)
def _gram_cost(m, c):
    n = m.shape[0]
    s = 0.0
    for a in range(n):
        for b in range(a, n):
            g = 0.0
            for i in range(n):
                g += m[a, i] * m[b, i]
            if a == b:
                g -= c
                s += g * g
            else:
                s += 2 * g * g
    return s


@njit(cache=True)
def _refine(m, f, c, maxdev, rounds):
    n = m.shape[0]
    best = _gram_cost(m, c)
    for _ in range(rounds):
        improved = False
        for r in range(n):
            for j in range(n):
                for j2 in range(-1, n):
                    if j2 == j:
                        continue
                    for d in (1, -1):
                        for d2 in (1, -1):
                            if j2 == -1 and d2 == -1:
                                continue
                            v = m[r, j] + d
                            if abs(v - f[r, j]) > maxdev or abs(v) > 127:
                                continue
                            v2 = 0.0
                            if j2 >= 0:
                                v2 = m[r, j2] + d2
                                if abs(v2 - f[r, j2]) > maxdev or abs(v2) > 127:
                                    continue
                            o1 = m[r, j]
                            o2 = m[r, j2] if j2 >= 0 else 0.0
                            m[r, j] = v
                            if j2 >= 0:
                                m[r, j2] = v2
                            cost = _gram_cost(m, c)
                            if cost < best - 1e-9:
                                best = cost
                                improved = True
                            else:
                                m[r, j] = o1
                                if j2 >= 0:
                                    m[r, j2] = o2
        if not improved:
            break
    return m


def integerize(b, rounds=60):
    """Scale a float orthonormal basis to 8-bit integers, then refine."""
    n = b.shape[0]
    f = 64 * math.sqrt(n) * b
    m = np.clip(np.rint(f), -127, 127)
    if n == 2:
        return _best_rotation2(f)
    return _refine(m, f, 4096.0 * n, MAX_DEV, rounds).astype(np.int64)


def _best_rotation2(f):
    # [[a, b], [b, -a]] is exactly orthogonal; pick the pair whose norm is
    # closest to 8192 within reach of the float entries.
    a0, b0 = abs(f[0, 0]), abs(f[0, 1])
    best = None
    for a in range(int(a0) - 3, int(a0) + 4):
        for b in range(int(b0) - 3, int(b0) + 4):
            key = (abs(a * a + b * b - 8192), abs(a - a0) + abs(b - b0))
            if best is None or key < best[0]:
                best = (key, a, b)
    _, a, b = best
    return np.array([[a, b], [b, -a]], dtype=np.int64)


def dct2_integer(n):
    if n == 2:
        return np.array([[64, 64], [64, -64]], dtype=np.int64)
    h = n // 2
    even = dct2_integer(h)
    odd = integerize(dct4_basis(h))
    k = np.zeros((n, n), dtype=np.int64)
    k[0::2, :h] = even
    k[0::2, h:] = even[:, ::-1]
    k[1::2, :h] = odd
    k[1::2, h:] = -odd[:, ::-1]
    return k


def build_all(seed=KERNEL_SEED):
    out = {}
    for n in (4, 8, 16, 32):
        out[f"DCT2_{n}"] = dct2_integer(n)
    out["DST4_4"] = integerize(dst4_basis(4))
    out["LADST8_8"] = integerize(ladst8_basis(seed))
    out["DST7_16"] = integerize(dst7_basis(16))
    out["DDT8_8"] = integerize(ddt_basis(8, seed))
    out["DDT16_16"] = integerize(ddt_basis(16, seed))
    return out


def write_table(path=DATA_PATH, seed=KERNEL_SEED):
    table = {k: v.tolist() for k, v in build_all(seed).items()}
    doc = {"version": 1, "seed": seed, "scale": "64*sqrt(N)", "kernels": table}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_table(path=DATA_PATH):
    doc = json.loads(Path(path).read_text())
    return doc["seed"], {k: np.array(v, dtype=np.int64) for k, v in doc["kernels"].items()}


if __name__ == "__main__":
    write_table(sys.argv[1] if len(sys.argv) > 1 else DATA_PATH)
