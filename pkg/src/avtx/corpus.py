"""Residual corpus files ("AVRC") and a seeded synthesizer.

Layout, little-endian::

    "AVRC"  u16 version  u8 bit_depth  u8 chroma (0 = 4:2:0, 1 = 4:4:4)
    u32 block_count
    { u16 w  u16 h  u8 planes  u8 pred_tag  int16 samples (Y, then U, V) } * block_count

Samples are row-major.  Magnitudes must stay below ``2^(bit_depth + 1)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import Prediction, chroma_dims
from .errors import ParameterError, ParseError, UnsupportedVersionError
from .partition import CB_SIZES, IntraMode, MAX_ASPECT

MAGIC = b"AVRC"
VERSION = 1
_CHROMA = {"420": 0, "444": 1}


@dataclass
class ResidualBlock:
    planes: list
    pred: Prediction = Prediction()

    @property
    def h(self):
        return self.planes[0].shape[0]

    @property
    def w(self):
        return self.planes[0].shape[1]


@dataclass
class ResidualCorpus:
    bit_depth: int = 8
    chroma: str = "420"
    blocks: list = field(default_factory=list)

    def validate(self):
        lim = 1 << (self.bit_depth + 1)
        for i, b in enumerate(self.blocks):
            cw, ch = chroma_dims(b.w, b.h, self.chroma)
            if len(b.planes) not in (1, 3):
                raise ParameterError(f"block {i}: {len(b.planes)} planes")
            for p in b.planes[1:]:
                if p.shape != (ch, cw):
                    raise ParameterError(f"block {i}: chroma shape {p.shape} != {(ch, cw)}")
            for p in b.planes:
                if p.size and int(np.abs(p).max()) >= lim:
                    raise ParameterError(f"block {i}: sample magnitude reaches 2^{self.bit_depth + 1}")

    def to_bytes(self):
        self.validate()
        out = bytearray(MAGIC)
        out += struct.pack("<HBBI", VERSION, self.bit_depth, _CHROMA[self.chroma], len(self.blocks))
        for b in self.blocks:
            out += struct.pack("<HHBB", b.w, b.h, len(b.planes), b.pred.tag)
            for p in b.planes:
                out += np.ascontiguousarray(p, dtype="<i2").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if data[:4] != MAGIC:
            raise ParseError("bad magic, not an AVRC corpus", 0)
        if len(data) < 12:
            raise ParseError("truncated corpus header", len(data))
        ver, bd, chroma, count = struct.unpack_from("<HBBI", data, 4)
        if ver != VERSION:
            raise UnsupportedVersionError(f"corpus version {ver} unsupported", 4)
        if chroma not in (0, 1):
            raise ParseError(f"chroma code {chroma}", 7)
        fmt = "420" if chroma == 0 else "444"
        pos = 12
        blocks = []
        for i in range(count):
            if pos + 6 > len(data):
                raise ParseError(f"block {i} header truncated", pos)
            w, h, planes, tag = struct.unpack_from("<HHBB", data, pos)
            at = pos
            pos += 6
            try:
                pred = Prediction.from_tag(tag)
            except ParameterError as exc:
                raise ParseError(f"block {i}: {exc}", at) from None
            if planes not in (1, 3):
                raise ParseError(f"block {i}: plane count {planes}", at)
            cw, ch = chroma_dims(w, h, fmt)
            shapes = [(h, w)] + [(ch, cw)] * (planes - 1)
            arrs = []
            for shp in shapes:
                n = shp[0] * shp[1] * 2
                if pos + n > len(data):
                    raise ParseError(f"block {i} samples truncated", pos)
                arrs.append(np.frombuffer(data, dtype="<i2", count=n // 2, offset=pos).astype(np.int64).reshape(shp))
                pos += n
            blocks.append(ResidualBlock(arrs, pred))
        if pos != len(data):
            raise ParseError("trailing bytes after the last block", pos)
        corpus = cls(bd, fmt, blocks)
        try:
            corpus.validate()
        except ParameterError as exc:
            raise ParseError(str(exc)) from None
        return corpus

    def write(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


CB_SHAPES = tuple((w, h) for w in CB_SIZES for h in CB_SIZES if max(w, h) <= MAX_ASPECT * min(w, h))


def synth_plane(rng, h, w, amp, kind):
    """Residual-like content: smooth ramps plus noise, sparse spikes, or
    flat screen-content patches."""
    if kind == 0:
        gy, gx = rng.normal(0, amp / 8, 2)
        base = np.add.outer(np.arange(h) * gy, np.arange(w) * gx)
        x = base - base.mean() + rng.laplace(0, amp / 6, (h, w))
    elif kind == 1:
        x = rng.laplace(0, amp / 3, (h, w)) * (rng.random((h, w)) < 0.08)
    else:
        vals = rng.integers(-amp, amp + 1, 3)
        x = vals[rng.integers(0, 3, (h, w))] * (rng.random((h, w)) < 0.4)
    return np.rint(x).astype(np.int64)


def synth_corpus(n, seed=0, bit_depth=8, chroma="420", planes=3, amp=None):
    rng = np.random.default_rng(seed)
    lim = (1 << (bit_depth + 1)) - 1
    amp = amp or (1 << (bit_depth - 2))
    blocks = []
    for _ in range(n):
        w, h = CB_SHAPES[rng.integers(len(CB_SHAPES))]
        inter = bool(rng.random() < 0.4)
        pred = Prediction(inter, IntraMode(int(rng.integers(len(IntraMode)))) if not inter else IntraMode.DC_PRED)
        kind = int(rng.integers(3))
        ps = [synth_plane(rng, h, w, amp, kind)]
        if planes == 3:
            cw, ch = chroma_dims(w, h, chroma)
            ps += [synth_plane(rng, ch, cw, amp // 2, kind) for _ in range(2)]
        blocks.append(ResidualBlock([np.clip(p, -lim, lim) for p in ps], pred))
    return ResidualCorpus(bit_depth, chroma, blocks)
