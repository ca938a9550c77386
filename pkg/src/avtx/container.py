"""AVTX container: config plus an ordered list of coded CB records.

Layout, little-endian::

    "AVTX"  u16 version
    u32 config_len  config (key=value text, UTF-8)
    u16 qm_count    { u8 plane_kind  u16 len  serialized QM } * qm_count
    u32 record_count
    { u16 w  u16 h  u8 planes  u8 pred_tag  u32 payload_len  payload  u64 digest } * record_count

``pred_tag`` is the intra mode index or 255 for inter.  The digest is the
64-bit FNV-1a of the CB's levels as little-endian int32 in coding order.
"""

from __future__ import annotations

import struct
from pathlib import Path

from .codec import BlockRecord, CodecConfig, Prediction
from .errors import AvtxError, ParseError, UnsupportedVersionError
from .quant import qm_deserialize, qm_serialize

MAGIC = b"AVTX"
VERSION = 1


def container_bytes(cfg, records):
    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    text = cfg.to_text().encode()
    out += struct.pack("<I", len(text)) + text
    qms = sorted(cfg.qms.items())
    out += struct.pack("<H", len(qms))
    for (kind, rows, cols), m in qms:
        if m.shape != (rows, cols):
            raise AvtxError(f"QM keyed {rows}x{cols} has shape {m.shape}")
        blob = qm_serialize(m)
        out += struct.pack("<BH", kind, len(blob)) + blob
    out += struct.pack("<I", len(records))
    for r in records:
        out += struct.pack("<HHBBI", r.w, r.h, r.planes, r.pred.tag, len(r.payload))
        out += r.payload
        out += struct.pack("<Q", r.digest)
    return bytes(out)


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated {what}", self.pos)
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_container(data):
    data = bytes(data)
    cur = _Cursor(data)
    if cur.take(4, "magic") != MAGIC:
        raise ParseError("bad magic, not an AVTX container", 0)
    (ver,) = cur.unpack("<H", "version")
    if ver != VERSION:
        raise UnsupportedVersionError(f"container version {ver} unsupported (expected {VERSION})", 4)
    (n,) = cur.unpack("<I", "config length")
    at = cur.pos
    try:
        text = cur.take(n, "config").decode()
    except UnicodeDecodeError:
        raise ParseError("config block is not UTF-8", at) from None
    (nq,) = cur.unpack("<H", "QM count")
    qms = {}
    for _ in range(nq):
        kind, ln = cur.unpack("<BH", "QM header")
        at = cur.pos
        try:
            m = qm_deserialize(cur.take(ln, "QM"))
        except ParseError as exc:
            raise ParseError(f"QM: {exc}", at) from None
        qms[(kind, *m.shape)] = m
    try:
        cfg = CodecConfig.from_text(text, qms)
    except AvtxError as exc:
        raise ParseError(f"config: {exc}", 10) from None
    (count,) = cur.unpack("<I", "record count")
    records = []
    for i in range(count):
        at = cur.pos
        w, h, planes, tag, ln = cur.unpack("<HHBBI", f"record {i} header")
        payload = cur.take(ln, f"record {i} payload")
        (digest,) = cur.unpack("<Q", f"record {i} digest")
        try:
            pred = Prediction.from_tag(tag)
        except AvtxError as exc:
            raise ParseError(f"record {i}: {exc}", at) from None
        if planes not in (1, 3):
            raise ParseError(f"record {i}: plane count {planes}", at)
        records.append(BlockRecord(w, h, planes, pred, payload, digest))
    if cur.pos != len(data):
        raise ParseError("trailing bytes after the last record", cur.pos)
    return cfg, records


def container_write(path, cfg, records):
    Path(path).write_bytes(container_bytes(cfg, records))


def container_read(path):
    return parse_container(Path(path).read_bytes())
