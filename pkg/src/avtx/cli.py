"""``avtx`` command-line front end.

Exit codes: 0 success, 1 verification mismatch, 2 usage error,
3 input/parameter error (with byte offsets where known), 4 conformance error
in a coded stream.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .codec import CodecConfig, CodecSession, Stats
from .container import container_bytes, container_read
from .corpus import ResidualBlock, ResidualCorpus, synth_corpus
from .entropy import cdf_memory_report
from .errors import AvtxError, ConformanceError, ParameterError, TruncationError
from .partition import IntraMode, mdtx_table
from .quant import QMatrix
from .syntax import LAYOUT, PARA, default_bank
from .transforms import all_kernels

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_INPUT, EXIT_CONFORMANCE = range(5)
PASSES = ("BR", "LR", "HR", "sign", "EOB", "tx", "partition", "cctx", "fsc", "other")
TOOLS = ("tcq", "ph", "fsc", "ist", "cctx", "lossless", "rbr")


class Mismatch(Exception):
    pass


# --- configuration ---------------------------------------------------------


def read_qm_file(path):
    """One matrix per line: ``kind rows cols symmetric w0 w1 ...`` with the
    weights row-major.  ``kind`` is 0 for luma, 1 for chroma."""
    qms = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].split()
        if not line:
            continue
        try:
            kind, rows, cols, sym, *vals = (int(v) for v in line)
        except ValueError:
            raise ParameterError(f"{path}:{n}: expected integers") from None
        if kind not in (0, 1) or len(vals) != rows * cols:
            raise ParameterError(f"{path}:{n}: need kind 0/1 and {rows}x{cols} weights")
        qms[(kind, rows, cols)] = QMatrix([vals[r * cols : (r + 1) * cols] for r in range(rows)], bool(sym))
    return qms


_FLAG_KEYS = {
    "qindex": "base_q_idx",
    "bitdepth": "bit_depth",
    "lossless": "lossless",
    "tcq": "tcq",
    "ph": "ph",
    "fsc": "fsc",
    "ist": "ist",
    "cctx": "cctx",
    "seed": "seed",
    "chroma": "chroma",
}


def build_config(args, bit_depth=None, chroma=None):
    """Config file first, then flags, then the corpus format when unset."""
    kv = {}
    if getattr(args, "config", None):
        for n, line in enumerate(Path(args.config).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{args.config}:{n}: expected key=value")
            k, v = line.split("=", 1)
            kv[k.strip().replace("-", "_")] = v.strip()
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            kv[key] = str(int(v)) if isinstance(v, bool) else str(v)
    for key, v in (("bit_depth", bit_depth), ("chroma", chroma)):
        if v is not None:
            if key in kv and str(kv[key]) != str(v):
                raise ParameterError(f"{key}={kv[key]} conflicts with the corpus ({v})")
            kv[key] = str(v)
    if kv.get("lossless", "0").lower() in ("1", "true", "yes", "on"):
        kv.setdefault("tcq", "0")
        kv.setdefault("ph", "0")
        kv.setdefault("base_q_idx", "0")
    qms = None
    if getattr(args, "qm", None):
        qms = read_qm_file(args.qm)
        kv["qm"] = "1"
    return CodecConfig.from_mapping(kv, qms)


# --- reporting -------------------------------------------------------------


def stats_rows(stats):
    rows = [("total", "bits", stats.millibits.total() / 1000), ("total", "bytes", stats.bytes), ("total", "blocks", stats.blocks)]
    rows += [("pass", p, stats.millibits.get(p, 0) / 1000) for p in PASSES]
    rows += [("tool", t, stats.tools.get(t, 0)) for t in TOOLS]
    return rows


def stats_table(stats):
    out = [f"{'section':<8}{'name':<12}{'value':>14}"]
    for sec, name, v in stats_rows(stats):
        out.append(f"{sec:<8}{name:<12}{v:>14.3f}" if isinstance(v, float) else f"{sec:<8}{name:<12}{v:>14}")
    return "\n".join(out)


def write_csv(path, rows, header=("section", "name", "value")):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def write_trace(path, symbols):
    lines = [f"cb {i} {r}" for i, recs in enumerate(symbols) for r in recs]
    text = "\n".join(lines) + ("\n" if lines else "")
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _report(args, stats):
    if getattr(args, "trace", None):
        write_trace(args.trace, stats.symbols or [])
    if getattr(args, "csv", None):
        write_csv(args.csv, stats_rows(stats))
    if args.csv != "-" and args.trace != "-":
        print(stats_table(stats))


# --- commands --------------------------------------------------------------


def encode_corpus(cfg, blocks, stats=None):
    s = CodecSession(cfg)
    return [s.encode_cb(b.planes, b.pred, stats=stats)[0] for b in blocks]


def decode_records(cfg, records, stats=None):
    """Decode and digest-check every record.  Errors name the record index."""
    s = CodecSession(cfg)
    out = []
    for i, rec in enumerate(records):
        trace = [] if stats is not None else None
        try:
            planes, digest = s.decode_cb(rec, trace)
        except AvtxError as exc:
            raise type(exc)(f"record {i}: {exc}") from None
        if digest != rec.digest:
            raise Mismatch(f"record {i} ({rec.w}x{rec.h}): levels digest {digest:#018x} != {rec.digest:#018x}")
        if stats is not None:
            local = Stats(symbols=trace)
            local.add_trace(trace[0])
            local.bytes, local.blocks = len(rec.payload), 1
            stats.merge(local)
        out.append(ResidualBlock(planes, rec.pred))
    return out


def cmd_encode(args):
    corpus = ResidualCorpus.read(args.input)
    cfg = build_config(args, corpus.bit_depth, corpus.chroma)
    stats = Stats(symbols=[] if args.trace else None)
    records = encode_corpus(cfg, corpus.blocks, stats)
    Path(args.output).write_bytes(container_bytes(cfg, records))
    _report(args, stats)
    return EXIT_OK


def cmd_decode(args):
    cfg, records = container_read(args.input)
    stats = Stats(symbols=[] if args.trace else None)
    blocks = decode_records(cfg, records, stats)
    ResidualCorpus(cfg.bit_depth, cfg.chroma, blocks).write(args.output)
    _report(args, stats)
    return EXIT_OK


def _first_diff(a, b):
    if a.shape != b.shape:
        return f"shape {a.shape} != {b.shape}"
    r, c = np.argwhere(a != b)[0]
    return f"row {r}, col {c}: {a[r, c]} != {b[r, c]}"


def roundtrip_shard(cfg, blocks, offset=0):
    """Returns ``(checked, failure or None)``."""
    enc, dec = CodecSession(cfg), CodecSession(cfg)
    for i, b in enumerate(blocks):
        where = f"block {offset + i} ({b.w}x{b.h})"
        try:
            rec, recon, _ = enc.encode_cb(b.planes, b.pred)
            got, digest = dec.decode_cb(rec)
        except AvtxError as exc:
            return i, f"{where}: {type(exc).__name__}: {exc}"
        if digest != rec.digest:
            return i, f"{where}: levels digest {digest:#018x} != {rec.digest:#018x}"
        for p, (x, y) in enumerate(zip(got, recon)):
            if not np.array_equal(x, y):
                return i, f"{where}, plane {p}, decoder/encoder reconstruction {_first_diff(x, y)}"
        if cfg.lossless:
            for p, (x, y) in enumerate(zip(got, b.planes)):
                if not np.array_equal(x, y):
                    return i, f"{where}, plane {p}, lossless output vs input {_first_diff(x, y)}"
    return len(blocks), None


def cmd_roundtrip(args):
    corpus = ResidualCorpus.read(args.input)
    cfg = build_config(args, corpus.bit_depth, corpus.chroma)
    blocks = corpus.blocks
    jobs = max(1, args.jobs)
    if jobs == 1:
        results = [roundtrip_shard(cfg, blocks)]
    else:
        # Each shard runs with its own context bank.
        size = -(-len(blocks) // jobs) or 1
        starts = range(0, len(blocks), size)
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(roundtrip_shard, [cfg] * len(starts), [blocks[s : s + size] for s in starts], starts))
    checked = sum(n for n, _ in results)
    fails = [f for _, f in results if f]
    if fails:
        print(f"FAIL {fails[0]}")
        return EXIT_MISMATCH
    print(f"PASS {checked} blocks")
    return EXIT_OK


def dump_kernels():
    out = []
    for (kid, n), m in sorted(all_kernels().items()):
        out.append(f"{kid} N={n}")
        out += [" ".join(f"{int(v):5d}" for v in row) for row in np.asarray(m)]
    return out


def dump_mdtx():
    modes = list(IntraMode)
    out = []
    for m, row in enumerate(mdtx_table()):
        size = ("4", "8", "16")[m // len(modes)]
        out.append(f"{m:2d} {size:>2} {modes[m % len(modes)].name:<14}" + " ".join(f"{int(t):2d}" for t in row))
    return out


def dump_contexts():
    out = [f"{'group':<20}{'rows':>6}{'M':>4}  para"]
    for name, rows, m in LAYOUT:
        out.append(f"{name:<20}{rows:>6}{m:>4}  {PARA.get(name, (0, 0, 0))}")
    return out


def cmd_dump(args):
    lines = {"kernels": dump_kernels, "mdtx": dump_mdtx, "contexts": dump_contexts}[args.what]()
    print("\n".join(lines))
    return EXIT_OK


def cmd_memreport(args):
    build_config(args)
    rep = cdf_memory_report(default_bank())
    if args.csv:
        rows = [(g, n, m, ram, rom) for g, n, m, ram, rom in rep.groups]
        rows.append(("TOTAL", rep.entries, "", rep.ram_bytes, rep.rom_bytes))
        write_csv(args.csv, rows, ("group", "entries", "M", "ram_bytes", "rom_bytes"))
    if args.csv != "-":
        print(rep.as_table())
    return EXIT_OK


def cmd_synth(args):
    synth_corpus(args.count, args.seed, args.bitdepth, args.chroma, planes=args.planes).write(args.output)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def _codec_flags(p):
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--qindex", type=int, help="base quantizer index")
    p.add_argument("--bitdepth", type=int, choices=(8, 10, 12))
    p.add_argument("--chroma", choices=("420", "444"))
    p.add_argument("--lossless", action=argparse.BooleanOptionalAction, default=None)
    for tool in ("tcq", "ph", "fsc", "ist", "cctx"):
        p.add_argument(f"--{tool}", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--qm", help="quantization matrix file")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="kernel table seed")


def _report_flags(p):
    p.add_argument("--trace", help="write every coded symbol to this file ('-' for stdout)")
    p.add_argument("--csv", help="write stats as CSV to this file ('-' for stdout)")


def make_parser():
    ap = argparse.ArgumentParser(prog="avtx", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("encode", help="code a residual corpus into a container")
    p.add_argument("input")
    p.add_argument("output")
    _codec_flags(p)
    _report_flags(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="decode a container back to a residual corpus")
    p.add_argument("input")
    p.add_argument("output")
    _report_flags(p)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("roundtrip", help="encode and decode in memory and verify")
    p.add_argument("input")
    _codec_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="corpus shards coded in parallel")
    p.set_defaults(fn=cmd_roundtrip)

    p = sub.add_parser("dump", help="print kernel, MDTX or context tables")
    p.add_argument("what", choices=("kernels", "mdtx", "contexts"))
    p.set_defaults(fn=cmd_dump)

    p = sub.add_parser("memreport", help="CDF RAM/ROM footprint")
    _codec_flags(p)
    p.add_argument("--csv")
    p.set_defaults(fn=cmd_memreport)

    p = sub.add_parser("synth", help="write a seeded synthetic residual corpus")
    p.add_argument("output")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bitdepth", type=int, choices=(8, 10, 12), default=8)
    p.add_argument("--chroma", choices=("420", "444"), default="420")
    p.add_argument("--planes", type=int, choices=(1, 3), default=3)
    p.set_defaults(fn=cmd_synth)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Mismatch as exc:
        print(f"FAIL {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ConformanceError, TruncationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFORMANCE
    except (AvtxError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
