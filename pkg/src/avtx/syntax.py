"""Symbol-level reader/writer over the range coder, with optional tracing.

Every context-coded syntax element goes through :meth:`Writer.sym` /
:meth:`Reader.sym` by group name and row index, so the trace can attribute
bits to elements.  Costs in the trace are estimates from the CDF in force
when the symbol was coded, in thousandths of a bit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .entropy import _COST, COST_SCALE, ContextBank, RangeDecoder, RangeEncoder
from .errors import ParameterError

# (group, rows, alphabet).  Row counts follow the context tables of each
# element; see the defining modules for the index formulas.
LAYOUT = [
    # partition / transform type
    ("do_partition", 25, 2),
    ("partition7", 25, 7),
    ("partition3", 50, 3),
    ("tx_type_intra", 39, 7),
    ("tx_type_inter16", 3, 16),
    ("tx_type_inter12", 3, 12),
    ("tx_type_inter2", 3, 2),
    ("ist_kernel", 3, 4),
    ("ist_set_small", 1, 14),
    ("ist_set_dct", 1, 7),
    ("ist_set_adst", 1, 4),
    ("cctx", 3, 7),
    ("fsc", 3, 2),
    # coefficients
    ("all_zero", 12, 2),
    *[(f"eob_c{k}", 2, k) for k in range(5, 12)],
    *[(f"bob_c{k}", 1, k) for k in range(5, 12)],
    ("br_eob_lf", 8, 5),
    ("br_eob_def", 8, 3),
    ("br_lf_luma", 33, 6),
    ("br_def_luma", 20, 4),
    ("br_lf_chroma", 12, 6),
    ("br_def_chroma", 8, 4),
    ("lr_lf_luma", 14, 4),
    ("lr_def_luma", 7, 4),
    ("lr_lf_chroma", 8, 4),
    ("lr_def_chroma", 4, 4),
    ("br_tcq_lf", 2 * 33, 6),
    ("br_tcq_def", 2 * 20, 4),
    ("ph_br", 5, 6),
    ("ph_lr", 7, 4),
    ("dc_sign", 9, 2),
    ("fsc_br", 21, 4),
    ("fsc_lr", 21, 4),
    ("fsc_sign", 27, 2),
    # lossless
    ("lossless_tx", 2, 2),
]

# PARA offsets per group for the three counter intervals.  Small alphabets
# that settle quickly adapt slower late on; the large type alphabets adapt
# faster early.
PARA = {
    "all_zero": (0, 0, 1),
    "do_partition": (0, 0, 1),
    "tx_type_inter16": (-1, 0, 0),
    "tx_type_intra": (-1, 0, 0),
    "dc_sign": (0, 1, 1),
    "fsc_sign": (0, 1, 1),
}


def default_bank():
    return ContextBank.from_layout(LAYOUT, PARA)


@dataclass(frozen=True)
class TraceRecord:
    name: str
    ctx: int
    symbol: int
    millibits: int

    def __str__(self):
        return f"{self.name} ctx={self.ctx} sym={self.symbol} bits*1000={self.millibits}"


def _millibits(cost):
    return (cost * 1000 + COST_SCALE // 2) // COST_SCALE


class Writer:
    def __init__(self, bank=None, trace=False):
        self.bank = default_bank() if bank is None else bank
        self.enc = RangeEncoder()
        self.trace = [] if trace else None

    def sym(self, name, ctx, symbol):
        entry = self.bank.groups[name][ctx]
        if self.trace is not None:
            if not 0 <= symbol < len(entry.cdf):
                raise ParameterError(f"{name}: symbol {symbol} outside alphabet")
            self.trace.append(TraceRecord(name, ctx, symbol, _millibits(entry.cost(symbol))))
        self.enc.encode(entry, symbol)

    def bits(self, value, nbits, name="bypass"):
        if nbits:
            if self.trace is not None:
                self.trace.append(TraceRecord(name, -1, value, 1000 * nbits))
            self.enc.encode_bypass(value, nbits)

    def finish(self):
        return self.enc.finish()


class Reader:
    def __init__(self, data, bank=None, trace=False):
        self.bank = default_bank() if bank is None else bank
        self.dec = RangeDecoder(data)
        self.trace = [] if trace else None

    def sym(self, name, ctx):
        entry = self.bank.groups[name][ctx]
        if self.trace is None:
            return self.dec.decode(entry)
        before = list(entry.cdf)
        s = self.dec.decode(entry)
        lo = before[s - 1] if s else 0
        self.trace.append(TraceRecord(name, ctx, s, _millibits(_COST[before[s] - lo])))
        return s

    def bits(self, nbits, name="bypass"):
        if not nbits:
            return 0
        v = self.dec.decode_bypass(nbits)
        if self.trace is not None:
            self.trace.append(TraceRecord(name, -1, v, 1000 * nbits))
        return v

    @property
    def position(self):
        return self.dec.position


def trace_bits(records, names):
    """Total millibits spent on the given element names."""
    names = set(names)
    return sum(r.millibits for r in records if r.name in names)
