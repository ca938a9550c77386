"""Multi-symbol range coder with adaptive 15-bit CDFs.

Probabilities live in :class:`CdfEntry` objects.  ``cdf[i]`` is the scaled
probability that the coded symbol is ``<= i``, so ``cdf[-1]`` is always
``2**15``.  After each coded symbol the CDF moves toward the observed symbol
by a power-of-two step whose exponent depends on the symbol count, the
alphabet size and a per-context, per-interval offset ``alpha``.

The arithmetic engine itself is a carry-propagating byte-oriented range coder
with 32-bit registers (the LZMA layout).  It makes no attempt to be
bit-compatible with any reference bitstream; encoder/decoder agreement is
the contract.
"""

from __future__ import annotations

import bisect
import hashlib
import math
from dataclasses import dataclass

from .errors import ParameterError, TruncationError

PROB_BITS = 15
PROB_TOP = 1 << PROB_BITS
ALPHAS = (0, 1, -1, -2)
COUNTER_MAX = 0xFFFF
MAX_ALPHABET = 16

# Fixed-point bit costs: COST_SCALE units per bit.
COST_SCALE = 512
_COST = [0] + [round(COST_SCALE * (PROB_BITS - math.log2(p))) for p in range(1, PROB_TOP + 1)]

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


def uniform_cdf(m):
    """Evenly spaced, strictly increasing CDF for an ``m``-symbol alphabet."""
    if not 2 <= m <= MAX_ALPHABET:
        raise ParameterError(f"alphabet size {m} outside [2, {MAX_ALPHABET}]")
    cdf = []
    prev = 0
    for i in range(m):
        c = max(prev + 1, ((i + 1) * PROB_TOP + m // 2) // m)
        cdf.append(c)
        prev = c
    cdf[-1] = PROB_TOP
    return cdf


class CdfEntry:
    """Adaptive state for one context: CDF, symbol counter and PARA triple."""

    __slots__ = ("cdf", "counter", "para")

    def __init__(self, cdf, counter=0, para=(0, 0, 0)):
        cdf = list(cdf)
        if not 2 <= len(cdf) <= MAX_ALPHABET:
            raise ParameterError(f"alphabet size {len(cdf)} outside [2, {MAX_ALPHABET}]")
        if cdf[-1] != PROB_TOP or any(b <= a for a, b in zip([0] + cdf, cdf)):
            raise ParameterError("CDF must be strictly increasing and end at 2**15")
        para = tuple(para)
        if len(para) != 3 or any(a not in ALPHAS for a in para):
            raise ParameterError(f"PARA offsets must be three values from {ALPHAS}")
        self.cdf = cdf
        self.counter = counter
        self.para = para

    @classmethod
    def uniform(cls, m, para=(0, 0, 0)):
        return cls(uniform_cdf(m), 0, para)

    @property
    def size(self):
        return len(self.cdf)

    def copy(self):
        e = CdfEntry.__new__(CdfEntry)
        e.cdf = list(self.cdf)
        e.counter = self.counter
        e.para = self.para
        return e

    def probability(self, k):
        lo = self.cdf[k - 1] if k else 0
        return self.cdf[k] - lo

    def cost(self, k):
        """Cost of coding symbol ``k`` now, in 1/512-bit units."""
        return _COST[self.probability(k)]

    def __eq__(self, other):
        return (
            isinstance(other, CdfEntry)
            and self.cdf == other.cdf
            and self.counter == other.counter
            and self.para == other.para
        )

    def __repr__(self):
        return f"CdfEntry(cdf={self.cdf}, counter={self.counter}, para={self.para})"


def _rate_counter(n):
    if n <= 15:
        return 0
    if n <= 31:
        return 1
    return 2


def adaptation_shift(n, m, alpha):
    """Right-shift used by the CDF update: ``3 + r_C(n) + r_M(m) + alpha``."""
    if m < 2:
        raise ParameterError("alphabet size must be at least 2")
    if alpha not in ALPHAS:
        raise ParameterError(f"alpha {alpha!r} not in {ALPHAS}")
    r_m = 1 if m in (2, 3) else 2
    return 3 + _rate_counter(n) + r_m + alpha


def select_alpha(entry):
    """PARA offset for the counter interval the entry is currently in."""
    return entry.para[_rate_counter(entry.counter)]


def update_cdf(entry, k, shift=None):
    """Adapt ``entry`` after symbol ``k`` was coded (in place, also returned).

    ``shift`` overrides the derived adaptation shift; it exists for tests.
    When a step would make two neighbouring values collide (possible only
    for probabilities of a few units in 2**15), the value is nudged by one
    so the CDF stays strictly increasing.
    """
    cdf = entry.cdf
    m = len(cdf)
    if not 0 <= k < m:
        raise ParameterError(f"symbol {k} outside alphabet of size {m}")
    if shift is None:
        shift = adaptation_shift(entry.counter, m, select_alpha(entry))
    _adapt(cdf, k, shift)
    if entry.counter < COUNTER_MAX:
        entry.counter += 1
    return entry


def _adapt(cdf, k, rate):
    prev = 0
    for i in range(k):
        c = cdf[i]
        c -= c >> rate
        if c <= prev:
            c = prev + 1
        cdf[i] = c
        prev = c
    nxt = PROB_TOP
    for i in range(len(cdf) - 2, k - 1, -1):
        c = cdf[i]
        c += (PROB_TOP - c) >> rate
        if c >= nxt:
            c = nxt - 1
        cdf[i] = c
        nxt = c


# Base shift 3 + r_M(m) + r_C(n), indexed [m][interval].
_RATE_BASE = ((0, 0, 0), (0, 0, 0), (4, 5, 6), (4, 5, 6)) + ((5, 6, 7),) * (MAX_ALPHABET - 3)


def _adapt_entry(entry, cdf, k):
    # _adapt plus the counter bookkeeping, flattened into one frame because
    # this runs once per coded symbol.
    n = entry.counter
    m = len(cdf)
    t = 0 if n <= 15 else (1 if n <= 31 else 2)
    rate = _RATE_BASE[m][t] + entry.para[t]
    if n < COUNTER_MAX:
        entry.counter = n + 1
    prev = 0
    for i in range(k):
        c = cdf[i]
        c -= c >> rate
        if c <= prev:
            c = prev + 1
        cdf[i] = c
        prev = c
    nxt = PROB_TOP
    for i in range(m - 2, k - 1, -1):
        c = cdf[i]
        c += (PROB_TOP - c) >> rate
        if c >= nxt:
            c = nxt - 1
        cdf[i] = c
        nxt = c


class RangeEncoder:
    """Range encoder; call :meth:`finish` once to obtain the coded bytes."""

    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._done = False

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            temp = self._cache
            out = self._out
            while True:
                out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if not self._cache_size:
                    break
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, entry, symbol, adapt=True):
        """Code ``symbol`` with ``entry``'s CDF, then adapt the CDF."""
        cdf = entry.cdf
        if not 0 <= symbol < len(cdf):
            raise ParameterError(f"symbol {symbol} outside alphabet of size {len(cdf)}")
        lo = cdf[symbol - 1] if symbol else 0
        r = self.range >> PROB_BITS
        self.low += r * lo
        rng = r * (cdf[symbol] - lo)
        while rng < _TOP:
            rng <<= 8
            self._shift_low()
        self.range = rng
        if adapt:
            _adapt_entry(entry, cdf, symbol)

    def encode_bypass(self, value, nbits):
        """Code ``nbits`` raw bits of ``value`` (MSB first), one bit each."""
        if nbits < 0 or value < 0 or value >> nbits:
            raise ParameterError(f"value {value} does not fit in {nbits} bits")
        while nbits > 0:
            n = 8 if nbits > 8 else nbits
            nbits -= n
            rng = self.range >> n
            self.low += ((value >> nbits) & ((1 << n) - 1)) * rng
            while rng < _TOP:
                rng <<= 8
                self._shift_low()
            self.range = rng

    def finish(self):
        if not self._done:
            for _ in range(5):
                self._shift_low()
            self._done = True
        # The first byte is always the zero initial cache.
        return bytes(self._out[1:])


class RangeDecoder:
    def __init__(self, data):
        self._data = bytes(data)
        self._pos = 4
        if len(self._data) < 4:
            raise TruncationError("coded stream shorter than the 4-byte preamble")
        self.code = int.from_bytes(self._data[:4], "big")
        self.range = _MASK32

    @property
    def position(self):
        return self._pos

    def _next(self):
        pos = self._pos
        if pos >= len(self._data):
            raise TruncationError(f"coded stream exhausted after {pos} bytes")
        self._pos = pos + 1
        return self._data[pos]

    def decode(self, entry, adapt=True):
        cdf = entry.cdf
        r = self.range >> PROB_BITS
        v = self.code // r
        if v >= PROB_TOP:
            v = PROB_TOP - 1
        k = bisect.bisect_right(cdf, v)
        lo = cdf[k - 1] if k else 0
        self.code -= r * lo
        rng = r * (cdf[k] - lo)
        while rng < _TOP:
            rng <<= 8
            self.code = (self.code << 8) | self._next()
        self.range = rng
        if adapt:
            _adapt_entry(entry, cdf, k)
        return k

    def decode_bypass(self, nbits):
        value = 0
        while nbits > 0:
            n = 8 if nbits > 8 else nbits
            nbits -= n
            rng = self.range >> n
            v = self.code // rng
            self.code -= v * rng
            while rng < _TOP:
                rng <<= 8
                self.code = (self.code << 8) | self._next()
            self.range = rng
            value = (value << n) | v
        return value


class ContextBank:
    """Named groups of context entries.

    ``groups[name]`` is a list of :class:`CdfEntry`; ``name[i]`` is the label
    of entry ``i`` in that group for reporting.
    """

    def __init__(self, groups=None):
        self.groups = {} if groups is None else groups

    @classmethod
    def from_layout(cls, layout, para=None):
        """Build a bank from ``[(name, count, alphabet_size), ...]``.

        ``para`` maps group name to a PARA triple; unlisted groups use
        ``(0, 0, 0)``.
        """
        para = para or {}
        groups = {}
        for name, count, m in layout:
            if name in groups:
                raise ParameterError(f"duplicate context group {name!r}")
            p = para.get(name, (0, 0, 0))
            groups[name] = [CdfEntry.uniform(m, p) for _ in range(count)]
        return cls(groups)

    def __getitem__(self, name):
        return self.groups[name]

    def __contains__(self, name):
        return name in self.groups

    def entries(self):
        for name, group in self.groups.items():
            for i, e in enumerate(group):
                yield f"{name}[{i}]", e

    def __len__(self):
        return sum(len(g) for g in self.groups.values())

    def copy(self):
        return ContextBank({k: [e.copy() for e in g] for k, g in self.groups.items()})

    def digest(self):
        h = hashlib.sha256()
        for label, e in self.entries():
            h.update(label.encode())
            h.update(repr((e.cdf, e.counter, e.para)).encode())
        return h.hexdigest()

    def __eq__(self, other):
        return isinstance(other, ContextBank) and self.groups == other.groups


# Memory-report layout: bytes per stored item.
CDF_VALUE_BYTES = 2
COUNTER_BYTES = 2
ALPHA_BYTES = 1


@dataclass(frozen=True)
class MemoryReport:
    entries: int
    ram_bytes: int
    rom_bytes: int
    groups: tuple = ()

    def as_table(self):
        lines = [
            f"# layout: {CDF_VALUE_BYTES} B/CDF value, {COUNTER_BYTES} B/counter, "
            f"{ALPHA_BYTES} B/alpha",
            f"{'group':<24}{'entries':>8}{'M':>4}{'ram':>8}{'rom':>8}",
        ]
        for name, n, m, ram, rom in self.groups:
            lines.append(f"{name:<24}{n:>8}{m:>4}{ram:>8}{rom:>8}")
        lines.append(f"{'TOTAL':<24}{self.entries:>8}{'':>4}{self.ram_bytes:>8}{self.rom_bytes:>8}")
        return "\n".join(lines)


def cdf_memory_report(bank):
    """RAM/ROM footprint of a context bank.

    RAM holds the live CDF values and counter of each entry.  ROM holds the
    initialization table: initial CDF values plus the PARA triple.
    """
    total_entries = ram = rom = 0
    rows = []
    for name, group in bank.groups.items():
        g_ram = g_rom = 0
        for e in group:
            g_ram += e.size * CDF_VALUE_BYTES + COUNTER_BYTES
            g_rom += e.size * CDF_VALUE_BYTES + 3 * ALPHA_BYTES
        m = group[0].size if group else 0
        rows.append((name, len(group), m, g_ram, g_rom))
        total_entries += len(group)
        ram += g_ram
        rom += g_rom
    return MemoryReport(total_entries, ram, rom, tuple(rows))
