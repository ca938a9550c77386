"""Per-CB pipeline: partition, transform, IST, CCTX, quantization and
coefficient coding, with the exact inverse.

A :class:`CodecSession` owns one context bank.  Each CB is coded into its
own range-coder payload, but the bank carries over from CB to CB, so the
records of a container must be decoded in order with a fresh session.

Luma syntax per CB (lossy): partition, FSC flag, then per TB the
coefficient head (all-zero flag and EOB or BOB), transform type, IST
symbols and the level passes.  Chroma follows with one TB per plane and the
CCTX mode after both.  Lossless CBs code the FSC flag, the lossless
transform choice and then the tiles.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, fields

import numpy as np
from numba import njit

from . import cctx as cc
from .coeffs import (
    CoeffMode,
    TbInfo,
    _plan,
    code_tb_body,
    code_tb_head,
    decode_tb,
    encode_tb,
    last_nonzero,
    parse_tb_body,
    parse_tb_head,
    ph_encoder_adjust,
    tcq_rate_model,
)
from .errors import ConformanceError, ParameterError
from .ist import (
    apply_forward,
    apply_inverse,
    ist_eligibility,
    ist_kernel_lookup,
    num_sets,
    size_class_for,
)
from .lossless import (
    LosslessKind,
    LosslessTx,
    code_lossless_tx,
    lossless_forward,
    lossless_inverse,
    lossless_tx_select,
    parse_lossless_tx,
    rbr_forward,
    rbr_inverse,
    rbr_mode_for,
)
from .partition import (
    IntraMode,
    PartitionType,
    allowed_partitions,
    check_cb_size,
    chroma_tx_type,
    code_partition,
    code_tx_type,
    parse_partition,
    parse_tx_type,
    partition_layout,
    tx_candidates,
)
from .quant import (
    QM_UNITY,
    ROUND_INTER,
    ROUND_INTRA,
    QuantParams,
    default_lambda,
    dequantize_array,
    quantize_array,
)
from .scans import ScanClass, from_scan, to_scan
from .syntax import Reader, Writer
from .tcq import tcq_applicability, tcq_dequantize_scan, trellis_quantize
from .transforms import KERNEL_SEED, TxType, coded_shape, forward_2d, inverse_2d

IST_CLASSES = ("small", "large-dct", "large-adst")
_IST_SET_GROUP = {"small": "ist_set_small", "large-dct": "ist_set_dct", "large-adst": "ist_set_adst"}


@dataclass(frozen=True)
class CodecConfig:
    bit_depth: int = 8
    base_q_idx: int = 100
    y_dc_delta: int = 0
    uv_dc_delta: int = 0
    tcq: bool = True
    ph: bool = True
    fsc: bool = True
    ist: bool = True
    cctx: bool = True
    qm: bool = False
    lossless: bool = False
    lam_scale: float = 0.12
    seed: int = KERNEL_SEED
    chroma: str = "420"
    qms: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.lossless and (self.tcq or self.ph):
            raise ParameterError("lossless coding requires TCQ and PH off")
        if self.chroma not in ("420", "444"):
            raise ParameterError(f"chroma format {self.chroma!r} not in 420/444")
        if self.seed != KERNEL_SEED:
            raise ParameterError(f"kernel tables are built for seed {KERNEL_SEED:#x} only")
        if not self.lam_scale > 0:
            raise ParameterError("lam_scale must be positive")
        object.__setattr__(
            self,
            "_qp",
            QuantParams(self.base_q_idx, self.y_dc_delta, self.uv_dc_delta, self.bit_depth, dict(self.qms)),
        )

    @property
    def quant(self):
        return self._qp

    @classmethod
    def lossless_default(cls, **kw):
        return cls(lossless=True, tcq=False, ph=False, base_q_idx=0, **kw)

    # key=value text form; ``qms`` travels separately.
    def to_text(self):
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self) if f.name != "qms")

    @classmethod
    def from_mapping(cls, kv, qms=None):
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in kv.items():
            k = k.strip().replace("-", "_")
            if k not in types or k == "qms":
                raise ParameterError(f"unknown config key {k!r}")
            out[k] = _parse_value(types[k], str(v).strip(), k)
        if qms:
            out["qms"] = dict(qms)
        return cls(**out)

    @classmethod
    def from_text(cls, text, qms=None):
        kv = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"config line {n}: expected key=value")
            k, v = line.split("=", 1)
            kv[k] = v
        return cls.from_mapping(kv, qms)


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)


def _parse_value(typ, s, key):
    try:
        if typ in ("bool", bool):
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if typ in ("int", int):
            return int(s, 0)
        if typ in ("float", float):
            return float(s)
        return s
    except ValueError:
        raise ParameterError(f"config key {key}: bad value {s!r}") from None


@dataclass(frozen=True)
class Prediction:
    """Drives the transform-set, RBR and FSC rules; no prediction is run."""

    is_inter: bool = False
    mode: IntraMode = IntraMode.DC_PRED

    @property
    def tag(self):
        return 255 if self.is_inter else int(self.mode)

    @classmethod
    def from_tag(cls, tag):
        if tag == 255:
            return cls(True, IntraMode.DC_PRED)
        if not 0 <= tag < len(IntraMode):
            raise ParameterError(f"prediction tag {tag} unknown")
        return cls(False, IntraMode(tag))


@dataclass
class Decisions:
    """Optional encoder overrides; ``None`` leaves a choice to the encoder."""

    partition: PartitionType | None = None
    fsc: bool | None = None
    tx_types: list | None = None
    ist: list | None = None  # per luma TB: None or (set, kernel)
    cctx: int | None = None


@dataclass(frozen=True)
class BlockRecord:
    w: int
    h: int
    planes: int
    pred: Prediction
    payload: bytes
    digest: int


PASS_OF = {
    "hr": "HR",
    "sign": "sign",
    "dc_sign": "sign",
    "fsc_sign": "sign",
    "all_zero": "EOB",
    "eob_extra": "EOB",
    "ph_br": "BR",
    "ph_lr": "LR",
    "fsc_br": "BR",
    "fsc_lr": "LR",
    "do_partition": "partition",
    "partition7": "partition",
    "partition3": "partition",
    "cctx": "cctx",
    "fsc": "fsc",
    "lossless_tx": "tx",
}


def pass_of(name):
    if name in PASS_OF:
        return PASS_OF[name]
    if name.startswith(("eob_c", "bob_c")):
        return "EOB"
    if name.startswith("br_"):
        return "BR"
    if name.startswith("lr_"):
        return "LR"
    if name.startswith(("tx_type", "ist_")):
        return "tx"
    return "other"


@dataclass
class Stats:
    millibits: Counter = field(default_factory=Counter)
    tools: Counter = field(default_factory=Counter)
    tb_log: list = field(default_factory=list)  # (plane, eob, transform-signaling millibits)
    bytes: int = 0
    blocks: int = 0
    symbols: list = None  # per-block TraceRecord lists, kept when not None

    def add_trace(self, records):
        for r in records:
            self.millibits[pass_of(r.name)] += r.millibits

    def merge(self, other):
        self.millibits.update(other.millibits)
        self.tools.update(other.tools)
        self.tb_log.extend(other.tb_log)
        self.bytes += other.bytes
        self.blocks += other.blocks
        if self.symbols is not None and other.symbols is not None:
            self.symbols.extend(other.symbols)


@njit(cache=True)
def _fnv(data, h):
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h


FNV_OFFSET = 0xCBF29CE484222325


def fnv1a64(chunks):
    """64-bit FNV-1a over level arrays serialized as little-endian int32."""
    h = np.uint64(FNV_OFFSET)
    for c in chunks:
        data = np.ascontiguousarray(c, dtype="<i4").view(np.uint8).ravel()
        h = np.uint64(_fnv(data, h))
    return int(h)


def chroma_dims(w, h, fmt):
    if fmt == "444":
        return w, h
    return max(w // 2, 4), max(h // 2, 4)


def scan_class_for(tx_type):
    name = TxType(tx_type).name
    if name.startswith("V_"):
        return ScanClass.ROW
    if name.startswith("H_"):
        return ScanClass.COL
    return ScanClass.DIAG


def _area_ctx(w, h):
    a = w * h
    return 0 if a <= 64 else 1 if a <= 256 else 2


def fsc_allowed(cfg, w, h, layout):
    return cfg.fsc and all(tw <= 32 and th <= 32 for _, _, tw, th in layout)


def _looks_flat(y):
    # Screen-content style residual: mostly exact zeros with few levels.
    return np.count_nonzero(y) * 2 < y.size and len(np.unique(y)) <= 8


def _cost_proxy(levels):
    a = np.abs(levels)
    return float(np.log2(1 + a).sum() + 1.5 * np.count_nonzero(a))


class _TbCoder:
    """Shared quantization and reconstruction helpers for one config."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.qp = cfg.quant

    def steps(self, plane, ch, cw):
        s = np.full((ch, cw), self.qp.qstep(plane, False), dtype=np.int64)
        s[0, 0] = self.qp.qstep(plane, True)
        return s

    def weights(self, plane, ch, cw):
        if not self.cfg.qm:
            return None
        m = self.qp.qm(plane, ch, cw)
        return None if m is None else m.array()

    def quantize(self, coeffs, plane, inter):
        ch, cw = coeffs.shape
        return quantize_array(coeffs, self.steps(plane, ch, cw), ROUND_INTER if inter else ROUND_INTRA, self.weights(plane, ch, cw))

    def dequantize(self, levels, plane, tcq):
        ch, cw = levels.shape
        st = self.steps(plane, ch, cw)
        w = self.weights(plane, ch, cw)
        if not tcq:
            return dequantize_array(levels, st, w, self.cfg.bit_depth)
        ws = None if w is None else to_scan(w)
        vec = tcq_dequantize_scan(to_scan(levels), to_scan(st), ws)
        lim = 1 << (7 + self.cfg.bit_depth)
        return np.clip(from_scan(np.array(vec, dtype=np.int64), ch, cw), -lim, lim - 1)

    def tcq_levels(self, coeffs, rate):
        ch, cw = coeffs.shape
        st = self.steps(0, ch, cw)
        w = self.weights(0, ch, cw)
        ww = QM_UNITY if w is None else w
        steps = to_scan(st * ww)
        lam = default_lambda(int(st[0, 1] if cw > 1 else st[0, 0]), self.cfg.lam_scale)
        res = trellis_quantize(to_scan(coeffs), steps, lam, rate)
        return from_scan(res.levels, ch, cw)

    def ph_adjust(self, levels, coeffs, scan):
        ch, cw = levels.shape
        st = self.steps(0, ch, cw)
        w = self.weights(0, ch, cw)
        unit = st * (QM_UNITY if w is None else w) / 1024.0
        x = to_scan(coeffs / unit, scan)
        lf = _plan(ch, cw, 0, scan).lf
        out = ph_encoder_adjust(to_scan(levels, scan), x, lf, self.cfg.lam_scale)
        return from_scan(out, ch, cw, scan)


class CodecSession:
    """Encoder or decoder state for one container (one context bank)."""

    def __init__(self, cfg, bank=None):
        from .syntax import default_bank

        self.cfg = cfg
        self.bank = default_bank() if bank is None else bank
        self.tb = _TbCoder(cfg)
        # Decoder: (TbInfo, levels) per luma TB when set to a list.
        self.tb_log = None

    # --- encoder ---------------------------------------------------------

    def encode_cb(self, planes, pred=Prediction(), decisions=None, stats=None):
        """Code one CB.  ``planes`` is ``[Y]`` or ``[Y, U, V]`` residual
        arrays.  Returns ``(record, reconstruction, levels)``."""
        cfg = self.cfg
        y = np.asarray(planes[0], dtype=np.int64)
        h, w = y.shape
        check_cb_size(w, h)
        if len(planes) not in (1, 3):
            raise ParameterError("a CB carries 1 or 3 planes")
        cw_, ch_ = chroma_dims(w, h, cfg.chroma)
        for p in planes[1:]:
            if np.shape(p) != (ch_, cw_):
                raise ParameterError(f"chroma plane shape {np.shape(p)} != {(ch_, cw_)}")
        lim = 1 << (cfg.bit_depth + 1)
        if any(np.abs(np.asarray(p)).max(initial=0) >= lim for p in planes):
            raise ParameterError(f"residual magnitude must stay below 2^{cfg.bit_depth + 1}")
        dec = decisions or Decisions()
        wr = Writer(bank=self.bank, trace=stats is not None)
        local = Stats()
        levels = []
        if cfg.lossless:
            recon = self._enc_lossless(wr, planes, pred, dec, levels, local)
        else:
            recon = self._enc_lossy(wr, planes, pred, dec, levels, local)
        payload = wr.finish()
        rec = BlockRecord(w, h, len(planes), pred, payload, fnv1a64(levels))
        if stats is not None:
            local.add_trace(wr.trace)
            local.bytes = len(payload)
            local.blocks = 1
            local.symbols = [wr.trace]
            stats.merge(local)
        return rec, recon, levels

    def _mark(self, wr):
        return len(wr.trace) if wr.trace is not None else 0

    def _log_tb(self, wr, stats, plane, eob, start):
        if wr.trace is None:
            return
        tx = sum(r.millibits for r in wr.trace[start:] if pass_of(r.name) == "tx" and r.name != "lossless_tx")
        stats.tb_log.append((plane, eob, tx))

    def _enc_lossy(self, wr, planes, pred, dec, levels, stats):
        cfg = self.cfg
        y = np.asarray(planes[0], dtype=np.int64)
        h, w = y.shape
        ptype = dec.partition
        if ptype is None:
            ptype = PartitionType.NONE if max(w, h) <= 32 else PartitionType.SPLIT
            if ptype not in allowed_partitions(w, h):
                ptype = PartitionType.NONE
        layout = partition_layout(ptype, w, h)
        code_partition(wr, w, h, ptype)
        fsc = False
        if fsc_allowed(cfg, w, h, layout):
            fsc = bool(dec.fsc) if dec.fsc is not None else _looks_flat(y)
            wr.sym("fsc", _area_ctx(w, h), int(fsc))
        elif dec.fsc:
            raise ParameterError("FSC requested but not allowed for this CB")
        if fsc:
            stats.tools["fsc"] += 1
        recon_y = np.zeros_like(y)
        first_type = None
        for k, (x0, y0, tw, th) in enumerate(layout):
            forced = None if dec.tx_types is None else dec.tx_types[k]
            ist = None if dec.ist is None else dec.ist[k]
            res = y[y0 : y0 + th, x0 : x0 + tw]
            t, rec, lv = self._enc_luma_tb(wr, res, pred, fsc, forced, ist, stats)
            recon_y[y0 : y0 + th, x0 : x0 + tw] = rec
            levels.append(lv)
            if first_type is None:
                first_type = t
        out = [recon_y]
        if len(planes) == 3:
            out += self._enc_chroma(wr, planes[1:], pred, first_type, dec.cctx, levels, stats)
        return out

    def _enc_luma_tb(self, wr, res, pred, fsc, forced, ist_choice, stats):
        th, tw = res.shape
        inter = pred.is_inter
        if fsc:
            cands = (TxType.IDTX,)
        else:
            cands = tx_candidates(tw, th, inter, pred.mode)
        if forced is not None:
            if forced not in cands:
                raise ParameterError(f"{TxType(forced).name} not available for this TB")
            order = [TxType(forced)]
        else:
            order = self._rank_types(res, cands, inter)
        t = order[0]
        result = self._quantize_tb(res, t, inter, fsc, ist_choice)
        if t != TxType.DCT_DCT and not fsc and result[1] <= 1:
            # DC-only blocks infer DCT_DCT.
            t = TxType.DCT_DCT
            result = self._quantize_tb(res, t, inter, fsc, None)
        lv, eob, ist, tbinfo = result
        if eob <= 1 and ist is not None:
            lv, eob, ist, tbinfo = self._quantize_tb(res, t, inter, fsc, False)
        start = self._mark(wr)
        vec, _ = code_tb_head(wr, tbinfo, lv)
        if eob:
            if not fsc:
                code_tx_type(wr, tw, th, t, eob, inter, pred.mode)
                self._code_ist(wr, t, lv.shape, inter, eob, ist)
            code_tb_body(wr, tbinfo, vec)
        self._log_tb(wr, stats, 0, eob, start)
        if tbinfo.mode == CoeffMode.TCQ:
            stats.tools["tcq"] += 1
        if tbinfo.ph and np.count_nonzero(to_scan(lv, tbinfo.scan)[1:]) >= 4:
            stats.tools["ph"] += 1
        if ist is not None:
            stats.tools["ist"] += 1
        rec = self._recon_luma(lv, t, (th, tw), inter, ist, tbinfo.mode == CoeffMode.TCQ)
        return t, rec, lv

    def _rank_types(self, res, cands, inter):
        if len(cands) == 1:
            return list(cands)
        scored = []
        for t in cands:
            c = forward_2d(res, t, inter)
            scored.append((_cost_proxy(self.tb.quantize(c, 0, inter)), int(t)))
        scored.sort()
        return [TxType(t) for _, t in scored]

    def _ist_ok(self, t, inter, fsc):
        return self.cfg.ist and not fsc and ist_eligibility(0, inter, t)

    def _quantize_tb(self, res, t, inter, fsc, ist_choice):
        """Returns (levels, eob, ist, TbInfo) for one luma TB.  ``ist_choice``
        None lets the encoder pick; False turns IST off."""
        cfg = self.cfg
        th, tw = res.shape
        coeffs = forward_2d(res, t, inter)
        ch, cw = coeffs.shape
        scan = scan_class_for(t)
        ist = None
        if ist_choice is False:
            pass
        elif self._ist_ok(t, inter, fsc):
            cls = size_class_for(ch, cw, t)
            if ist_choice is not None:
                ist = tuple(ist_choice)
                if not (0 <= ist[0] < num_sets(cls) and 0 <= ist[1] < 3):
                    raise ParameterError(f"IST choice {ist} outside the {cls} registry")
            else:
                ist = self._pick_ist(coeffs, cls, inter)
            if ist is not None:
                coeffs = apply_forward(coeffs, ist_kernel_lookup(ist[0], ist[1], cls))
        elif ist_choice is not None:
            raise ParameterError("IST requested for an ineligible TB")
        tcq = tcq_applicability(0, scan == ScanClass.DIAG, fsc, cfg.tcq)
        mode = CoeffMode.FSC if fsc else CoeffMode.TCQ if tcq else CoeffMode.STANDARD
        ph = cfg.ph and mode == CoeffMode.STANDARD and t != TxType.IDTX
        info = TbInfo(ch, cw, 0, scan, mode, ph)
        if tcq:
            lv = self.tb.tcq_levels(coeffs, tcq_rate_model(self.bank, info))
        else:
            lv = self.tb.quantize(coeffs, 0, inter)
            if ph:
                lv = self.tb.ph_adjust(lv, coeffs, scan)
        eob = last_nonzero(to_scan(lv, scan).tolist())
        return lv, eob, ist, info

    def _pick_ist(self, coeffs, cls, inter):
        base = _cost_proxy(self.tb.quantize(coeffs, 0, inter))
        best = None
        s = int(abs(coeffs[0, 0])) % num_sets(cls)
        for k in range(3):
            c = apply_forward(coeffs, ist_kernel_lookup(s, k, cls))
            cost = _cost_proxy(self.tb.quantize(c, 0, inter)) + 1.0
            if cost < base and (best is None or cost < best[0]):
                best = (cost, (s, k))
        return None if best is None else best[1]

    def _code_ist(self, wr, t, shape, inter, eob, ist):
        if not self._ist_ok(t, inter, False) or eob <= 1:
            if ist is not None:
                raise ParameterError("IST chosen where it cannot be signaled")
            return
        cls = size_class_for(shape[0], shape[1], t)
        ci = IST_CLASSES.index(cls)
        wr.sym("ist_kernel", ci, 0 if ist is None else ist[1] + 1)
        if ist is not None:
            wr.sym(_IST_SET_GROUP[cls], 0, ist[0])

    def _parse_ist(self, rd, t, shape, inter, eob):
        if not self._ist_ok(t, inter, False) or eob <= 1:
            return None
        cls = size_class_for(shape[0], shape[1], t)
        k = rd.sym("ist_kernel", IST_CLASSES.index(cls))
        if not k:
            return None
        s = rd.sym(_IST_SET_GROUP[cls], 0)
        if s >= num_sets(cls):
            raise ConformanceError(f"IST set {s} outside the {cls} registry")
        return s, k - 1

    def _recon_luma(self, lv, t, shape, inter, ist, tcq):
        c = self.tb.dequantize(lv, 0, tcq)
        if ist is not None:
            c = apply_inverse(c, ist_kernel_lookup(ist[0], ist[1], size_class_for(c.shape[0], c.shape[1], t)))
        return inverse_2d(c, t, shape, inter)

    def _enc_chroma(self, wr, uv, pred, luma_type, forced_mode, levels, stats):
        cfg = self.cfg
        u = np.asarray(uv[0], dtype=np.int64)
        v = np.asarray(uv[1], dtype=np.int64)
        h, w = u.shape
        inter = pred.is_inter
        t = chroma_tx_type(inter, luma_type, w, h)
        cu, cv = forward_2d(u, t, inter), forward_2d(v, t, inter)
        scan = scan_class_for(t)

        def quant(mode):
            a, b = cc.cctx_forward(cu, cv, mode)
            return self.tb.quantize(a, 1, inter), self.tb.quantize(b, 2, inter)

        if not cfg.cctx:
            if forced_mode:
                raise ParameterError("CCTX disabled")
            mode = 0
        elif forced_mode is not None:
            mode = int(forced_mode)
        else:
            mode = cc.choose_mode(cu, cv)
        l1, l2 = quant(mode)
        e1 = last_nonzero(to_scan(l1, scan).tolist())
        e2 = last_nonzero(to_scan(l2, scan).tolist())
        if mode and (max(e1, e2) <= 1 or not cc.cctx_signal_constraint(e1 == 0, e2 == 0)):
            mode = 0
            l1, l2 = quant(0)
            e1 = last_nonzero(to_scan(l1, scan).tolist())
            e2 = last_nonzero(to_scan(l2, scan).tolist())
        ch, cw = l1.shape
        for plane, lv, e in ((1, l1, e1), (2, l2, e2)):
            start = self._mark(wr)
            encode_tb(wr, TbInfo(ch, cw, plane, scan), lv)
            self._log_tb(wr, stats, plane, e, start)
            levels.append(lv)
        if cfg.cctx and max(e1, e2) > 1:
            wr.sym("cctx", _area_ctx(cw, ch), mode)
            if mode:
                stats.tools["cctx"] += 1
        return self._recon_chroma(l1, l2, mode, t, (h, w), inter)

    def _recon_chroma(self, l1, l2, mode, t, shape, inter):
        d1 = self.tb.dequantize(l1, 1, False)
        d2 = self.tb.dequantize(l2, 2, False)
        a, b = cc.cctx_inverse(d1, d2, mode)
        return [inverse_2d(a, t, shape, inter), inverse_2d(b, t, shape, inter)]

    def _enc_lossless(self, wr, planes, pred, dec, levels, stats):
        cfg = self.cfg
        y = np.asarray(planes[0], dtype=np.int64)
        h, w = y.shape
        inter = pred.is_inter
        fsc = False
        if not inter and cfg.fsc:
            fsc = bool(dec.fsc) if dec.fsc is not None else True
            wr.sym("fsc", _area_ctx(w, h), int(fsc))
        rbr = rbr_mode_for(inter, pred.mode)
        tx = lossless_tx_select(0, inter, fsc, w, h, rbr_forward(y, rbr))
        code_lossless_tx(wr, tx, inter, fsc, w, h)
        stats.tools["lossless"] += 1
        if rbr:
            stats.tools["rbr"] += 1
        if fsc:
            stats.tools["fsc"] += 1
        cmode = CoeffMode.FSC if tx.kind == LosslessKind.IDTX and cfg.fsc else CoeffMode.STANDARD
        out = [self._lossless_plane(wr, y, tx, cmode, 0, rbr, levels, stats)]
        ctx_ = LosslessTx(tx.kind, 4, 4)
        for p, plane in enumerate(planes[1:], 1):
            out.append(self._lossless_plane(wr, np.asarray(plane, dtype=np.int64), ctx_, CoeffMode.STANDARD, p, rbr, levels, stats))
        return out

    def _lossless_plane(self, wr, x, tx, cmode, plane, rbr, levels, stats):
        H, W = x.shape
        for r in range(0, H, tx.h):
            for c in range(0, W, tx.w):
                coeffs = lossless_forward(rbr_forward(x[r : r + tx.h, c : c + tx.w], rbr), tx.kind)
                start = self._mark(wr)
                encode_tb(wr, TbInfo(tx.h, tx.w, plane, ScanClass.DIAG, cmode), coeffs)
                self._log_tb(wr, stats, plane, last_nonzero(to_scan(coeffs).tolist()), start)
                levels.append(coeffs)
        return x.copy()

    # --- decoder ---------------------------------------------------------

    def decode_cb(self, rec, trace=None):
        """Returns ``(planes, levels_digest)``.  Decoded symbols are appended
        to ``trace`` as one list per CB when it is given."""
        cfg = self.cfg
        w, h = rec.w, rec.h
        check_cb_size(w, h)
        rd = Reader(rec.payload, bank=self.bank, trace=trace is not None)
        if trace is not None:
            trace.append(rd.trace)
        levels = []
        if cfg.lossless:
            out = self._dec_lossless(rd, rec, levels)
        else:
            out = self._dec_lossy(rd, rec, levels)
        return out, fnv1a64(levels)

    def _dec_lossy(self, rd, rec, levels):
        cfg = self.cfg
        w, h, pred = rec.w, rec.h, rec.pred
        inter = pred.is_inter
        ptype = parse_partition(rd, w, h)
        layout = partition_layout(ptype, w, h)
        fsc = bool(rd.sym("fsc", _area_ctx(w, h))) if fsc_allowed(cfg, w, h, layout) else False
        y = np.zeros((h, w), dtype=np.int64)
        first_type = None
        for x0, y0, tw, th in layout:
            ch, cw = coded_shape(th, tw)
            zero, pos = parse_tb_head(rd, TbInfo(ch, cw), fsc)
            t = TxType.IDTX if fsc else TxType.DCT_DCT
            ist = None
            tb = TbInfo(ch, cw)
            if zero:
                lv = np.zeros((ch, cw), dtype=np.int64)
                tcq = False
            else:
                if not fsc:
                    t = parse_tx_type(rd, tw, th, pos, inter, pred.mode)
                    ist = self._parse_ist(rd, t, (ch, cw), inter, pos)
                scan = scan_class_for(t)
                tcq = tcq_applicability(0, scan == ScanClass.DIAG, fsc, cfg.tcq)
                mode = CoeffMode.FSC if fsc else CoeffMode.TCQ if tcq else CoeffMode.STANDARD
                ph = cfg.ph and mode == CoeffMode.STANDARD and t != TxType.IDTX
                tb = TbInfo(ch, cw, 0, scan, mode, ph)
                lv = parse_tb_body(rd, tb, pos)
            if self.tb_log is not None:
                self.tb_log.append((tb, lv))
            if first_type is None:
                first_type = t
            levels.append(lv)
            y[y0 : y0 + th, x0 : x0 + tw] = self._recon_luma(lv, t, (th, tw), inter, ist, tcq)
        out = [y]
        if rec.planes == 3:
            cw_, ch_ = chroma_dims(w, h, cfg.chroma)
            t = chroma_tx_type(inter, first_type, cw_, ch_)
            scan = scan_class_for(t)
            ch, cw = coded_shape(ch_, cw_)
            l1 = decode_tb(rd, TbInfo(ch, cw, 1, scan))
            l2 = decode_tb(rd, TbInfo(ch, cw, 2, scan))
            levels += [l1, l2]
            e1 = last_nonzero(to_scan(l1, scan).tolist())
            e2 = last_nonzero(to_scan(l2, scan).tolist())
            mode = 0
            if cfg.cctx and max(e1, e2) > 1:
                mode = rd.sym("cctx", _area_ctx(cw, ch))
                if mode:
                    cc.check_planes(l1, l2)
            out += self._recon_chroma(l1, l2, mode, t, (ch_, cw_), inter)
        return out

    def _dec_lossless(self, rd, rec, levels):
        cfg = self.cfg
        w, h, pred = rec.w, rec.h, rec.pred
        inter = pred.is_inter
        fsc = bool(rd.sym("fsc", _area_ctx(w, h))) if not inter and cfg.fsc else False
        tx = parse_lossless_tx(rd, inter, fsc, w, h)
        rbr = rbr_mode_for(inter, pred.mode)
        cmode = CoeffMode.FSC if tx.kind == LosslessKind.IDTX and cfg.fsc else CoeffMode.STANDARD
        out = [self._dec_lossless_plane(rd, (h, w), tx, cmode, 0, rbr, levels)]
        if rec.planes == 3:
            cw_, ch_ = chroma_dims(w, h, cfg.chroma)
            t4 = LosslessTx(tx.kind, 4, 4)
            for p in (1, 2):
                out.append(self._dec_lossless_plane(rd, (ch_, cw_), t4, CoeffMode.STANDARD, p, rbr, levels))
        return out

    def _dec_lossless_plane(self, rd, shape, tx, cmode, plane, rbr, levels):
        H, W = shape
        x = np.zeros(shape, dtype=np.int64)
        for r in range(0, H, tx.h):
            for c in range(0, W, tx.w):
                coeffs = decode_tb(rd, TbInfo(tx.h, tx.w, plane, ScanClass.DIAG, cmode))
                levels.append(coeffs)
                x[r : r + tx.h, c : c + tx.w] = rbr_inverse(lossless_inverse(coeffs, tx.kind), rbr)
        return x


def encode_cb(cfg, planes, pred=Prediction(), session=None, decisions=None, stats=None):
    """One-shot helper; pass a session to keep the bank across CBs."""
    s = session or CodecSession(cfg)
    return s.encode_cb(planes, pred, decisions, stats)


def decode_cb(cfg, rec, session=None):
    s = session or CodecSession(cfg)
    return s.decode_cb(rec)

