import csv
from dataclasses import replace

import numpy as np
import pytest

from avtx import cli
from avtx.codec import CodecSession
from avtx.container import container_bytes, container_read
from avtx.corpus import ResidualCorpus, synth_corpus
from avtx.transforms import TxType


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "c.avrc"
    synth_corpus(40, seed=21).write(p)
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    return {(r["section"], r["name"]): float(r["value"]) for r in csv.DictReader(open(path))}


def test_encode_decode_digest_match(corpus_path, tmp_path, capsys):
    out = tmp_path / "c.avtx"
    assert run("encode", corpus_path, out, "--csv", tmp_path / "s.csv") == 0
    table = capsys.readouterr().out
    assert "BR" in table and "tool" in table
    stats = read_csv(tmp_path / "s.csv")
    assert stats[("total", "blocks")] == 40
    passes = sum(v for (sec, _), v in stats.items() if sec == "pass")
    assert passes == pytest.approx(stats[("total", "bits")], abs=0.01)
    assert run("decode", out, tmp_path / "d.avrc") == 0
    assert len(ResidualCorpus.read(tmp_path / "d.avrc").blocks) == 40


def test_lossless_end_to_end(corpus_path, tmp_path):
    assert run("encode", corpus_path, tmp_path / "l.avtx", "--lossless") == 0
    assert run("decode", tmp_path / "l.avtx", tmp_path / "l.avrc") == 0
    a, b = ResidualCorpus.read(corpus_path), ResidualCorpus.read(tmp_path / "l.avrc")
    assert a.to_bytes() == b.to_bytes()


def test_no_ist_flag(corpus_path, tmp_path):
    counts = []
    for flag in ("--no-ist", "--ist"):
        assert run("encode", corpus_path, tmp_path / "x.avtx", flag, "--csv", tmp_path / "s.csv") == 0
        counts.append(read_csv(tmp_path / "s.csv")[("tool", "ist")])
    assert counts[0] == 0 < counts[1]


def test_encode_is_deterministic(corpus_path, tmp_path):
    run("encode", corpus_path, tmp_path / "a.avtx", "--qindex", 60)
    run("encode", corpus_path, tmp_path / "b.avtx", "--qindex", 60)
    assert (tmp_path / "a.avtx").read_bytes() == (tmp_path / "b.avtx").read_bytes()


def test_config_file_and_override(corpus_path, tmp_path):
    conf = tmp_path / "c.cfg"
    conf.write_text("# test\nbase_q_idx = 80\ntcq = 0\n")
    run("encode", corpus_path, tmp_path / "a.avtx", "--config", conf, "--cctx", "--no-fsc")
    cfg, _ = container_read(tmp_path / "a.avtx")
    assert (cfg.base_q_idx, cfg.tcq, cfg.fsc, cfg.cctx) == (80, False, False, True)
    run("encode", corpus_path, tmp_path / "a.avtx", "--config", conf, "--qindex", 90)
    assert container_read(tmp_path / "a.avtx")[0].base_q_idx == 90


def test_qm_file(corpus_path, tmp_path):
    qm = tmp_path / "m.qm"
    qm.write_text("0 4 4 1 " + " ".join(["32"] * 15 + ["40"]) + "\n")
    assert run("encode", corpus_path, tmp_path / "q.avtx", "--qm", qm) == 0
    cfg, _ = container_read(tmp_path / "q.avtx")
    assert cfg.qm and cfg.qms[(0, 4, 4)].weights[3][3] == 40
    assert run("decode", tmp_path / "q.avtx", tmp_path / "q.avrc") == 0
    qm.write_text("0 4 4 0 1 2\n")
    assert run("encode", corpus_path, tmp_path / "q.avtx", "--qm", qm) == cli.EXIT_INPUT


def test_trace_lists_every_symbol(corpus_path, tmp_path):
    run("encode", corpus_path, tmp_path / "a.avtx", "--trace", tmp_path / "enc.txt")
    run("decode", tmp_path / "a.avtx", tmp_path / "a.avrc", "--trace", tmp_path / "dec.txt")
    enc, dec = (tmp_path / "enc.txt").read_text(), (tmp_path / "dec.txt").read_text()
    assert enc.startswith("cb 0 ")
    strip = lambda t: [" ".join(line.split()[:5]) for line in t.splitlines()]  # noqa: E731
    assert strip(enc) == strip(dec)


def test_roundtrip_pass_and_jobs(corpus_path, capsys):
    assert run("roundtrip", corpus_path) == 0
    assert run("roundtrip", corpus_path, "--jobs", 3, "--no-tcq") == 0
    out = capsys.readouterr().out
    assert out.count("PASS 40 blocks") == 2


def test_roundtrip_reports_first_failure(corpus_path, capsys, monkeypatch):
    real = CodecSession.decode_cb
    calls = []

    def broken(self, rec, trace=None):
        planes, digest = real(self, rec, trace)
        calls.append(1)
        if len(calls) == 5:
            planes[0] = planes[0].copy()
            planes[0][1, 2] += 1
        return planes, digest

    monkeypatch.setattr(CodecSession, "decode_cb", broken)
    assert run("roundtrip", corpus_path) == cli.EXIT_MISMATCH
    out = capsys.readouterr().out
    assert out.startswith("FAIL block 4 (") and "row 1, col 2" in out


def test_decode_detects_digest_mismatch(corpus_path, tmp_path, capsys):
    run("encode", corpus_path, tmp_path / "a.avtx")
    cfg, recs = container_read(tmp_path / "a.avtx")
    recs[3] = replace(recs[3], digest=recs[3].digest ^ 1)
    (tmp_path / "b.avtx").write_bytes(container_bytes(cfg, recs))
    assert run("decode", tmp_path / "b.avtx", tmp_path / "b.avrc") == cli.EXIT_MISMATCH
    assert "record 3" in capsys.readouterr().err


def test_decode_corrupt_payload_exits_nonzero(corpus_path, tmp_path):
    run("encode", corpus_path, tmp_path / "a.avtx")
    cfg, recs = container_read(tmp_path / "a.avtx")
    recs[0] = replace(recs[0], payload=bytes(b ^ 0xA5 for b in recs[0].payload))
    (tmp_path / "b.avtx").write_bytes(container_bytes(cfg, recs))
    assert run("decode", tmp_path / "b.avtx", tmp_path / "b.avrc") != 0


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.write_bytes(b"AVTX\x07\x00")
    assert run("decode", bad, tmp_path / "o") == cli.EXIT_INPUT
    assert "offset 4" in capsys.readouterr().err
    assert run("encode", tmp_path / "missing", tmp_path / "o") == cli.EXIT_INPUT
    with pytest.raises(SystemExit) as e:
        run("dump", "nothing")
    assert e.value.code == cli.EXIT_USAGE


def test_bitdepth_conflict(corpus_path, tmp_path):
    assert run("encode", corpus_path, tmp_path / "a", "--bitdepth", 10) == cli.EXIT_INPUT


def test_dump_mdtx(capsys):
    assert run("dump", "mdtx") == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 39
    for r in rows:
        types = [int(v) for v in r.split()[3:]]
        assert len(types) == 7 and TxType.DCT_DCT in types and TxType.IDTX in types


def test_dump_other_tables(capsys):
    assert run("dump", "contexts") == 0 and "all_zero" in capsys.readouterr().out
    assert run("dump", "kernels") == 0
    out = capsys.readouterr().out
    assert "DCT2 N=4" in out and "DDT16 N=16" in out


def test_memreport_snapshot(tmp_path, capsys):
    assert run("memreport") == 0
    first = capsys.readouterr().out
    assert run("memreport") == 0
    assert capsys.readouterr().out == first
    total = first.splitlines()[-1].split()
    assert total == ["TOTAL", "513", "5886", "6399"]
    run("memreport", "--csv", tmp_path / "m.csv")
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert rows[-1]["ram_bytes"] == "5886"


def test_synth_is_seeded(tmp_path):
    run("synth", tmp_path / "a", "--count", 10, "--seed", 4, "--bitdepth", 10)
    run("synth", tmp_path / "b", "--count", 10, "--seed", 4, "--bitdepth", 10)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    c = ResidualCorpus.read(tmp_path / "a")
    assert c.bit_depth == 10 and all(np.abs(p).max() < 2**11 for b in c.blocks for p in b.planes)
