import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avtx.errors import ParameterError
from avtx.quant import default_lambda
from avtx.tcq import (
    DEFAULT_SM,
    Q0,
    Q1,
    RateModel,
    TcqStateMachine,
    evaluate_cost,
    greedy_quantize,
    next_state,
    quantizer_of,
    state_sequence,
    tcq_applicability,
    tcq_dequantize,
    tcq_dequantize_scan,
    tcq_reconstruct,
    trellis_quantize,
)


def random_rate(rng, n, k=6):
    tab = rng.integers(100, 3000, (n, 2, k))
    tab[:, :, 0] = rng.integers(20, 600, (n, 2))
    return RateModel(tab, rng.integers(200, 4000, n + 1))


def test_machine_shape():
    for s in range(8):
        a, b = next_state(DEFAULT_SM, s, 0), next_state(DEFAULT_SM, s, 1)
        assert a != b and 0 <= a < 8 and 0 <= b < 8
    assert quantizer_of(DEFAULT_SM, 0) == Q0
    assert [quantizer_of(DEFAULT_SM, s) for s in range(8)] == [0, 1] * 4
    with pytest.raises(ParameterError):
        next_state(DEFAULT_SM, 8, 0)


def test_zero_parity_walk_is_deterministic():
    walk = state_sequence([2] * 20)
    assert walk == state_sequence([2] * 20)
    assert walk[0] == 0


def test_machine_config_round_trip():
    text = "\n".join(f"{s} {a} {b} {q}  # state {s}" for s, ((a, b), q) in enumerate(zip(DEFAULT_SM.next, DEFAULT_SM.quantizer)))
    assert TcqStateMachine.from_config(text) == DEFAULT_SM
    with pytest.raises(ParameterError):
        TcqStateMachine.from_config("0 1 1 0")
    with pytest.raises(ParameterError):
        TcqStateMachine(next=((0, 0),) * 8)


def test_reconstruct_examples():
    assert tcq_reconstruct(0, Q1, 64) == 0
    assert tcq_reconstruct(2, Q0, 64) == 128
    assert tcq_reconstruct(2, Q1, 64) == 96
    with pytest.raises(ParameterError):
        tcq_reconstruct(-1, Q0, 64)


def test_q0_matches_scalar_dequant():
    from avtx.quant import dequantize

    for lv in range(-50, 51):
        assert tcq_dequantize(lv, Q0, 81, 40) == dequantize(lv, 81, 40)


def test_applicability():
    assert tcq_applicability(0, True, False)
    assert not tcq_applicability(1, True, False)
    assert not tcq_applicability(0, False, False)
    assert not tcq_applicability(0, True, True)
    assert not tcq_applicability(0, True, False, enabled=False)


def test_all_zero_input():
    r = trellis_quantize(np.zeros(16), 2560, 10.0)
    assert r.eob == 0 and not r.levels.any()


def test_exact_q0_point_small_lambda():
    # 2560 = QStep 80 at unity weight: Q0 points are multiples of 2.5.
    r = trellis_quantize([25, 0], 2560, 1e-9)
    assert r.levels.tolist() == [10, 0] and r.eob == 1
    assert evaluate_cost([25, 0], r.levels, 2560, 1e-9, RateModel.simple(2)) < 1e-6


def test_parameter_errors():
    with pytest.raises(ParameterError):
        trellis_quantize([], 100, 1.0)
    with pytest.raises(ParameterError):
        trellis_quantize([1, 2], 100, 0.0)
    with pytest.raises(ParameterError):
        trellis_quantize([1, 2], 100, 1.0, rate=RateModel.simple(3))


def test_reported_cost_matches_evaluation():
    rng = np.random.default_rng(4)
    for _ in range(200):
        c = rng.integers(-400, 400, 16)
        rate = random_rate(rng, 16)
        lam = default_lambda(80)
        r = trellis_quantize(c, 2560, lam, rate)
        assert r.cost == pytest.approx(evaluate_cost(c, r.levels, 2560, lam, rate), rel=1e-9)


def test_beats_greedy_and_all_zero():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        c = np.round(rng.laplace(0, 60, 16) * (rng.random(16) < 0.6)).astype(np.int64)
        rate = RateModel.simple(16)
        lam = default_lambda(80)
        t = evaluate_cost(c, trellis_quantize(c, 2560, lam, rate).levels, 2560, lam, rate)
        g = evaluate_cost(c, greedy_quantize(c, 2560), 2560, lam, rate)
        z = evaluate_cost(c, np.zeros(16), 2560, lam, rate)
        assert t <= g + 1e-6 and t <= z + 1e-6


@pytest.mark.parametrize("seed", range(12))
def test_exhaustive_optimality_tiny(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    cap = 4 if n <= 5 else 3
    c = rng.integers(-12, 13, n)
    step = int(rng.integers(600, 6000))
    rate = random_rate(rng, n)
    lam = float(rng.uniform(0.05, 5.0))
    r = trellis_quantize(c, step, lam, rate, full_cap=cap)
    best = min(
        evaluate_cost(c, np.array(lv) * np.where(c < 0, -1, 1), step, lam, rate)
        for lv in itertools.product(range(cap + 1), repeat=n)
    )
    assert r.cost == pytest.approx(best, rel=1e-9, abs=1e-9)


def test_decoder_replay_matches_encoder_states():
    rng = np.random.default_rng(8)
    for _ in range(200):
        c = rng.integers(-900, 900, 32)
        r = trellis_quantize(c, 2560, default_lambda(80))
        rec = tcq_dequantize_scan(r.levels, 80)
        states = state_sequence(r.levels[: r.eob][::-1])
        want = [tcq_dequantize(int(lv), DEFAULT_SM.quantizer[s], 80) for lv, s in zip(r.levels[: r.eob][::-1], states)]
        assert rec[: r.eob][::-1] == want
        assert not any(rec[r.eob :])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-300, 300), min_size=1, max_size=24), st.floats(0.1, 50), st.floats(1.1, 20))
def test_larger_lambda_never_raises_rate(c, lam, mult):
    rate = RateModel.simple(len(c))

    def bits(levels):
        zero = RateModel(rate.level, rate.eob)
        return evaluate_cost(c, levels, 2560, 1.0, zero) - evaluate_cost(c, levels, 2560, 0.0, zero)

    lo = trellis_quantize(c, 2560, lam, rate)
    hi = trellis_quantize(c, 2560, lam * mult, rate)
    assert bits(hi.levels) <= bits(lo.levels) + 1e-6
