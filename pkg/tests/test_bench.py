import numpy as np
import pytest

from sla import kernels
from sla.bench import (
    BenchPoint,
    _time,
    attention_map_entries,
    bench_report,
    compare_backends,
    fit_scaling_exponent,
    kv_cache_bytes,
    recurrent_state_bytes,
    series,
    time_mechanism,
)
from sla.errors import ParameterError
from sla.mechanisms import AttentionConfig


def _synthetic(power, c=3e-7):
    return [BenchPoint("x", "recurrent", L, c * L**power, 0) for L in (512, 1024, 2048, 4096, 8192)]


@pytest.mark.parametrize("power", [1.0, 2.0, 1.5])
def test_exact_power_law(power):
    assert fit_scaling_exponent(_synthetic(power)) == pytest.approx(power, abs=1e-9)


def test_fit_preconditions():
    with pytest.raises(ParameterError):
        fit_scaling_exponent(_synthetic(1.0)[:3])
    narrow = [BenchPoint("x", "recurrent", L, L * 1e-6, 0) for L in (100, 200, 400, 800)]
    with pytest.raises(ParameterError):
        fit_scaling_exponent(narrow)
    mixed = _synthetic(1.0)
    mixed[0] = BenchPoint("y", "recurrent", 512, 1e-3, 0)
    with pytest.raises(ParameterError):
        fit_scaling_exponent(mixed)


def test_state_bytes():
    assert recurrent_state_bytes(AttentionConfig(4096, 4, 64)) == 131_072
    assert kv_cache_bytes(AttentionConfig(10, 2, 3, 5)) == 10 * 2 * 8 * 8
    assert attention_map_entries(4096) == 4096**2


def test_time_mechanism_points():
    cfg = AttentionConfig(64, 2, 4)
    pts = time_mechanism(cfg, [16, 32, 64], reps=3)
    assert {p.strategy for p in pts} == {"recurrent", "chunkwise"}
    assert all(p.wall_time > 0 and p.reps >= 3 for p in pts)
    assert {p.state_bytes for p in pts} == {recurrent_state_bytes(cfg)}


def test_full_softmax_reports_kv_bytes():
    pts = time_mechanism(AttentionConfig(32, 2, 4, mechanism="full-softmax"), [16, 32], reps=3)
    assert [p.state_bytes for p in pts] == [16 * 2 * 8 * 8, 32 * 2 * 8 * 8]


@pytest.mark.parametrize("bad", [dict(L_grid=[32, 16]), dict(L_grid=[16, 16]), dict(reps=2)])
def test_time_mechanism_validation(bad):
    kw = dict(L_grid=[16, 32], reps=3)
    kw.update(bad)
    with pytest.raises(ParameterError):
        time_mechanism(AttentionConfig(32, 2, 4), **kw)


def test_strategy_rejected():
    with pytest.raises(ParameterError):
        time_mechanism(AttentionConfig(32, 2, 4, mechanism="retnet"), [16], 3, strategies=["parallel"])


def test_low_confidence_widening():
    med, n, low = _time(lambda: None, 3, warmups=0)
    assert med > 0 and low and n > 3


def test_widening_not_needed_for_slow_calls():
    import time
    med, n, low = _time(lambda: time.sleep(0.002), 3, warmups=1)
    assert not low and n == 3 and med >= 0.002


def test_chunkwise_beats_full_at_4096():
    cfg = AttentionConfig(4096, 2, 16)
    full = time_mechanism(cfg.with_(mechanism="full-softmax"), [4096], reps=3)[0]
    chunk = series(time_mechanism(cfg, [4096], reps=3), "sla", "chunkwise")[0]
    assert chunk.wall_time < full.wall_time


def test_compare_backends_and_report():
    pts = compare_backends(AttentionConfig(64, 2, 4), [32, 64], reps=3)
    assert {p.backend for p in pts} == set(kernels.available_backends())
    r = bench_report(pts, {"sla/recurrent": 1.0})
    assert r.columns[:4] == ["mechanism", "strategy", "backend", "L"]
    assert r.meta["exponents"] == {"sla/recurrent": 1.0}
    assert "median_seconds" in r.cases[0] and "wall_time" not in r.cases[0]


def test_threads_cover_grid():
    pts = time_mechanism(AttentionConfig(64, 2, 4), [16, 32, 64], reps=3, workers=2)
    assert [p.L for p in pts if p.strategy == "recurrent"] == [16, 32, 64]


def test_benchmark_uses_verified_outputs():
    # same code path: the benched callable's output equals the mechanism output
    from sla.bench import _runner
    from sla.mechanisms import GateWeights, SequenceBatch, run_mechanism
    from sla.tensor import Rng
    cfg = AttentionConfig(32, 2, 4)
    rng = Rng(0)
    batch, weights = SequenceBatch.random(rng, cfg), GateWeights.random(rng, cfg)
    out = _runner(cfg, "chunkwise", batch, weights, None)()
    np.testing.assert_array_equal(out, run_mechanism(batch, cfg, weights))
