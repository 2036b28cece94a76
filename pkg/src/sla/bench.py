"""Wall-clock micro-benchmarks and log-log scaling fits.

Timings are medians over repetitions after warmup runs.  The benchmarked
callables are the same functions the verification suite checks, so timing
never uses a separate code path.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ParameterError
from .mechanisms import (
    AttentionConfig,
    GateWeights,
    MechanismKind,
    SequenceBatch,
    full_attention,
    head_gates,
    linear_chunkwise,
    linear_parallel,
    linear_recurrent,
    run_mechanism,
    sla_chunkwise,
    sla_parallel,
    sla_recurrent,
)
from .report import RunReport
from .tensor import Rng

WARMUPS = 2
MIN_TIMER_TICKS = 1000
MAX_REP_WIDENING = 4


@dataclass
class BenchPoint:
    mechanism: str
    strategy: str
    L: int
    wall_time: float
    state_bytes: int
    backend: str = ""
    reps: int = 0
    low_confidence: bool = False


def recurrent_state_bytes(config: AttentionConfig) -> int:
    """Bytes of the carried per-layer state: ``H * d_k * d_v`` float64s, independent of L."""
    return config.heads * config.key_dim * config.value_dim * 8


def kv_cache_bytes(config: AttentionConfig) -> int:
    """Bytes a softmax-attention decoder keeps per layer: all past keys and values."""
    return config.seq_len * config.heads * (config.key_dim + config.value_dim) * 8


def attention_map_entries(seq_len: int) -> int:
    return seq_len * seq_len


def default_strategies(mechanism: MechanismKind) -> tuple[str, ...]:
    if mechanism is MechanismKind.FULL_SOFTMAX:
        return ("parallel",)
    if mechanism in (MechanismKind.LINEAR, MechanismKind.SLA):
        return ("recurrent", "chunkwise")
    return ("recurrent",)


def _runner(config: AttentionConfig, strategy: str, batch, weights, backend):
    kind = config.mechanism
    if kind is MechanismKind.FULL_SOFTMAX:
        if strategy != "parallel":
            raise ParameterError("full-softmax only has a parallel strategy")
        return lambda: full_attention(batch, config)
    if kind is MechanismKind.LINEAR:
        return {
            "parallel": lambda: linear_parallel(batch, config),
            "recurrent": lambda: linear_recurrent(batch, config, backend=backend),
            "chunkwise": lambda: linear_chunkwise(batch, config),
        }[strategy]
    if kind is MechanismKind.SLA:
        def gates():
            return head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk)
        return {
            "parallel": lambda: sla_parallel(batch, *gates(), config),
            "recurrent": lambda: sla_recurrent(batch, *gates(), config, backend=backend),
            "chunkwise": lambda: sla_chunkwise(batch, *gates(), config),
        }[strategy]
    if strategy != "recurrent":
        raise ParameterError(f"{kind.value} only has a recurrent strategy")
    return lambda: run_mechanism(batch, config, weights, backend=backend)


def _time(fn, reps: int, warmups: int = WARMUPS) -> tuple[float, int, bool]:
    for _ in range(warmups):
        fn()
    resolution = time.get_clock_info("perf_counter").resolution
    n, low = reps, False
    for _ in range(MAX_REP_WIDENING):
        samples = []
        for _ in range(n):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        med = statistics.median(samples)
        if med >= MIN_TIMER_TICKS * resolution:
            return med, n, low
        low, n = True, n * 2
    return max(med, resolution), n, low


def time_mechanism(config: AttentionConfig, L_grid, reps: int = 5, strategies=None,
                   backend: str | None = None, seed: int = 0, workers: int = 1) -> list[BenchPoint]:
    """Median wall time per (strategy, L) for ``config.mechanism``.

    ``config.seq_len`` is replaced by each grid value; the chunk size is
    clipped to L.  ``workers > 1`` times different grid points on separate threads.
    """
    L_grid = [int(L) for L in L_grid]
    if any(b <= a for a, b in zip(L_grid, L_grid[1:])):
        raise ParameterError("L_grid must be strictly ascending")
    if reps < 3:
        raise ParameterError("reps must be >= 3")
    strategies = tuple(strategies or default_strategies(config.mechanism))
    backend_name = backend or kernels.BACKEND

    def bench_one(L):
        cfg = config.with_(seq_len=L, chunk_size=min(config.chunk_size, L))
        rng = Rng(seed)
        batch = SequenceBatch.random(rng, cfg)
        weights = GateWeights.random(rng, cfg)
        out = []
        for strategy in strategies:
            fn = _runner(cfg, strategy, batch, weights, backend)
            med, n, low = _time(fn, reps)
            state = kv_cache_bytes(cfg) if strategy == "parallel" else recurrent_state_bytes(cfg)
            out.append(BenchPoint(cfg.mechanism.value, strategy, L, med, state,
                                  backend_name if strategy == "recurrent" else "", n, low))
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(bench_one, L_grid))
    else:
        chunks = [bench_one(L) for L in L_grid]
    return [p for chunk in chunks for p in chunk]


def fit_scaling_exponent(points) -> float:
    """Least-squares slope of ``log(wall_time)`` against ``log(L)``."""
    points = list(points)
    if len(points) < 4:
        raise ParameterError(f"need >= 4 points for a scaling fit, got {len(points)}")
    keys = {(p.mechanism, p.strategy, p.backend) for p in points}
    if len(keys) != 1:
        raise ParameterError(f"points mix several series: {sorted(keys)}")
    L = np.array([p.L for p in points], dtype=np.float64)
    t = np.array([p.wall_time for p in points], dtype=np.float64)
    if L.max() < 16 * L.min():
        raise ParameterError("grid must span at least 16x in L")
    if np.any(t <= 0):
        raise ParameterError("wall times must be positive")
    slope, _ = np.polyfit(np.log(L), np.log(t), 1)
    return float(slope)


def series(points, mechanism: str, strategy: str, backend: str | None = None) -> list[BenchPoint]:
    return [p for p in points if p.mechanism == mechanism and p.strategy == strategy
            and (backend is None or p.backend == backend)]


def compare_backends(config: AttentionConfig, L_grid, reps: int = 5, seed: int = 0) -> list[BenchPoint]:
    """Recurrent-strategy timings on every importable scan backend."""
    points = []
    for name in kernels.available_backends():
        points.extend(time_mechanism(config, L_grid, reps, strategies=("recurrent",),
                                     backend=name, seed=seed))
    return points


def bench_report(points, exponents: dict | None = None) -> RunReport:
    report = RunReport(
        "bench",
        meta={"exponents": exponents or {}},
        columns=["mechanism", "strategy", "backend", "L", "median_seconds", "state_bytes",
                 "reps", "low_confidence"],
    )
    for p in points:
        row = asdict(p)
        row["median_seconds"] = row.pop("wall_time")
        report.add(**row)
    return report
