"""Seeded equivalence, reduction, streaming and causality checks.

Every check returns flat case dicts (``check``, ``seed``, ``max_error``,
``tol``, ``passed``) so a failing case can be reproduced from its seed and the
config alone.
"""

from __future__ import annotations

import numpy as np

from .mechanisms import (
    AttentionConfig,
    GateWeights,
    MechanismKind,
    SequenceBatch,
    gdn_recurrent,
    gla_recurrent,
    head_gates,
    linear_chunkwise,
    linear_parallel,
    linear_recurrent,
    retnet_recurrent,
    sla_chunkwise,
    sla_parallel,
    sla_recurrent,
)
from .report import RunReport
from .tensor import Rng, sigmoid

STRATEGY_TOL = 1e-10
REDUCTION_TOL = 1e-12
STREAM_TOL = 1e-12
SATURATION_TOL = 1e-6
SATURATION_LOGITS = (10.0, 15.0, 20.0, 25.0, 30.0)

RECURRENT_KINDS = tuple(k for k in MechanismKind if k is not MechanismKind.FULL_SOFTMAX)


def default_chunk_sizes(L: int) -> list[int]:
    return sorted({c for c in (1, 7, 16, L) if c <= L})


def random_instance(seed: int, config: AttentionConfig):
    rng = Rng(seed)
    batch = SequenceBatch.random(rng, config)
    weights = GateWeights.random(rng, config)
    return batch, weights


def _err(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0


def _case(check, seed, err, tol, **extra):
    return dict(check=check, seed=seed, max_error=err, tol=tol, passed=err <= tol, **extra)


def run_recurrent(kind: MechanismKind, batch: SequenceBatch, config: AttentionConfig,
                  weights: GateWeights, states=None, gates=None, backend=None):
    """Recurrent evaluation of any non-softmax-attention mechanism; returns ``(y, states)``.

    Gates are computed from ``batch`` for gated kinds unless passed explicitly.
    """
    kind = MechanismKind(kind)
    cfg = config.with_(mechanism=kind)
    if kind.gated and gates is None:
        gates = (head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk))
    if not kind.gated:
        gates = None
    base = kind.base
    if base is MechanismKind.LINEAR:
        if gates is None:
            return linear_recurrent(batch, cfg, states, backend)
        return sla_recurrent(batch, gates[0], gates[1], cfg, states, backend)
    if base is MechanismKind.RETNET:
        return retnet_recurrent(batch, cfg, weights.gamma, gates, states, backend)
    if base is MechanismKind.GLA:
        return gla_recurrent(batch, cfg, weights.alpha_source, gates, states, backend=backend)
    return gdn_recurrent(batch, cfg, weights.beta_source, weights.decay_source, gates, states,
                         backend=backend)


def strategy_cases(seed: int, batch, weights, config, chunk_sizes=None) -> list[dict]:
    """Parallel, recurrent and chunkwise agreement for linear and SLA."""
    chunk_sizes = chunk_sizes or default_chunk_sizes(config.seq_len)
    gq, gk = head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk)
    cases = []
    ref, _ = linear_recurrent(batch, config)
    cases.append(_case("linear parallel~recurrent", seed, _err(linear_parallel(batch, config), ref),
                       STRATEGY_TOL))
    for c in chunk_sizes:
        cases.append(_case(f"linear chunkwise C={c}~recurrent", seed,
                           _err(linear_chunkwise(batch, config, c), ref), STRATEGY_TOL))
    ref, _ = sla_recurrent(batch, gq, gk, config)
    cases.append(_case("sla parallel~recurrent", seed, _err(sla_parallel(batch, gq, gk, config), ref),
                       STRATEGY_TOL))
    for c in chunk_sizes:
        cases.append(_case(f"sla chunkwise C={c}~recurrent", seed,
                           _err(sla_chunkwise(batch, gq, gk, config, c), ref), STRATEGY_TOL))
    return cases


def reduction_cases(seed: int, batch, weights, config) -> list[dict]:
    """Softmax variants collapse to their bases when the gates or decays are switched off."""
    cases = []
    one = SequenceBatch(batch.q[:1], batch.k[:1], batch.v[:1], batch.x)
    cfg1 = config.with_(heads=1)
    w1 = GateWeights(weights.w_gq[:, :1], weights.w_gk[:, :1])
    g1 = (head_gates(one.q, w1.w_gq), head_gates(one.k, w1.w_gk))
    cases.append(_case("H=1 sla == linear", seed,
                       _err(sla_recurrent(one, *g1, cfg1)[0], linear_recurrent(one, cfg1)[0]),
                       REDUCTION_TOL))

    L, H = config.seq_len, config.heads
    ones = (np.ones((L, H)), np.ones((L, H)))
    gates = (head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk))
    sla_ref = sla_recurrent(batch, *gates, config)[0]
    cases.append(_case("softmax-retnet gamma=1 == sla", seed,
                       _err(retnet_recurrent(batch, config, 1.0, gates)[0], sla_ref), REDUCTION_TOL))
    cases.append(_case("softmax-gla alpha=1 == sla", seed,
                       _err(gla_recurrent(batch, config, gates=gates, alpha=1.0)[0], sla_ref),
                       REDUCTION_TOL))
    # alpha -> 1 as a limit: the gap must shrink along the logit sweep and end within tolerance
    errs = [_err(gla_recurrent(batch, config, gates=gates, alpha=float(sigmoid(z)))[0], sla_ref)
            for z in SATURATION_LOGITS]
    shrinking = all(b <= a for a, b in zip(errs, errs[1:]))
    cases.append(dict(check="softmax-gla alpha->1 ~ sla", seed=seed, max_error=errs[-1],
                      tol=SATURATION_TOL, passed=shrinking and errs[-1] <= SATURATION_TOL,
                      sweep_errors=errs))
    for kind in (MechanismKind.SOFTMAX_RETNET, MechanismKind.SOFTMAX_GLA, MechanismKind.SOFTMAX_GDN):
        cfg = config.with_(mechanism=kind, feature_map=None)
        gated = run_recurrent(kind, batch, cfg, weights, gates=ones)[0]
        base = run_recurrent(kind.base, batch, cfg, weights)[0]
        cases.append(_case(f"{kind.value} gates=1 == {kind.base.value}", seed, _err(gated, base),
                           REDUCTION_TOL))
    return cases


def streaming_cases(seed: int, batch, weights, config, split: int | None = None,
                    kinds=RECURRENT_KINDS) -> list[dict]:
    """Two recurrent calls split at ``split`` equal one pass."""
    L = config.seq_len
    split = L // 2 if split is None else split
    cases = []
    for kind in kinds:
        cfg = config.with_(mechanism=kind, feature_map=None)
        gates = None
        if MechanismKind(kind).gated:
            gates = (head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk))
        full, _ = run_recurrent(kind, batch, cfg, weights, gates=gates)
        if split in (0, L):
            cases.append(_case(f"{kind.value} split@{split}", seed, 0.0, STREAM_TOL))
            continue
        a, b = batch.slice(0, split), batch.slice(split, L)
        ga = gb = None
        if gates is not None:
            ga = (gates[0][:split], gates[1][:split])
            gb = (gates[0][split:], gates[1][split:])
        ya, st = run_recurrent(kind, a, cfg.with_(seq_len=split, chunk_size=1), weights, gates=ga)
        yb, _ = run_recurrent(kind, b, cfg.with_(seq_len=L - split, chunk_size=1), weights,
                              states=st, gates=gb)
        err = _err(np.concatenate([ya, yb], axis=1), full)
        cases.append(_case(f"{kind.value} split@{split}", seed, err, STREAM_TOL))
    return cases


def causality_cases(seed: int, batch, weights, config, t: int | None = None,
                    kinds=RECURRENT_KINDS) -> list[dict]:
    """Zeroing every token after ``t`` leaves outputs at positions ``<= t`` bit-identical."""
    L = config.seq_len
    t = (L - 1) // 2 if t is None else t
    cut = SequenceBatch(batch.q.copy(), batch.k.copy(), batch.v.copy(),
                        None if batch.x is None else batch.x.copy())
    cut.q[:, t + 1:] = 0.0
    cut.k[:, t + 1:] = 0.0
    cut.v[:, t + 1:] = 0.0
    if cut.x is not None:
        cut.x[t + 1:] = 0.0
    cases = []
    for kind in kinds:
        cfg = config.with_(mechanism=kind, feature_map=None)
        y0, _ = run_recurrent(kind, batch, cfg, weights)
        y1, _ = run_recurrent(kind, cut, cfg, weights)
        cases.append(_case(f"{kind.value} causal@{t}", seed, _err(y0[:, :t + 1], y1[:, :t + 1]), 0.0))
    return cases


def verify_report(config: AttentionConfig, seeds, chunk_sizes=None, workers: int = 1) -> RunReport:
    """Every check above on each seed; cases are ordered by seed."""
    seeds = list(seeds)
    if chunk_sizes is None:
        chunk_sizes = default_chunk_sizes(config.seq_len)
        if config.chunk_size not in chunk_sizes:
            chunk_sizes = sorted(chunk_sizes + [config.chunk_size])

    def one(seed):
        batch, weights = random_instance(seed, config)
        return (strategy_cases(seed, batch, weights, config, chunk_sizes)
                + reduction_cases(seed, batch, weights, config)
                + streaming_cases(seed, batch, weights, config)
                + causality_cases(seed, batch, weights, config))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    report = RunReport(
        "verify",
        meta={"L": config.seq_len, "H": config.heads, "dk": config.key_dim,
              "dv": config.value_dim, "fmap": config.feature_map.value,
              "chunk_sizes": chunk_sizes, "seeds": seeds},
        columns=["check", "seed", "max_error", "tol", "passed"],
    )
    for cases in results:
        report.cases.extend(cases)
    return report


def summarize(report: RunReport) -> list[dict]:
    """One row per check name: worst error across seeds and the seed that produced it."""
    rows: dict[str, dict] = {}
    for c in report.cases:
        row = rows.setdefault(c["check"], dict(check=c["check"], max_error=-1.0, tol=c["tol"],
                                               worst_seed=c["seed"], passed=True))
        if c["max_error"] > row["max_error"]:
            row["max_error"], row["worst_seed"] = c["max_error"], c["seed"]
        row["passed"] = row["passed"] and c["passed"]
    return list(rows.values())
