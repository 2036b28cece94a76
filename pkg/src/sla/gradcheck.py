"""Analytic gradients of the SLA forward pass and a central-difference oracle.

Only the plain SLA mechanism is differentiated.  The loss is the linear
functional ``sum(probe * concat_heads(Y))`` so that the probe is exactly the
upstream gradient of the concatenated head outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mechanisms import (
    AttentionConfig,
    GateWeights,
    SequenceBatch,
    concat_heads,
    gate_scores,
    sla_recurrent,
)
from .report import RunReport
from .tensor import FeatureMapKind, Rng, feature_map, feature_map_grad, softmax_rows

REL_TOL = 1e-6
REL_FLOOR = 1e-8
FD_STEP = 1e-5
PRIMALS = ("q", "k", "v", "w_gq", "w_gk")


@dataclass
class GradBundle:
    d_q: np.ndarray
    d_k: np.ndarray
    d_v: np.ndarray
    d_wgq: np.ndarray
    d_wgk: np.ndarray

    def __getitem__(self, primal: str) -> np.ndarray:
        return getattr(self, "d_" + primal.replace("w_", "w"))


def _check_probe(probe, config: AttentionConfig) -> np.ndarray:
    probe = np.asarray(probe, dtype=np.float64)
    shape = (config.seq_len, config.heads * config.value_dim)
    if probe.shape != shape:
        raise ParameterError(f"probe must be {shape}, got {probe.shape}")
    return probe


def sla_loss(batch: SequenceBatch, weights: GateWeights, config: AttentionConfig, probe) -> float:
    probe = _check_probe(probe, config)
    gq = softmax_rows(gate_scores(batch.q, weights.w_gq))
    gk = softmax_rows(gate_scores(batch.k, weights.w_gk))
    y, _ = sla_recurrent(batch, gq, gk, config)
    return float(np.sum(probe * concat_heads(y)))


def _reference_loss(q, k, v, w_gq, w_gk, fmap: FeatureMapKind, probe):
    # Oracle-side forward: parallel form in extended precision, independent of
    # the recurrent kernels.  Keeps rounding noise in f(x+h) - f(x-h) well
    # below the 1e-8 relative-error floor.
    ld = np.longdouble
    q, k, v, w_gq, w_gk, probe = (np.asarray(a, dtype=ld) for a in (q, k, v, w_gq, w_gk, probe))

    def softmax(s):
        e = np.exp(s - s.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def phi(x):
        if fmap is FeatureMapKind.IDENTITY:
            return x
        if fmap is FeatureMapKind.RELU:
            return np.maximum(x, ld(0))
        if fmap is FeatureMapKind.ONE_PLUS_ELU:
            return np.where(x > 0, 1 + x, np.exp(np.minimum(x, ld(0))))
        return x / (1 + np.exp(-x))

    gq = softmax(np.einsum("hld,dh->lh", q, w_gq))
    gk = softmax(np.einsum("hld,dh->lh", k, w_gk))
    H, L, _ = q.shape
    dy = probe.reshape(L, H, -1)
    total = ld(0)
    for h in range(H):
        a = np.tril((gq[:, h, None] * phi(q[h])) @ (gk[:, h, None] * phi(k[h])).T)
        total += np.sum(dy[:, h, :] * (a @ v[h]))
    return total


def reference_loss(batch: SequenceBatch, weights: GateWeights, config: AttentionConfig,
                   probe):
    """Same functional as :func:`sla_loss` via the parallel form in ``np.longdouble``."""
    probe = _check_probe(probe, config)
    return _reference_loss(batch.q, batch.k, batch.v, weights.w_gq, weights.w_gk,
                           FeatureMapKind(config.feature_map), probe)


def _softmax_vjp(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    # (diag(g) - g g^T) dg, row by row
    return g * (dg - np.sum(g * dg, axis=1, keepdims=True))


def sla_backward(batch: SequenceBatch, weights: GateWeights, config: AttentionConfig,
                 probe) -> GradBundle:
    """Reverse-mode gradients of :func:`sla_loss` w.r.t. Q, K, V, W_GQ and W_GK.

    The state recurrence is unrolled as prefix sums: ``S_t`` is the running sum
    of gated write outer products and the state cotangent ``dS_t`` is the
    suffix sum of ``q~_tau^T dy_tau`` over ``tau >= t``.
    """
    batch.check(config)
    probe = _check_probe(probe, config)
    H, L, dv = config.heads, config.seq_len, config.value_dim
    fmap = config.feature_map
    q, k, v = batch.q, batch.k, batch.v

    gq = softmax_rows(gate_scores(q, weights.w_gq))
    gk = softmax_rows(gate_scores(k, weights.w_gk))
    fq, fk = feature_map(q, fmap), feature_map(k, fmap)
    qt = fq * gq.T[:, :, None]
    kt = fk * gk.T[:, :, None]
    dy = probe.reshape(L, H, dv).transpose(1, 0, 2)

    d_qt = np.empty_like(qt)
    d_kt = np.empty_like(kt)
    d_v = np.empty_like(v)
    for h in range(H):
        states = np.cumsum(kt[h][:, :, None] * v[h][:, None, :], axis=0)
        reads = qt[h][:, :, None] * dy[h][:, None, :]
        d_states = np.cumsum(reads[::-1], axis=0)[::-1]
        d_qt[h] = np.einsum("tij,tj->ti", states, dy[h])
        d_kt[h] = np.einsum("tij,tj->ti", d_states, v[h])
        d_v[h] = np.einsum("ti,tij->tj", kt[h], d_states)

    d_gq = np.einsum("htd,htd->th", d_qt, fq)
    d_gk = np.einsum("htd,htd->th", d_kt, fk)
    d_sq = _softmax_vjp(gq, d_gq)
    d_sk = _softmax_vjp(gk, d_gk)

    d_q = d_qt * gq.T[:, :, None] * feature_map_grad(q, fmap)
    d_k = d_kt * gk.T[:, :, None] * feature_map_grad(k, fmap)
    d_q += d_sq.T[:, :, None] * weights.w_gq.T[:, None, :]
    d_k += d_sk.T[:, :, None] * weights.w_gk.T[:, None, :]
    d_wgq = np.einsum("th,htd->dh", d_sq, q)
    d_wgk = np.einsum("th,htd->dh", d_sk, k)
    return GradBundle(d_q, d_k, d_v, d_wgq, d_wgk)


def finite_diff_grad(loss_fn, primal, h: float = FD_STEP) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every entry."""
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.array(primal, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        f_plus = loss_fn(x)
        x[idx] = orig - h
        f_minus = loss_fn(x)
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(a, b, floor: float = REL_FLOOR) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def primal_loss_fn(primal: str, batch: SequenceBatch, weights: GateWeights,
                   config: AttentionConfig, probe):
    """``loss(x)`` with the named primal replaced by ``x`` and everything else fixed.

    Evaluates :func:`reference_loss`, so it is the oracle side of a gradient check.
    """
    def loss(x):
        b, w = batch, weights
        if primal in ("q", "k", "v"):
            parts = {"q": batch.q, "k": batch.k, "v": batch.v, primal: x}
            b = SequenceBatch(parts["q"], parts["k"], parts["v"], batch.x)
        elif primal == "w_gq":
            w = GateWeights(x, weights.w_gk)
        elif primal == "w_gk":
            w = GateWeights(weights.w_gq, x)
        else:
            raise ParameterError(f"unknown primal {primal!r}")
        return reference_loss(b, w, config, probe)
    return loss


def random_problem(seed: int, config: AttentionConfig, kink_margin: float | None = None):
    """Seeded ``(batch, weights, probe)``.

    With ``kink_margin`` set, query and key entries are pushed to magnitude at
    least ``kink_margin`` so a relu feature map is differentiable everywhere
    within the finite-difference stencil.
    """
    rng = Rng(seed)
    batch = SequenceBatch.random(rng, config)
    if kink_margin is not None:
        def push(m):
            return np.sign(m) * (kink_margin + (1.0 - kink_margin) * np.abs(m))
        batch = SequenceBatch(push(batch.q), push(batch.k), batch.v, batch.x)
    weights = GateWeights.random(rng, config)
    probe = rng.uniform((config.seq_len, config.heads * config.value_dim))
    return batch, weights, probe


def gradcheck_report(config: AttentionConfig, seeds, h: float = FD_STEP,
                     tol: float = REL_TOL, kink_margin: float | None = None) -> RunReport:
    """Analytic vs central-difference gradients on every primal for each seed."""
    if config.seq_len > 8 or config.heads > 4 or max(config.key_dim, config.value_dim) > 4:
        raise ParameterError("gradcheck configs are limited to L <= 8, H <= 4, d <= 4")
    fmap = FeatureMapKind(config.feature_map)
    if fmap is FeatureMapKind.RELU and kink_margin is None:
        kink_margin = 0.1
    report = RunReport(
        "gradcheck",
        meta={"L": config.seq_len, "H": config.heads, "dk": config.key_dim,
              "dv": config.value_dim, "fmap": fmap.value, "h": h, "tol": tol},
        columns=["seed", "primal", "max_rel_error", "passed"],
    )
    for seed in seeds:
        batch, weights, probe = random_problem(seed, config, kink_margin)
        grads = sla_backward(batch, weights, config, probe)
        for primal in PRIMALS:
            primal_value = getattr(batch, primal) if primal in ("q", "k", "v") else getattr(weights, primal)
            numeric = finite_diff_grad(primal_loss_fn(primal, batch, weights, config, probe),
                                       primal_value, h)
            err = max_relative_error(grads[primal], numeric)
            report.add(seed=seed, primal=primal, max_rel_error=err, passed=err <= tol)
    return report
