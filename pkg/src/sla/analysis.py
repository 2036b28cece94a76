"""Forward-only needle retrieval diagnostic.

A single (key, value) needle is hidden among distractors whose keys are less
similar to the final query.  Gate score overrides route the needle's write and
the query's read to head 0 while distractors write to the remaining heads, so
the diagnostic measures what head competition *can* filter, not what a trained
model learns.  The readout is the sum of the head outputs at the final position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mechanisms import (
    AttentionConfig,
    MechanismKind,
    SequenceBatch,
    full_attention,
    linear_chunkwise,
    sla_chunkwise,
)
from .report import RunReport
from .tensor import Rng, softmax_rows

ROUTINGS = ("soft", "hard", "uniform")
MIN_WIN_RATE = 0.9
FILTERING_TOL = 1e-9


@dataclass
class NeedleInstance:
    batch: SequenceBatch
    needle_pos: int  # 0-based
    needle_key: np.ndarray
    needle_value: np.ndarray
    query: np.ndarray
    scores_q: np.ndarray  # (L, H) read-gate logits
    scores_k: np.ndarray  # (L, H) write-gate logits
    needle_sim: float
    distractor_sims: np.ndarray
    sharpness: float

    @property
    def seq_len(self) -> int:
        return self.batch.seq_len

    @property
    def heads(self) -> int:
        return self.batch.heads

    def gates(self, routing: str = "soft") -> tuple[np.ndarray, np.ndarray]:
        """Read/write gates: softmax of the overrides, their exact one-hot limit, or uniform."""
        L, H = self.scores_q.shape
        if routing == "soft":
            return softmax_rows(self.scores_q), softmax_rows(self.scores_k)
        if routing == "hard":
            return _one_hot_rows(self.scores_q), _one_hot_rows(self.scores_k)
        if routing == "uniform":
            u = np.full((L, H), 1.0 / H)
            return u, u.copy()
        raise ParameterError(f"routing must be one of {ROUTINGS}, got {routing!r}")


def _one_hot_rows(scores: np.ndarray) -> np.ndarray:
    out = np.zeros_like(scores)
    out[np.arange(scores.shape[0]), np.argmax(scores, axis=1)] = 1.0
    return out


def _perpendicular_unit(rng: Rng, direction: np.ndarray) -> np.ndarray:
    while True:
        u = rng.uniform(direction.shape[0])
        u -= (u @ direction) * direction
        norm = np.linalg.norm(u)
        if norm > 1e-3:
            return u / norm


def build_needle_instance(L: int, H: int, d_k: int, d_v: int, rng: Rng, noise: float = 0.05,
                          gap: float = 10.0, max_distractor_sim: float = 0.5,
                          sharpness: float = 10.0) -> NeedleInstance:
    """Construct one needle-in-a-haystack instance with the query at position ``L - 1``.

    Distractor keys have cosine similarity to the query drawn uniformly from
    ``(0, min(max_distractor_sim, needle_sim))``.  Every head sees the same
    keys/values; the batch queries are the unit query scaled by
    ``sharpness * sqrt(d_k)`` so that softmax attention logits equal
    ``sharpness * cos``.
    """
    if L < 2:
        raise ParameterError("needle instances need L >= 2")
    if H < 2:
        raise ParameterError("head routing needs H >= 2")
    if d_k < 2:
        raise ParameterError("distractor keys need d_k >= 2")
    if not 0 < max_distractor_sim <= 1:
        raise ParameterError("max_distractor_sim must lie in (0, 1]")

    needle_key = rng.unit_vector(d_k)
    query = needle_key + rng.uniform(d_k, noise)
    query /= np.linalg.norm(query)
    needle_sim = float(needle_key @ query)
    needle_value = rng.unit_vector(d_v)
    needle_pos = rng.integers(L)

    sim_cap = min(max_distractor_sim, needle_sim)
    keys = np.empty((L, d_k))
    values = rng.uniform((L, d_v))
    sims = np.empty(L - 1)
    j = 0
    for t in range(L):
        if t == needle_pos:
            keys[t] = needle_key
            values[t] = needle_value
            continue
        c = sim_cap * max(rng.random(1)[0], 1e-6)
        keys[t] = c * query + math.sqrt(1.0 - c * c) * _perpendicular_unit(rng, query)
        sims[j] = keys[t] @ query
        j += 1
    assert np.all(sims < needle_sim), "distractor outranks the needle"
    assert np.all(sims > 0), "distractor similarity must be positive"

    scores_q = np.zeros((L, H))
    scores_q[:, 0] = gap
    scores_k = np.zeros((L, H))
    scores_k[:, 1:] = gap
    scores_k[needle_pos] = 0.0
    scores_k[needle_pos, 0] = gap

    q_rows = np.tile(query * sharpness * math.sqrt(d_k), (L, 1))
    batch = SequenceBatch(np.tile(q_rows, (H, 1, 1)), np.tile(keys, (H, 1, 1)),
                          np.tile(values, (H, 1, 1)))
    return NeedleInstance(batch, needle_pos, needle_key, needle_value, query, scores_q,
                          scores_k, needle_sim, sims, sharpness)


class RetrievalScore(float):
    """Cosine score; ``degenerate`` is set when the readout had zero norm (score 0)."""

    degenerate: bool = False

    def __new__(cls, value: float, degenerate: bool = False):
        obj = super().__new__(cls, value)
        obj.degenerate = degenerate
        return obj


def readout(instance: NeedleInstance, mechanism: MechanismKind | str,
            routing: str = "soft") -> np.ndarray:
    """Sum over heads of the mechanism's output at the final position."""
    mechanism = MechanismKind(mechanism)
    b = instance.batch
    cfg = AttentionConfig(b.seq_len, b.heads, b.key_dim, b.value_dim,
                          chunk_size=min(64, b.seq_len), mechanism=mechanism)
    if mechanism is MechanismKind.FULL_SOFTMAX:
        y = full_attention(b, cfg)
    elif mechanism is MechanismKind.LINEAR:
        y = linear_chunkwise(b, cfg)
    elif mechanism is MechanismKind.SLA:
        gq, gk = instance.gates(routing)
        y = sla_chunkwise(b, gq, gk, cfg)
    else:
        raise ParameterError(f"retrieval_score supports linear, sla and full-softmax, not {mechanism.value}")
    return y[:, -1, :].sum(axis=0)


def retrieval_score(instance: NeedleInstance, mechanism: MechanismKind | str,
                    routing: str = "soft") -> RetrievalScore:
    out = readout(instance, mechanism, routing)
    norm = np.linalg.norm(out)
    if norm < 1e-300:
        return RetrievalScore(0.0, degenerate=True)
    cos = float(out @ instance.needle_value / (norm * np.linalg.norm(instance.needle_value)))
    return RetrievalScore(max(-1.0, min(1.0, cos)))


def needle_only_score(instance: NeedleInstance) -> RetrievalScore:
    """Linear attention on a one-token sequence holding just the needle, read by the query."""
    b = instance.batch
    t = instance.needle_pos
    alone = SequenceBatch(b.q[:1, -1:], b.k[:1, t:t + 1], b.v[:1, t:t + 1])
    cfg = AttentionConfig(1, 1, b.key_dim, b.value_dim, mechanism=MechanismKind.LINEAR)
    out = linear_chunkwise(alone, cfg)[0, -1]
    norm = np.linalg.norm(out)
    if norm < 1e-300:
        return RetrievalScore(0.0, degenerate=True)
    cos = float(out @ instance.needle_value / (norm * np.linalg.norm(instance.needle_value)))
    return RetrievalScore(max(-1.0, min(1.0, cos)))


def perfect_filtering_error(instance: NeedleInstance) -> float:
    """``|sla score under one-hot routing - needle-only linear score|``."""
    return abs(float(retrieval_score(instance, MechanismKind.SLA, "hard"))
               - float(needle_only_score(instance)))


def permute_distractors(instance: NeedleInstance, rng: Rng) -> NeedleInstance:
    """Shuffle distractor tokens among positions ``0..L-2``; the needle and the final query stay put.

    Gate rows travel with their tokens.
    """
    L = instance.seq_len
    movable = [t for t in range(L - 1) if t != instance.needle_pos]
    order = np.arange(L)
    if len(movable) > 1:
        shuffled = np.array(movable)[np.argsort(rng.random(len(movable)), kind="stable")]
        order[movable] = shuffled
    b = instance.batch
    batch = SequenceBatch(b.q[:, order], b.k[:, order], b.v[:, order])
    sims_order = [t for t in order if t != instance.needle_pos]
    src = [t for t in range(L) if t != instance.needle_pos]
    sims = instance.distractor_sims[[src.index(t) for t in sims_order]]
    return NeedleInstance(batch, instance.needle_pos, instance.needle_key, instance.needle_value,
                          instance.query, instance.scores_q[order], instance.scores_k[order],
                          instance.needle_sim, sims, instance.sharpness)


def compare_mechanisms(seeds, L_grid, H: int = 4, d_k: int = 8, d_v: int = 8,
                       routing: str = "soft", **instance_kw) -> RunReport:
    """Mean scores and the sla-vs-linear win rate (``sla >= linear``) per length."""
    report = RunReport(
        "needle",
        meta={"H": H, "dk": d_k, "dv": d_v, "routing": routing, "seeds": list(seeds)},
        columns=["L", "mean_linear", "mean_sla", "mean_full", "win_rate"],
    )
    seeds = list(seeds)
    for L in L_grid:
        lin, sla, full = [], [], []
        for seed in seeds:
            inst = build_needle_instance(L, H, d_k, d_v, Rng(seed), **instance_kw)
            lin.append(float(retrieval_score(inst, MechanismKind.LINEAR)))
            sla.append(float(retrieval_score(inst, MechanismKind.SLA, routing)))
            full.append(float(retrieval_score(inst, MechanismKind.FULL_SOFTMAX)))
        wins = sum(s >= l for s, l in zip(sla, lin))
        report.add(L=L, mean_linear=float(np.mean(lin)), mean_sla=float(np.mean(sla)),
                   mean_full=float(np.mean(full)), win_rate=wins / len(seeds))
    return report
