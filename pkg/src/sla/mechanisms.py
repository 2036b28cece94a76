"""Attention mechanisms in parallel, recurrent and chunkwise form.

Layout conventions
------------------
Per-head tensors are stacked head-major: queries and keys are ``(H, L, d_k)``,
values and head outputs ``(H, L, d_v)``.  Head gates are ``(L, H)`` with rows
summing to one.  Raw token inputs ``x`` (used by the data-dependent GLA/GDN
gates) are ``(L, d_model)``.

Gated mechanisms scale each head's feature-mapped query by its read gate and
each feature-mapped key by its write gate:

    y_{h,t} = g^Q_{h,t} phi(q_{h,t}) sum_{j<=t} (g^K_{h,j} phi(k_{h,j}))^T v_{h,j}

Because the gates are token-local scalars they fold into the features, which
is why the parallel, recurrent and chunkwise strategies agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import kernels
from .errors import InputError, InternalError, ParameterError
from .tensor import FeatureMapKind, Rng, as_matrix, feature_map, sigmoid, softmax_rows

__all__ = [
    "AttentionConfig",
    "GateWeights",
    "HeadState",
    "MechanismKind",
    "SequenceBatch",
    "concat_heads",
    "count_gate_params",
    "default_gamma",
    "full_attention",
    "gate_scores",
    "gdn_recurrent",
    "gla_recurrent",
    "head_gates",
    "linear_chunkwise",
    "linear_parallel",
    "linear_recurrent",
    "retnet_recurrent",
    "run_mechanism",
    "sla_chunkwise",
    "sla_parallel",
    "sla_recurrent",
]

GATE_NORM_TOL = 1e-9


class MechanismKind(str, Enum):
    FULL_SOFTMAX = "full-softmax"
    LINEAR = "linear"
    SLA = "sla"
    RETNET = "retnet"
    SOFTMAX_RETNET = "softmax-retnet"
    GLA = "gla"
    SOFTMAX_GLA = "softmax-gla"
    GDN = "gdn"
    SOFTMAX_GDN = "softmax-gdn"

    @property
    def gated(self) -> bool:
        """Whether the mechanism applies head-level softmax gates."""
        return self is MechanismKind.SLA or self.value.startswith("softmax-")

    @property
    def base(self) -> "MechanismKind":
        if self is MechanismKind.SLA:
            return MechanismKind.LINEAR
        if self.value.startswith("softmax-"):
            return MechanismKind(self.value[len("softmax-"):])
        return self

    @property
    def default_feature_map(self) -> FeatureMapKind:
        if self.base is MechanismKind.GDN:
            return FeatureMapKind.SILU
        return FeatureMapKind.IDENTITY


@dataclass(frozen=True)
class AttentionConfig:
    seq_len: int
    heads: int
    key_dim: int
    value_dim: int | None = None
    feature_map: FeatureMapKind | None = None
    chunk_size: int | None = None
    mechanism: MechanismKind = MechanismKind.SLA

    def __post_init__(self):
        object.__setattr__(self, "mechanism", MechanismKind(self.mechanism))
        if self.value_dim is None:
            object.__setattr__(self, "value_dim", self.key_dim)
        if self.feature_map is None:
            object.__setattr__(self, "feature_map", self.mechanism.default_feature_map)
        else:
            object.__setattr__(self, "feature_map", FeatureMapKind(self.feature_map))
        for name in ("seq_len", "heads", "key_dim", "value_dim"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.chunk_size is None:
            object.__setattr__(self, "chunk_size", min(64, self.seq_len))
        if not 1 <= self.chunk_size <= self.seq_len:
            raise ParameterError(
                f"chunk_size must be in [1, {self.seq_len}], got {self.chunk_size}"
            )

    @property
    def d_model(self) -> int:
        return self.heads * self.key_dim

    def with_(self, **changes) -> "AttentionConfig":
        """Copy with fields replaced; an explicit ``feature_map=None`` re-derives the default."""
        return replace(self, **changes)


@dataclass
class HeadState:
    """Recurrent memory of one head: ``s`` is ``(d_k, d_v)``, ``t`` tokens consumed."""

    s: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, key_dim: int, value_dim: int) -> "HeadState":
        return cls(np.zeros((key_dim, value_dim)), 0)

    @property
    def nbytes(self) -> int:
        return self.s.nbytes


@dataclass
class SequenceBatch:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        self.q = as_matrix(self.q, "queries")
        self.k = as_matrix(self.k, "keys")
        self.v = as_matrix(self.v, "values")
        if self.q.ndim != 3 or self.k.shape != self.q.shape or self.v.ndim != 3:
            raise ParameterError("q and k must be (H, L, d_k); v must be (H, L, d_v)")
        if self.v.shape[:2] != self.q.shape[:2]:
            raise ParameterError("values must share (H, L) with queries")
        if self.x is not None:
            self.x = as_matrix(self.x, "inputs")
            if self.x.ndim != 2 or self.x.shape[0] != self.seq_len:
                raise ParameterError("inputs x must be (L, d_model)")

    @property
    def heads(self) -> int:
        return self.q.shape[0]

    @property
    def seq_len(self) -> int:
        return self.q.shape[1]

    @property
    def key_dim(self) -> int:
        return self.q.shape[2]

    @property
    def value_dim(self) -> int:
        return self.v.shape[2]

    @classmethod
    def random(cls, rng: Rng, config: AttentionConfig, d_model: int | None = None,
               scale: float = 1.0) -> "SequenceBatch":
        H, L, dk, dv = config.heads, config.seq_len, config.key_dim, config.value_dim
        d_model = config.d_model if d_model is None else d_model
        q = rng.uniform((H, L, dk), scale)
        k = rng.uniform((H, L, dk), scale)
        v = rng.uniform((H, L, dv), scale)
        x = rng.uniform((L, d_model), scale)
        return cls(q, k, v, x)

    def slice(self, start: int, stop: int) -> "SequenceBatch":
        x = None if self.x is None else self.x[start:stop]
        return SequenceBatch(self.q[:, start:stop], self.k[:, start:stop],
                             self.v[:, start:stop], x)

    def check(self, config: AttentionConfig) -> None:
        expected = (config.heads, config.seq_len, config.key_dim)
        if self.q.shape != expected or self.v.shape[2] != config.value_dim:
            raise ParameterError(
                f"batch shapes {self.q.shape}/{self.v.shape} do not match config "
                f"(H={config.heads}, L={config.seq_len}, d_k={config.key_dim}, d_v={config.value_dim})"
            )


def default_gamma(heads: int) -> np.ndarray:
    """RetNet decay schedule ``1 - 2**(-5 - h)`` for ``h = 1..H``."""
    return 1.0 - 2.0 ** (-5.0 - np.arange(1, heads + 1))


@dataclass
class GateWeights:
    """Head-gate projections plus the mechanism-specific gate parameters.

    ``alpha_source`` is ``(d_model, H*d_k)`` (or ``(d_model, d_k)`` shared by all
    heads); ``beta_source`` and ``decay_source`` are ``(d_model, H)`` or
    ``(d_model, 1)``.  A missing ``gamma`` means the default RetNet schedule and
    a missing ``decay_source`` means no GDN decay.
    """

    w_gq: np.ndarray
    w_gk: np.ndarray
    gamma: np.ndarray | None = None
    alpha_source: np.ndarray | None = None
    beta_source: np.ndarray | None = None
    decay_source: np.ndarray | None = None

    def __post_init__(self):
        self.w_gq = as_matrix(self.w_gq, "w_gq")
        self.w_gk = as_matrix(self.w_gk, "w_gk")
        if self.w_gq.ndim != 2 or self.w_gq.shape != self.w_gk.shape:
            raise ParameterError("w_gq and w_gk must both be (d_k, H)")
        if self.gamma is not None:
            self.gamma = _check_gamma(self.gamma, self.w_gq.shape[1])

    @property
    def gate_param_count(self) -> int:
        return self.w_gq.size + self.w_gk.size

    @classmethod
    def random(cls, rng: Rng, config: AttentionConfig, d_model: int | None = None,
               scale: float = 1.0) -> "GateWeights":
        H, dk = config.heads, config.key_dim
        d_model = config.d_model if d_model is None else d_model
        return cls(
            w_gq=rng.uniform((dk, H), scale),
            w_gk=rng.uniform((dk, H), scale),
            gamma=default_gamma(H),
            alpha_source=rng.uniform((d_model, H * dk), scale),
            beta_source=rng.uniform((d_model, H), scale),
            decay_source=rng.uniform((d_model, H), scale),
        )

    @classmethod
    def zeros(cls, config: AttentionConfig) -> "GateWeights":
        z = np.zeros((config.key_dim, config.heads))
        return cls(z, z.copy())


def _check_gamma(gamma, heads: int) -> np.ndarray:
    gamma = np.broadcast_to(as_matrix(gamma, "gamma"), (heads,)).astype(np.float64)
    if np.any(gamma <= 0) or np.any(gamma > 1):
        raise ParameterError(f"gamma entries must lie in (0, 1], got {gamma}")
    return gamma


def count_gate_params(layers: int, key_dim: int, heads: int) -> int:
    """Extra parameters from the two ``(d_k, H)`` gate projections per layer."""
    for name, val in (("layers", layers), ("key_dim", key_dim), ("heads", heads)):
        if int(val) < 1:
            raise ParameterError(f"{name} must be positive, got {val}")
    return 2 * int(key_dim) * int(heads) * int(layers)


def concat_heads(y: np.ndarray) -> np.ndarray:
    """``(H, L, d_v)`` head outputs to the ``(L, H*d_v)`` concatenated readout."""
    H, L, dv = y.shape
    return np.ascontiguousarray(y.transpose(1, 0, 2)).reshape(L, H * dv)


# --------------------------------------------------------------------------
# head gates


def gate_scores(per_head_proj, w_g) -> np.ndarray:
    """``s[t, h] = <proj[h, t], w_g[:, h]>`` as an ``(L, H)`` matrix."""
    proj = as_matrix(per_head_proj, "per-head projection")
    w_g = as_matrix(w_g, "gate weights")
    if proj.ndim != 3 or w_g.ndim != 2:
        raise ParameterError("expected (H, L, d_k) projections and (d_k, H) weights")
    H, _, dk = proj.shape
    if w_g.shape != (dk, H):
        raise ParameterError(f"gate weights must be ({dk}, {H}), got {w_g.shape}")
    return np.einsum("hld,dh->lh", proj, w_g)


def head_gates(per_head_proj, w_g) -> np.ndarray:
    """Softmax over heads of each token's per-head importance scores."""
    return softmax_rows(gate_scores(per_head_proj, w_g))


def _check_gates(gates, L: int, H: int, name: str, normalized: bool = True) -> np.ndarray:
    g = as_matrix(gates, name)
    if g.shape != (L, H):
        raise ParameterError(f"{name} must be ({L}, {H}), got {g.shape}")
    if normalized:
        err = np.max(np.abs(g.sum(axis=1) - 1.0))
        if err > GATE_NORM_TOL:
            raise InputError(f"{name} rows must sum to 1 (max deviation {err:.3g})")
    return g


def _resolve_gates(gates, L: int, H: int):
    if gates is None:
        return None, None
    gq, gk = gates
    return (_check_gates(gq, L, H, "gates_q", normalized=False),
            _check_gates(gk, L, H, "gates_k", normalized=False))


def _features(batch: SequenceBatch, config: AttentionConfig):
    return feature_map(batch.q, config.feature_map), feature_map(batch.k, config.feature_map)


def _apply_gates(fq, fk, gq, gk):
    if gq is not None:
        fq = fq * gq.T[:, :, None]
    if gk is not None:
        fk = fk * gk.T[:, :, None]
    return fq, fk


def _init_states(states, H: int, dk: int, dv: int) -> list[HeadState]:
    if states is None:
        return [HeadState.zeros(dk, dv) for _ in range(H)]
    if len(states) != H:
        raise ParameterError(f"expected {H} head states, got {len(states)}")
    for st in states:
        if st.s.shape != (dk, dv):
            raise ParameterError(f"head state must be ({dk}, {dv}), got {st.s.shape}")
    return list(states)


# --------------------------------------------------------------------------
# full softmax attention (quadratic oracle)


def full_attention(batch: SequenceBatch, config: AttentionConfig | None = None,
                   block: int = 128) -> np.ndarray:
    """Causal multi-head softmax attention with ``1/sqrt(d_k)`` scaling.

    Rows are processed in blocks so peak memory is ``block * L`` scores rather
    than ``L**2``; the total work is still quadratic.
    """
    H, L, dk = batch.q.shape
    scale = 1.0 / math.sqrt(dk)
    y = np.empty((H, L, batch.value_dim))
    future = np.triu(np.ones((block, block), dtype=bool), k=1)
    for h in range(H):
        q, k, v = batch.q[h], batch.k[h], batch.v[h]
        for start in range(0, L, block):
            stop = min(start + block, L)
            n = stop - start
            scores = (q[start:stop] @ k[:stop].T) * scale
            scores[:, start:stop][future[:n, :n]] = -np.inf
            scores -= scores.max(axis=1, keepdims=True)
            p = np.exp(scores)
            p /= p.sum(axis=1, keepdims=True)
            y[h, start:stop] = p @ v[:stop]
    return y


# --------------------------------------------------------------------------
# (gated) linear attention: parallel / recurrent / chunkwise


def _parallel(fq, fk, v) -> np.ndarray:
    H, L, _ = fq.shape
    y = np.empty((H, L, v.shape[2]))
    for h in range(H):
        a = np.tril(fq[h] @ fk[h].T)
        y[h] = a @ v[h]
    return y


def _recurrent(fq, fk, v, states, decay=None, backend=None):
    H, L, dk = fq.shape
    states = _init_states(states, H, dk, v.shape[2])
    y = np.empty((H, L, v.shape[2]))
    new_states = []
    for h in range(H):
        d = None if decay is None else decay[h]
        y[h], s = kernels.decay_scan(fq[h], fk[h], v[h], d, states[h].s, backend=backend)
        new_states.append(HeadState(s, states[h].t + L))
    return y, new_states


def _chunkwise(fq, fk, v, chunk: int, states=None):
    H, L, dk = fq.shape
    states = _init_states(states, H, dk, v.shape[2])
    y = np.empty((H, L, v.shape[2]))
    mask = np.tril(np.ones((chunk, chunk)))
    new_states = []
    for h in range(H):
        s = states[h].s.copy()
        for start in range(0, L, chunk):
            stop = min(start + chunk, L)
            n = stop - start
            qc, kc, vc = fq[h, start:stop], fk[h, start:stop], v[h, start:stop]
            intra = ((qc @ kc.T) * mask[:n, :n]) @ vc
            y[h, start:stop] = qc @ s + intra
            s = s + kc.T @ vc
        new_states.append(HeadState(s, states[h].t + L))
    return y, new_states


def linear_parallel(batch: SequenceBatch, config: AttentionConfig) -> np.ndarray:
    """``Y = tril(phi(Q) phi(K)^T) V`` per head, unnormalized."""
    batch.check(config)
    fq, fk = _features(batch, config)
    return _parallel(fq, fk, batch.v)


def linear_recurrent(batch: SequenceBatch, config: AttentionConfig,
                     states: list[HeadState] | None = None, backend: str | None = None):
    """``S_t = S_{t-1} + phi(k_t)^T v_t``, ``y_t = phi(q_t) S_t``; returns ``(y, states)``."""
    batch.check(config)
    fq, fk = _features(batch, config)
    return _recurrent(fq, fk, batch.v, states, backend=backend)


def linear_chunkwise(batch: SequenceBatch, config: AttentionConfig,
                     chunk_size: int | None = None) -> np.ndarray:
    batch.check(config)
    chunk = _check_chunk(config, chunk_size)
    fq, fk = _features(batch, config)
    return _chunkwise(fq, fk, batch.v, chunk)[0]


def _check_chunk(config: AttentionConfig, chunk_size: int | None) -> int:
    chunk = config.chunk_size if chunk_size is None else int(chunk_size)
    if not 1 <= chunk <= config.seq_len:
        raise ParameterError(f"chunk size must be in [1, {config.seq_len}], got {chunk}")
    return chunk


def _gated_features(batch, gates_q, gates_k, config):
    batch.check(config)
    L, H = config.seq_len, config.heads
    gq = _check_gates(gates_q, L, H, "gates_q")
    gk = _check_gates(gates_k, L, H, "gates_k")
    fq, fk = _features(batch, config)
    return _apply_gates(fq, fk, gq, gk)


def sla_parallel(batch: SequenceBatch, gates_q, gates_k, config: AttentionConfig) -> np.ndarray:
    """Dual-gated parallel form ``((G^Q phi(Q)) (G^K phi(K))^T * mask) V`` per head."""
    fq, fk = _gated_features(batch, gates_q, gates_k, config)
    return _parallel(fq, fk, batch.v)


def sla_recurrent(batch: SequenceBatch, gates_q, gates_k, config: AttentionConfig,
                  states: list[HeadState] | None = None, backend: str | None = None):
    fq, fk = _gated_features(batch, gates_q, gates_k, config)
    return _recurrent(fq, fk, batch.v, states, backend=backend)


def sla_chunkwise(batch: SequenceBatch, gates_q, gates_k, config: AttentionConfig,
                  chunk_size: int | None = None, states: list[HeadState] | None = None,
                  return_states: bool = False):
    """Chunked evaluation: quadratic inside each chunk, carried state across chunks."""
    chunk = _check_chunk(config, chunk_size)
    fq, fk = _gated_features(batch, gates_q, gates_k, config)
    y, new_states = _chunkwise(fq, fk, batch.v, chunk, states)
    return (y, new_states) if return_states else y


# --------------------------------------------------------------------------
# decayed / delta-rule baselines and their softmax variants


def retnet_recurrent(batch: SequenceBatch, config: AttentionConfig, gamma=None, gates=None,
                     states: list[HeadState] | None = None, backend: str | None = None):
    """``S_{h,t} = gamma_h S_{h,t-1} + (g^K phi(k))^T v``; ``gates`` is ``(G^Q, G^K)`` or None."""
    batch.check(config)
    H, L, dk = config.heads, config.seq_len, config.key_dim
    gamma = default_gamma(H) if gamma is None else _check_gamma(gamma, H)
    gq, gk = _resolve_gates(gates, L, H)
    fq, fk = _apply_gates(*_features(batch, config), gq, gk)
    decay = None
    if np.any(gamma != 1.0):
        decay = np.broadcast_to(gamma[:, None, None], (H, L, dk))
    return _recurrent(fq, fk, batch.v, states, decay=decay, backend=backend)


def gla_forget_gates(x, alpha_source, heads: int, key_dim: int) -> np.ndarray:
    """Data-dependent forget gates ``sigmoid(x A)`` as an ``(H, L, d_k)`` array."""
    x = as_matrix(x, "inputs")
    a_src = as_matrix(alpha_source, "alpha_source")
    if a_src.shape[0] != x.shape[1] or a_src.shape[1] not in (key_dim, heads * key_dim):
        raise ParameterError(
            f"alpha_source must be ({x.shape[1]}, {heads * key_dim}) or ({x.shape[1]}, {key_dim})"
        )
    alpha = sigmoid(x @ a_src)
    if not np.all((alpha > 0) & (alpha < 1)):
        raise InternalError("GLA forget gate left (0, 1); alpha_source logits saturate")
    L = x.shape[0]
    if a_src.shape[1] == key_dim:
        return np.broadcast_to(alpha[None], (heads, L, key_dim))
    return alpha.reshape(L, heads, key_dim).transpose(1, 0, 2)


def gla_recurrent(batch: SequenceBatch, config: AttentionConfig, alpha_source=None, gates=None,
                  states: list[HeadState] | None = None, alpha=None, backend: str | None = None):
    """``S_{h,t} = Diag(alpha_{h,t}) S_{h,t-1} + (g^K phi(k))^T v``.

    ``alpha`` overrides the computed forget gates; it must broadcast to
    ``(H, L, d_k)`` with entries in ``[0, 1]``.
    """
    batch.check(config)
    H, L, dk = config.heads, config.seq_len, config.key_dim
    if alpha is None:
        if alpha_source is None or batch.x is None:
            raise ParameterError("gla needs alpha_source and batch inputs x (or an alpha override)")
        alpha = gla_forget_gates(batch.x, alpha_source, H, dk)
    else:
        alpha = np.broadcast_to(as_matrix(alpha, "alpha"), (H, L, dk))
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise ParameterError("alpha override must lie in [0, 1]")
    gq, gk = _resolve_gates(gates, L, H)
    fq, fk = _apply_gates(*_features(batch, config), gq, gk)
    return _recurrent(fq, fk, batch.v, states, decay=alpha, backend=backend)


def _per_head_scalar_gate(x, source, heads: int, name: str) -> np.ndarray:
    x = as_matrix(x, "inputs")
    src = as_matrix(source, name)
    if src.ndim != 2 or src.shape[0] != x.shape[1] or src.shape[1] not in (1, heads):
        raise ParameterError(f"{name} must be ({x.shape[1]}, {heads}) or ({x.shape[1]}, 1)")
    g = sigmoid(x @ src)
    return np.ascontiguousarray(np.broadcast_to(g, (x.shape[0], heads)).T)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    return np.where(norms > 1e-12, m / safe, 0.0)


def gdn_recurrent(batch: SequenceBatch, config: AttentionConfig, beta_source=None,
                  decay_source=None, gates=None, states: list[HeadState] | None = None,
                  beta=None, alpha=None, backend: str | None = None):
    """Gated delta rule with optional head-softmax gates.

    Per head, with ``k`` the unit-normalized ``phi(k_t)``::

        S' = alpha_t S_{t-1}
        v' = beta_t (g^K_t v_t - k S')
        S_t = S' + k^T v'
        y_t = (g^Q_t phi(q_t)) S_t

    With ``g^K = 1`` this is ``S_t = alpha_t (I - beta_t k^T k) S_{t-1} + beta_t k^T v_t``.
    ``alpha`` defaults to ``sigmoid(x decay_source)`` or 1 when no decay source
    is given.  ``beta``/``alpha`` overrides broadcast to ``(H, L)``.
    """
    batch.check(config)
    H, L = config.heads, config.seq_len
    if beta is None:
        if beta_source is None or batch.x is None:
            raise ParameterError("gdn needs beta_source and batch inputs x (or a beta override)")
        beta = _per_head_scalar_gate(batch.x, beta_source, H, "beta_source")
        if not np.all((beta > 0) & (beta < 1)):
            raise InternalError("GDN write strength left (0, 1); beta_source logits saturate")
    else:
        beta = np.broadcast_to(as_matrix(beta, "beta"), (H, L))
        if np.any(beta < 0) or np.any(beta > 1):
            raise ParameterError("beta override must lie in [0, 1]")
    if alpha is None:
        if decay_source is None:
            alpha = np.ones((H, L))
        else:
            if batch.x is None:
                raise ParameterError("gdn decay_source needs batch inputs x")
            alpha = _per_head_scalar_gate(batch.x, decay_source, H, "decay_source")
    else:
        alpha = np.broadcast_to(as_matrix(alpha, "alpha"), (H, L))
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise ParameterError("alpha override must lie in [0, 1]")

    gq, gk = _resolve_gates(gates, L, H)
    fq, fk = _features(batch, config)
    fk = _unit_rows(fk)
    fq, _ = _apply_gates(fq, fk, gq, None)
    v = batch.v if gk is None else batch.v * gk.T[:, :, None]

    states = _init_states(states, H, config.key_dim, config.value_dim)
    y = np.empty((H, L, config.value_dim))
    new_states = []
    for h in range(H):
        y[h], s = kernels.delta_scan(fq[h], fk[h], v[h], beta[h], alpha[h], states[h].s,
                                     backend=backend)
        new_states.append(HeadState(s, states[h].t + L))
    return y, new_states


# --------------------------------------------------------------------------
# dispatch


def run_mechanism(batch: SequenceBatch, config: AttentionConfig,
                  weights: GateWeights | None = None, states: list[HeadState] | None = None,
                  backend: str | None = None) -> np.ndarray:
    """Per-head outputs ``(H, L, d_v)`` before any output projection.

    Softmax variants compute ``G^Q``/``G^K`` from the pre-feature-map per-head
    queries and keys.  Linear and SLA run chunkwise (``config.chunk_size``);
    decayed and delta-rule mechanisms run recurrently.
    """
    batch.check(config)
    kind = config.mechanism
    if kind is MechanismKind.FULL_SOFTMAX:
        return full_attention(batch, config)
    if weights is None:
        if kind.gated or kind.base in (MechanismKind.GLA, MechanismKind.GDN):
            raise ParameterError(f"{kind.value} needs gate weights")
        weights = GateWeights.zeros(config)
    gates = None
    if kind.gated:
        gates = (head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk))
    base = kind.base
    if base is MechanismKind.LINEAR:
        if gates is None:
            return linear_chunkwise(batch, config)
        return sla_chunkwise(batch, gates[0], gates[1], config, states=states)
    if base is MechanismKind.RETNET:
        return retnet_recurrent(batch, config, weights.gamma, gates, states, backend)[0]
    if base is MechanismKind.GLA:
        return gla_recurrent(batch, config, weights.alpha_source, gates, states,
                             backend=backend)[0]
    return gdn_recurrent(batch, config, weights.beta_source, weights.decay_source, gates,
                         states, backend=backend)[0]
