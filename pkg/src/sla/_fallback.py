"""Pure numpy recurrent scans; same contract as the compiled ``_kernels`` module.

Inputs arrive already coerced to C-contiguous float64 by :mod:`sla.kernels`.
"""

import numpy as np


def decay_scan(q, k, v, decay, s0):
    """``S_t = diag(a_t) S_{t-1} + k_t^T v_t``, ``y_t = q_t S_t``.

    ``decay`` is ``None`` (no decay) or an ``(L, d_k)`` array of row multipliers.
    Returns ``(y, S_L)``; ``s0`` is not modified.
    """
    L = q.shape[0]
    s = s0.copy()
    y = np.empty((L, v.shape[1]))
    for t in range(L):
        if decay is not None:
            s *= decay[t][:, None]
        s += np.outer(k[t], v[t])
        y[t] = q[t] @ s
    return y, s


def delta_scan(q, k, v, beta, alpha, s0):
    """Gated delta rule with the decay applied before the erase read.

    ``S' = alpha_t S``, ``u = beta_t (v_t - k_t S')``, ``S_t = S' + k_t^T u``,
    ``y_t = q_t S_t``.  ``k`` rows are expected to be unit-norm (or zero).
    """
    L = q.shape[0]
    s = s0.copy()
    y = np.empty((L, v.shape[1]))
    for t in range(L):
        s *= alpha[t]
        u = beta[t] * (v[t] - k[t] @ s)
        s += np.outer(k[t], u)
        y[t] = q[t] @ s
    return y, s
