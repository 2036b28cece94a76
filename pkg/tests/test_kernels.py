import os
import subprocess
import sys

import numpy as np
import pytest

from sla import _fallback, kernels
from sla.tensor import Rng

BACKENDS = kernels.available_backends()


def _inputs(seed, L=13, dk=4, dv=3):
    r = Rng(seed)
    return r.uniform((L, dk)), r.uniform((L, dk)), r.uniform((L, dv)), r.uniform((dk, dv))


def _decay_ref(q, k, v, decay, s0):
    s, ys = s0.copy(), []
    for t in range(len(q)):
        if decay is not None:
            s = decay[t][:, None] * s
        s = s + np.outer(k[t], v[t])
        ys.append(q[t] @ s)
    return np.array(ys), s


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("with_decay", [False, True])
def test_decay_scan(backend, with_decay):
    q, k, v, s0 = _inputs(0)
    decay = Rng(1).random(q.size).reshape(q.shape) if with_decay else None
    y, s = kernels.decay_scan(q, k, v, decay, s0, backend=backend)
    ry, rs = _decay_ref(q, k, v, decay, s0)
    np.testing.assert_allclose(y, ry, atol=1e-14)
    np.testing.assert_allclose(s, rs, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
def test_delta_scan(backend):
    q, k, v, s0 = _inputs(2)
    beta, alpha = Rng(3).random(13), Rng(4).random(13)
    y, s = kernels.delta_scan(q, k, v, beta, alpha, s0, backend=backend)
    st = s0.copy()
    for t in range(13):
        st = alpha[t] * st
        st = st + np.outer(k[t], beta[t] * (v[t] - k[t] @ st))
        np.testing.assert_allclose(y[t], q[t] @ st, atol=1e-14)
    np.testing.assert_allclose(s, st, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
def test_input_not_mutated_and_zero_state_default(backend):
    q, k, v, s0 = _inputs(5)
    keep = s0.copy()
    kernels.decay_scan(q, k, v, None, s0, backend=backend)
    np.testing.assert_array_equal(s0, keep)
    y, _ = kernels.decay_scan(q[:1], k[:1], v[:1], backend=backend)
    np.testing.assert_allclose(y[0], (q[0] @ k[0]) * v[0], atol=1e-15)


@pytest.mark.parametrize("backend", BACKENDS)
def test_non_contiguous_inputs(backend):
    q, k, v, s0 = _inputs(6, L=10)
    y1, _ = kernels.decay_scan(q[::2], k[::2], v[::2], None, s0, backend=backend)
    y2, _ = kernels.decay_scan(q[::2].copy(), k[::2].copy(), v[::2].copy(), None, s0, backend=backend)
    np.testing.assert_array_equal(y1, y2)


def test_fallback_module_is_python():
    assert kernels.get_backend("python") is _fallback


def test_pure_python_switch():
    code = "import sla.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, SLA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
