import numpy as np
import pytest

from sla.errors import ParameterError
from sla.gradcheck import (
    PRIMALS,
    _softmax_vjp,
    finite_diff_grad,
    gradcheck_report,
    max_relative_error,
    primal_loss_fn,
    random_problem,
    reference_loss,
    sla_backward,
    sla_loss,
)
from sla.mechanisms import AttentionConfig, SequenceBatch, concat_heads, head_gates, sla_parallel
from sla.tensor import Rng, softmax_rows

CFG = AttentionConfig(4, 2, 3)


def test_zero_probe():
    batch, weights, probe = random_problem(0, CFG)
    zero = np.zeros_like(probe)
    assert sla_loss(batch, weights, CFG, zero) == 0.0
    g = sla_backward(batch, weights, CFG, zero)
    for p in PRIMALS:
        assert not np.any(g[p])


def test_zero_values():
    batch, weights, probe = random_problem(1, CFG)
    b = SequenceBatch(batch.q, batch.k, np.zeros_like(batch.v))
    assert sla_loss(b, weights, CFG, np.ones_like(probe)) == 0.0


def test_loss_matches_parallel_form():
    batch, weights, probe = random_problem(2, CFG)
    gq, gk = head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk)
    expect = np.sum(probe * concat_heads(sla_parallel(batch, gq, gk, CFG)))
    assert sla_loss(batch, weights, CFG, probe) == pytest.approx(expect, abs=1e-13)
    assert float(reference_loss(batch, weights, CFG, probe)) == pytest.approx(expect, abs=1e-13)


def test_single_head_has_no_gate_gradient():
    cfg = AttentionConfig(4, 1, 3)
    batch, weights, probe = random_problem(3, cfg)
    g = sla_backward(batch, weights, cfg, probe)
    assert not np.any(g.d_wgq) and not np.any(g.d_wgk)


def test_shapes():
    batch, weights, probe = random_problem(4, AttentionConfig(5, 3, 2, 4))
    g = sla_backward(batch, weights, AttentionConfig(5, 3, 2, 4), probe)
    assert g.d_q.shape == batch.q.shape and g.d_v.shape == batch.v.shape
    assert g.d_wgq.shape == weights.w_gq.shape == g["w_gk"].shape


def test_probe_shape_checked():
    batch, weights, probe = random_problem(0, CFG)
    with pytest.raises(ParameterError):
        sla_loss(batch, weights, CFG, probe.T)


@pytest.mark.parametrize("fmap", ["identity", "silu", "one-plus-elu"])
def test_seeded_instance(fmap):
    cfg = CFG.with_(feature_map=fmap)
    r = gradcheck_report(cfg, [0])
    assert r.passed, r.failures


def test_relu_away_from_kinks():
    r = gradcheck_report(CFG.with_(feature_map="relu"), range(3), kink_margin=0.1)
    assert r.passed
    batch, _, _ = random_problem(0, CFG, kink_margin=0.1)
    assert np.abs(batch.q).min() >= 0.1 and np.abs(batch.k).min() >= 0.1


def test_float64_loss_gradient_single_entry():
    batch, weights, probe = random_problem(5, CFG)
    g = sla_backward(batch, weights, CFG, probe)
    idx = np.unravel_index(np.argmax(np.abs(g.d_k)), g.d_k.shape)

    def loss(x):
        k = batch.k.copy()
        k[idx] = x[0]
        return sla_loss(SequenceBatch(batch.q, k, batch.v), weights, CFG, probe)

    fd = finite_diff_grad(loss, np.array([batch.k[idx]]))
    assert max_relative_error(g.d_k[idx], fd[0]) <= 1e-6


class TestFiniteDiff:
    def test_linear(self):
        x = Rng(0).uniform((3, 2))
        np.testing.assert_allclose(finite_diff_grad(np.sum, x), np.ones((3, 2)), atol=1e-9)

    def test_quadratic(self):
        np.testing.assert_allclose(finite_diff_grad(lambda x: np.sum(x**2), np.array([1.0, 2.0])),
                                   [2.0, 4.0], atol=1e-8)

    def test_does_not_mutate(self):
        x = np.array([1.0, 2.0])
        finite_diff_grad(np.sum, x)
        np.testing.assert_array_equal(x, [1.0, 2.0])

    def test_bad_step(self):
        with pytest.raises(ParameterError):
            finite_diff_grad(np.sum, np.ones(2), 0.0)


def test_relative_error_floor():
    assert max_relative_error([1e-12], [0.0]) == pytest.approx(1e-4)
    assert max_relative_error([2.0], [1.0]) == 0.5
    assert max_relative_error([], []) == 0.0


def test_softmax_jacobian_columns():
    s = Rng(6).uniform((1, 5), 2.0)
    g = softmax_rows(s)
    jac = np.diag(g[0]) - np.outer(g[0], g[0])
    h = 1e-6
    for i in range(5):
        e = np.zeros_like(s)
        e[0, i] = h
        col = (softmax_rows(s + e) - softmax_rows(s - e))[0] / (2 * h)
        np.testing.assert_allclose(col, jac[:, i], atol=1e-9)
        basis = np.zeros((1, 5))
        basis[0, i] = 1.0
        np.testing.assert_allclose(_softmax_vjp(g, basis)[0], jac[i], atol=1e-15)


def test_shift_has_zero_gradient():
    g = softmax_rows(Rng(7).uniform((3, 4)))
    dg = Rng(8).uniform((3, 4))
    # the score gradient is orthogonal to the all-ones direction
    np.testing.assert_allclose(_softmax_vjp(g, dg).sum(axis=1), 0.0, atol=1e-10)


def test_primal_loss_fn_replaces_only_its_primal():
    batch, weights, probe = random_problem(9, CFG)
    base = reference_loss(batch, weights, CFG, probe)
    for p in PRIMALS:
        x = getattr(batch, p) if p in ("q", "k", "v") else getattr(weights, p)
        assert primal_loss_fn(p, batch, weights, CFG, probe)(x) == base
    with pytest.raises(ParameterError):
        primal_loss_fn("gamma", batch, weights, CFG, probe)(None)


def test_report_limits():
    with pytest.raises(ParameterError):
        gradcheck_report(AttentionConfig(9, 2, 2), [0])
    r = gradcheck_report(AttentionConfig(3, 2, 2), [4, 5])
    assert len(r.cases) == 10 and r.columns == ["seed", "primal", "max_rel_error", "passed"]
