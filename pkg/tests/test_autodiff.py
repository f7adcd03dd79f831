import numpy as np
import pytest

from hsvlm import autodiff as ad
from hsvlm.errors import UnsupportedOperator
from hsvlm.gradcheck import check_gradients, kernel_cases, tiny_encoder_case
from hsvlm.rng import Rng


def test_quadratic_gradient_exact():
    rng = Rng(1)
    p = ad.Var(rng.normal((12,), dtype=np.float64))
    loss = ad.scale(ad.sum_all(ad.mul(p, p)), 0.5)
    (grad,) = ad.differentiate(loss, [p])
    assert np.array_equal(grad, p.value)


def test_constant_loss_zero_gradient():
    p = ad.Var(np.ones(5))
    loss = ad.sum_all(ad.constant(np.zeros(3)))
    (grad,) = ad.differentiate(loss, [p])
    assert np.array_equal(grad, np.zeros(5))


def test_unsupported_operator_rejected():
    bad = ad.Var(np.zeros(()), parents=(ad.Var(np.zeros(2)),),
                 vjps=(lambda g: np.zeros(2),), op="frobnicate")
    with pytest.raises(UnsupportedOperator):
        ad.backward(bad)


def test_backward_requires_scalar():
    p = ad.Var(np.zeros(4))
    with pytest.raises(Exception):
        ad.backward(ad.mul(p, p))


@pytest.mark.parametrize("name,builder,leaves", kernel_cases(),
                         ids=[c[0] for c in kernel_cases()])
def test_kernel_gradients(name, builder, leaves):
    assert check_gradients(builder, leaves) < 1e-4


def test_tiny_encoder_gradients():
    builder, leaves = tiny_encoder_case()
    assert check_gradients(builder, leaves) < 1e-3


def test_softmax_gradient_rows_sum_to_zero():
    rng = Rng(3)
    x = ad.Var(rng.normal((6, 9), dtype=np.float64))
    losses = ad.softmax_ce_rows(x, np.arange(6) % 9)
    ad.backward(ad.mean_all(losses))
    np.testing.assert_allclose(x.grad.sum(axis=1), 0.0, atol=1e-6)


def test_gradient_accumulates_over_shared_inputs():
    p = ad.Var(np.asarray([2.0, 3.0]))
    loss = ad.sum_all(ad.add(p, p))
    (grad,) = ad.differentiate(loss, [p])
    np.testing.assert_allclose(grad, [2.0, 2.0])
