import numpy as np
import pytest

from pinchnet import autodiff as ad
from pinchnet.exceptions import RecordError, ShapeError


def _leaf(rng, shape, real=False):
    values = rng.normal(size=shape) if real else rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return ad.CTensor(values, requires_grad=True, real=real)


def test_squared_norm_gradient_is_twice_the_input():
    z = ad.CTensor(np.array([1 + 2j, -3 + 0.5j, 0.25j]), requires_grad=True)
    ad.backward(ad.tsum(ad.abs2(z)))
    np.testing.assert_allclose(z.grad, 2 * z.data)


def test_modulus_gradient_points_along_the_input():
    """|z| at 3 + 4j has gradient z / |z| under the stored convention."""
    z = ad.CTensor(np.array(3 + 4j), requires_grad=True)
    ad.backward(ad.modulus(z))
    assert z.grad == pytest.approx(0.6 + 0.8j)


def test_holomorphic_chain_uses_the_conjugate_derivative():
    z = ad.CTensor(np.array([0.3 + 0.2j]), requires_grad=True)
    ad.backward(ad.tsum(ad.real(ad.exp(z))))
    np.testing.assert_allclose(z.grad, np.conj(np.exp(z.data)))


def test_real_leaf_keeps_the_real_part():
    x = ad.CTensor(np.array([0.5, 2.0]), requires_grad=True, real=True)
    ad.backward(ad.tsum(ad.abs2(ad.scale(x, 1 + 1j))))
    np.testing.assert_allclose(x.grad, 4 * x.data)
    assert np.isrealobj(x.grad) or np.all(np.imag(x.grad) == 0)


@pytest.mark.parametrize(
    "build",
    [
        lambda a, b: ad.tsum(ad.abs2(ad.matmul(a, b))),
        lambda a, b: ad.real(ad.tsum(ad.div(ad.exp(a), ad.add(ad.abs2(a), 1.0)))),
        lambda a, b: ad.tsum(ad.norm(ad.crelu(ad.matmul(a, b)), axis=-1)),
        lambda a, b: ad.tsum(ad.mul(ad.softmax(a, axis=0), ad.tanh(a))),
        lambda a, b: ad.tsum(ad.abs2(ad.einsum("ij,jk->ik", a, b))),
        lambda a, b: ad.tsum(ad.abs2(ad.inv(ad.add(ad.matmul(a, ad.hermitian(a)), np.eye(3))))),
        lambda a, b: ad.tsum(ad.leaky_relu(ad.real(ad.getitem(ad.matmul(a, b), (slice(None), 0))))),
        lambda a, b: ad.tsum(ad.sqrt(ad.add(ad.abs2(ad.concat([a, a], axis=0)), 1.0))),
        lambda a, b: ad.tsum(ad.sigmoid(ad.atan2(ad.real(a), ad.add(ad.abs2(a), 0.5)))),
    ],
)
def test_composites_pass_finite_difference_check(build):
    rng = np.random.default_rng(3)
    a, b = _leaf(rng, (3, 2)), _leaf(rng, (2, 4))
    assert ad.grad_check(lambda params: build(*params), [a, b]) < 1e-6


def test_broadcasting_gradients_are_reduced_to_the_operand_shape():
    rng = np.random.default_rng(4)
    a, bias = _leaf(rng, (5, 3)), _leaf(rng, (3,))
    ad.backward(ad.tsum(ad.abs2(ad.add(a, bias))))
    assert bias.grad.shape == (3,)
    np.testing.assert_allclose(bias.grad, 2 * (a.data + bias.data).sum(axis=0))


def test_where_routes_gradients_to_the_selected_branch():
    a = ad.CTensor(np.array([1.0, 2.0]), requires_grad=True)
    b = ad.CTensor(np.array([3.0, 4.0]), requires_grad=True)
    ad.backward(ad.real(ad.tsum(ad.where(np.array([True, False]), a, b))))
    np.testing.assert_allclose(a.grad, [1.0, 0.0])
    np.testing.assert_allclose(b.grad, [0.0, 1.0])


def test_sqrt_gradient_at_zero_is_zero():
    x = ad.CTensor(np.array([0.0, 4.0]), requires_grad=True, real=True)
    ad.backward(ad.real(ad.tsum(ad.sqrt(x))))
    np.testing.assert_allclose(x.grad, [0.0, 0.25])


def test_reused_node_accumulates_gradients():
    z = ad.CTensor(np.array([1 + 1j]), requires_grad=True)
    y = ad.mul(z, 2.0)
    ad.backward(ad.real(ad.tsum(ad.add(y, y))))
    np.testing.assert_allclose(z.grad, [4.0])


def test_backward_requires_a_scalar():
    z = ad.CTensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        ad.backward(ad.abs2(z))


def test_backward_without_record_fails():
    with pytest.raises(RecordError):
        ad.backward(ad.CTensor(np.array(1.0)))


def test_no_grad_records_nothing():
    z = ad.CTensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        y = ad.tsum(ad.abs2(z))
    assert not y.tracked
    assert ad.grad_enabled()


def test_shape_mismatch_raises_shape_error():
    with pytest.raises(ShapeError):
        ad.add(ad.CTensor(np.ones(3)), ad.CTensor(np.ones(4)))


def test_registry_dispatches_by_kind():
    a = ad.CTensor(np.array([1 + 1j, 2.0]))
    out = ad.apply("abs2", a)
    np.testing.assert_allclose(out.numpy().real, [2.0, 4.0])
    with pytest.raises(ShapeError):
        ad.apply("no-such-op", a)


def test_grad_check_without_parameters_is_zero():
    assert ad.grad_check(lambda params: ad.CTensor(np.array(1.0)), []) == 0.0
