import numpy as np
import pytest

from nndeflate.autodiff import Tape
from nndeflate.errors import ConfigurationError, NumericDomainError
from nndeflate.model import WrappedNetwork
from nndeflate.wrappers import (BoundaryWrapper, graef_denominator, star_factor, wrap_annulus,
                                wrap_channel_flow, wrap_dirichlet, wrap_mixed, wrap_neumann,
                                wrap_one_sided, wrap_star_domain_pair, wrap_three_point_graef)

from conftest import bc_errors, fd_gradient, grad_mismatch, wrapper_cases

X = np.linspace(0.0, 1.0, 11)[:, None]


def const(tape, c=0.0):
    return lambda x: tape.constant(np.full((np.shape(x)[0], 1), c))


def test_dirichlet_zero_uhat_is_lift():
    t = Tape()
    u = wrap_dirichlet(t, const(t), X, 0.0, 1.0, 0.0, np.sqrt(10.0))
    np.testing.assert_allclose(u.value, np.sqrt(10.0) * X, rtol=0, atol=1e-15)
    assert u.value[0, 0] == 0.0 and u.value[-1, 0] == np.sqrt(10.0)


def test_dirichlet_painleve_form():
    t = Tape()
    u = wrap_dirichlet(t, const(t, 2.0), X, 0.0, 1.0, 0.0, np.sqrt(10.0))
    np.testing.assert_allclose(u.value, X * (X - 1) * 2.0 + np.sqrt(10.0) * X, atol=1e-15)


def test_dirichlet_power_ranges():
    t = Tape()
    with pytest.raises(ConfigurationError):
        wrap_dirichlet(t, const(t), X, 0.0, 1.0, 0.0, 1.0, pa=2.0)
    with pytest.raises(ConfigurationError):
        wrap_dirichlet(t, const(t), X, 1.0, 0.0, 0.0, 1.0)
    with pytest.raises(NumericDomainError):
        wrap_dirichlet(t, const(t), np.array([[-0.5]]), 0.0, 1.0, 0.0, 1.0, pa=0.5)


def test_one_sided_zero_uhat():
    t = Tape()
    u = wrap_one_sided(t, const(t), X, 0.0, 1.0, -2.0)
    np.testing.assert_allclose(u.value, -2.0 * X + 1.0, atol=1e-15)
    with pytest.raises(ConfigurationError):
        wrap_one_sided(t, const(t), X, 0.0, 1.0, -2.0, pa=1.0)


def test_mixed_zero_uhat_and_bootstrap_form():
    t = Tape()
    u = wrap_mixed(t, const(t), X, 0.0, 1.0, 0.5, 2.0)
    np.testing.assert_allclose(u.value, 0.5 * X + 2.0 - 0.5, atol=1e-15)
    # a=0, b=1, a0=b0=0, pa=2: u = x^2 uhat(x) - uhat(1)
    t = Tape()
    uhat = lambda x: t.constant(np.cos(3.0 * np.asarray(x)))
    u = wrap_mixed(t, uhat, X, 0.0, 1.0, 0.0, 0.0, 2.0)
    np.testing.assert_allclose(u.value, X ** 2 * np.cos(3 * X) - np.cos(3.0), atol=1e-15)


def test_neumann_zero_uhat():
    t = Tape()
    c1 = t.constant(0.3)
    u = wrap_neumann(t, const(t), c1, t.constant(0.0), X, 0.0, 1.0, 0.4, -1.2)
    lift = (-1.2 - 0.4) / 2.0 * X ** 2 + 0.4 * X
    np.testing.assert_allclose(u.value, 0.3 + lift, atol=1e-15)


def test_neumann_exponential_factor():
    # pa = pb = 2 on [0, 1]: damping factor exp(-2x); probe it with uhat = 0, c2 = 1
    t = Tape()
    u = wrap_neumann(t, const(t), t.constant(0.0), t.constant(1.0), X, 0.0, 1.0, 0.0, 0.0)
    np.testing.assert_allclose(u.value, np.exp(-2 * X) * X ** 2, atol=1e-15)


def test_graef_denominator():
    assert graef_denominator(0.2) == pytest.approx(3.12, abs=1e-14)
    with pytest.raises(ConfigurationError):
        BoundaryWrapper("three_point_graef", {"gamma": 1.5}).apply(
            Tape(), [lambda x: None], [], X)


def test_graef_zero_uhat_vanishes():
    t = Tape()
    u = wrap_three_point_graef(t, const(t), X, 0.2)
    assert np.all(u.value == 0.0)


def test_channel_flow_zero():
    t = Tape()
    u = wrap_channel_flow(t, const(t), t.constant(0.0), X)
    np.testing.assert_allclose(u.value, np.sin(np.pi * X / 2), atol=1e-15)


def test_annulus_examples():
    t = Tape()
    pts = np.array([[1.0, 0.0], [0.0, 50.5], [100.0, 0.0]])
    u = wrap_annulus(t, const(t, 1.0), pts, 1.0, 100.0)
    assert u.value[0, 0] == 1.0
    assert u.value[1, 0] == pytest.approx(2.0, abs=1e-15)
    assert abs(u.value[2, 0] - 1.0) < 1e-15


def test_star_examples():
    assert star_factor(np.array([[0.5, 0.0, 0.0]]))[0, 0] == pytest.approx(-0.75, abs=1e-15)
    t = Tape()
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (10, 3))
    u, v = wrap_star_domain_pair(t, const(t), const(t), pts)
    assert np.all(u.value == 1.0) and np.all(v.value == 0.0)


def test_unknown_wrapper_kind():
    with pytest.raises(ConfigurationError):
        BoundaryWrapper("robin_1d")


def test_wrapper_roundtrip_dict():
    w = BoundaryWrapper("dirichlet_1d", {"a": 0.0, "b": 1.0, "a0": 0.0, "b0": 1.0})
    assert BoundaryWrapper.from_dict(w.to_dict()) == w


@pytest.mark.parametrize("case", wrapper_cases(), ids=lambda c: c[0])
def test_boundary_exactness_suite(case):
    label, make, values, derivs = case
    v, d = bc_errors(make, values, derivs, n_draws=100)
    assert v <= 1e-12, f"{label}: value condition violated by {v:.3g}"
    assert d <= 1e-4, f"{label}: derivative condition violated by {d:.3g}"


@pytest.mark.parametrize("kind,consts", [
    ("mixed_1d", {"a": 0.0, "b": 1.0, "a0": 0.2, "b0": 0.1}),
    ("neumann_1d", {"a": 0.0, "b": 1.0, "a0": 0.0, "b0": 0.0}),
    # a coarse c_gamma stencil keeps the FD oracle's own roundoff out of the way;
    # the backward pass is exact for any step
    ("three_point_graef", {"gamma": 0.2, "h": 0.05}),
    ("channel_flow", {}),
])
def test_gradients_flow_through_wrappers(kind, consts):
    wrapper = BoundaryWrapper(kind, consts)
    m = WrappedNetwork.create(1, wrapper, 3, depth=2, width=4)
    x = np.linspace(0.05, 0.95, 7)[:, None]

    def loss(tape, model):
        return tape.reduce("mean_square", model.outputs(tape, x)[0])

    tape = Tape()
    value = loss(tape, m)
    g = tape.backward(value)["theta0"]
    num = fd_gradient(lambda th: float(loss(Tape(), m.with_theta(th)).value), m.theta)
    assert grad_mismatch(g, num) < 1
