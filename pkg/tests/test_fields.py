import numpy as np
import pytest

from contactflex.errors import GradientError
from contactflex.fields import (
    AffineField,
    BumpField,
    ConstantField,
    ExprField,
    builtin_hamiltonian,
    smooth_ramp,
)

from conftest import fd_grad


def test_smooth_ramp_values_and_derivatives():
    s = np.linspace(-0.5, 1.5, 401)
    mu, d1, d2 = smooth_ramp(s)
    assert np.all(mu[s <= 0] == 0) and np.all(mu[s >= 1] == 1)
    assert np.all(np.diff(mu) >= 0)
    assert smooth_ramp(np.array([0.5]))[0][0] == pytest.approx(0.5, abs=1e-15)
    h = 1e-6
    inner = (s > 0.01) & (s < 0.99)
    fd1 = (smooth_ramp(s + h)[0] - smooth_ramp(s - h)[0]) / (2 * h)
    fd2 = (smooth_ramp(s + h)[1] - smooth_ramp(s - h)[1]) / (2 * h)
    assert np.allclose(d1[inner], fd1[inner], atol=1e-7)
    assert np.allclose(d2[inner], fd2[inner], atol=1e-5)


FIELDS = [
    ExprField("x*y + sin(z)"),
    ExprField("exp(-x^2 - y^2) * tanh(z)"),
    BumpField(0.5, 2.0, 3.0),
    BumpField(0.0, 1.0, 1.0),
    AffineField(BumpField(0.0, 1.0, 1.0), -2.0, 1.0),
    ConstantField(0.7),
]


@pytest.mark.parametrize("field", FIELDS, ids=lambda f: f.describe())
def test_gradient_and_hessian_match_differences(field, rng):
    P = rng.uniform(-2.2, 2.2, (200, 3))
    assert np.allclose(field.grad(P), fd_grad(field.value, P), atol=2e-7)
    H = field.hessian(P)
    assert np.allclose(H, np.swapaxes(H, 1, 2), atol=1e-12)
    assert np.allclose(H, fd_grad(field.grad, P).transpose(0, 2, 1), atol=2e-6)


def test_gradient_error_is_second_order(rng):
    f = ExprField("sin(x*y) + z^3")
    P = rng.uniform(-1, 1, (50, 3))
    errs = [np.max(np.abs(fd_grad(f.value, P, h) - f.grad(P))) for h in (1e-2, 5e-3)]
    assert 3.5 < errs[0] / errs[1] < 4.5


@pytest.mark.parametrize("field", FIELDS, ids=lambda f: f.describe())
def test_jet_agrees_with_separate_calls(field, rng):
    P = rng.uniform(-2.5, 2.5, (300, 3))
    v, g, H = field.jet(P)
    v2, g2 = field.value_grad(P)
    assert np.allclose(v, field.value(P), atol=1e-14) and np.allclose(v2, v, atol=1e-14)
    assert np.allclose(g, field.grad(P), atol=1e-13) and np.allclose(g2, g, atol=1e-13)
    assert np.allclose(H, field.hessian(P), atol=1e-12)


def test_locally_constant_regions_are_really_constant(rng):
    for field in (BumpField(1.0, 3.0, 2.0), AffineField(BumpField(0.0, 1.0, 1.0), -2.0, 1.0)):
        P = rng.uniform(-4, 4, (2000, 3))
        dt = 0.1
        mask, c = field.locally_constant(P, dt)
        assert mask.any() and (~mask).any()
        # points on the ball of radius |c| dt around each masked point
        for direction in np.eye(3):
            Q = P[mask] + (np.abs(c[mask]) * dt)[:, None] * direction
            assert np.array_equal(field.value(Q), c[mask])
            assert np.all(field.grad(Q) == 0)


def test_bump_plateau_midpoint():
    b = BumpField(2.0, 4.0, 5.0)
    assert b.value(np.array([[1.0, 1.0, 0.0]]))[0] == 5.0
    assert b.value(np.array([[4.0, 0.0, 0.0]]))[0] == 0.0
    mid = b.value(np.array([[0.0, 3.0, 0.0]]))[0]
    assert 0.0 < mid < 5.0 and mid == pytest.approx(2.5, abs=1e-12)


def test_builtin_hamiltonians():
    well = builtin_hamiltonian("well")
    assert well.value(np.zeros((1, 3)))[0] == pytest.approx(-1.0)
    assert well.value(np.array([[1.5, 0, 0]]))[0] == 1.0
    assert builtin_hamiltonian("const:2.5").value(np.zeros((2, 3))).tolist() == [2.5, 2.5]
    assert builtin_hamiltonian("bump:1,2,3").height == 3.0
    assert builtin_hamiltonian("x*z").value(np.array([[2.0, 0, 3.0]]))[0] == 6.0


def test_non_finite_gradient_raises():
    with pytest.raises(GradientError):
        ExprField("x / y").grad(np.array([[1.0, 0.0, 0.0]]))
