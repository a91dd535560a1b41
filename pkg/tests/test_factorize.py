import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contactflex.contact import X, Y, flow
from contactflex.diffeo import Box, BumpShear, Identity, ParsedMap, builtin, reeb_time
from contactflex.errors import NoFeasibleEpsilon, NotInNeighborhood
from contactflex.factorize import (
    EPS_LADDER,
    TauField,
    auto_epsilon,
    auto_factorize,
    build_phi,
    compute_tau,
    constant_factorization,
    factorization_eval,
    factorize,
)

from conftest import CORPUS, corpus_map, fd_grad

SHEAR = "(x, y+0.1, z)"


def _composed(F, P):
    """Independent evaluation of the five factors, one point at a time."""
    out = []
    for p in P:
        q = p[None]
        q = flow(X, -F.eps, q) if F.cutoff is None else F.shift_inverse(q)
        q = flow(Y, F.a3.value(q), q)
        q = flow(X, F.eps, q) if F.cutoff is None else F.shift(q)
        q = flow(Y, F.a2.value(q), q)
        out.append(flow(X, F.a1.value(q), q)[0])
    return np.array(out)


def test_tau_examples():
    assert compute_tau(Identity(), 0.5, [0.3, 0.2, 0.1]) == (0.0, 0.0, 0.0)
    t1, t2, t3 = compute_tau(reeb_time(0.3), 0.25, [0.7, -0.1, 2.0])
    assert (t1, t2, t3) == pytest.approx((0.0, -1.2, 1.2), abs=1e-12)
    t = compute_tau(ParsedMap(SHEAR), 0.5, [1.0, 0.0, 0.0])
    assert t == pytest.approx((0.0, -0.1, 0.2), abs=1e-15)


@pytest.mark.parametrize("index", [1, 2, 3])
def test_tau_gradient(index, rng):
    f = builtin("hamflow:0.2:x*y + sin(z)")
    tau = TauField(f, 0.5, index)
    P = rng.uniform(-1, 1, (30, 3))
    assert np.allclose(tau.grad(P), fd_grad(tau.value, P), atol=1e-7)


def test_phi_examples():
    phi = build_phi(reeb_time(0.2), 0.5)
    p = np.array([1.0, 0.0, 0.0])
    assert np.allclose(phi.phi1(p), [1.0, 0.4, -0.2], atol=1e-15)
    assert np.allclose(phi.phi2(p), [1.0, 0.0, 0.2], atol=1e-15)
    ident = build_phi(Identity(), 0.5)
    assert np.array_equal(ident.phi1(p), p) and np.array_equal(ident.phi2(p), p)


def test_reeb_amplitudes_are_constant(grid11):
    F = factorize(reeb_time(0.2), 0.5, grid11)
    a1, a2, a3 = F.amplitudes(grid11)
    assert np.max(np.abs(a1)) <= 1e-15
    assert np.allclose(a2, -0.4, atol=1e-14) and np.allclose(a3, 0.4, atol=1e-14)
    assert np.allclose(factorization_eval(F, np.zeros(3)), [0, 0, 0.2], atol=1e-15)
    C = constant_factorization(0.2, 0.5)
    assert np.allclose(C.evaluate(grid11), reeb_time(0.2)(grid11), atol=1e-14)


def test_identity_factorizes_to_zero(grid11):
    F = factorize(Identity(), 0.5, grid11)
    assert all(np.all(a == 0) for a in F.amplitudes(grid11))
    assert np.allclose(F.evaluate(grid11), grid11, atol=1e-15)


def test_shear_examples(grid11):
    f = ParsedMap(SHEAR)
    F = factorize(f, 0.5, grid11)
    assert np.max(np.abs(F.evaluate(grid11) - f(grid11))) <= 1e-8
    assert np.allclose(F.evaluate(np.array([1.0, 0, 0])), [1.0, 0.1, 0.0], atol=1e-12)
    a2 = F.a2.value(grid11)
    assert np.ptp(a2) > 1e-3  # not constant


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_round_trip(name, grid11):
    f = corpus_map(name)
    F = auto_factorize(f, grid11)
    assert F.residual <= 1e-6
    assert np.max(np.abs(F.evaluate(grid11) - f(grid11))) <= 1e-6
    sub = grid11[::97]
    assert np.allclose(_composed(F, sub), F.evaluate(sub), atol=1e-13)


def test_compact_variant_is_identity_far_out(grid11):
    f = BumpShear(0.1, 0.5, 2.5)
    F = factorize(f, 0.5, Box.cube(3.0).grid(11), support_radius=2.5)
    assert F.residual <= 1e-6
    r = F.outer_radius
    far = np.array([[r + 0.1, 0, 0], [0, -r - 1, 0.5], [3 * r, 2 * r, -r]])
    assert np.array_equal(F.evaluate(far), far)
    assert np.array_equal(F.shift(far), far)


def test_auto_epsilon_examples(grid11):
    assert auto_epsilon(Identity(), grid11) == 1.0
    assert auto_epsilon(reeb_time(0.2), grid11) >= 0.25
    with pytest.raises(NoFeasibleEpsilon):
        auto_epsilon(builtin("translate:1000,0,0"), grid11)
    assert EPS_LADDER[0] == 1.0 and EPS_LADDER[-1] == 2.0**-20


def test_gate_rejects_far_map(grid11):
    with pytest.raises(NotInNeighborhood) as exc:
        factorize(reeb_time(10.0), 0.5, grid11)
    assert exc.value.report.max_displacement == pytest.approx(10.0)


coef = st.floats(-0.08, 0.08)


@settings(max_examples=25, deadline=None)
@given(coef, coef, coef, coef, coef)
def test_random_near_identity_round_trip(a, b, c, d, e):
    f = ParsedMap(f"(x + {a}*sin(y + z), y + {b}*cos(x) + {c}*z, z + {d}*x*y + {e}*sin(z))")
    P = Box.cube(1.0).grid(5)
    F = factorize(f, 0.5, P)
    assert F.residual <= 1e-6
