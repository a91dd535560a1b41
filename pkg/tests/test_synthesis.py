import numpy as np
import pytest

from contactflex.diffeo import (
    Box,
    ConstantFamily,
    FlowFamily,
    Identity,
    ParsedMap,
    builtin,
    builtin_family,
    reeb_time,
)
from contactflex.errors import SubdivisionCapExceeded
from contactflex.fields import builtin_hamiltonian
from contactflex.paths import classify, hofer_length, sweep
from contactflex.synthesis import (
    far_field_report,
    null_path_to,
    positive_path_to,
    reeb_null_path,
    shell_points,
    subdivide_and_connect,
)

from conftest import CORPUS, corpus_map

TIMES = np.linspace(0, 1, 21)


def _assert_exactly_null(path, P, times=TIMES):
    batches = sweep(path, P, times)
    for b in batches:
        assert np.all(b.exact) and np.all(b.alpha == 0.0)
        if 0.0 < b.t < 1.0:
            assert np.allclose(b.vec, path.fd_velocity(b.t, P), atol=1e-4)
    assert hofer_length(path, P, times, batches) == 0.0


@pytest.mark.parametrize("name", CORPUS)
def test_null_paths_are_exactly_null(name, grid11):
    f = corpus_map(name)
    path = null_path_to(f, "auto", grid11)
    assert np.max(np.abs(path.evaluate(1.0, grid11) - f(grid11))) <= 1e-6
    assert np.max(np.abs(path.evaluate(0.0, grid11) - grid11)) <= 1e-12
    _assert_exactly_null(path, grid11[::23])


def test_identity_null_path(grid11):
    path = null_path_to(Identity(), 0.5, grid11)
    assert np.allclose(path.evaluate(1.0, grid11), grid11, atol=1e-15)
    # the path leaves id: at t = 0.2 every point sits at x - eps
    assert np.allclose(path.evaluate(0.2, grid11), grid11 - [0.5, 0, 0], atol=1e-15)
    assert classify(path, grid11[::13]).verdict == "null"


def test_reeb_null_path(grid11):
    path = reeb_null_path(0.2, 0.5)
    assert np.max(np.abs(path.evaluate(1.0, grid11) - (grid11 + [0, 0, 0.2]))) <= 1e-9
    a1, a2, a3 = path.factorization.amplitudes(grid11)
    assert np.all(a1 == 0.0) and np.all(a2 == -0.4) and np.all(a3 == 0.4)
    _assert_exactly_null(path, grid11[::17])
    stay = reeb_null_path(0.0, 0.5)
    assert np.array_equal(stay.evaluate(0.6, grid11), grid11)


def test_subdivision_reeb_family(grid11):
    path = subdivide_and_connect(builtin_family("reeb:2"), "auto", eps=0.5, points=grid11)
    assert path.subdivisions <= 64
    assert np.max(np.abs(path.evaluate(1.0, grid11) - (grid11 + [0, 0, 2]))) <= 1e-5
    _assert_exactly_null(path, grid11[::29], np.linspace(0, 1, 41))


def test_subdivision_hamiltonian_family():
    P = Box.cube(1.0).grid(7)
    fam = builtin_family("hamflow:0.6:tanh(z) + x*y")
    path = subdivide_and_connect(fam, "auto", eps="auto", points=P)
    assert np.max(np.abs(path.evaluate(1.0, P) - fam(1.0)(P))) <= 1e-5
    assert classify(path, P[::5]).verdict == "null"


def test_subdivision_constant_family_and_cap(grid11):
    path = subdivide_and_connect(ConstantFamily(), points=grid11)
    assert np.array_equal(path.evaluate(0.5, grid11), grid11)
    with pytest.raises(SubdivisionCapExceeded):
        subdivide_and_connect(FlowFamily(builtin_hamiltonian("well"), 1.0), eps=0.5, points=grid11[::40], cap=2)


@pytest.mark.parametrize("T", [0.1, 1.0])
def test_positive_margin_equals_T(T, grid11):
    f = ParsedMap("(x, y+0.1, z)")
    path = positive_path_to(f, T, points=grid11)
    v = classify(path, grid11[::19])
    assert v.verdict == "positive"
    assert abs(v.interior_min_alpha - T) <= 1e-6 and abs(v.min_alpha - T) <= 1e-6
    assert np.max(np.abs(path.evaluate(1.0, grid11) - f(grid11))) <= 1e-5


def test_positive_loop_and_pure_reeb(grid11):
    loop = positive_path_to(Identity(), 1.0, points=grid11)
    assert np.allclose(loop.evaluate(1.0, grid11), grid11, atol=1e-6)
    assert classify(loop, grid11[::19]).min_alpha == pytest.approx(1.0, abs=1e-12)
    pure = positive_path_to(reeb_time(1.0), 1.0, points=grid11)
    P = grid11[::19]
    for b in sweep(pure, P, TIMES):
        assert np.all(b.alpha == 1.0)
    assert hofer_length(pure, P, TIMES) == pytest.approx(1.0, abs=1e-12)


def test_positive_shear(grid11):
    f = ParsedMap("(x, y+0.1, z)")
    path = positive_path_to(f, 0.5, points=grid11)
    assert np.max(np.abs(path.evaluate(1.0, grid11) - f(grid11))) <= 1e-5
    assert classify(path, grid11[::19]).verdict == "positive"


def test_far_field_report_stationary():
    from contactflex.paths import stationary_path

    r = far_field_report(stationary_path(), shell_points(2, 3, 7))
    assert r["max_displacement"] == 0.0 and r["max_jacobian_deviation"] == 0.0


def test_shell_points():
    S = shell_points(2.0, 3.0, 7)
    assert np.all(np.max(np.abs(S), axis=1) >= 2.0)
    assert len(S) == 7**3 - 3**3


@pytest.mark.parametrize("T", [0.04, 0.01])
def test_null_loop_displacement_lower_bound(T):
    """
    A point moved by a null path traces a horizontal curve; reaching z - T
    from z needs a planar loop of area T, hence a displacement of at least
    sqrt(T / pi) somewhere along the way.
    """
    S = shell_points(3, 5, 5)
    r = far_field_report(reeb_null_path(T, 0.5), S, np.linspace(0, 1, 101))
    assert r["max_displacement"] >= np.sqrt(T / np.pi)
    g = positive_path_to(builtin("bumpshear:0.1,0.5,2.5"), T, eps=0.5, points=Box.cube(1.0).grid(5)).null_part
    r = far_field_report(g, S, np.linspace(0, 1, 65))
    assert r["max_displacement"] >= np.sqrt(T / np.pi)


def test_far_field_jacobian_is_linear_in_T():
    S = shell_points(3, 5, 5)
    devs = [far_field_report(reeb_null_path(T, 0.5), S)["max_jacobian_deviation"] for T in (0.04, 0.02, 0.01)]
    assert devs[0] / devs[1] == pytest.approx(2.0, abs=0.1)
    assert devs[1] / devs[2] == pytest.approx(2.0, abs=0.1)


def test_reeb_null_far_field_bound():
    S = shell_points(3, 5, 5)
    r = far_field_report(reeb_null_path(0.01, 0.5), S)
    assert r["max_displacement"] <= 0.02 * (1 + np.max(np.abs(S[:, 0]))) + 0.5
