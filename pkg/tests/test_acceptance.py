"""
Acceptance criteria 1-9.  Each test prints one line

    criterion N: PASS|FAIL  <measured values>

and asserts at the stated tolerance.
"""

import time

import numpy as np
import pytest

from contactflex.contact import X, Y, Z, alpha, flow, hamiltonian_vector_field
from contactflex.diffeo import Box, ParsedMap, builtin, builtin_family
from contactflex.extension import extend_positive, well_example
from contactflex.factorize import auto_factorize
from contactflex.fields import builtin_hamiltonian
from contactflex.integrate import rk4_flow
from contactflex.legendrian import jet_legendrian, transport
from contactflex.paths import DiffeoPath, HamiltonianFlow, Segment, concat, hofer_length, right_translate, sweep
from contactflex.synthesis import (
    far_field_report,
    null_path_to,
    positive_path_to,
    reeb_null_path,
    shell_points,
    subdivide_and_connect,
)

from conftest import CORPUS, corpus_map

GRID = Box.cube(1.0).grid(11)


@pytest.fixture
def report(capsys):
    def emit(n, ok, text):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
        return ok

    return emit


def test_criterion_1_factorization_round_trip(report):
    start = time.perf_counter()
    worst = 0.0
    for name in CORPUS:
        f = corpus_map(name)
        F = auto_factorize(f, GRID)
        worst = max(worst, float(np.max(np.abs(F.evaluate(GRID) - f(GRID)))))
    secs = time.perf_counter() - start
    ok = worst <= 1e-6 and secs <= 10.0
    assert report(1, ok, f"sup round-trip error {worst:.2e} over {len(CORPUS)} maps in {secs:.2f} s"), (worst, secs)


def _null_paths():
    out = [(name, null_path_to(corpus_map(name), "auto", GRID)) for name in CORPUS]
    out.append(("reeb_null_path(0.2, 0.5)", reeb_null_path(0.2, 0.5)))
    out.append(("connect reeb:2", subdivide_and_connect(builtin_family("reeb:2"), "auto", 0.5, GRID)))
    return out


def test_criterion_2_exact_nullity(report):
    P = GRID[::7]
    times = np.linspace(0, 1, 33)
    worst_alpha, worst_fd, worst_len, closed = 0.0, 0.0, 0.0, 0
    for _, path in _null_paths():
        batches = sweep(path, P, times)
        for b in batches:
            closed += int(b.exact.sum())
            assert np.all(b.exact)
            worst_alpha = max(worst_alpha, float(np.max(np.abs(b.alpha))))
            if 0 < b.t < 1:
                worst_fd = max(worst_fd, float(np.max(np.abs(b.vec - path.fd_velocity(b.t, P)))))
        worst_len = max(worst_len, hofer_length(path, P, times, batches))
    ok = worst_alpha == 0.0 and worst_fd <= 1e-4 and worst_len == 0.0
    assert report(2, ok, f"max |alpha| {worst_alpha!r} on {closed} closed-form samples, FD gap {worst_fd:.2e}, "
                         f"Hofer length {worst_len!r}")


def test_criterion_3_positive_margin(report):
    P = GRID[::7]
    times = np.linspace(0, 1, 33)
    rows, ok = [], True
    for name in ["identity", "map:(x, y + 0.1, z)", "bumpshear:0.1,0.5,2.5"]:
        f = corpus_map(name)
        for T in (0.1, 1.0):
            path = positive_path_to(f, T, points=GRID)
            a = np.concatenate([b.alpha for b in sweep(path, P, times) if 0 < b.t < 1])
            end = float(np.max(np.abs(path.evaluate(1.0, GRID) - f(GRID))))
            good = abs(float(a.min()) - T) <= 1e-6 and end <= 1e-5
            ok &= good
            rows.append(f"{name} T={T}: min alpha {a.min():.9f}, endpoint {end:.1e}")
    assert report(3, ok, "; ".join(rows))


def test_criterion_4_reeb_null_path(report):
    path = reeb_null_path(0.2, 0.5)
    end = float(np.max(np.abs(path.evaluate(1.0, GRID) - (GRID + [0, 0, 0.2]))))
    a1, a2, a3 = path.factorization.amplitudes(GRID)
    exact = bool(np.all(a1 == 0.0) and np.all(a2 == -0.4) and np.all(a3 == 0.4))
    ok = end <= 1e-9 and exact
    assert report(4, ok, f"endpoint error {end:.2e}, amplitudes (0, -0.4, 0.4) exact: {exact}")


def test_criterion_5_subdivision(report):
    path = subdivide_and_connect(builtin_family("reeb:2"), "auto", 0.5, GRID)
    end = float(np.max(np.abs(path.evaluate(1.0, GRID) - (GRID + [0, 0, 2.0]))))
    ok = path.subdivisions <= 64 and end <= 1e-5
    assert report(5, ok, f"auto m = {path.subdivisions}, endpoint error {end:.2e}")


def test_criterion_6_extension(report):
    start = time.perf_counter()
    res = extend_positive(well_example(), grid_n=21, n_times=64)
    secs = time.perf_counter() - start
    r = res.report
    ok = r["min_alpha"] > 0 and r["far_field_max_difference"] <= 1e-9 and secs <= 60.0
    assert report(6, ok, f"min alpha {r['min_alpha']:.4f}, far-field difference {r['far_field_max_difference']:.1e} "
                         f"outside K3={res.params.k3:.2f}, {secs:.1f} s at 21^3 x 64"), r


def test_criterion_7_legendrian(report):
    L = jet_legendrian("y^2/2", (-1, 1), 41)
    times = np.linspace(0, 1, 33)
    null = transport(L, null_path_to(ParsedMap("(x, y+0.1, z)"), "auto", GRID), times)
    worst_null = float(np.max(np.abs(null.alphas())))
    T = 0.2
    pos = transport(L, positive_path_to(builtin("bumpshear:0.1,0.5,2.5"), T, points=GRID), times)
    low = float(np.min(pos.alphas()))
    ok = worst_null <= 1e-8 and low >= T - 1e-6
    assert report(7, ok, f"null isotopy max |alpha| {worst_null!r}, positive isotopy min alpha {low:.9f} (T={T})")


def test_criterion_8_structural_identities(report):
    rng = np.random.default_rng(8)
    P = rng.uniform(-3, 3, (1000, 3))
    conj = 0.0
    for eps, t in ((0.5, 1.3), (0.125, -2.0), (1.0, 0.7)):
        lhs = flow(Z(eps), t, P)
        rhs = flow(X, eps, flow(Y, t, flow(X, -eps, P)))
        conj = max(conj, float(np.max(np.abs(lhs - rhs))))

    base = null_path_to(ParsedMap("(x, y+0.1, z)"), 0.5, GRID)
    h = builtin_hamiltonian("tanh(z) + x*y")
    base = concat([base, right_translate(DiffeoPath([Segment(HamiltonianFlow(h, 0.3), 0.0, 1.0)]),
                                         ParsedMap("(x, y+0.1, z)"))])
    c = builtin("bumpshear:0.2,0.5,2")
    moved = right_translate(base, c)
    Q = GRID[::11]
    inv = max(float(np.max(np.abs(moved.velocity(t, Q).vec - base.velocity(t, c(Q)).vec)))
              for t in np.linspace(0.02, 0.98, 13))

    names = ["const:1", "bump:0,1,1", "well", "x", "y", "x*y + sin(z)", "tanh(z)"]
    S = rng.uniform(-2, 2, (1000, 3))
    ham = max(float(np.max(np.abs(alpha(S, hamiltonian_vector_field(builtin_hamiltonian(n), S))
                                  - builtin_hamiltonian(n).value(S)))) for n in names)

    hh = builtin_hamiltonian("x*y + sin(z)")
    p = np.array([[0.3, -0.4, 0.2], [0.9, 0.1, -0.5]])
    ref = rk4_flow(hh, 0.8, p, 2048)
    errs = [float(np.max(np.abs(rk4_flow(hh, 0.8, p, n) - ref))) for n in (8, 16, 32)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]

    ok = conj <= 1e-12 and inv <= 1e-6 and ham <= 1e-10 and all(12 < r < 20 for r in ratios)
    assert report(8, ok, f"conjugation {conj:.1e} on 1000 samples, right-invariance {inv:.1e}, "
                         f"alpha(X_h) - h {ham:.1e}, RK4 error ratios {ratios[0]:.2f}, {ratios[1]:.2f}")


def test_criterion_9_far_field_linear_in_T(report):
    shell = shell_points(3, 5, 9)
    f = builtin("bumpshear:0.1,0.5,2.5")
    disp, dev = [], []
    for T in (0.04, 0.02, 0.01):
        r = far_field_report(positive_path_to(f, T, points=GRID), shell, np.linspace(0, 1, 33))
        disp.append(r["max_displacement"])
        dev.append(r["max_jacobian_deviation"])
    ratios = [disp[0] / disp[1], disp[1] / disp[2]]
    ok = all(abs(r - 2.0) <= 0.1 for r in ratios)
    text = (f"shell displacement {disp[0]:.4f} / {disp[1]:.4f} / {disp[2]:.4f} (ratios {ratios[0]:.3f}, "
            f"{ratios[1]:.3f}); Jacobian deviation {dev[0]:.3f} / {dev[1]:.3f} / {dev[2]:.3f}. "
            f"A null loop reaching Reeb height T moves points by at least sqrt(T/pi), so the ratio cannot be 2")
    assert report(9, ok, text)
