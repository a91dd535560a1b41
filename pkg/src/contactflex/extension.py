"""
Make a path of contactomorphisms positive everywhere without touching it far out.

Input: f_t with contact Hamiltonian H_t, positive outside a ball K0.
Output: F_t = f_t o phi_t o psi_t where phi_t is the flow of a bump
Hamiltonian h (plateau on K2, zero outside its outer radius) and psi_t is a
compactly supported null path from id to phi_1^-1.  Along F the contact
Hamiltonian is H_t(F) + rho_{f_t}(g_t) h(g_t) with g_t = phi_t o psi_t, so a
tall enough plateau lifts it above zero while F_t = f_t outside K3.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .contact import alpha, conformal_factor
from .diffeo import Box, Family, FlowFamily
from .errors import ContainmentFailure, PositivityShortfall
from .fields import BumpField, ScalarField, as_points, builtin_hamiltonian
from .integrate import integrate_contact_flow  # noqa: F401  (public re-export)
from .paths import FD_STEP, LeftFlowComposedPath, classify_batches, stationary_path
from .synthesis import subdivide_and_connect

log = logging.getLogger(__name__)

RADIUS_LADDER = tuple(2.0**k for k in range(11))
HEIGHT_DOUBLING_CAP = 10
DEFAULT_STEPS = 16
BUMP_OUTER_FACTOR = 4.0  # a wide ramp keeps the bump flow increments tame


@dataclass
class ContactPathInput:
    family: Family
    hamiltonian: ScalarField | None = None
    k0: float = 1.0

    def hamiltonian_along(self, t, P):
        """(Q, H_t(Q)) with Q = f_t(P); H by formula, closed-form velocity or differences."""
        P = as_points(P)
        Q = self.family(t)(P)
        if self.hamiltonian is not None:
            return Q, self.hamiltonian.value(Q)
        v = self.family.generator_velocity(t, Q)
        if v is not None:
            return Q, alpha(Q, v)
        return Q, contact_hamiltonian_of_path(self.family, t, P)


def well_example(depth: float = 2.0, n_steps: int = DEFAULT_STEPS) -> ContactPathInput:
    """f_t = flow of H = 1 - depth * bump(0, 1): H = 1 - depth at 0, H = 1 outside the unit ball."""
    H = builtin_hamiltonian(f"well:{depth}")
    return ContactPathInput(FlowFamily(H, 1.0, n_steps=n_steps), H, 1.0)


def contact_hamiltonian_of_path(family: Family, t: float, p, h: float = FD_STEP):
    """alpha(d/dt f_t(p)) at the image f_t(p), by differences in t."""
    single = np.ndim(p) == 1
    P = as_points(p)
    if t - h >= 0.0 and t + h <= 1.0:
        v = (family(t + h)(P) - family(t - h)(P)) / (2 * h)
    elif t + 2 * h <= 1.0:
        v = (-3 * family(t)(P) + 4 * family(t + h)(P) - family(t + 2 * h)(P)) / (2 * h)
    else:
        v = (3 * family(t)(P) - 4 * family(t - h)(P) + family(t - 2 * h)(P)) / (2 * h)
    out = alpha(family(t)(P), v)
    return float(out[0]) if single else out


def sphere_points(radius: float, n: int = 256) -> np.ndarray:
    """Fibonacci points on the sphere plus the six axis poles."""
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = math.pi * (1 + 5**0.5) * k
    pts = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    poles = np.vstack([np.eye(3), -np.eye(3)])
    return radius * np.vstack([pts, poles])


def ball_points(radius: float, n: int = 11) -> np.ndarray:
    P = Box.cube(radius).grid(n)
    return np.vstack([P[np.linalg.norm(P, axis=1) <= radius], sphere_points(radius, 64)])


@dataclass
class ExtensionParams:
    c1: float
    c2: float
    k0: float
    k1: float
    k2: float
    bump_outer: float
    height: float
    k3: float | None = None
    n_steps: int = DEFAULT_STEPS
    trivial: bool = False

    def to_dict(self):
        return asdict(self)


def bump_field(k2: float, k3: float, height: float) -> BumpField:
    """height on |p| <= k2, 0 on |p| >= k3, smooth radial ramp in between."""
    if not k3 > k2:
        raise ValueError("need k2 < k3")
    if height < 0:
        raise ValueError("height must be non-negative")
    return BumpField(k2, k3, height)


def _k1(inp: ContactPathInput, times) -> float:
    for r in RADIUS_LADDER:
        if r < inp.k0:
            continue
        S = sphere_points(r)
        if all(np.min(np.linalg.norm(inp.family(t)(S), axis=1)) >= inp.k0 - 1e-9 for t in times):
            return r
    raise ContainmentFailure(f"no ladder radius contains the preimages of K0 = {inp.k0}")


def _ladder_at_least(x: float) -> float:
    for r in RADIUS_LADDER:
        if r >= x:
            return r
    raise ContainmentFailure(f"radius {x} exceeds the ladder")


def compute_constants(inp: ContactPathInput, n_times: int = 17, grid_n: int = 21) -> ExtensionParams:
    times = np.linspace(0.0, 1.0, n_times)
    k1 = _k1(inp, times)
    P = ball_points(k1, grid_n)
    c1 = min(float(np.min(inp.hamiltonian_along(t, P)[1])) for t in times)
    c2 = max(float(np.max(conformal_factor(inp.family(t), P))) for t in times)
    if c1 > 0:
        return ExtensionParams(c1, c2, inp.k0, k1, k1, k1, 0.0, k1, trivial=True)
    height = -c1 * c2 + 1.0
    k2 = _ladder_at_least(k1 + 1.0)
    return ExtensionParams(c1, c2, inp.k0, k1, k2, BUMP_OUTER_FACTOR * k2, height)


@dataclass
class ExtensionResult:
    path: object
    params: ExtensionParams
    report: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"params": self.params.to_dict(), "report": self.report}, indent=2, sort_keys=True)


def _sweep(path, P, times):
    return [path.velocity(float(t), P) for t in times]


def build_extension(inp: ContactPathInput, params: ExtensionParams, eps=1.0, cert_n: int = 9):
    """F_t = f_t o phi_t o psi_t for the given radii and height."""
    h = bump_field(params.k2, params.bump_outer, params.height)
    phi = FlowFamily(h, 1.0, n_steps=params.n_steps)
    cert = Box.cube(params.bump_outer).grid(cert_n)
    psi = subdivide_and_connect(FlowFamily(h, -1.0, n_steps=params.n_steps), eps=eps, points=cert,
                                support_radius=params.bump_outer)
    params.k3 = max(F.outer_radius for F in psi.factorizations)
    g = LeftFlowComposedPath(phi, psi)
    return LeftFlowComposedPath(inp.family, g), g, psi


def extend_positive(inp: ContactPathInput, params: ExtensionParams | None = None, grid_n: int = 21,
                    n_times: int = 64, eps=1.0, far_n: int = 9) -> ExtensionResult:
    """
    Everywhere-positive path agreeing with the input outside K3.

    The input must be positive outside K0 (checked on a shell).  The bump
    height doubles on PositivityShortfall and K2 climbs the radius ladder on
    ContainmentFailure.
    """
    started = time.perf_counter()
    times = np.linspace(0.0, 1.0, n_times)
    _check_outer_positivity(inp, times[:: max(1, n_times // 8)])
    params = params or compute_constants(inp)
    if params.trivial:
        path = LeftFlowComposedPath(inp.family, stationary_path())
        P = Box.cube(2 * params.k1).grid(grid_n)
        verdict = classify_batches(_sweep(path, P, times), 0.0)
        return ExtensionResult(path, params, {"verdict": verdict.verdict, "min_alpha": verdict.min_alpha,
                                              "trivial": True})

    core = Box.cube(2.0 * params.k1).grid(grid_n)
    k1_samples = ball_points(params.k1, 9)
    last = None
    for _ in range(HEIGHT_DOUBLING_CAP + 1):
        path, g, psi = build_extension(inp, params, eps)
        # containment of g_t(K1) in K2
        reach = max(float(np.max(np.linalg.norm(g.evaluate(float(t), k1_samples), axis=1)))
                    for t in times[:: max(1, n_times // 16)])
        if reach > params.k2:
            log.info("containment failed (reach %.3f > K2 %.3f); enlarging K2", reach, params.k2)
            params.k2 = _ladder_at_least(2.0 * params.k2)
            params.bump_outer = BUMP_OUTER_FACTOR * params.k2
            last = ContainmentFailure(f"g_t(K1) reaches {reach:.3f} > K2")
            continue
        batches = _sweep(path, core, times)
        verdict = classify_batches(batches, 0.0, interior=None)
        if verdict.min_alpha > 0:
            break
        loc = verdict.argmin
        last = PositivityShortfall(f"min alpha {verdict.min_alpha:.3e} at {loc}", verdict.min_alpha, loc)
        log.info("positivity shortfall %.3e; doubling height", verdict.min_alpha)
        params.height *= 2.0
    else:
        raise last

    far = _far_points(params.k3, far_n)
    agree = max(float(np.max(np.abs(path.evaluate(float(t), far) - inp.family(float(t))(far))))
                for t in times[:: max(1, n_times // 16)])
    ends = Box.cube(params.k1).grid(9)
    report = {
        "verdict": verdict.verdict,
        "min_alpha": verdict.min_alpha,
        "argmin": verdict.argmin,
        "max_alpha": verdict.max_alpha,
        "samples": verdict.samples,
        "far_field_max_difference": agree,
        "far_field_samples": int(len(far)),
        "containment_reach": reach,
        "start_error": float(np.max(np.abs(path.evaluate(0.0, ends) - ends))),
        "end_error": float(np.max(np.abs(path.evaluate(1.0, ends) - inp.family(1.0)(ends)))),
        "subdivisions": psi.subdivisions,
        "eps": psi.factorizations[0].eps,
        "grid": grid_n,
        "times": n_times,
        "seconds": time.perf_counter() - started,
    }
    return ExtensionResult(path, params, report)


def _far_points(k3: float, n: int) -> np.ndarray:
    P = Box.cube(2.0 * k3).grid(n)
    P = P[np.linalg.norm(P, axis=1) >= k3]
    return np.vstack([P, sphere_points(k3 * (1 + 1e-12), 64)])


def _check_outer_positivity(inp: ContactPathInput, times):
    """The input Hamiltonian must be positive at image points outside K0."""
    R = max(4.0 * inp.k0, 2.0)
    P = Box.cube(R).grid(17)
    worst = math.inf
    where = None
    for t in times:
        Q, H = inp.hamiltonian_along(float(t), P)
        outside = np.linalg.norm(Q, axis=1) > inp.k0
        if not outside.any():
            continue
        H = H[outside]
        k = int(np.argmin(H))
        if H[k] < worst:
            worst, where = float(H[k]), {"t": float(t), "q": Q[outside][k].tolist()}
    if worst <= 0:
        raise PositivityShortfall(f"input is not positive outside K0: H = {worst:.3e} at {where}", worst, where)


__all__ = [
    "ContactPathInput", "ExtensionParams", "ExtensionResult", "well_example", "contact_hamiltonian_of_path",
    "compute_constants", "bump_field", "integrate_contact_flow", "extend_positive", "build_extension",
    "sphere_points", "ball_points",
]
