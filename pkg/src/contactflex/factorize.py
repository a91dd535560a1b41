"""
Five-factor horizontal factorization of a near-identity diffeomorphism.

For f = (f_x, f_y, f_z) close to the identity and a fixed eps > 0 put::

    tau1 = f_x - x
    tau3 = (f_z - z + x (f_y - y)) / eps
    tau2 = (f_y - y) - tau3

    Phi1(p) = flow(Z_eps, tau3(p), p)          Phi2(p) = (x, f_y, f_z)

Then f = flow(X, a1) o flow(Y, a2) o C o flow(Y, a3) o C^-1 with
a1 = tau1 o Phi2^-1, a2 = tau2 o Phi1^-1, a3 = tau3 o C and C the
time-eps flow of X.  Every factor is the flow of a horizontal field.

When f is the identity outside a ball, C may be replaced by a cut-off
shift p -> flow(X, eps * chi(p), p) with chi = 1 on a ball large enough
to contain every Y-orbit used by the middle factor.  The factorization is
then the identity outside the support of chi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .contact import X, Y, Z, flow
from .diffeo import (
    Diffeo,
    FieldFlowMap,
    FrameFlowMap,
    InverseMap,
    check_near_identity,
    deviation_norm,
)
from .errors import InversionFailed, NoFeasibleEpsilon, NotInNeighborhood, SingularJacobianError
from .fields import BumpField, ConstantField, ScalarField, as_points

log = logging.getLogger(__name__)

DISPLACEMENT_FRACTION = 0.5  # accept sup |f(p) - p| <= eps / 2
JACOBIAN_BOUND = 0.5  # accept sup ||Df - Id|| <= 1/2, so Df is invertible
PHI_JACOBIAN_BOUND = 0.9  # Phi1, Phi2 Jacobians must stay invertible for Newton
ROUND_TRIP_TOL = 1e-6
EPS_LADDER = tuple(2.0**-k for k in range(21))


def _tau_from(P, F, eps):
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    dy = F[:, 1] - y
    t1 = F[:, 0] - x
    t3 = (F[:, 2] - z + x * dy) / eps
    t2 = dy - t3
    return t1, t2, t3


def compute_tau(f: Diffeo, eps: float, p):
    """(tau1, tau2, tau3) at p; arrays for a batch, floats for a single point."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    single = np.ndim(p) == 1
    P = as_points(p)
    taus = _tau_from(P, f(P), eps)
    return tuple(float(t[0]) for t in taus) if single else taus


class TauField(ScalarField):
    """One of tau1, tau2, tau3 as a scalar field with exact gradient."""

    def __init__(self, f: Diffeo, eps: float, index: int):
        if index not in (1, 2, 3):
            raise ValueError("index must be 1, 2 or 3")
        self.f = f
        self.eps = float(eps)
        self.index = index

    def value(self, P):
        P = as_points(P)
        return _tau_from(P, self.f(P), self.eps)[self.index - 1]

    def grad(self, P):
        P = as_points(P)
        F, J = self.f.evaluate_with_jacobian(P)
        e = np.eye(3)
        g1 = J[:, 0, :] - e[0]
        dy = F[:, 1] - P[:, 1]
        gdy = J[:, 1, :] - e[1]
        g3 = (J[:, 2, :] - e[2] + P[:, 0:1] * gdy) / self.eps
        g3[:, 0] += dy / self.eps
        if self.index == 1:
            return g1
        if self.index == 3:
            return g3
        return gdy - g3

    def describe(self):
        return f"tau{self.index}[eps={self.eps!r}]"


class ComposedField(ScalarField):
    """``base o inner`` with gradient by the chain rule."""

    def __init__(self, base: ScalarField, inner: Diffeo):
        self.base = base
        self.inner = inner

    def value(self, P):
        return self.base.value(self.inner(as_points(P)))

    def grad(self, P):
        Q, J = self.inner.evaluate_with_jacobian(as_points(P))
        return np.einsum("nij,ni->nj", J, self.base.grad(Q))

    def describe(self):
        return f"{self.base.describe()} o [{self.inner.describe()}]"


class Phi2(Diffeo):
    """p -> (x, f_y(p), f_z(p))."""

    def __init__(self, f: Diffeo):
        self.f = f

    def _eval(self, P):
        out = self.f(P)
        out[:, 0] = P[:, 0]
        return out

    def _eval_jac(self, P):
        F, J = self.f.evaluate_with_jacobian(P)
        F = F.copy()
        J = J.copy()
        F[:, 0] = P[:, 0]
        J[:, 0, :] = np.array([1.0, 0.0, 0.0])
        return F, J

    def _jac(self, P):
        return self._eval_jac(P)[1]

    def describe(self):
        return f"phi2[{self.f.describe()}]"


@dataclass
class PhiMaps:
    phi1: Diffeo
    phi2: Diffeo


def build_phi(f: Diffeo, eps: float) -> PhiMaps:
    """Phi1 = flow of Z_eps for time tau3(p); Phi2 = (x, f_y, f_z)."""
    return PhiMaps(FieldFlowMap(Z(eps), TauField(f, eps, 3)), Phi2(f))


def cutoff_radii(support_radius: float, eps: float, tau3_max: float):
    """Plateau and outer radius of the shift cut-off for a map supported in a ball."""
    inner = support_radius + eps + tau3_max * (1.0 + support_radius + eps)
    outer = inner + max(4.0 * eps, 1.0)
    return inner, outer


@dataclass
class Factorization:
    eps: float
    a1: ScalarField
    a2: ScalarField
    a3: ScalarField
    source: Diffeo
    phi: PhiMaps
    shift: Diffeo
    shift_inverse: Diffeo
    cutoff: ScalarField | None = None
    support_radius: float | None = None
    residual: float = 0.0
    report: object = None

    @property
    def outer_radius(self):
        return None if self.cutoff is None else self.cutoff.outer

    def evaluate(self, P):
        return factorization_eval(self, P)

    def amplitudes(self, P):
        P = as_points(P)
        return self.a1.value(P), self.a2.value(P), self.a3.value(P)

    def to_dict(self):
        return {
            "eps": self.eps,
            "source": self.source.describe(),
            "residual": self.residual,
            "support_radius": self.support_radius,
            "cutoff_outer_radius": self.outer_radius,
        }


def factorization_eval(F: Factorization, p):
    """Evaluate the five factors right to left."""
    single = np.ndim(p) == 1
    P = as_points(p)
    q0 = F.shift_inverse(P)
    q1 = flow(Y, F.a3.value(q0), q0)
    q2 = F.shift(q1)
    q3 = flow(Y, F.a2.value(q2), q2)
    out = flow(X, F.a1.value(q3), q3)
    return out[0] if single else out


def factorize(f: Diffeo, eps: float, points, support_radius: float | None = None,
              tol: float = ROUND_TRIP_TOL) -> Factorization:
    """
    Factor ``f`` on the sample ``points``.

    ``support_radius`` switches on the compactly supported variant; f must
    then be the identity outside that ball (not checked here, the caller
    knows its map).  Raises NotInNeighborhood when f or one of the Phi maps
    is too far from the identity, InversionFailed when Newton fails.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    P = as_points(points)
    report = check_near_identity(f, P, DISPLACEMENT_FRACTION * eps, JACOBIAN_BOUND)
    if not report.ok:
        raise NotInNeighborhood(
            f"{f.describe()} is not near the identity for eps={eps}: displacement "
            f"{report.max_displacement:.3e}, Jacobian deviation {report.max_jacobian_deviation:.3e}",
            report)
    phi = build_phi(f, eps)
    for name, m in (("phi1", phi.phi1), ("phi2", phi.phi2)):
        dev = float(np.max(deviation_norm(m.jacobian(P)))) if len(P) else 0.0
        if dev > PHI_JACOBIAN_BOUND:
            raise NotInNeighborhood(f"{name} Jacobian deviation {dev:.3e} too large for eps={eps}", report)

    tau1, tau2, tau3 = (TauField(f, eps, i) for i in (1, 2, 3))
    cutoff = None
    if support_radius is None:
        shift = FrameFlowMap(X, eps)
        shift_inv = FrameFlowMap(X, -eps)
    else:
        tau3_max = float(np.max(np.abs(tau3.value(P)))) if len(P) else 0.0
        inner, outer = cutoff_radii(support_radius, eps, tau3_max)
        cutoff = BumpField(inner, outer, 1.0)
        shift = FieldFlowMap(X, cutoff, eps)
        shift_inv = InverseMap(shift)

    a1 = ComposedField(tau1, InverseMap(phi.phi2))
    a2 = ComposedField(tau2, InverseMap(phi.phi1))
    a3 = ComposedField(tau3, shift)
    F = Factorization(eps, a1, a2, a3, f, phi, shift, shift_inv, cutoff, support_radius, 0.0, report)
    got = factorization_eval(F, P)
    residual = float(np.max(np.abs(got - f(P)))) if len(P) else 0.0
    F.residual = residual
    if residual > tol:
        raise NotInNeighborhood(f"round-trip residual {residual:.3e} exceeds {tol:.1e}", report)
    return F


def constant_factorization(T: float, eps: float) -> Factorization:
    """Closed-form factorization of the Reeb time-T map: amplitudes (0, -T/eps, T/eps)."""
    from .diffeo import reeb_time

    a3 = T / eps
    f = reeb_time(T)
    return Factorization(eps, ConstantField(0.0), ConstantField(-a3), ConstantField(a3), f,
                         build_phi(f, eps), FrameFlowMap(X, eps), FrameFlowMap(X, -eps))


def auto_epsilon(f: Diffeo, points, support_radius: float | None = None, ladder=EPS_LADDER):
    """Largest eps on the ladder 1, 1/2, ..., 2^-20 at which ``factorize`` succeeds."""
    return auto_factorize(f, points, support_radius, ladder).eps


def auto_factorize(f: Diffeo, points, support_radius: float | None = None, ladder=EPS_LADDER):
    last = None
    for eps in ladder:
        try:
            return factorize(f, eps, points, support_radius)
        except (NotInNeighborhood, InversionFailed, SingularJacobianError) as exc:
            log.debug("eps=%g rejected: %s", eps, exc)
            last = exc
    raise NoFeasibleEpsilon(f"no eps in the ladder factorizes {f.describe()}: {last}")


__all__ = [
    "compute_tau", "TauField", "ComposedField", "Phi2", "PhiMaps", "build_phi", "Factorization",
    "factorize", "factorization_eval", "auto_epsilon", "auto_factorize", "constant_factorization",
    "cutoff_radii", "EPS_LADDER", "DISPLACEMENT_FRACTION", "JACOBIAN_BOUND",
]
