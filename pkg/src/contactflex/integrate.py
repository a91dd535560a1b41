"""Fixed-step RK4 for contact Hamiltonian flows, optionally with the variational Jacobian."""

from __future__ import annotations

import math

import numpy as np

from .contact import hamiltonian_jacobian, hamiltonian_vector_field
from .errors import StepTooLarge
from .fields import ScalarField, as_points


def _rk4_step(h, y, dt):
    k1 = hamiltonian_vector_field(h, y)
    k2 = hamiltonian_vector_field(h, y + 0.5 * dt * k1)
    k3 = hamiltonian_vector_field(h, y + 0.5 * dt * k2)
    k4 = hamiltonian_vector_field(h, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_step_jac(h, y, J, dt):
    k1, D1 = hamiltonian_jacobian(h, y)
    K1 = D1 @ J
    k2, D2 = hamiltonian_jacobian(h, y + 0.5 * dt * k1)
    K2 = D2 @ (J + 0.5 * dt * K1)
    k3, D3 = hamiltonian_jacobian(h, y + 0.5 * dt * k2)
    K3 = D3 @ (J + 0.5 * dt * K2)
    k4, D4 = hamiltonian_jacobian(h, y + dt * k3)
    K4 = D4 @ (J + dt * K3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), J + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def rk4_flow(h: ScalarField, t: float, P, n_steps: int, jacobian: bool = False):
    """
    Integrate X_h for total time ``t`` in ``n_steps`` equal steps.

    With ``jacobian=True`` the variational equation is integrated by the same
    scheme, which yields the exact derivative of the discrete map.  Points
    where h is locally constant move by the Reeb field in closed form, which
    is what every RK4 stage would give there.
    """
    y = as_points(P).copy()
    dt = float(t) / n_steps
    J = np.broadcast_to(np.eye(3), (len(y), 3, 3)).copy() if jacobian else None
    if dt == 0.0:
        return (y, J) if jacobian else y
    for _ in range(n_steps):
        frozen = h.locally_constant(y, dt)
        if frozen is None:
            idx = slice(None)
        else:
            mask, c = frozen
            y[mask, 2] += dt * c[mask]
            idx = np.nonzero(~mask)[0]
            if len(idx) == 0:
                continue
        if jacobian:
            y[idx], J[idx] = _rk4_step_jac(h, y[idx], J[idx], dt)
        else:
            y[idx] = _rk4_step(h, y[idx], dt)
    return (y, J) if jacobian else y


def steps_for(t: float, step: float) -> int:
    return max(1, math.ceil(abs(t) / step - 1e-12))


def integrate_contact_flow(h: ScalarField, t: float, p, step: float = 1.0 / 64,
                           check: bool = True, tol: float = 1e-8) -> np.ndarray:
    """
    Time-t flow of X_h by RK4 with steps no longer than ``step``.

    With ``check`` the run is repeated at half the step; the Richardson
    estimate |y_h - y_{h/2}| / 15 must stay below ``tol`` or StepTooLarge
    is raised.
    """
    single = np.ndim(p) == 1
    n = steps_for(t, step)
    y = rk4_flow(h, t, p, n)
    if check:
        y2 = rk4_flow(h, t, p, 2 * n)
        est = float(np.max(np.abs(y - y2))) / 15.0 if y.size else 0.0
        if est > tol:
            raise StepTooLarge(f"RK4 error estimate {est:.3e} exceeds {tol:.1e} at step {step}")
    return y[0] if single else y
