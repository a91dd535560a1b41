"""
The standard contact structure ker(dz + x dy) on R^3.

Frame fields::

    X = d/dx,  Y = d/dy - x d/dz,  Z_eps = d/dy + (eps - x) d/dz,  R = d/dz

X and Y span the contact plane; Z_eps is the pushforward of Y under the
time-eps flow of X, and R is the Reeb field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError
from .fields import ScalarField, as_points

N_DEGREES = 1  # n in R^{2n+1}; only n = 1 is implemented


def require_dimension(n: int) -> None:
    if n != N_DEGREES:
        raise DimensionError(f"only n = 1 (R^3) is implemented, got n = {n}")


class Tangent(NamedTuple):
    base: np.ndarray
    vec: np.ndarray


def alpha(base, vec) -> np.ndarray:
    """Evaluate dz + x dy on tangent vectors; vectorized over rows."""
    base = np.asarray(base, dtype=float)
    vec = np.asarray(vec, dtype=float)
    return vec[..., 2] + base[..., 0] * vec[..., 1]


def alpha_eval(v: Tangent) -> float | np.ndarray:
    return alpha(v.base, v.vec)


@dataclass(frozen=True)
class FrameField:
    tag: str
    eps: float | None = None

    def __post_init__(self):
        if self.tag not in ("X", "Y", "Z", "Reeb"):
            raise ValueError(f"unknown frame field {self.tag!r}")
        if self.tag == "Z" and not (self.eps is not None and self.eps > 0):
            raise ValueError("Z needs eps > 0")

    @property
    def horizontal(self) -> bool:
        return self.tag in ("X", "Y")

    def __str__(self):
        return f"Z({self.eps!r})" if self.tag == "Z" else self.tag


X = FrameField("X")
Y = FrameField("Y")
REEB = FrameField("Reeb")


def Z(eps: float) -> FrameField:
    return FrameField("Z", float(eps))


def frame_eval(field: FrameField, P) -> np.ndarray:
    P = as_points(P)
    out = np.zeros_like(P)
    x = P[:, 0]
    if field.tag == "X":
        out[:, 0] = 1.0
    elif field.tag == "Y":
        out[:, 1] = 1.0
        out[:, 2] = -x
    elif field.tag == "Z":
        out[:, 1] = 1.0
        out[:, 2] = field.eps - x
    else:
        out[:, 2] = 1.0
    return out


def scaled_frame(field: FrameField, c, P) -> np.ndarray:
    """``c * field(P)`` arranged so horizontal fields pair to exactly zero with alpha."""
    P = as_points(P)
    c = np.broadcast_to(np.asarray(c, dtype=float), (len(P),))
    out = np.zeros_like(P)
    if field.tag == "X":
        out[:, 0] = c
    elif field.tag == "Y":
        out[:, 1] = c
        out[:, 2] = -(c * P[:, 0])
    elif field.tag == "Z":
        out[:, 1] = c
        out[:, 2] = c * (field.eps - P[:, 0])
    else:
        out[:, 2] = c
    return out


def flow(field: FrameField, t, P) -> np.ndarray:
    """Closed-form time-t flow; ``t`` may be a scalar or one time per point."""
    P = as_points(P)
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(P),))
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    if field.tag == "X":
        return np.stack([x + t, y, z], axis=1)
    if field.tag == "Y":
        return np.stack([x, y + t, z - x * t], axis=1)
    if field.tag == "Z":
        return np.stack([x, y + t, z + (field.eps - x) * t], axis=1)
    return np.stack([x, y, z + t], axis=1)


def flow_closed_form(field: FrameField, t: float, p) -> np.ndarray:
    out = flow(field, t, p)
    return out[0] if np.ndim(p) == 1 else out


def flow_jacobian(field: FrameField, t, P) -> np.ndarray:
    """Spatial Jacobian of the flow map at fixed time(s) ``t``."""
    P = as_points(P)
    t = np.broadcast_to(np.asarray(t, dtype=float), (len(P),))
    J = np.broadcast_to(np.eye(3), (len(P), 3, 3)).copy()
    if field.tag in ("Y", "Z"):
        J[:, 2, 0] = -t
    return J


def hamiltonian_vector_field(h: ScalarField, P) -> np.ndarray:
    """
    Contact vector field X_h with alpha(X_h) = h.

    Components: (x h_z - h_y, h_x, h - x h_x), so that
    iota_X d alpha = h_z alpha - dh.
    """
    P = as_points(P)
    v, g = h.value_grad(P)
    x = P[:, 0]
    return np.stack([x * g[:, 2] - g[:, 1], g[:, 0], v - x * g[:, 0]], axis=1)


def hamiltonian_jacobian(h: ScalarField, P) -> tuple[np.ndarray, np.ndarray]:
    """Return (X_h, D X_h) at P; needs the Hessian of h."""
    P = as_points(P)
    v, g, H = h.jet(P)
    x = P[:, 0]
    field = np.empty_like(P)
    field[:, 0] = x * g[:, 2] - g[:, 1]
    field[:, 1] = g[:, 0]
    field[:, 2] = v - x * g[:, 0]
    D = np.empty((len(P), 3, 3))
    np.subtract(x[:, None] * H[:, 2, :], H[:, 1, :], out=D[:, 0, :])
    D[:, 0, 0] += g[:, 2]
    D[:, 1, :] = H[:, 0, :]
    np.subtract(g, x[:, None] * H[:, 0, :], out=D[:, 2, :])
    D[:, 2, 0] -= g[:, 0]
    return field, D


def conformal_factor(f, P) -> np.ndarray:
    """(f^* alpha)(R): alpha at f(p) applied to Df(p) e_z."""
    P = as_points(P)
    q = f(P)
    J = f.jacobian(P)
    return alpha(q, J[:, :, 2])


def kernel_defect(f, P) -> np.ndarray:
    """max |alpha(Df v)| over v in {X, Y}; zero for contactomorphisms."""
    P = as_points(P)
    q = f(P)
    J = f.jacobian(P)
    dx = alpha(q, J[:, :, 0])
    dy = alpha(q, np.einsum("nij,nj->ni", J, frame_eval(Y, P)))
    return np.maximum(np.abs(dx), np.abs(dy))
