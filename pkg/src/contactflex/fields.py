"""Scalar fields on R^3 with exact gradients and Hessians."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import GradientError
from .expr import MAP_VARIABLES, Node, evaluate, parse_expr, to_source


def as_points(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2 or P.shape[1] != 3:
        raise ValueError(f"expected points of shape (N, 3), got {P.shape}")
    return P


def smooth_ramp(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1; returns (mu, mu', mu'')."""
    s = np.asarray(s, dtype=float)
    mu = np.where(s >= 1.0, 1.0, 0.0)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    if np.any(inside):
        u = s[inside]
        m = expit(1.0 / (1.0 - u) - 1.0 / u)
        q = 1.0 / u**2 + 1.0 / (1.0 - u) ** 2
        dq = -2.0 / u**3 + 2.0 / (1.0 - u) ** 3
        w = m * (1.0 - m)
        mu[inside] = m
        d1[inside] = w * q
        d2[inside] = w * q * q * (1.0 - 2.0 * m) + w * dq
    return mu, d1, d2


class ScalarField:
    """A function R^3 -> R evaluated on batches of points of shape (N, 3)."""

    def value(self, P) -> np.ndarray:
        raise NotImplementedError

    def grad(self, P) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, P) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no Hessian")

    def value_grad(self, P):
        return self.value(P), self.grad(P)

    def jet(self, P):
        """(value, gradient, Hessian) in one call; subclasses may share work."""
        return self.value(P), self.grad(P), self.hessian(P)

    def locally_constant(self, P, dt):
        """
        (mask, c): mask marks points where the field equals c on the whole ball
        of radius |c| dt; None when the field has no such regions.
        """
        return None

    def __call__(self, P):
        return self.value(P)

    def describe(self) -> str:
        return type(self).__name__


class ConstantField(ScalarField):
    def __init__(self, c: float):
        self.c = float(c)

    def value(self, P):
        return np.full(len(as_points(P)), self.c)

    def grad(self, P):
        return np.zeros((len(as_points(P)), 3))

    def hessian(self, P):
        return np.zeros((len(as_points(P)), 3, 3))

    def describe(self):
        return f"const({self.c!r})"


class ExprField(ScalarField):
    """A parsed expression with symbolically differentiated gradient and Hessian."""

    def __init__(self, node: Node | str):
        if isinstance(node, str):
            node = parse_expr(node, MAP_VARIABLES)
        self.node = node
        self._grad = tuple(node.diff(v) for v in MAP_VARIABLES)
        self._hess = tuple(tuple(g.diff(v) for v in MAP_VARIABLES) for g in self._grad)

    @staticmethod
    def _env(P):
        return {"x": P[:, 0], "y": P[:, 1], "z": P[:, 2]}

    def value(self, P):
        P = as_points(P)
        return evaluate(self.node, self._env(P), (len(P),))

    def grad(self, P):
        P = as_points(P)
        env = self._env(P)
        with np.errstate(all="ignore"):
            g = np.stack([evaluate(d, env, (len(P),)) for d in self._grad], axis=1)
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient of {to_source(self.node)}")
        return g

    def hessian(self, P):
        P = as_points(P)
        env = self._env(P)
        rows = [np.stack([evaluate(d, env, (len(P),)) for d in row], axis=1) for row in self._hess]
        return np.stack(rows, axis=1)

    def describe(self):
        return to_source(self.node)


class BumpField(ScalarField):
    """Radial plateau: ``height`` on |p - c| <= inner, 0 on |p - c| >= outer."""

    def __init__(self, inner: float, outer: float, height: float = 1.0, center=(0.0, 0.0, 0.0)):
        if not outer > inner >= 0.0:
            raise ValueError("need 0 <= inner < outer")
        self.inner = float(inner)
        self.outer = float(outer)
        self.height = float(height)
        self.center = np.asarray(center, dtype=float)

    def _radial(self, P):
        d = as_points(P) - self.center
        r = np.linalg.norm(d, axis=1)
        s = (self.outer - r) / (self.outer - self.inner)
        return d, r, s

    def value(self, P):
        _, _, s = self._radial(P)
        return self.height * smooth_ramp(s)[0]

    def grad(self, P):
        d, r, s = self._radial(P)
        _, m1, _ = smooth_ramp(s)
        w = self.outer - self.inner
        safe = np.where(r > 0.0, r, 1.0)
        coef = np.where(m1 != 0.0, -self.height * m1 / (w * safe), 0.0)
        return coef[:, None] * d

    def hessian(self, P):
        d, r, s = self._radial(P)
        _, m1, m2 = smooth_ramp(s)
        w = self.outer - self.inner
        safe = np.where(r > 0.0, r, 1.0)
        u = d / safe[:, None]
        uu = u[:, :, None] * u[:, None, :]
        eye = np.eye(3)[None]
        a = self.height * m2 / w**2
        b = -self.height * m1 / (w * safe)
        H = a[:, None, None] * uu + b[:, None, None] * (eye - uu)
        H[(m1 == 0.0) & (m2 == 0.0)] = 0.0
        return H

    def _ramp_jet(self, P, order):
        """Work only on the points strictly inside the ramp; elsewhere grad = Hess = 0."""
        d = as_points(P) - self.center
        r = np.sqrt(np.einsum("ni,ni->n", d, d))
        w = self.outer - self.inner
        s = (self.outer - r) / w
        v = np.where(s >= 1.0, self.height, 0.0)
        g = np.zeros_like(d)
        H = np.zeros((len(d), 3, 3)) if order > 1 else None
        idx = np.nonzero((s > 0.0) & (s < 1.0))[0]
        if len(idx):
            m0, m1, m2 = smooth_ramp(s[idx])
            v[idx] = self.height * m0
            ri = r[idx]
            u = d[idx] / ri[:, None]
            g[idx] = (-self.height * m1 / w)[:, None] * u
            if order > 1:
                a = self.height * m2 / w**2
                b = -self.height * m1 / (w * ri)
                Hi = ((a - b)[:, None] * u)[:, :, None] * u[:, None, :]
                Hi[:, (0, 1, 2), (0, 1, 2)] += b[:, None]
                H[idx] = Hi
        return v, g, H

    def value_grad(self, P):
        return self._ramp_jet(P, 1)[:2]

    def locally_constant(self, P, dt):
        d = as_points(P) - self.center
        r = np.sqrt(np.einsum("ni,ni->n", d, d))
        pad = abs(self.height * dt) * (1.0 + 1e-9) + 1e-12
        plateau = r < self.inner - pad
        return plateau | (r > self.outer), np.where(plateau, self.height, 0.0)

    def jet(self, P):
        return self._ramp_jet(P, 2)

    def describe(self):
        return f"bump(inner={self.inner!r}, outer={self.outer!r}, height={self.height!r})"


class AffineField(ScalarField):
    """``offset + scale * base``."""

    def __init__(self, base: ScalarField, scale: float = 1.0, offset: float = 0.0):
        self.base = base
        self.scale = float(scale)
        self.offset = float(offset)

    def value(self, P):
        return self.offset + self.scale * self.base.value(P)

    def grad(self, P):
        return self.scale * self.base.grad(P)

    def hessian(self, P):
        return self.scale * self.base.hessian(P)

    def value_grad(self, P):
        v, g = self.base.value_grad(P)
        return self.offset + self.scale * v, self.scale * g

    def jet(self, P):
        v, g, H = self.base.jet(P)
        return self.offset + self.scale * v, self.scale * g, self.scale * H

    def locally_constant(self, P, dt):
        if not isinstance(self.base, BumpField):
            return None
        b = self.base
        d = as_points(P) - b.center
        r = np.sqrt(np.einsum("ni,ni->n", d, d))
        inside, outside = self.offset + self.scale * b.height, self.offset
        plateau = r < b.inner - abs(inside * dt) * (1.0 + 1e-9) - 1e-12
        far = r > b.outer + abs(outside * dt) * (1.0 + 1e-9) + 1e-12
        return plateau | far, np.where(plateau, inside, outside)

    def describe(self):
        return f"{self.offset!r} + {self.scale!r}*{self.base.describe()}"


def builtin_hamiltonian(name: str) -> ScalarField:
    """Named Hamiltonians used by the CLI and the test corpus."""
    key, _, arg = name.partition(":")
    params = [float(v) for v in arg.split(",")] if arg else []
    if key == "const":
        return ConstantField(params[0] if params else 1.0)
    if key == "bump":
        inner, outer, height = (params + [1.0])[:3] if params else (0.0, 1.0, 1.0)
        return BumpField(inner, outer, height)
    if key == "well":
        # 1 - 2 * bump(0, 1): negative near the origin, identically 1 outside the unit ball
        depth = params[0] if params else 2.0
        return AffineField(BumpField(0.0, 1.0, 1.0), -depth, 1.0)
    return ExprField(name)
