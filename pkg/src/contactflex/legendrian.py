"""
Legendrian curves in J^1 R = R^3 and their transport along paths.

With alpha = dz + x dy the 1-jet of u(y) is the curve y -> (-u'(y), y, u(y)).
Its tangent (-u'', 1, u') pairs to u' + (-u') * 1 = 0, so the curve is
Legendrian on the nose.  Moving it by a path of diffeomorphisms g_t gives an
isotopy whose velocity at g_t(p) is the path velocity; alpha of that
velocity decides positive / null.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import alpha
from .diffeo import Box
from .errors import BoxExit, GradientError
from .expr import Node, evaluate, parse_expr, to_source
from .paths import PathBase, Verdict, VelocityBatch, classify_batches, default_times

JET_VARIABLES = ("y",)


@dataclass
class LegendrianSample:
    points: np.ndarray
    tangents: np.ndarray
    params: np.ndarray

    def alphas(self) -> np.ndarray:
        return alpha(self.points, self.tangents)

    def max_alpha(self) -> float:
        return float(np.max(np.abs(self.alphas()))) if len(self.points) else 0.0


class Jet:
    """u(y) with its first two derivatives, from an expression in y."""

    def __init__(self, u):
        node = parse_expr(u, JET_VARIABLES) if isinstance(u, str) else u
        if not isinstance(node, Node):
            raise TypeError("u must be an expression string or a parsed node")
        self.u = node
        self.du = node.diff("y")
        self.ddu = self.du.diff("y")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        env = {"y": y}
        with np.errstate(all="ignore"):
            vals = [evaluate(n, env, y.shape) for n in (self.u, self.du, self.ddu)]
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise GradientError(f"derivatives of {self.describe()} are not finite on the sample")
        return vals

    def describe(self):
        return to_source(self.u)


def jet_legendrian(u, interval=(-1.0, 1.0), n: int = 41) -> LegendrianSample:
    """Sample y -> (-u'(y), y, u(y)) at n equally spaced parameters."""
    jet = u if isinstance(u, Jet) else Jet(u)
    s = np.linspace(float(interval[0]), float(interval[1]), int(n))
    v, dv, ddv = jet(s)
    points = np.stack([-dv, s, v], axis=1)
    tangents = np.stack([-ddv, np.ones_like(s), dv], axis=1)
    return LegendrianSample(points, tangents, s)


@dataclass
class IsotopySample:
    times: np.ndarray
    slices: list
    batches: list = field(default_factory=list)

    @property
    def params(self):
        return self.slices[0].params

    def alphas(self) -> np.ndarray:
        """(times, points) array of alpha of the isotopy velocity."""
        return np.stack([b.alpha for b in self.batches])

    def tangent_alphas(self) -> np.ndarray:
        return np.stack([s.alphas() for s in self.slices])

    def records(self):
        """JSONL-ready dicts, one per (t, parameter)."""
        out = []
        for sl, b in zip(self.slices, self.batches):
            for i in range(len(sl.params)):
                out.append({
                    "t": b.t,
                    "parameter": float(sl.params[i]),
                    "point": b.q[i].tolist(),
                    "velocity": b.vec[i].tolist(),
                    "alpha": float(b.alpha[i]),
                    "exactness": str(b.exactness[i]),
                })
        return out


def transport(L: LegendrianSample, path: PathBase, times=None, box: Box | None = None) -> IsotopySample:
    """
    Push L through every slice of the path.

    Points come from the path velocity sweep, tangents from the exact slice
    Jacobians.  BoxExit when a point leaves ``box``.
    """
    times = default_times() if times is None else np.asarray(times, dtype=float)
    slices, batches = [], []
    for t in times:
        vb: VelocityBatch = path.velocity(float(t), L.points)
        if box is not None and not np.all(box.contains(vb.q)):
            bad = vb.q[~box.contains(vb.q)][0]
            raise BoxExit(f"transported point {bad.tolist()} left {box.to_dict()} at t={float(t)}")
        J = path.slice(float(t)).jacobian(L.points)
        slices.append(LegendrianSample(vb.q, np.einsum("nij,nj->ni", J, L.tangents), L.params))
        batches.append(vb)
    return IsotopySample(times, slices, batches)


def isotopy_classify(iso: IsotopySample, tol: float = 1e-8) -> Verdict:
    """Same rules as path classification, applied to the isotopy velocities."""
    return classify_batches(iso.batches, tol)


__all__ = ["LegendrianSample", "Jet", "jet_legendrian", "IsotopySample", "transport", "isotopy_classify"]
