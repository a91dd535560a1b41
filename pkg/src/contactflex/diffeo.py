"""
Smooth maps R^3 -> R^3 with exact Jacobians, Newton inversion and
near-identity certification on a box.

All maps evaluate on batches: ``f(P)`` with ``P`` of shape (N, 3) returns
(N, 3) and ``f.jacobian(P)`` returns (N, 3, 3).  A single point of shape
(3,) is accepted and returned unbatched.
"""

from __future__ import annotations

import copy
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .contact import REEB, FrameField, X, Y, Z, flow, flow_jacobian, scaled_frame
from .errors import DomainError, InversionFailed, SingularJacobianError
from .expr import MapExpr, evaluate, parse_map, to_source
from .fields import BumpField, ScalarField, as_points, builtin_hamiltonian
from .integrate import rk4_flow, steps_for

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 20
SINGULAR_COND = 1e12


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @classmethod
    def cube(cls, half: float, center=(0.0, 0.0, 0.0)) -> "Box":
        c = np.asarray(center, dtype=float)
        return cls(tuple(c - half), tuple(c + half))

    @property
    def half_width(self) -> float:
        return float(np.max(np.asarray(self.hi) - np.asarray(self.lo)) / 2.0)

    def grid(self, n: int) -> np.ndarray:
        axes = [np.linspace(a, b, n) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, P, slack: float = 1e-9) -> np.ndarray:
        P = as_points(P)
        lo, hi = np.asarray(self.lo) - slack, np.asarray(self.hi) + slack
        return np.all((P >= lo) & (P <= hi), axis=1)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}


class BatchMemo:
    """Small thread-safe LRU cache keyed by the bytes of a point batch."""

    def __init__(self, maxsize: int = 32):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, P: np.ndarray, tag, compute):
        key = (tag, P.shape, P.tobytes())
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return _copied(self._data[key])
        value = compute()
        with self._lock:
            self._data[key] = value
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        # callers may write into the result, so the cache keeps its own
        return _copied(value)


def _copied(value):
    if isinstance(value, tuple):
        return tuple(v.copy() for v in value)
    return value.copy()


class Diffeo:
    """Base class; subclasses implement ``_eval`` and ``_jac`` on (N, 3) batches."""

    box: Box | None = None

    def _check(self, P):
        if self.box is not None and not np.all(self.box.contains(P)):
            bad = P[~self.box.contains(P)][0]
            raise DomainError(f"{self.describe()} evaluated at {bad} outside its box {self.box}")

    def __call__(self, P):
        single = np.ndim(P) == 1
        P = as_points(P)
        self._check(P)
        out = self._eval(P)
        return out[0] if single else out

    def jacobian(self, P):
        single = np.ndim(P) == 1
        P = as_points(P)
        self._check(P)
        out = self._jac(P)
        return out[0] if single else out

    def evaluate_with_jacobian(self, P):
        P = as_points(P)
        self._check(P)
        return self._eval_jac(P)

    def _eval_jac(self, P):
        return self._eval(P), self._jac(P)

    def _eval(self, P):
        raise NotImplementedError

    def _jac(self, P):
        raise NotImplementedError

    def __matmul__(self, other: "Diffeo") -> "Composition":
        return Composition([self, other])

    def with_box(self, box: Box | None) -> "Diffeo":
        out = copy.copy(self)
        out.box = box
        return out

    def describe(self) -> str:
        return type(self).__name__

    @property
    def is_identity(self) -> bool:
        return False


def _eye(n):
    return np.broadcast_to(np.eye(3), (n, 3, 3)).copy()


class Identity(Diffeo):
    def _eval(self, P):
        return P.copy()

    def _jac(self, P):
        return _eye(len(P))

    def describe(self):
        return "identity"

    @property
    def is_identity(self):
        return True


class FrameFlowMap(Diffeo):
    """Closed-form time-t flow of a frame field."""

    def __init__(self, field: FrameField, t: float):
        self.field = field
        self.t = float(t)

    def _eval(self, P):
        return flow(self.field, self.t, P)

    def _jac(self, P):
        return flow_jacobian(self.field, self.t, P)

    def describe(self):
        return f"flow({self.field}, {self.t!r})"

    @property
    def is_identity(self):
        return self.t == 0.0


def reeb_time(t: float) -> FrameFlowMap:
    return FrameFlowMap(REEB, t)


class FieldFlowMap(Diffeo):
    """``p -> flow(field, s * a(p), p)``: a frame flow with position-dependent time."""

    def __init__(self, field: FrameField, amplitude: ScalarField, s: float = 1.0):
        self.field = field
        self.amplitude = amplitude
        self.s = float(s)

    def _eval(self, P):
        return flow(self.field, self.s * self.amplitude.value(P), P)

    def _jac(self, P):
        tau = self.s * self.amplitude.value(P)
        image = flow(self.field, tau, P)
        J = flow_jacobian(self.field, tau, P)
        direction = scaled_frame(self.field, 1.0, image)
        return J + self.s * direction[:, :, None] * self.amplitude.grad(P)[:, None, :]

    def describe(self):
        return f"fieldflow({self.field}, {self.amplitude.describe()}, s={self.s!r})"


class Translation(Diffeo):
    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)

    def _eval(self, P):
        return P + self.v

    def _jac(self, P):
        return _eye(len(P))

    def describe(self):
        return f"translate({', '.join(repr(float(c)) for c in self.v)})"


class ContactScaling(Diffeo):
    """(x, y, z) -> (lx, ly, l^2 z); pulls alpha back to l^2 alpha."""

    def __init__(self, lam: float):
        self.lam = float(lam)

    def _eval(self, P):
        return P * np.array([self.lam, self.lam, self.lam**2])

    def _jac(self, P):
        return np.broadcast_to(np.diag([self.lam, self.lam, self.lam**2]), (len(P), 3, 3)).copy()

    def describe(self):
        return f"scale({self.lam!r})"


class BumpShear(Diffeo):
    """Compactly supported shear (x, y + a * bump(p), z)."""

    def __init__(self, amplitude: float, inner: float, outer: float):
        self.a = float(amplitude)
        self.bump = BumpField(inner, outer, 1.0)

    def _eval(self, P):
        out = P.copy()
        out[:, 1] += self.a * self.bump.value(P)
        return out

    def _jac(self, P):
        J = _eye(len(P))
        J[:, 1, :] += self.a * self.bump.grad(P)
        return J

    def describe(self):
        return f"bumpshear({self.a!r}, {self.bump.inner!r}, {self.bump.outer!r})"


class ParsedMap(Diffeo):
    """A map given by three expressions; Jacobian by symbolic differentiation."""

    def __init__(self, expr: MapExpr | str, params: dict | None = None):
        if isinstance(expr, str):
            expr = parse_map(expr)
        self.expr = expr
        self.params = dict(params or {})
        self._partials = expr.partials()

    def _env(self, P):
        env = {"x": P[:, 0], "y": P[:, 1], "z": P[:, 2]}
        env.update(self.params)
        return env

    def _eval(self, P):
        env = self._env(P)
        return np.stack([evaluate(c, env, (len(P),)) for c in self.expr.components], axis=1)

    def _jac(self, P):
        env = self._env(P)
        rows = [np.stack([evaluate(d, env, (len(P),)) for d in row], axis=1) for row in self._partials]
        return np.stack(rows, axis=1)

    def describe(self):
        text = str(self.expr)
        if self.params:
            text += " with " + ", ".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))
        return text


class HamiltonianFlowMap(Diffeo):
    """Time-t flow of the contact vector field X_h by RK4 with ``n_steps`` steps."""

    def __init__(self, h: ScalarField, t: float, n_steps: int | None = None, step: float = 1.0 / 64):
        self.h = h
        self.t = float(t)
        self.n_steps = n_steps if n_steps is not None else steps_for(self.t, step)
        self._memo = BatchMemo(64)

    def _eval(self, P):
        return self._memo.get(P, "v", lambda: rk4_flow(self.h, self.t, P, self.n_steps))

    def _eval_jac(self, P):
        return self._memo.get(P, "vj", lambda: rk4_flow(self.h, self.t, P, self.n_steps, jacobian=True))

    def _jac(self, P):
        return self._eval_jac(P)[1]

    def describe(self):
        return f"hamflow({self.h.describe()}, t={self.t!r}, steps={self.n_steps})"

    @property
    def is_identity(self):
        return self.t == 0.0


class Composition(Diffeo):
    """``maps[0] o maps[1] o ... o maps[-1]`` (the last map acts first)."""

    def __init__(self, maps):
        flat = []
        for m in maps:
            flat.extend(m.maps if isinstance(m, Composition) and m.box is None else [m])
        self.maps = [m for m in flat if not m.is_identity] or [Identity()]

    def _eval(self, P):
        for m in reversed(self.maps):
            P = m(P)
        return P

    def _eval_jac(self, P):
        J = _eye(len(P))
        for m in reversed(self.maps):
            P, Jm = m.evaluate_with_jacobian(P)
            J = Jm @ J
        return P, J

    def _jac(self, P):
        return self._eval_jac(P)[1]

    def describe(self):
        return " o ".join(f"[{m.describe()}]" for m in self.maps)

    @property
    def is_identity(self):
        return all(m.is_identity for m in self.maps)


class InverseMap(Diffeo):
    """Inverse of a near-identity map, evaluated point-wise by damped Newton."""

    def __init__(self, f: Diffeo, tol: float = NEWTON_TOL):
        self.f = f
        self.tol = tol
        self._memo = BatchMemo(32)

    def _eval(self, P):
        return self._memo.get(P, "inv", lambda: invert_points(self.f, P, tol=self.tol))

    def _jac(self, P):
        return np.linalg.inv(self.f.jacobian(self._eval(P)))

    def describe(self):
        return f"inverse({self.f.describe()})"

    @property
    def is_identity(self):
        return self.f.is_identity


# ------------------------------------------------------------------ Newton


def invert_points(f: Diffeo, Q, guess=None, tol: float = NEWTON_TOL,
                  max_iter: int = NEWTON_MAX_ITER, max_halvings: int = NEWTON_MAX_HALVINGS,
                  cond_max: float = SINGULAR_COND) -> np.ndarray:
    """Batch damped Newton: find P with |f(P) - Q| <= tol row-wise."""
    Q = as_points(Q)
    P = Q.copy() if guess is None else as_points(guess).astype(float).copy()
    R = f(P) - Q
    err = np.linalg.norm(R, axis=1)
    # absolute tolerance near the origin, relative far out
    tol = tol * np.maximum(1.0, np.linalg.norm(Q, axis=1))
    active = err > tol
    for _ in range(max_iter):
        if not active.any():
            return P
        idx = np.nonzero(active)[0]
        J = f.jacobian(P[idx])
        cond = np.linalg.cond(J)
        if np.any(~np.isfinite(cond) | (cond > cond_max)):
            k = idx[np.argmax(np.where(np.isfinite(cond), cond, np.inf))]
            raise SingularJacobianError(f"singular Jacobian of {f.describe()} near {P[k]}")
        step = -np.linalg.solve(J, R[idx][:, :, None])[:, :, 0]
        base = P[idx]
        lam = np.ones(len(idx))
        trial = base + step
        Rt = f(trial) - Q[idx]
        et = np.linalg.norm(Rt, axis=1)
        worse = ~(et < err[idx])
        for _ in range(max_halvings):
            if not worse.any():
                break
            lam[worse] *= 0.5
            sub = np.nonzero(worse)[0]
            trial[sub] = base[sub] + lam[sub, None] * step[sub]
            Rt[sub] = f(trial[sub]) - Q[idx][sub]
            et[sub] = np.linalg.norm(Rt[sub], axis=1)
            worse[sub] = ~(et[sub] < err[idx][sub])
        stalled = worse
        keep = ~stalled
        P[idx[keep]] = trial[keep]
        R[idx[keep]] = Rt[keep]
        err[idx[keep]] = et[keep]
        active = err > tol
        if np.any(stalled & active[idx]):
            break
    if active.any():
        k = np.argmax(np.where(active, err, -1.0))
        raise InversionFailed(
            f"Newton did not converge for {f.describe()}: residual {err[k]:.3e} at target {Q[k]}")
    return P


def invert_point(f: Diffeo, q, guess=None, tol: float = NEWTON_TOL) -> np.ndarray:
    """Single-point (or batch) inverse; |f(p) - q| <= tol on return."""
    single = np.ndim(q) == 1
    P = invert_points(f, q, guess=guess, tol=tol)
    return P[0] if single else P


# --------------------------------------------------------- certification


@dataclass
class NearIdentityReport:
    ok: bool
    max_displacement: float
    max_jacobian_deviation: float
    worst_displacement_at: list
    worst_jacobian_at: list
    delta: float
    jacobian_delta: float

    def to_dict(self):
        return dict(self.__dict__)


def deviation_norm(J: np.ndarray) -> np.ndarray:
    """Spectral norm of J - Id, row-wise over a batch."""
    return np.linalg.norm(J - np.eye(3)[None], ord=2, axis=(1, 2))


def check_near_identity(f: Diffeo, points, delta: float, jacobian_delta: float | None = None):
    """True iff sup |f(p) - p| <= delta and sup ||Df(p) - Id|| <= jacobian_delta on ``points``."""
    P = as_points(points)
    jd = delta if jacobian_delta is None else jacobian_delta
    F, J = f.evaluate_with_jacobian(P)
    disp = np.linalg.norm(F - P, axis=1)
    dev = deviation_norm(J)
    i, j = int(np.argmax(disp)), int(np.argmax(dev))
    ok = bool(disp[i] <= delta and dev[j] <= jd)
    return NearIdentityReport(ok, float(disp[i]), float(dev[j]), P[i].tolist(), P[j].tolist(),
                              float(delta), float(jd))


# --------------------------------------------------------------- families


class Family:
    """A time-indexed family t -> f_t of diffeomorphisms, t in [0, 1]."""

    autonomous = False

    def __call__(self, t: float) -> Diffeo:
        raise NotImplementedError

    def increment(self, t0: float, t1: float) -> Diffeo:
        """f_{t1} o f_{t0}^{-1}."""
        return Composition([self(t1), InverseMap(self(t0))])

    def generator_velocity(self, t: float, Q):
        """Velocity field of the family at image points Q, if known in closed form."""
        return None

    def describe(self) -> str:
        return type(self).__name__


class ConstantFamily(Family):
    autonomous = True

    def __init__(self, f: Diffeo | None = None):
        self.f = f or Identity()

    def __call__(self, t):
        return self.f

    def increment(self, t0, t1):
        return Identity()

    def generator_velocity(self, t, Q):
        return np.zeros_like(as_points(Q))

    def describe(self):
        return f"constant({self.f.describe()})"


class FlowFamily(Family):
    """f_t = time-(scale * t) flow of a frame field or of a contact Hamiltonian."""

    autonomous = True

    def __init__(self, generator, scale: float = 1.0, n_steps: int = 64, step: float = 1.0 / 64):
        self.generator = generator
        self.scale = float(scale)
        self.n_steps = n_steps
        self.step = step
        self._cache: dict = {}

    def _flow(self, time, n_steps=None):
        if isinstance(self.generator, FrameField):
            return FrameFlowMap(self.generator, time)
        return HamiltonianFlowMap(self.generator, time, n_steps=n_steps, step=self.step)

    def __call__(self, t):
        key = ("slice", float(t))
        if key not in self._cache:
            self._cache[key] = self._flow(self.scale * t, n_steps=self.n_steps)
        return self._cache[key]

    def increment(self, t0, t1):
        key = ("inc", float(t1 - t0))
        if key not in self._cache:
            self._cache[key] = self._flow(self.scale * (t1 - t0))
        return self._cache[key]

    def generator_velocity(self, t, Q):
        Q = as_points(Q)
        if isinstance(self.generator, FrameField):
            return scaled_frame(self.generator, self.scale, Q)
        from .contact import hamiltonian_vector_field

        return self.scale * hamiltonian_vector_field(self.generator, Q)

    def describe(self):
        gen = str(self.generator) if isinstance(self.generator, FrameField) else self.generator.describe()
        return f"flowfamily({gen}, scale={self.scale!r})"


class ParsedFamily(Family):
    """A family given by a map expression in x, y, z and t."""

    def __init__(self, source: str):
        self.expr = parse_map(source, variables=("x", "y", "z", "t"))

    def __call__(self, t):
        return ParsedMap(self.expr, {"t": float(t)})

    def describe(self):
        return f"family{self.expr}"


# --------------------------------------------------------------- builtins


def builtin(name: str) -> Diffeo:
    """
    Look up a builtin map by id.

    ``identity``, ``reeb:T``, ``xflow:T``, ``yflow:T``, ``zflow:T,EPS``,
    ``translate:A,B,C``, ``scale:L``, ``bumpshear:A,INNER,OUTER`` and
    ``hamflow:T:H`` where H is a Hamiltonian (``const:c``, ``bump:i,o,h``,
    ``well`` or an expression in x, y, z).
    """
    key, _, arg = name.partition(":")
    if key == "hamflow":
        t, _, h = arg.partition(":")
        return HamiltonianFlowMap(builtin_hamiltonian(h), float(t))
    params = [float(v) for v in arg.split(",")] if arg else []
    if key in ("identity", "id"):
        return Identity()
    if key == "reeb":
        return reeb_time(params[0])
    if key == "xflow":
        return FrameFlowMap(X, params[0])
    if key == "yflow":
        return FrameFlowMap(Y, params[0])
    if key == "zflow":
        return FrameFlowMap(Z(params[1]), params[0])
    if key == "translate":
        return Translation(params)
    if key == "scale":
        return ContactScaling(params[0])
    if key == "bumpshear":
        return BumpShear(*params)
    raise KeyError(f"unknown builtin map {name!r}")


def builtin_family(name: str) -> Family:
    """``reeb:T`` (t -> Reeb time tT), ``hamflow:T:H``, ``constant`` or an expression in t."""
    key, _, arg = name.partition(":")
    if key == "reeb":
        return FlowFamily(REEB, float(arg))
    if key == "hamflow":
        t, _, h = arg.partition(":")
        return FlowFamily(builtin_hamiltonian(h), float(t))
    if key in ("constant", "identity"):
        return ConstantFamily()
    return ParsedFamily(name)


def map_to_source(f: Diffeo) -> str:
    if isinstance(f, ParsedMap):
        return str(f.expr)
    return f.describe()


__all__ = [
    "Box", "BatchMemo", "Diffeo", "Identity", "FrameFlowMap", "FieldFlowMap", "Translation",
    "ContactScaling", "BumpShear", "ParsedMap", "HamiltonianFlowMap", "Composition",
    "InverseMap", "invert_point", "invert_points", "check_near_identity",
    "NearIdentityReport", "Family", "ConstantFamily", "FlowFamily", "ParsedFamily",
    "builtin", "builtin_family", "reeb_time", "to_source", "deviation_norm",
]
