"""
Paths of diffeomorphisms t -> g_t, t in [0, 1], and their generating fields.

A path is an ordered list of segments.  A segment runs a generator (a
reparametrized horizontal flow, a Hamiltonian flow, ...) over its own time
interval through a warp sigma, optionally followed on the right by a fixed
map.  The velocity field X_t is defined by d/dt g_t(p) = X_t(g_t(p)); it
does not change under right translation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .contact import FrameField, alpha, flow, scaled_frame
from .diffeo import Box, Composition, Diffeo, FieldFlowMap, HamiltonianFlowMap, Identity, reeb_time
from .errors import JunctionMismatch
from .fields import ScalarField, as_points

FD_STEP = 1e-5
JUNCTION_TOL = 1e-9

CLOSED_FORM = "closed-form"
FINITE_DIFFERENCE = "finite-difference"
CHAIN_RULE = "chain-rule"


# ------------------------------------------------------------------ warps


def _beta(u):
    return np.exp(-1.0 / (u * (1.0 - u))) if 0.0 < u < 1.0 else 0.0


_BETA_MASS = quad(_beta, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13)[0]


@lru_cache(maxsize=4096)
def _flat_sigma(s: float) -> float:
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    if s > 0.5:
        return 1.0 - _flat_sigma(1.0 - s)
    return quad(_beta, 0.0, s, epsabs=1e-16, epsrel=1e-13)[0] / _BETA_MASS


class Warp:
    """Monotone reparametrization sigma of [0, 1] with sigma(0) = 0, sigma(1) = 1."""

    def __init__(self, name, sigma, dsigma):
        self.name = name
        self._sigma = sigma
        self._dsigma = dsigma

    def __call__(self, s: float) -> float:
        return float(self._sigma(min(max(float(s), 0.0), 1.0)))

    def derivative(self, s: float) -> float:
        return float(self._dsigma(min(max(float(s), 0.0), 1.0)))

    def __repr__(self):
        return f"Warp({self.name})"


FLAT = Warp("flat", _flat_sigma, lambda s: _beta(s) / _BETA_MASS)
SMOOTHSTEP = Warp("smoothstep", lambda s: s * s * (3.0 - 2.0 * s), lambda s: 6.0 * s * (1.0 - s))
LINEAR = Warp("linear", lambda s: s, lambda s: 1.0)
WARPS = {w.name: w for w in (FLAT, SMOOTHSTEP, LINEAR)}


def get_warp(name) -> Warp:
    if isinstance(name, Warp):
        return name
    try:
        return WARPS[name]
    except KeyError:
        raise ValueError(f"unknown warp {name!r}; choose from {sorted(WARPS)}") from None


# ------------------------------------------------------------- generators


class Generator:
    """A one-parameter family u -> G_u, u in [0, 1], with G_0 = id."""

    exact = False

    def slice(self, u: float) -> Diffeo:
        raise NotImplementedError

    def velocity(self, u: float, B, rate: float = 1.0):
        """(image G_u(B), rate * d/du G_u(B)); only for exact generators."""
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class FieldFlow(Generator):
    """G_u(p) = flow(field, u * a(p), p): the amplitude is frozen along each orbit."""

    exact = True

    def __init__(self, field_: FrameField, amplitude: ScalarField):
        self.field = field_
        self.amplitude = amplitude

    def slice(self, u):
        return FieldFlowMap(self.field, self.amplitude, u)

    def velocity(self, u, B, rate=1.0):
        a = self.amplitude.value(B)
        image = flow(self.field, u * a, B)
        # scale before forming the vector so horizontal fields pair to exactly 0
        return image, scaled_frame(self.field, rate * a, image)

    def describe(self):
        return f"fieldflow({self.field}, {self.amplitude.describe()})"


class HamiltonianFlow(Generator):
    """G_u = time u * duration flow of X_h with a fixed step count (smooth in u)."""

    def __init__(self, h: ScalarField, duration: float, n_steps: int = 64):
        self.h = h
        self.duration = float(duration)
        self.n_steps = n_steps

    def slice(self, u):
        return HamiltonianFlowMap(self.h, u * self.duration, n_steps=self.n_steps)

    def describe(self):
        return f"hamflow({self.h.describe()}, {self.duration!r})"


class Stationary(Generator):
    exact = True

    def slice(self, u):
        return Identity()

    def velocity(self, u, B, rate=1.0):
        B = as_points(B)
        return B.copy(), np.zeros_like(B)

    def describe(self):
        return "stationary"


class ConstantConjugate(Generator):
    """u -> post o inner_u o pre with fixed maps pre, post; velocity by differences."""

    def __init__(self, inner: Generator, pre: Diffeo | None = None, post: Diffeo | None = None):
        self.inner = inner
        self.pre = pre or Identity()
        self.post = post or Identity()

    def slice(self, u):
        return Composition([self.post, self.inner.slice(u), self.pre])

    def describe(self):
        return f"conjugate({self.inner.describe()})"


# --------------------------------------------------------------- velocity


@dataclass
class VelocityBatch:
    """Velocity samples at one time for a batch of seed points."""

    t: float
    p: np.ndarray
    q: np.ndarray
    vec: np.ndarray
    alpha: np.ndarray
    exactness: np.ndarray

    @classmethod
    def build(cls, t, p, q, vec, tag):
        tags = np.full(len(p), tag, dtype=object) if isinstance(tag, str) else tag
        return cls(float(t), p, q, vec, alpha(q, vec), tags)

    @property
    def exact(self) -> np.ndarray:
        return self.exactness == CLOSED_FORM


def _fd_velocity(evaluate, t, P, lo, hi, h=FD_STEP):
    """d/dt evaluate(t, P) by central differences, one-sided near [lo, hi] ends."""
    if t - h >= lo and t + h <= hi:
        return (evaluate(t + h, P) - evaluate(t - h, P)) / (2.0 * h)
    if t + 2 * h <= hi:
        return (-3.0 * evaluate(t, P) + 4.0 * evaluate(t + h, P) - evaluate(t + 2 * h, P)) / (2.0 * h)
    return (3.0 * evaluate(t, P) - 4.0 * evaluate(t - h, P) + evaluate(t - 2 * h, P)) / (2.0 * h)


@dataclass
class Segment:
    generator: Generator
    t0: float
    t1: float
    warp: Warp = FLAT
    right: Diffeo | None = None
    reversed: bool = False

    def local(self, t: float):
        """(u, du/dt) at path time t."""
        width = self.t1 - self.t0
        s = min(max((t - self.t0) / width, 0.0), 1.0)
        if self.reversed:
            return self.warp(1.0 - s), -self.warp.derivative(1.0 - s) / width
        return self.warp(s), self.warp.derivative(s) / width

    def _base(self, P):
        return P if self.right is None else self.right(P)

    def slice(self, t: float) -> Diffeo:
        g = self.generator.slice(self.local(t)[0])
        return g if self.right is None else Composition([g, self.right])

    def evaluate(self, t, P):
        return self.generator.slice(self.local(t)[0])(self._base(as_points(P)))

    def velocity(self, t, P):
        P = as_points(P)
        if self.generator.exact:
            u, du = self.local(t)
            image, v = self.generator.velocity(u, self._base(P), du)
            return image, v, CLOSED_FORM
        image = self.evaluate(t, P)
        v = _fd_velocity(self.evaluate, t, P, self.t0, self.t1)
        return image, v, FINITE_DIFFERENCE

    def retimed(self, t0, t1):
        return Segment(self.generator, t0, t1, self.warp, self.right, self.reversed)

    def right_translated(self, c: Diffeo):
        right = c if self.right is None else Composition([self.right, c])
        return Segment(self.generator, self.t0, self.t1, self.warp, right, self.reversed)

    def mirrored(self):
        return Segment(self.generator, 1.0 - self.t1, 1.0 - self.t0, self.warp, self.right,
                       not self.reversed)

    def describe(self):
        text = f"[{self.t0:.6g}, {self.t1:.6g}] {self.generator.describe()} warp={self.warp.name}"
        if self.reversed:
            text += " reversed"
        if self.right is not None:
            text += f" right={self.right.describe()}"
        return text


class PathBase:
    """Common interface: slice, evaluate, velocity, endpoints, right translation."""

    def slice(self, t: float) -> Diffeo:
        raise NotImplementedError

    def evaluate(self, t: float, P):
        return self.slice(t)(as_points(P))

    def velocity(self, t: float, P) -> VelocityBatch:
        raise NotImplementedError

    def fd_velocity(self, t: float, P, h: float = FD_STEP) -> np.ndarray:
        return _fd_velocity(self.evaluate, t, as_points(P), 0.0, 1.0, h)

    def start(self) -> Diffeo:
        return self.slice(0.0)

    def end(self) -> Diffeo:
        return self.slice(1.0)

    def junctions(self) -> list:
        return []

    def right_translate(self, c: Diffeo) -> "PathBase":
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


class DiffeoPath(PathBase):
    def __init__(self, segments, meta: dict | None = None):
        if not segments:
            raise ValueError("a path needs at least one segment")
        self.segments = list(segments)
        self.meta = dict(meta or {})
        t = 0.0
        for seg in self.segments:
            if abs(seg.t0 - t) > 1e-12 or not seg.t1 > seg.t0:
                raise ValueError("segment intervals must partition [0, 1]")
            t = seg.t1
        if abs(t - 1.0) > 1e-12:
            raise ValueError("segment intervals must end at 1")

    def segment_index(self, t: float) -> int:
        for i, seg in enumerate(self.segments):
            if t < seg.t1:
                return i
        return len(self.segments) - 1

    def segment_at(self, t: float) -> Segment:
        return self.segments[self.segment_index(t)]

    def slice(self, t):
        return self.segment_at(t).slice(t)

    def evaluate(self, t, P):
        return self.segment_at(t).evaluate(t, P)

    def velocity(self, t, P):
        P = as_points(P)
        q, v, tag = self.segment_at(t).velocity(t, P)
        return VelocityBatch.build(t, P, q, v, tag)

    def junctions(self):
        return [seg.t1 for seg in self.segments[:-1]]

    def right_translate(self, c):
        return right_translate(self, c)

    def reversed(self) -> "DiffeoPath":
        """The path t -> g_{1-t}."""
        return DiffeoPath([s.mirrored() for s in reversed(self.segments)], self.meta)

    @property
    def exact(self) -> bool:
        return all(s.generator.exact for s in self.segments)

    def describe(self):
        return "\n".join(s.describe() for s in self.segments)


def stationary_path() -> DiffeoPath:
    return DiffeoPath([Segment(Stationary(), 0.0, 1.0, LINEAR)])


def right_translate(path: PathBase, c: Diffeo) -> PathBase:
    """Slice t of the result is (slice t of path) o c."""
    if isinstance(c, Identity):
        return path
    if isinstance(path, DiffeoPath):
        return DiffeoPath([s.right_translated(c) for s in path.segments], path.meta)
    return path.right_translate(c)


def default_check_points() -> np.ndarray:
    return Box.cube(1.0).grid(5)


def concat(paths, check_points=None, tol: float = JUNCTION_TOL) -> DiffeoPath:
    """Run the paths one after another, each on an equal share of [0, 1]."""
    paths = list(paths)
    if len(paths) == 1:
        return paths[0]
    P = default_check_points() if check_points is None else as_points(check_points)
    for k in range(len(paths) - 1):
        gap = float(np.max(np.abs(paths[k].evaluate(1.0, P) - paths[k + 1].evaluate(0.0, P))))
        if gap > tol:
            raise JunctionMismatch(f"paths {k} and {k + 1} do not meet: sup mismatch {gap:.3e}", gap)
    n = len(paths)
    segments = []
    for k, path in enumerate(paths):
        if not isinstance(path, DiffeoPath):
            raise TypeError("concat needs segment paths")
        a = k / n
        for s in path.segments:
            segments.append(s.retimed(a + s.t0 / n, a + s.t1 / n))
    segments[-1] = segments[-1].retimed(segments[-1].t0, 1.0)
    return DiffeoPath(segments)


class ReebComposedPath(PathBase):
    """t -> R_{tT} o g_t with an unwarped Reeb clock; alpha = T + alpha of g."""

    def __init__(self, inner: PathBase, T: float):
        self.inner = inner
        self.T = float(T)

    def slice(self, t):
        return Composition([reeb_time(t * self.T), self.inner.slice(t)])

    def evaluate(self, t, P):
        out = self.inner.evaluate(t, P)
        out[:, 2] += t * self.T
        return out

    def velocity(self, t, P):
        vb = self.inner.velocity(t, P)
        q = vb.q.copy()
        q[:, 2] += t * self.T
        vec = vb.vec.copy()
        vec[:, 2] += self.T
        return VelocityBatch.build(t, vb.p, q, vec, vb.exactness)

    def junctions(self):
        return self.inner.junctions()

    def right_translate(self, c):
        return ReebComposedPath(right_translate(self.inner, c), self.T)

    def describe(self):
        return f"reeb(T={self.T!r}) o\n{self.inner.describe()}"


class LeftFlowComposedPath(PathBase):
    """t -> F_t o g_t for a family F; velocity X^F + DF . X^g by the chain rule."""

    def __init__(self, family, inner: PathBase):
        self.family = family
        self.inner = inner

    def slice(self, t):
        return Composition([self.family(t), self.inner.slice(t)])

    def evaluate(self, t, P):
        return self.family(t)(self.inner.evaluate(t, P))

    def velocity(self, t, P):
        vb = self.inner.velocity(t, P)
        Q, J = self.family(t).evaluate_with_jacobian(vb.q)
        own = self.family.generator_velocity(t, Q)
        if own is None:
            raise TypeError(f"{self.family.describe()} has no closed-form velocity")
        vec = own + np.einsum("nij,nj->ni", J, vb.vec)
        return VelocityBatch.build(t, vb.p, Q, vec, CHAIN_RULE)

    def junctions(self):
        return self.inner.junctions()

    def right_translate(self, c):
        return LeftFlowComposedPath(self.family, right_translate(self.inner, c))

    def describe(self):
        return f"{self.family.describe()} o\n{self.inner.describe()}"


# ------------------------------------------------------ sampling + verdicts


def default_times(n: int = 33) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def sweep(path: PathBase, points, times):
    """Velocity batches at every time."""
    P = as_points(points)
    return [path.velocity(float(t), P) for t in times]


def hofer_length(path: PathBase, points, times=None, batches=None) -> float:
    """Trapezoid rule in t of max |alpha(X_t)| over the sample points."""
    times = default_times(65) if times is None else np.asarray(times, dtype=float)
    batches = batches if batches is not None else sweep(path, points, times)
    peaks = np.array([np.max(np.abs(b.alpha)) if len(b.alpha) else 0.0 for b in batches])
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * (peaks[1:] + peaks[:-1]) * np.diff(times)))


@dataclass
class Verdict:
    verdict: str
    min_alpha: float
    max_alpha: float
    max_abs_alpha: float
    mean_alpha: float
    argmin: dict
    samples: int
    exact_samples: int
    tol: float
    interior_min_alpha: float = field(default=float("nan"))

    def to_dict(self):
        return dict(self.__dict__)


def classify_batches(batches, tol: float, interior=None) -> Verdict:
    """
    null: every |alpha| <= tol_i; positive: alpha > tol_i at interior times;
    non-negative: alpha >= -tol_i everywhere; otherwise mixed.  Closed-form
    samples are judged exactly (tol_i = 0).
    """
    a = np.concatenate([b.alpha for b in batches])
    exact = np.concatenate([b.exact for b in batches])
    tols = np.where(exact, 0.0, tol)
    tt = np.concatenate([np.full(len(b.alpha), b.t) for b in batches])
    pts = np.concatenate([b.p for b in batches])
    if interior is None:
        lo, hi = min(b.t for b in batches), max(b.t for b in batches)
        inner = (tt > lo) & (tt < hi)
        if not inner.any():
            inner = np.ones_like(tt, dtype=bool)
    else:
        inner = np.asarray(interior, dtype=bool)
    if np.all(np.abs(a) <= tols):
        verdict = "null"
    elif np.all(a[inner] > tols[inner]) and np.all(a >= -tols):
        verdict = "positive"
    elif np.all(a >= -tols):
        verdict = "non-negative"
    else:
        verdict = "mixed"
    k = int(np.argmin(a))
    imin = float(np.min(a[inner])) if inner.any() else float("nan")
    return Verdict(verdict, float(a.min()), float(a.max()), float(np.max(np.abs(a))), float(a.mean()),
                   {"t": float(tt[k]), "p": pts[k].tolist()}, int(len(a)), int(exact.sum()), float(tol),
                   imin)


def classify(path: PathBase, points, tol: float = 1e-8, times=None) -> Verdict:
    times = default_times() if times is None else np.asarray(times, dtype=float)
    return classify_batches(sweep(path, points, times), tol)


def velocity_records(batches):
    """JSONL-ready dicts, one per (t, seed point)."""
    out = []
    for b in batches:
        for i in range(len(b.p)):
            out.append({
                "t": b.t,
                "p": b.p[i].tolist(),
                "image": b.q[i].tolist(),
                "velocity": b.vec[i].tolist(),
                "alpha": float(b.alpha[i]),
                "exactness": str(b.exactness[i]),
            })
    return out


def write_jsonl(records, fh):
    for r in records:
        fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(fh):
    return [json.loads(line) for line in fh if line.strip()]


def batches_from_records(records):
    """Group JSONL path records back into velocity batches (by time)."""
    by_t: dict = {}
    for r in records:
        by_t.setdefault(float(r["t"]), []).append(r)
    out = []
    for t in sorted(by_t):
        rows = by_t[t]
        out.append(VelocityBatch(
            t,
            np.array([r["p"] for r in rows], dtype=float),
            np.array([r["image"] for r in rows], dtype=float),
            np.array([r["velocity"] for r in rows], dtype=float),
            np.array([r["alpha"] for r in rows], dtype=float),
            np.array([r["exactness"] for r in rows], dtype=object),
        ))
    return out


__all__ = [
    "Warp", "FLAT", "SMOOTHSTEP", "LINEAR", "get_warp", "Generator", "FieldFlow", "HamiltonianFlow",
    "Stationary", "ConstantConjugate", "Segment", "PathBase", "DiffeoPath", "VelocityBatch",
    "ReebComposedPath", "LeftFlowComposedPath", "concat", "right_translate", "stationary_path",
    "hofer_length", "classify", "classify_batches", "Verdict", "sweep", "velocity_records",
    "write_jsonl", "read_jsonl", "batches_from_records", "default_times", "CLOSED_FORM",
    "FINITE_DIFFERENCE", "CHAIN_RULE", "FD_STEP", "JUNCTION_TOL",
]
