"""
Null and positive paths with prescribed endpoints.

* ``null_path_to(f)``: five horizontal segments realizing the factorization
  of a near-identity f, so alpha vanishes identically along the path.
* ``subdivide_and_connect(family)``: chains null paths for the increments
  f_{t_{j+1}} o f_{t_j}^-1 of a family that is far from the identity.
* ``positive_path_to(f, T)``: t -> R_{tT} o g_t with g a null path from id
  to R_{-T} o f, hence alpha = T along the whole path.
"""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict

import numpy as np

from .contact import REEB, X, Y
from .diffeo import (
    Box,
    Composition,
    ConstantFamily,
    Diffeo,
    FieldFlowMap,
    FlowFamily,
    FrameFlowMap,
    deviation_norm,
    reeb_time,
)
from .errors import (
    InversionFailed,
    NoFeasibleEpsilon,
    NotInNeighborhood,
    SingularJacobianError,
    SubdivisionCapExceeded,
)
from .factorize import Factorization, auto_factorize, constant_factorization, factorize
from .fields import AffineField, ConstantField, as_points
from .paths import (
    FLAT,
    DiffeoPath,
    FieldFlow,
    PathBase,
    ReebComposedPath,
    Segment,
    concat,
    get_warp,
    right_translate,
    stationary_path,
)

log = logging.getLogger(__name__)

SUBDIVISION_CAP = 1024
DEFAULT_POINTS = Box.cube(1.0)


def _points(points):
    return DEFAULT_POINTS.grid(11) if points is None else as_points(points)


def factorization_path(F: Factorization, warp=FLAT) -> DiffeoPath:
    """
    The five segments of the factorization as a path from id to f.

    Every generator is a frozen-amplitude flow of X or Y, so every velocity
    sample is horizontal in closed form.
    """
    warp = get_warp(warp)
    eps = F.eps
    a3_map = FieldFlowMap(Y, F.a3, 1.0)
    if F.cutoff is None:
        first = FieldFlow(X, ConstantField(-eps))
        first_right, first_reversed = None, False
        shift_gen = FieldFlow(X, ConstantField(eps))
    else:
        shift_gen = FieldFlow(X, AffineField(F.cutoff, eps))
        first, first_right, first_reversed = shift_gen, F.shift_inverse, True
    knots = np.linspace(0.0, 1.0, 6)
    segs = [
        Segment(first, knots[0], knots[1], warp, first_right, first_reversed),
        Segment(FieldFlow(Y, F.a3), knots[1], knots[2], warp, F.shift_inverse),
        Segment(shift_gen, knots[2], knots[3], warp, Composition([a3_map, F.shift_inverse])),
        Segment(FieldFlow(Y, F.a2), knots[3], knots[4], warp, F.phi.phi1),
        Segment(FieldFlow(X, F.a1), knots[4], 1.0, warp, F.phi.phi2),
    ]
    return DiffeoPath(segs, {"kind": "null", "eps": eps, "residual": F.residual})


def null_path_to(f: Diffeo, eps="auto", points=None, support_radius=None, warp=FLAT) -> DiffeoPath:
    """Null path from id to a near-identity f, certified on ``points``."""
    P = _points(points)
    if eps in (None, "auto"):
        F = auto_factorize(f, P, support_radius)
    else:
        F = factorize(f, float(eps), P, support_radius)
    path = factorization_path(F, warp)
    path.factorization = F
    return path


def reeb_null_path(T: float, eps: float, warp=FLAT) -> DiffeoPath:
    """Null path from id to the Reeb time-T map with constant amplitudes (0, -T/eps, T/eps)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if T == 0:
        return stationary_path()
    F = constant_factorization(float(T), float(eps))
    path = factorization_path(F, warp)
    path.factorization = F
    return path


class ChainNode(Diffeo):
    """Node j of a NodeChain; evaluation reuses the images of earlier nodes."""

    def __init__(self, chain: "NodeChain", j: int):
        self.chain = chain
        self.j = j

    def _eval(self, P):
        return self.chain.images(P, self.j)

    def _eval_jac(self, P):
        return self.chain.composition(self.j).evaluate_with_jacobian(P)

    def _jac(self, P):
        return self._eval_jac(P)[1]

    def describe(self):
        return f"chain[{self.j}]"

    @property
    def is_identity(self):
        return self.j == 0 and self.chain.start.is_identity


class NodeChain:
    """
    Right factors R_0 = f_0, R_{j+1} = inc_j o R_j of a subdivided family.

    The images R_0(P), R_1(P), ... of a batch are computed once and kept, so
    sweeping a path over many times costs one pass through the increments.
    """

    def __init__(self, start: Diffeo, increments, keep: int = 8):
        self.start = start
        self.increments = list(increments)
        self._store: OrderedDict = OrderedDict()
        self._keep = keep
        self._lock = threading.Lock()
        self.nodes = [ChainNode(self, j) for j in range(len(self.increments) + 1)]

    def __getitem__(self, j):
        return self.nodes[j]

    def composition(self, j) -> Diffeo:
        return Composition(list(reversed(self.increments[:j])) + [self.start])

    def images(self, P, j):
        key = (P.shape, P.tobytes())
        with self._lock:
            seq = self._store.get(key)
            if seq is None:
                seq = [self.start(P)]
                self._store[key] = seq
                if len(self._store) > self._keep:
                    self._store.popitem(last=False)
            else:
                self._store.move_to_end(key)
            while len(seq) <= j:
                seq.append(self.increments[len(seq) - 1](seq[-1]))
            return seq[j].copy()


def _increment_factorizations(family, m, P, eps, support_radius):
    ts = np.linspace(0.0, 1.0, m + 1)
    incs = [family.increment(ts[j], ts[j + 1]) for j in range(m)]
    chain = NodeChain(family(0.0), incs)

    def run(inc, Q):
        if eps in (None, "auto"):
            return auto_factorize(inc, Q, support_radius)
        return factorize(inc, float(eps), Q, support_radius)

    # increment j acts on the image of the seeds under f_{t_j}
    if family.autonomous and all(inc is incs[0] for inc in incs):
        if _translation_invariant(incs[0]):
            Q = P
        else:
            Q = np.concatenate([chain[j](P) for j in range(m)])
        return chain, [run(incs[0], Q)] * m
    return chain, [run(inc, chain[j](P)) for j, inc in enumerate(incs)]


def _translation_invariant(f: Diffeo) -> bool:
    return isinstance(f, FrameFlowMap) and f.field == REEB


def subdivide_and_connect(family, m="auto", eps=0.5, points=None, support_radius=None,
                          warp=FLAT, cap: int = SUBDIVISION_CAP) -> DiffeoPath:
    """
    Null path from f_0 to f_1 through null paths of the increments.

    ``m="auto"`` doubles the subdivision count from 1 until every increment
    factorizes; SubdivisionCapExceeded past ``cap``.
    """
    P = _points(points)
    if isinstance(family, ConstantFamily):
        return right_translate(stationary_path(), family(0.0))
    counts = [int(m)] if m not in (None, "auto") else [2**k for k in range(int(np.log2(cap)) + 1)]
    last = None
    for count in counts:
        try:
            chain, facts = _increment_factorizations(family, count, P, eps, support_radius)
        except (NotInNeighborhood, NoFeasibleEpsilon, InversionFailed, SingularJacobianError) as exc:
            log.debug("m=%d rejected: %s", count, exc)
            last = exc
            continue
        pieces = [right_translate(factorization_path(F, warp), chain[j]) for j, F in enumerate(facts)]
        path = concat(pieces, check_points=P)
        path.meta = {"kind": "null", "subdivisions": count, "eps": [F.eps for F in facts][0]}
        path.factorizations = facts
        path.subdivisions = count
        return path
    raise SubdivisionCapExceeded(f"no subdivision up to m={counts[-1]} works: {last}")


def connect_family(family, **kw) -> DiffeoPath:
    return subdivide_and_connect(family, **kw)


def _is_identity_on(f: Diffeo, P, tol=1e-12) -> bool:
    return bool(np.max(np.abs(f(P) - P)) <= tol) if len(P) else True


def positive_path_to(f: Diffeo, T: float, eps="auto", points=None, family=None, warp=FLAT) -> ReebComposedPath:
    """
    Positive path from id to f: t -> R_{tT} o g_t with g null from id to R_{-T} o f.

    ``family`` (a path of maps from id to f) is needed when f itself is far
    from the identity.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    P = _points(points)
    target = Composition([reeb_time(-T), f])
    exact_reeb = isinstance(f, FrameFlowMap) and f.field == REEB and f.t == T
    if exact_reeb or _is_identity_on(target, P, 0.0):
        g = stationary_path()
    else:
        try:
            g = null_path_to(target, eps, P, warp=warp)
        except (NotInNeighborhood, NoFeasibleEpsilon, InversionFailed, SingularJacobianError):
            reeb_back = subdivide_and_connect(FlowFamily(REEB, -T), eps=_eps_or(eps), points=P, warp=warp)
            if family is not None:
                first = subdivide_and_connect(family, eps=_eps_or(eps), points=P, warp=warp)
            elif _is_identity_on(f, P, 0.0):
                first = None
            else:
                first = null_path_to(f, eps, P, warp=warp)
            second = right_translate(reeb_back, f)
            g = second if first is None else concat([first, second], check_points=P)
    path = ReebComposedPath(g, T)
    path.null_part = g
    return path


def _eps_or(eps, default=0.5):
    return default if eps in (None, "auto") else float(eps)


def far_field_report(path: PathBase, points, times=None) -> dict:
    """Sup displacement and sup ||D g_t - Id|| of every slice over ``points``."""
    P = as_points(points)
    times = np.linspace(0.0, 1.0, 33) if times is None else np.asarray(times, dtype=float)
    disp = np.zeros(len(times))
    dev = np.zeros(len(times))
    for i, t in enumerate(times):
        Q, J = path.slice(float(t)).evaluate_with_jacobian(P)
        disp[i] = np.max(np.linalg.norm(Q - P, axis=1)) if len(P) else 0.0
        dev[i] = np.max(deviation_norm(J)) if len(P) else 0.0
    return {
        "max_displacement": float(disp.max()),
        "max_jacobian_deviation": float(dev.max()),
        "worst_time_displacement": float(times[int(np.argmax(disp))]),
        "worst_time_jacobian": float(times[int(np.argmax(dev))]),
        "samples": int(len(P)),
        "times": int(len(times)),
    }


def shell_points(inner: float, outer: float, n: int = 9) -> np.ndarray:
    """Grid points of the cube [-outer, outer]^3 with sup-norm >= inner."""
    P = Box.cube(outer).grid(n)
    return P[np.max(np.abs(P), axis=1) >= inner - 1e-12]


__all__ = [
    "factorization_path", "null_path_to", "reeb_null_path", "subdivide_and_connect", "connect_family",
    "positive_path_to", "far_field_report", "shell_points", "NodeChain", "stationary_path",
]
