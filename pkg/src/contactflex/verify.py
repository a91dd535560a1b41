"""
Certificates for synthesized paths: endpoint error, alpha extremes, Hofer
length and a verdict, either from a live path or from JSONL records.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .contact import alpha
from .diffeo import Box, Diffeo
from .errors import ConfigError
from .fields import as_points
from .paths import DiffeoPath, PathBase, Segment, batches_from_records, classify_batches, hofer_length, sweep
from .synthesis import far_field_report

REPORT_VERSION = 1


@dataclass
class VerifyConfig:
    grid: int = 11
    box: float = 1.0
    times: int = 33
    tol: float = 1e-8
    endpoint_tol: float = 1e-6
    seed: int | None = None
    random_points: int = 0

    def points(self) -> np.ndarray:
        if self.grid < 2 or not self.box > 0:
            raise ConfigError("grid must be >= 2 and box positive")
        P = Box.cube(self.box).grid(self.grid)
        if self.random_points:
            rng = np.random.default_rng(self.seed)
            P = np.vstack([P, rng.uniform(-self.box, self.box, (self.random_points, 3))])
        return P

    def time_grid(self) -> np.ndarray:
        if self.times < 2:
            raise ConfigError("need at least two time samples")
        return np.linspace(0.0, 1.0, self.times)


@dataclass
class VerificationReport:
    verdict: str
    endpoint_error: float | None
    start_error: float | None
    min_alpha: float
    max_alpha: float
    mean_alpha: float
    interior_min_alpha: float
    argmin: dict
    hofer_length: float
    samples: int
    exact_samples: int
    far_field: dict | None = None
    meta: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    def to_dict(self):
        return _clean(asdict(self))

    def consistent(self) -> bool:
        """The verdict agrees with the recorded extremes."""
        tol = self.meta.get("tol", 0.0)
        if self.verdict == "null":
            return max(abs(self.min_alpha), abs(self.max_alpha)) <= tol
        if self.verdict in ("positive", "non-negative"):
            return self.min_alpha >= -tol
        return self.min_alpha < 0


def _clean(obj):
    """JSON-safe copy: NaN and infinities become None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _report(batches, tol, endpoint_error, start_error, times, meta, far=None):
    v = classify_batches(batches, tol)
    return VerificationReport(
        verdict=v.verdict,
        endpoint_error=endpoint_error,
        start_error=start_error,
        min_alpha=v.min_alpha,
        max_alpha=v.max_alpha,
        mean_alpha=v.mean_alpha,
        interior_min_alpha=v.interior_min_alpha,
        argmin=v.argmin,
        hofer_length=hofer_length(None, None, times, batches),
        samples=v.samples,
        exact_samples=v.exact_samples,
        far_field=far,
        meta=dict(meta, tol=tol),
    )


def verify(path: PathBase, target: Diffeo | None = None, config: VerifyConfig | None = None,
           start: Diffeo | None = None, far_points=None) -> VerificationReport:
    """Sweep the path over the config grid and certify it."""
    config = config or VerifyConfig()
    P = config.points()
    times = config.time_grid()
    batches = sweep(path, P, times)
    end = batches[-1].q if times[-1] == 1.0 else path.evaluate(1.0, P)
    first = batches[0].q if times[0] == 0.0 else path.evaluate(0.0, P)
    endpoint = None if target is None else float(np.max(np.abs(end - target(P))))
    s0 = P if start is None else start(P)
    start_err = float(np.max(np.abs(first - s0)))
    far = None if far_points is None else far_field_report(path, far_points, times)
    meta = {"grid": config.grid, "box": config.box, "times": config.times, "seed": config.seed,
            "random_points": config.random_points, "source": "path"}
    report = _report(batches, config.tol, endpoint, start_err, times, meta, far)
    report.batches = batches  # not serialized; lets callers write the records
    return report


def verify_records(records, target: Diffeo | None = None, tol: float = 1e-8) -> VerificationReport:
    """
    Certify a path from its JSONL velocity records.  alpha is recomputed
    from image and velocity, and a stored value that disagrees is an error.
    """
    if not records:
        raise ConfigError("no records to verify")
    try:
        batches = batches_from_records(records)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed path records: {exc}") from exc
    for b in batches:
        again = alpha(b.q, b.vec)
        if np.any(np.abs(again - b.alpha) > 1e-12 * (1.0 + np.abs(again))):
            raise ConfigError(f"stored alpha disagrees with image and velocity at t={b.t}")
        b.alpha = again
    times = np.array([b.t for b in batches])
    last, first = batches[-1], batches[0]
    endpoint = None
    if target is not None and last.t == 1.0:
        endpoint = float(np.max(np.abs(last.q - target(as_points(last.p)))))
    start_err = float(np.max(np.abs(first.q - first.p))) if first.t == 0.0 else None
    meta = {"times": len(times), "points": int(len(first.p)), "source": "records"}
    return _report(batches, tol, endpoint, start_err, times, meta)


def reverse_segment(path: DiffeoPath, k: int) -> DiffeoPath:
    """Copy of the path with segment k run backwards; used to build counterexamples."""
    segs = list(path.segments)
    s = segs[k]
    segs[k] = Segment(s.generator, s.t0, s.t1, s.warp, s.right, not s.reversed)
    return DiffeoPath(segs, dict(path.meta, corrupted=k))


def verdict_matches(report: VerificationReport, expect: str | None, endpoint_tol: float) -> bool:
    if report.endpoint_error is not None and not report.endpoint_error <= endpoint_tol:
        return False
    if expect is None:
        return report.verdict != "mixed"
    return report.verdict == expect


__all__ = ["VerifyConfig", "VerificationReport", "verify", "verify_records", "reverse_segment",
           "verdict_matches", "REPORT_VERSION"]
