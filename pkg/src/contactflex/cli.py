"""
Command line: contactflex <command> [options].

Exit status 0 when the computed verdict is the expected one, 1 when the
computation or the verification fails, 2 on usage errors.  Reports are JSON
on stdout (sorted keys, no timings); ``--out file.jsonl`` also writes the
per-sample records.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import extension, legendrian, synthesis
from .diffeo import Box, Identity, ParsedMap, builtin, builtin_family
from .errors import ConfigError, ContactFlexError, ParseError
from .factorize import EPS_LADDER, auto_factorize, factorize
from .paths import velocity_records, write_jsonl
from .verify import VerifyConfig, verdict_matches, verify, verify_records

log = logging.getLogger("contactflex")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
VERDICTS = ("positive", "non-negative", "null", "mixed")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _map_from(args, required=True):
    if getattr(args, "map", None) and getattr(args, "builtin", None):
        raise UsageError("give either --map or --builtin, not both")
    if getattr(args, "map", None):
        return ParsedMap(args.map)
    if getattr(args, "builtin", None):
        return builtin(args.builtin)
    if required:
        raise UsageError("a target map is needed (--map or --builtin)")
    return None


def _eps(args):
    if getattr(args, "auto_eps", False) or args.eps in (None, "auto"):
        return "auto"
    return float(args.eps)


def _config(args, grid=11, times=33) -> VerifyConfig:
    return VerifyConfig(
        grid=args.grid or grid,
        box=args.box,
        times=args.times or times,
        tol=args.tol,
        endpoint_tol=args.endpoint_tol,
        seed=args.seed,
        random_points=args.random_points,
    )


def _emit(payload: dict, args, records=None):
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False)
    out = getattr(args, "out", None)
    if out and out.endswith(".jsonl"):
        with open(out, "w") as fh:
            write_jsonl(records or [], fh)
    elif out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _clean(obj):
    from .verify import _clean as clean

    return clean(obj)


def path_from_spec(spec: dict, points):
    """
    Build a path from a small JSON spec::

        {"kind": "null" | "positive" | "reeb-null" | "connect",
         "map": "(x, y + 0.1, z)" | "builtin": "reeb:0.2",
         "eps": 0.5 | "auto", "reeb_time": 1.0, "family": "reeb:2"}

    Returns (path, target map, expected verdict).
    """
    kind = spec.get("kind", "null")
    eps = spec.get("eps", "auto")
    if spec.get("map") and spec.get("builtin"):
        raise UsageError("path spec gives both map and builtin")
    target = ParsedMap(spec["map"]) if spec.get("map") else (builtin(spec["builtin"]) if spec.get("builtin")
                                                             else None)
    if kind == "null":
        if target is None:
            raise UsageError("a null path spec needs a map")
        return synthesis.null_path_to(target, eps, points), target, "null"
    if kind == "positive":
        T = float(spec.get("reeb_time", 1.0))
        target = target or Identity()
        return synthesis.positive_path_to(target, T, eps, points), target, "positive"
    if kind == "reeb-null":
        T = float(spec.get("reeb_time", 0.2))
        e = 0.5 if eps == "auto" else float(eps)
        return synthesis.reeb_null_path(T, e), builtin(f"reeb:{T!r}"), "null"
    if kind == "connect":
        fam = builtin_family(spec["family"])
        e = 0.5 if eps == "auto" else eps
        m = spec.get("subdivide", "auto")
        return synthesis.subdivide_and_connect(fam, m, e, points), fam(1.0), "null"
    raise UsageError(f"unknown path kind {kind!r}")


# ----------------------------------------------------------------- commands


def cmd_factorize(args):
    f = _map_from(args)
    P = Box.cube(args.box).grid(args.grid or 11)
    eps = _eps(args)
    support = args.support_radius
    F = auto_factorize(f, P, support) if eps == "auto" else factorize(f, eps, P, support)
    a1, a2, a3 = F.amplitudes(P)
    payload = {
        "command": "factorize",
        "map": f.describe(),
        "eps": F.eps,
        "residual": F.residual,
        "amplitude_max": [float(np.max(np.abs(a))) for a in (a1, a2, a3)],
        "near_identity": F.report.to_dict() if F.report is not None else None,
        "support_radius": support,
        "cutoff_outer_radius": F.outer_radius,
        "grid": args.grid or 11,
        "box": args.box,
    }
    records = [{"p": P[i].tolist(), "a1": float(a1[i]), "a2": float(a2[i]), "a3": float(a3[i])}
               for i in range(len(P))]
    _emit(_clean(payload), args, records)
    return EXIT_OK if F.residual <= args.endpoint_tol else EXIT_FAIL


def _path_command(args, name, path, target, expect, extra=None, start=None):
    cfg = _config(args)
    report = verify(path, target, cfg, start=start)
    payload = {"command": name, "expect": expect, "report": report.to_dict()}
    payload.update(extra or {})
    _emit(_clean(payload), args, velocity_records(report.batches))
    return EXIT_OK if verdict_matches(report, expect, cfg.endpoint_tol) else EXIT_FAIL


def cmd_null_path(args):
    f = _map_from(args)
    P = Box.cube(args.box).grid(args.grid or 11)
    path = synthesis.null_path_to(f, _eps(args), P, args.support_radius, args.warp)
    return _path_command(args, "null-path", path, f, "null", {"factorization": path.factorization.to_dict()})


def cmd_positive_path(args):
    f = _map_from(args, required=False) or Identity()
    P = Box.cube(args.box).grid(args.grid or 11)
    family = builtin_family(args.family) if args.family else None
    path = synthesis.positive_path_to(f, args.reeb_time, _eps(args), P, family, args.warp)
    return _path_command(args, "positive-path", path, f, "positive", {"reeb_time": args.reeb_time})


def cmd_connect(args):
    if not args.family:
        raise UsageError("connect needs --family")
    fam = builtin_family(args.family)
    P = Box.cube(args.box).grid(args.grid or 11)
    m = args.subdivide if args.subdivide == "auto" else int(args.subdivide)
    eps = 0.5 if _eps(args) == "auto" else _eps(args)
    path = synthesis.subdivide_and_connect(fam, m, eps, P, warp=args.warp)
    return _path_command(args, "connect", path, fam(1.0), "null",
                         {"subdivisions": path.subdivisions, "family": fam.describe()}, start=fam(0.0))


def cmd_extend(args):
    if args.example != "well":
        raise UsageError(f"unknown example {args.example!r}")
    inp = extension.well_example(args.depth)
    if args.k0 is not None:
        inp.k0 = float(args.k0)
    params = extension.compute_constants(inp)
    if args.bump_height not in (None, "auto"):
        params.height = float(args.bump_height)
    eps = 1.0 if _eps(args) == "auto" else _eps(args)
    result = extension.extend_positive(inp, params, grid_n=args.grid or 21, n_times=args.times or 64, eps=eps)
    report = {k: v for k, v in result.report.items() if k != "seconds"}
    payload = {"command": "extend", "params": result.params.to_dict(), "report": report}
    ok = report["verdict"] == "positive" and report.get("far_field_max_difference", 0.0) <= 1e-9
    _emit(_clean(payload), args, [])
    return EXIT_OK if ok else EXIT_FAIL


def cmd_legendrian(args):
    P = Box.cube(args.box).grid(args.grid or 11)
    if args.path_from:
        try:
            with open(args.path_from) as fh:
                spec = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read path spec: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"path spec is not JSON: {exc}") from exc
    else:
        spec = {"kind": args.kind, "map": args.map, "builtin": args.builtin, "eps": _eps(args),
                "reeb_time": args.reeb_time, "family": args.family}
    path, _, expect = path_from_spec(spec, P)
    L = legendrian.jet_legendrian(args.jet, tuple(args.interval), args.points)
    times = np.linspace(0.0, 1.0, args.times or 33)
    iso = legendrian.transport(L, path, times)
    v = legendrian.isotopy_classify(iso, args.tol)
    payload = {
        "command": "legendrian",
        "jet": args.jet,
        "path": {k: spec.get(k) for k in sorted(spec)},
        "expect": expect,
        "initial_tangent_alpha": L.max_alpha(),
        "final_tangent_alpha": iso.slices[-1].max_alpha(),
        "verdict": v.to_dict(),
    }
    _emit(_clean(payload), args, iso.records())
    return EXIT_OK if v.verdict == expect else EXIT_FAIL


def cmd_verify(args):
    if not args.path:
        raise UsageError("verify needs --path")
    try:
        with open(args.path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise UsageError(f"cannot read {args.path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.path} is not JSONL: {exc}") from exc
    target = _map_from(args, required=False)
    report = verify_records(records, target, args.tol)
    expect = args.expect
    payload = {"command": "verify", "expect": expect, "report": report.to_dict()}
    _emit(_clean(payload), args, records)
    return EXIT_OK if verdict_matches(report, expect, args.endpoint_tol) else EXIT_FAIL


COMMANDS = {
    "factorize": cmd_factorize,
    "null-path": cmd_null_path,
    "positive-path": cmd_positive_path,
    "connect": cmd_connect,
    "extend": cmd_extend,
    "legendrian": cmd_legendrian,
    "verify": cmd_verify,
}


# ------------------------------------------------------------------- parser


def _eps_value(text):
    if text == "auto":
        return text
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("eps must be positive")
    if v not in EPS_LADDER:
        log.debug("eps %g is off the ladder", v)
    return v


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--grid", type=int, default=None, help="points per axis of the sample grid")
    g.add_argument("--box", type=float, default=1.0, help="half-width of the sample cube")
    g.add_argument("--times", type=int, default=None, help="number of time samples")
    g.add_argument("--tol", type=float, default=1e-8, help="alpha tolerance for non-closed-form samples")
    g.add_argument("--endpoint-tol", type=float, default=1e-6)
    g.add_argument("--seed", type=int, default=None, help="seed for the extra random sample points")
    g.add_argument("--random-points", type=int, default=0)
    g.add_argument("--out", default=None, help="write the report (.json) or the records (.jsonl)")
    g.add_argument("--config", default=None, help="JSON file of option defaults; flags win")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _target_options(p, required=False):
    p.add_argument("--map", help='map expression, e.g. "(x, y + 0.1, z)"')
    p.add_argument("--builtin", help="builtin map id, e.g. reeb:0.2")
    p.add_argument("--eps", type=_eps_value, default="auto")
    p.add_argument("--auto-eps", action="store_true")
    p.add_argument("--support-radius", type=float, default=None)
    p.add_argument("--warp", default="flat", choices=("flat", "smoothstep", "linear"))


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="contactflex", description="Null and positive paths on contact R^3.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    subs = {}

    p = sub.add_parser("factorize", parents=[common], help="factor a near-identity map")
    _target_options(p)
    subs["factorize"] = p

    p = sub.add_parser("null-path", parents=[common], help="null path from id to a map")
    _target_options(p)
    subs["null-path"] = p

    p = sub.add_parser("positive-path", parents=[common], help="positive path from id to a map")
    _target_options(p)
    p.add_argument("--reeb-time", type=float, default=1.0)
    p.add_argument("--family", default=None, help="family from id to the map when it is far from id")
    subs["positive-path"] = p

    p = sub.add_parser("connect", parents=[common], help="null path through a family by subdivision")
    _target_options(p)
    p.add_argument("--family", default=None, help="reeb:T, hamflow:T:H or a map expression in t")
    p.add_argument("--subdivide", default="auto", help="number of pieces or auto")
    subs["connect"] = p

    p = sub.add_parser("extend", parents=[common], help="make the shipped example positive everywhere")
    p.add_argument("--example", default="well")
    p.add_argument("--depth", type=float, default=2.0)
    p.add_argument("--k0", type=float, default=None)
    p.add_argument("--bump-height", default="auto")
    p.add_argument("--eps", type=_eps_value, default=1.0)
    p.add_argument("--auto-eps", action="store_true")
    subs["extend"] = p

    p = sub.add_parser("legendrian", parents=[common], help="transport a 1-jet along a path")
    _target_options(p)
    p.add_argument("--jet", default="y^2/2", help="u(y); the curve is y -> (-u'(y), y, u(y))")
    p.add_argument("--interval", type=float, nargs=2, default=(-1.0, 1.0))
    p.add_argument("--points", type=int, default=41)
    p.add_argument("--path-from", default=None, help="JSON path spec")
    p.add_argument("--kind", default="null", choices=("null", "positive", "reeb-null", "connect"))
    p.add_argument("--reeb-time", type=float, default=0.2)
    p.add_argument("--family", default=None)
    subs["legendrian"] = p

    p = sub.add_parser("verify", parents=[common], help="re-verify JSONL path records")
    p.add_argument("--path", default=None, help="JSONL records written with --out")
    p.add_argument("--map", help="endpoint target expression")
    p.add_argument("--builtin", help="endpoint target builtin")
    p.add_argument("--target", dest="builtin_target", default=None, help="alias: target builtin id or expression")
    p.add_argument("--expect", default=None, choices=VERDICTS)
    subs["verify"] = p
    return parser, subs


def _apply_config(parser, subs, argv):
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("no command given")
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser, subs = build_parser()
    try:
        args = _apply_config(parser, subs, argv)
    except UsageError as exc:
        print(f"contactflex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify" and args.builtin_target:
        if args.map or args.builtin:
            print("contactflex: error: --target duplicates --map/--builtin", file=sys.stderr)
            return EXIT_USAGE
        if args.builtin_target.lstrip().startswith("("):
            args.map = args.builtin_target
        else:
            args.builtin = args.builtin_target
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ParseError, KeyError, IndexError) as exc:
        print(f"contactflex: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContactFlexError as exc:
        print(json.dumps({"command": args.command, "error": type(exc).__name__, "message": str(exc)},
                         indent=2, sort_keys=True))
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
