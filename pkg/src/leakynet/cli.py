"""Command-line entry point: ``leakynet <command> [options]``.

Every command prints (or writes with ``--out``) a JSON report carrying
``"schema": 1``. Exit codes: 0 success, 2 configuration error, 3 infeasible
accuracy budget, 4 file error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class IOFailure(Exception):
    pass


def _dumps(doc: dict) -> str:
    return json.dumps({"schema": SCHEMA, **doc}, indent=2, sort_keys=True) + "\n"


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename it into place."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _read(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


def _emit(doc: dict, out: str | None) -> None:
    text = _dumps(doc)
    if out:
        atomic_write(out, text)
    sys.stdout.write(text)


def _parse_box(text: str | None, dim: int, default=(0.0, 1.0)):
    from .metrics import Box

    if text is None:
        return Box.cube(dim, *default)
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--box expects 'lo,hi', got {text!r}") from None
    if not lo < hi:
        raise ConfigError("--box needs lo < hi")
    return Box.cube(dim, lo, hi)


def _target(name: str, dx, dy):
    from .targets import get_target

    try:
        return get_target(name, dx, dy)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def report_path_for(net_path: str | Path) -> Path:
    p = Path(net_path)
    return p.with_name(p.stem + ".report.json")


# ---------------------------------------------------------------------------
# commands


def cmd_compile(args) -> int:
    from .coding import CodingParams, compile
    from .netcore import serialize

    target = _target(args.target, args.dx, args.dy)
    try:
        params = CodingParams(args.K, args.M, target.dx, target.dy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    box = _parse_box(args.box, target.dx)
    net, report = compile(
        target, box, params, eps_budget=args.eps, gamma=args.gamma, seed=args.seed, centered=args.centered
    )
    doc = {
        "command": "compile",
        "target": target.name,
        "K": args.K,
        "M": args.M,
        "dx": target.dx,
        "dy": target.dy,
        "box": box.to_dict(),
        **report.to_dict(),
    }
    atomic_write(args.out, serialize(net))
    atomic_write(args.report or report_path_for(args.out), _dumps(doc))
    sys.stdout.write(_dumps(doc))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .metrics import Box, lp_norm_gap, sup_norm_gap
    from .netcore import NetworkFormatError, deserialize

    try:
        net = deserialize(_read(args.net))
    except NetworkFormatError as exc:
        raise ConfigError(f"{args.net}: {exc}") from None
    rep_path = args.report or report_path_for(args.net)
    try:
        compiled = json.loads(_read(rep_path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{rep_path}: {exc}") from None
    if args.target == "smooth":
        target = _target("smooth", net.input_dim, net.output_dim)
    else:
        target = _target(args.target, None, None)
    if target.dx != net.input_dim or target.dy != net.output_dim:
        raise ConfigError(f"target {target.name} does not match the network dimensions")
    box = Box(np.asarray(compiled["box"]["lo"]), np.asarray(compiled["box"]["hi"])) if "box" in compiled else Box.cube(net.input_dim)
    pts = args.pts or (100 if net.input_dim <= 2 else 22)
    lp = lp_norm_gap(net.forward, target, box, args.p, pts)
    sup = sup_norm_gap(net.forward, target, box, pts)
    bound = float(compiled["bound"])
    doc = {
        "command": "verify",
        "target": target.name,
        "sup_gap": sup,
        "lp_gap": lp,
        "p": args.p,
        "bound": bound,
        "slack": args.slack,
        "pass": bool(lp <= bound + args.slack),
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_flow_demo(args) -> int:
    from .coding import CodingParams
    from .flow import builtin_transport, duap_demo

    name = args.target or ("mix2" if args.dim == 1 else "gauss-corr-2d")
    try:
        target = builtin_transport(name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    if target.dim != args.dim:
        raise ConfigError(f"target {name} has dimension {target.dim}")
    box = _parse_box(args.box, args.dim, (-5.0, 5.0) if args.dim == 1 else (-4.0, 4.0))
    params = CodingParams(args.K, args.M, 2, 2) if args.dim == 2 else None
    _, report = duap_demo(target, params, box, args.n, args.seed, grid=args.grid)
    _emit({"command": "flow-demo", "target": name, "dim": args.dim, **report.to_dict()}, args.out)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    from . import limits

    if args.dim == 1:
        ce = limits.square_counterexample_1d()
        exhaustive = limits.exhaustive_1d_check()
        doc = {**ce.to_dict(), **exhaustive, "all_pass": exhaustive["min_gap"] >= ce.epsilon - 1e-12}
    else:
        try:
            ce = limits.gaussian_counterexample(args.dim, args.radius)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        stats = limits.run_candidates(ce, args.candidates, args.fitted, seed=args.seed)
        doc = {**ce.to_dict(), **stats}
    _emit({"command": "counterexample", **doc}, args.out)
    return EXIT_OK


def cmd_lu(args) -> int:
    from . import lu

    try:
        doc = json.loads(_read(args.inp))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.inp}: {exc}") from None
    A = np.asarray(doc["matrix"] if isinstance(doc, dict) else doc, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("matrix must be square")
    out = {"command": "lu", "leading_minors": lu.leading_minors(A).tolist()}
    try:
        f = lu.lu_decompose(A)
        out.update(decomposable=True, lower=f.lower.tolist(), upper=f.upper.tolist())
    except lu.NotDecomposable as exc:
        near = lu.nearest_lu(A, args.eps)
        out.update(
            decomposable=False,
            message=str(exc),
            index=exc.index,
            nearest=near.tolist(),
            nearest_distance=lu.opnorm_power(A - near),
        )
    _emit(out, args.out)
    return EXIT_OK


def cmd_smooth_eval(args) -> int:
    from .netcore import leaky_relu
    from .smooth import SmoothedActivation

    try:
        act = SmoothedActivation(args.alpha, args.n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.x:
        xs = np.array([float(v) for v in args.x.split(",")])
    else:
        xs = np.linspace(-2.0 / args.n, 2.0 / args.n, args.points)
    rows = [
        {"x": float(x), "leaky": float(leaky_relu(x, act.alpha)), "smoothed": float(act(x)), "deriv": float(act.deriv(x))}
        for x in xs
    ]
    gap = max(abs(r["leaky"] - r["smoothed"]) for r in rows)
    _emit({"command": "smooth-eval", "alpha": act.alpha, "n": act.n, "rows": rows, "max_gap": gap}, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leakynet", description="Compile and check minimal-width leaky-ReLU networks.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a built-in target into a network")
    c.add_argument("--target", required=True)
    c.add_argument("--K", type=int, required=True)
    c.add_argument("--M", type=int, required=True)
    c.add_argument("--dx", type=int)
    c.add_argument("--dy", type=int)
    c.add_argument("--box", help="cube bounds 'lo,hi' (default 0,1)")
    c.add_argument("--gamma", type=float, default=0.05)
    c.add_argument("--eps", type=float, default=2.0**-8)
    c.add_argument("--centered", action="store_true")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="network JSON path")
    c.add_argument("--report", help="report path (default <out stem>.report.json)")
    c.set_defaults(func=cmd_compile)

    v = sub.add_parser("verify", help="measure a compiled network against a target")
    v.add_argument("--net", required=True)
    v.add_argument("--target", required=True)
    v.add_argument("--report")
    v.add_argument("--p", type=float, default=2.0)
    v.add_argument("--slack", type=float, default=0.02)
    v.add_argument("--pts", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("flow-demo", help="push N(0, I) through a fitted network")
    f.add_argument("--dim", type=int, choices=(1, 2), required=True)
    f.add_argument("--target")
    f.add_argument("--n", type=int, default=100_000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--K", type=int, default=6)
    f.add_argument("--M", type=int, default=6)
    f.add_argument("--grid", type=int, default=512)
    f.add_argument("--box")
    f.add_argument("--out")
    f.set_defaults(func=cmd_flow_demo)

    x = sub.add_parser("counterexample", help="first-coordinate gaps of candidate bijections")
    x.add_argument("--dim", type=int, default=2)
    x.add_argument("--radius", type=float, default=1.0)
    x.add_argument("--candidates", type=int, default=200)
    x.add_argument("--fitted", type=int, default=0)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--out")
    x.set_defaults(func=cmd_counterexample)

    u = sub.add_parser("lu", help="LU-factor a matrix from JSON")
    u.add_argument("--in", dest="inp", required=True)
    u.add_argument("--eps", type=float, default=1e-4)
    u.add_argument("--out")
    u.set_defaults(func=cmd_lu)

    s = sub.add_parser("smooth-eval", help="compare a leaky ReLU with its smoothed version")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--x", help="comma-separated points")
    s.add_argument("--points", type=int, default=9)
    s.add_argument("--out")
    s.set_defaults(func=cmd_smooth_eval)
    return p


def main(argv=None) -> int:
    from .coding import InfeasibleBudget

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleBudget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IOFailure as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
