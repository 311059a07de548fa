"""Command-line entry point.

Verbs: transform, ginf, hj, interpolate, cauchy, verify, info. Functions are
exchanged as JSON descriptors (see ``polarity.descriptor``). Solver verbs
write a directory of frame descriptors, a flat CSV and a manifest; the
manifest goes last so a directory without one is an interrupted run.

Settings resolve as: command-line flags, then ``POLARITY_*`` environment
variables, then a JSON config file (``--config`` or ``POLARITY_CONFIG``),
then built-in defaults.

Exit codes: 0 ok, 1 usage or parse error, 2 numeric refusal, 3 failed
verification.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .descriptor import atomic_write, descriptor_lattice, dumps, from_descriptor, load, to_descriptor
from .errors import BeyondMaximalTime, PolarityError
from .funcspace.catalog import AnalyticConvexFunction, natural_dim
from .funcspace.classify import SampleSpec, classify
from .funcspace.grid import GridFunction, sample

EXIT_OK, EXIT_USAGE, EXIT_REFUSED, EXIT_FAILED = 0, 1, 2, 3
ENV_PREFIX = "POLARITY_"
CSV_SCHEMA = 1

DEFAULTS = {
    "box": None,
    "shape": None,
    "dual_box": None,
    "dual_shape": None,
    "strict": False,
    "refine": True,
    "format": "json",
    "policy": "warn",
    "steps": 21,
    "t_end": 1.0,
    "no_timestamp": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- settings ---------------------------------------------------------------------------

def _parse_box(raw):
    """'lo,hi' or 'lo,hi;lo,hi' (or a JSON list) -> list of (lo, hi)."""
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = raw.strip()
        if raw.startswith("["):
            raw = json.loads(raw)
        else:
            raw = [[float(v) for v in part.split(",")] for part in raw.split(";") if part.strip()]
    if raw and not isinstance(raw[0], (list, tuple)):
        raw = [raw]
    box = [(float(lo), float(hi)) for lo, hi in raw]
    if not box:
        raise ValueError("empty box")
    return box


def _parse_shape(raw):
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = raw.strip()
        raw = json.loads(raw) if raw.startswith("[") else [int(v) for v in raw.split(",") if v.strip()]
    if isinstance(raw, int):
        raw = [raw]
    return tuple(int(v) for v in raw)


def _parse_bool(raw):
    if isinstance(raw, bool):
        return raw
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_choice(choices):
    def parse(raw):
        if raw not in choices:
            raise ValueError(f"{raw!r} is not one of {choices}")
        return raw
    return parse


_COERCE = {
    "box": _parse_box,
    "shape": _parse_shape,
    "dual_box": _parse_box,
    "dual_shape": _parse_shape,
    "strict": _parse_bool,
    "refine": _parse_bool,
    "format": _parse_choice(("json", "csv")),
    "policy": _parse_choice(("warn", "abort", "waive")),
    "steps": int,
    "t_end": float,
    "no_timestamp": _parse_bool,
}


def _read_config(path) -> dict:
    if not path:
        return {}
    try:
        data = load(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve_settings(args: argparse.Namespace, environ=None) -> dict:
    """Layer flags over environment over config file over defaults."""
    environ = os.environ if environ is None else environ
    config = _read_config(getattr(args, "config", None) or environ.get(ENV_PREFIX + "CONFIG"))
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        env = environ.get(ENV_PREFIX + key.upper())
        for source, raw in (("flag", flag), ("env", env), ("config", config.get(key))):
            if raw is not None:
                try:
                    out[key] = _COERCE[key](raw)
                except (ValueError, TypeError, json.JSONDecodeError) as exc:
                    raise UsageError(f"bad value for {key} ({source}): {exc}") from exc
                break
        else:
            out[key] = default
    if out["steps"] < 2:
        raise UsageError("--steps must be at least 2")
    if (out["dual_box"] is None) != (out["dual_shape"] is None):
        raise UsageError("--dual-box and --dual-shape go together")
    for bk, sk in (("box", "shape"), ("dual_box", "dual_shape")):
        box, shape = out[bk], out[sk]
        if box is None or shape is None:
            continue
        # a single axis on either side applies to every axis
        if len(box) == 1 < len(shape):
            out[bk] = box * len(shape)
        elif len(shape) == 1 < len(box):
            out[sk] = shape * len(box)
        elif len(box) != len(shape):
            raise UsageError(f"--{bk.replace('_', '-')} and --{sk.replace('_', '-')} disagree on the dimension")
    return out


# -- input ------------------------------------------------------------------------------

def _load(path):
    """(function, descriptor dict); parse failures become usage errors."""
    try:
        d = load(path)
        return from_descriptor(d), d
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot load descriptor {path}: {exc}") from exc


def _lattice(d: dict, settings: dict, f):
    if settings["box"] is not None:
        box = settings["box"]
        shape = settings["shape"] or (257,) * len(box)
        return box, shape
    lat = descriptor_lattice(d)
    if lat is None:
        dim = natural_dim(f) if isinstance(f, AnalyticConvexFunction) else None
        raise UsageError("analytic descriptor without a sampling lattice; pass --box/--shape"
                         + (f" ({dim}-dimensional)" if dim else ""))
    return lat


def _load_grid(path, settings) -> GridFunction:
    f, d = _load(path)
    if isinstance(f, GridFunction):
        return f
    try:
        return sample(f, *_lattice(d, settings, f))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _load_pointwise(path):
    """A function only ever evaluated pointwise (Hamiltonians, velocities): kept as is."""
    return _load(path)[0]


# -- output -----------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def _grid_csv(g: GridFunction, t=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ([] if t is None else ["t"]) + [f"x{i + 1}" for i in range(g.dim)] + ["u"]
    w.writerow(head)
    _grid_rows(w, g, t)
    return buf.getvalue()


def _grid_rows(w, g: GridFunction, t=None):
    for x, v in zip(g.points(), g.flat_values):
        w.writerow(([] if t is None else [_fmt(t)]) + [_fmt(c) for c in x] + [_fmt(v)])


def _emit(text: str, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _emit_function(g, out, settings, extra=None):
    if settings["format"] == "csv":
        if not isinstance(g, GridFunction):
            raise UsageError("CSV output needs a grid result")
        _emit(_grid_csv(g), out)
    else:
        _emit(dumps(_clean(to_descriptor(g, extra=extra))), out)


def _stamp(settings) -> dict:
    if settings["no_timestamp"]:
        return {}
    return {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}


def write_time_path(path, out_dir, verb: str, settings: dict, *, extra=None, residuals=None):
    """Frames, flat CSV, optional residual CSV, and finally the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for k, frame in enumerate(path.frames):
        name = f"frame_{k:04d}.json"
        atomic_write(out_dir / name, dumps(_clean(to_descriptor(frame, extra={"t": float(path.times[k])}))))
        names.append(name)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dim = path.frames[0].dim if path.frames else 0
    w.writerow(["t"] + [f"x{i + 1}" for i in range(dim)] + ["u"])
    for t, frame in zip(path.times, path.frames):
        _grid_rows(w, frame, t)
    atomic_write(out_dir / "path.csv", buf.getvalue())
    manifest = {
        "schema": CSV_SCHEMA,
        "verb": verb,
        "times": [float(t) for t in path.times],
        "frames": names,
        "csv": "path.csv",
        "csv_columns": ["t"] + [f"x{i + 1}" for i in range(dim)] + ["u"],
        "provenance": path.provenance,
        "diagnostics": path.per_frame_diagnostics,
    }
    if residuals is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(dim)] + ["residual_name", "value"])
        for t, x, name, value in residuals:
            w.writerow([_fmt(t)] + [_fmt(c) for c in x] + [name, _fmt(value)])
        atomic_write(out_dir / "residuals.csv", buf.getvalue())
        manifest["residuals"] = "residuals.csv"
        finite = [r[3] for r in residuals if math.isfinite(r[3])]
        manifest["max_residual"] = max(finite) if finite else None
    manifest.update(extra or {})
    manifest.update(_stamp(settings))
    atomic_write(out_dir / "manifest.json", _json_text(manifest))


def _check_points(g: GridFunction) -> np.ndarray:
    """A few off-origin points in the central half of the box, on both sides of every axis."""
    per_axis = []
    for lo, hi in g.box:
        r = min(-lo, hi)
        per_axis.append([-0.5 * r, -0.25 * r, 0.25 * r, 0.5 * r])
    grids = np.meshgrid(*per_axis, indexing="ij")
    return np.stack([m.ravel() for m in grids], axis=1)


def _residual_rows(path, fn, name: str) -> list:
    rows = []
    X = _check_points(path.frames[0])
    for t in path.times[1:-1]:
        for x in X:
            try:
                value = fn(path, float(t), x)
            except PolarityError:
                value = math.nan
            rows.append((float(t), x, name, float(value)))
    return rows


def _times(t_end: float, steps: int) -> np.ndarray:
    return np.round(np.linspace(0.0, t_end, steps), 12)


def _dual_kw(settings, dim: int) -> dict:
    box, shape = settings["dual_box"], settings["dual_shape"]
    if box is not None and len(box) == len(shape) == 1 < dim:
        box, shape = box * dim, shape * dim
    return {"dual_box": box, "dual_shape": shape}


# -- verbs ------------------------------------------------------------------------------

def cmd_transform(args, settings) -> int:
    from .transforms import geometric_envelope, j_transform, legendre, polar

    f = _load_grid(args.input, settings)
    dual = _dual_kw(settings, f.dim)
    box, shape = dual["dual_box"], dual["dual_shape"]
    start = time.perf_counter()
    extra, diag = {}, {"op": args.op}
    if args.op in ("polar", "legendre"):
        if args.op == "polar":
            res = polar(f, box, shape, strict=settings["strict"], refine=settings["refine"])
        else:
            res = legendre(f, box, shape, strict=settings["strict"])
        out = res.output
        extra = {"argmax": res.argmax_map.ravel().tolist(), "boundary_fraction": res.boundary_attainment_fraction}
        diag.update(boundary_fraction=res.boundary_attainment_fraction, boundary_hits=int(res.boundary_hits.sum()))
    elif args.op == "j":
        out = j_transform(f, box, shape)
    else:
        out = geometric_envelope(f, box, shape)
    if not settings["no_timestamp"]:
        diag["elapsed_s"] = time.perf_counter() - start
    _emit_function(out, args.out, settings, extra)
    if args.out:
        atomic_write(f"{args.out}.diag.json", _json_text(diag))
    return EXIT_OK


def cmd_ginf(args, settings) -> int:
    from .ginfconv import ginf_analytic, ginf_direct_grid, ginf_dual

    if len(args.input) != 2:
        raise UsageError("ginf takes exactly two --in descriptors")
    (f, df), (g, dg) = (_load(p) for p in args.input)
    if (isinstance(f, AnalyticConvexFunction) and isinstance(g, AnalyticConvexFunction)
            and settings["box"] is None and descriptor_lattice(df) is None and descriptor_lattice(dg) is None):
        _emit(dumps(to_descriptor(ginf_analytic(f, g))), args.out)
        return EXIT_OK
    fg, gg = (_load_grid(p, settings) for p in args.input)
    if args.route == "direct":
        res = ginf_direct_grid(fg, gg)
    else:
        res = ginf_dual(fg, gg, refine=settings["refine"], **_dual_kw(settings, fg.dim))
    _emit_function(res.output, args.out, settings, {"route": res.route.value})
    if args.witness:
        if res.witness_pairs is None:
            raise UsageError("witness pairs come from --route direct")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "z"])
        for x, pair in zip(fg.axes[0], res.witness_pairs):
            w.writerow([_fmt(x)] + ([_fmt(pair[0]), _fmt(pair[1])] if pair else ["", ""]))
        atomic_write(args.witness, buf.getvalue())
    return EXIT_OK


def cmd_hj(args, settings) -> int:
    from .pde import hj_residual, solve_polar_hj

    f = _load_grid(args.f, settings)
    g = _load_pointwise(args.g)
    times = _times(settings["t_end"], settings["steps"])
    path = solve_polar_hj(f, g, times, policy=settings["policy"], refine=settings["refine"], **_dual_kw(settings, f.dim))
    residuals = _residual_rows(path, hj_residual, "hj_residual") if args.check else None
    write_time_path(path, args.out, "hj", settings, residuals=residuals)
    return EXIT_OK


def cmd_interpolate(args, settings) -> int:
    from .pde import ma_residual, solve_ma_dirichlet

    u0 = _load_grid(args.u0, settings)
    u1 = _load_grid(args.u1, settings)
    T = args.T if args.T is not None else settings["t_end"]
    times = _times(T, settings["steps"])
    path = solve_ma_dirichlet(u0, u1, T, times, route=args.route, policy=settings["policy"],
                              refine=settings["refine"], **_dual_kw(settings, u0.dim))
    residuals = _residual_rows(path, ma_residual, "ma_residual") if args.check else None
    write_time_path(path, args.out, "interpolate", settings, residuals=residuals)
    return EXIT_OK


def cmd_cauchy(args, settings) -> int:
    from .pde import initial_velocity_check, solve_ma_cauchy

    u0 = _load_grid(args.u0, settings)
    du0 = _load_pointwise(args.du0)
    times = _times(settings["t_end"], settings["steps"])
    extra = {}
    if args.check:
        extra["initial_velocity"] = initial_velocity_check(u0, du0, refine=settings["refine"], **_dual_kw(settings, u0.dim))
    try:
        path, data = solve_ma_cauchy(u0, du0, times, policy=settings["policy"], refine=settings["refine"],
                                     **_dual_kw(settings, u0.dim))
    except BeyondMaximalTime as exc:
        extra["T_est"] = exc.t_max
        extra["refused"] = {"message": str(exc), "requested_t_end": settings["t_end"]}
        if exc.path is not None and len(exc.path.frames):
            write_time_path(exc.path, args.out, "cauchy", settings, extra=extra)
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    extra["T_est"] = data.T_est
    write_time_path(path, args.out, "cauchy", settings, extra=extra)
    return EXIT_OK


def _report_text(rows, fmt: str) -> str:
    dicts = [r.row() for r in rows]
    if fmt == "json":
        return _json_text(dicts)
    buf = io.StringIO()
    fields = ["suite", "name", "measured", "bound", "relation", "passed", "detail"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for d in dicts:
        w.writerow({k: (_fmt(d[k]) if isinstance(d[k], float) else d[k]) for k in fields})
    return buf.getvalue()


def cmd_verify(args, settings) -> int:
    from .verify import run_suite

    inputs = None
    if args.input:
        inputs = []
        for p in args.input:
            f, d = _load(p)
            analytic_ok = args.suite == "hessian" and settings["box"] is None and descriptor_lattice(d) is None
            inputs.append(f if isinstance(f, GridFunction) or analytic_ok else _load_grid(p, settings))
    try:
        rows = run_suite(args.suite, inputs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(_report_text(rows, settings["format"]), args.out)
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"FAIL [{r.suite}] {r.name}: measured {r.measured:.3e} {r.relation} {r.bound:.3e} {r.detail}".rstrip(),
              file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_info(args, settings) -> int:
    f, d = _load(args.input)
    info = {"version": __version__, "kind": d["kind"]}
    if isinstance(f, GridFunction):
        finite = f.values[np.isfinite(f.values)]
        info.update(dim=f.dim, box=[list(b) for b in f.box], shape=list(f.shape),
                    finite_nodes=int(finite.size), min=float(finite.min()) if finite.size else None,
                    max=float(finite.max()) if finite.size else None)
        rep = classify(f)
    else:
        dim = natural_dim(f) or 1
        info.update(dim=dim, lattice=descriptor_lattice(d))
        rep = classify(f, SampleSpec(dim=dim))
    info["classification"] = {
        "in_cvx0": rep.in_cvx0, "in_S1": rep.in_S1, "in_S2": rep.in_S2,
        "nonlinear_at_infinity": rep.nonlinear_at_infinity, "diagnostics": rep.diagnostics,
    }
    _emit(_json_text(info), args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _common(p, *, lattice=True, dual=True, solver=False):
    p.add_argument("--config", help="JSON config file (lowest precedence above defaults)")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--no-timestamp", action="store_true", default=None,
                   help="leave wall-clock data out of every output")
    p.add_argument("--no-refine", dest="refine", action="store_false", default=None,
                   help="plain lattice sups instead of the local quadratic refinement")
    if lattice:
        p.add_argument("--box", help="sampling box for analytic inputs, e.g. -3,3 or '-3,3;-3,3' (use --box=...)")
        p.add_argument("--shape", help="nodes per axis for analytic inputs, e.g. 257 or 129,129")
    if dual:
        p.add_argument("--dual-box", help="dual lattice box, same syntax as --box")
        p.add_argument("--dual-shape", help="dual lattice nodes per axis")
    if solver:
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--steps", type=int, default=None, help="number of frames, endpoints included")
        p.add_argument("--t-end", type=float, default=None)
        p.add_argument("--check", action="store_true", help="also write residuals")
        p.add_argument("--policy", choices=("warn", "abort", "waive"), default=None,
                       help="what a failed sampled hypothesis check does")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polarity", description="Polarity transform toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    p = sub.add_parser("transform", help="legendre, polar, j or envelope of a descriptor")
    p.add_argument("--op", required=True, choices=("legendre", "polar", "j", "envelope"))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="output file (stdout if omitted)")
    p.add_argument("--strict", action="store_true", default=None,
                   help="refuse (exit 2) when a sup lands on the input box boundary")
    _common(p)
    p.set_defaults(run=cmd_transform)

    p = sub.add_parser("ginf", help="geometric inf-convolution of two descriptors")
    p.add_argument("--in", dest="input", action="append", default=[], help="given twice")
    p.add_argument("--out")
    p.add_argument("--route", choices=("dual", "direct"), default="dual")
    p.add_argument("--witness", help="CSV of witness pairs (direct route)")
    _common(p)
    p.set_defaults(run=cmd_ginf)

    p = sub.add_parser("hj", help="polar Hamilton-Jacobi frames")
    p.add_argument("--f", required=True, help="initial datum")
    p.add_argument("--g", required=True, help="Hamiltonian, a function of the dual variable")
    _common(p, solver=True)
    p.set_defaults(run=cmd_hj)

    p = sub.add_parser("interpolate", help="polar Monge-Ampere Dirichlet interpolation u0 -> u1")
    p.add_argument("--u0", required=True)
    p.add_argument("--u1", required=True)
    p.add_argument("--T", type=float, default=None, help="end time (defaults to --t-end)")
    p.add_argument("--route", choices=("dual", "ginf"), default="dual")
    _common(p, solver=True)
    p.set_defaults(run=cmd_interpolate)

    p = sub.add_parser("cauchy", help="polar Monge-Ampere Cauchy problem")
    p.add_argument("--u0", required=True)
    p.add_argument("--du0", required=True, help="initial velocity")
    _common(p, solver=True)
    p.set_defaults(run=cmd_cauchy)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("--suite", required=True, choices=("involution", "jdual", "hessian", "variation", "ginf", "pde", "all"))
    p.add_argument("--catalog", choices=("builtin",), default=None, help="use the built-in inputs (default)")
    p.add_argument("--in", dest="input", action="append", default=[])
    p.add_argument("--out")
    _common(p, dual=False)
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("info", help="describe a descriptor")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    _common(p, lattice=False, dual=False)
    p.set_defaults(run=cmd_info)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "catalog", None) and args.input:
            raise UsageError("--catalog and --in are exclusive")
        settings = resolve_settings(args)
        return args.run(args, settings)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PolarityError as exc:
        print(f"refused: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
