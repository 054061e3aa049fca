"""Command-line interface.

Every command prints one JSON document (``--format json``, the default) to
standard output; progress goes to standard error. Exit codes: 0 success,
2 invalid input, 3 convergence failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .affine import AffineShapeParams, Configuration, affine_shape_logdensity, configuration_from_landmarks, load_landmarks
from .cones import (
    ConeBound,
    prob_beta1_k1,
    prob_beta2_cone,
    prob_wishart_elliptical_k,
    prob_wishart_elliptical_k1,
    prob_wishart_gaussian,
)
from .densities import (
    GGW_MODES,
    LOGPDFS,
    MatrixBlockSample,
    MultimatrixParams,
    logpdf_gen_wishart,
    logpdf_gengamma_wishart,
)
from .docking import (
    BRACKET_MODES,
    C_MODES,
    FITTED_A,
    FITTED_A0,
    FITTED_K,
    LIGAND_ROOTS,
    PATH_STEPS,
    POCKET_ROOTS,
    PathSpec,
    load_coordinates,
    nearest_atoms,
    path_summary,
    probability_path,
    symmetrize,
    write_path_csv,
)
from .generators import EllipticalGenerator, QuadratureError
from .numeric import Spectrum, sym_eigenvalues
from .selftest import LEVELS, run_selftest
from .zonal import ConvergenceDomainError, SeriesControl, hypergeometric_pFq, partial_sum_rQq, zonal_C

SCHEMA = "conekit/1"
EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_INTERNAL = 0, 2, 3, 4
FORMATS = ("json", "plain", "csv")
DENSITY_LAWS = tuple(LOGPDFS) + ("gengamma-wishart", "gen-wishart")
FORMULAS = ("beta2", "wishart-gauss", "wishart-ell", "beta1")
SERIES_MODES = ("kummer", "direct")

log = logging.getLogger("conekit")


class InputError(ValueError):
    """Invalid command-line or config input."""


# ---------------------------------------------------------------------------
# output


def _encode(obj) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _plain(obj, prefix: str = "") -> list[str]:
    if isinstance(obj, dict):
        lines = []
        for k, v in obj.items():
            lines.extend(_plain(v, f"{prefix}{k}."))
        return lines
    return [f"{prefix.rstrip('.')}: {_encode(obj)}"]


def emit(doc: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "plain":
        out.write("\n".join(_plain(doc)) + "\n")
    elif fmt == "csv":
        flat = {k: v for k, v in doc.items() if not isinstance(v, (dict, list, tuple))}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(flat.keys())
        writer.writerow(_encode(v).strip('"') for v in flat.values())
        out.write(buf.getvalue())
    else:
        out.write(_encode(doc) + "\n")


def _doc(command: str, **fields) -> dict:
    return {"schema": SCHEMA, "command": command, **fields}


# ---------------------------------------------------------------------------
# argument types


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _partition(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        text = ",".join(str(x) for x in text)
    parts = str(text).split(",") if str(text).strip() else []
    try:
        vals = [int(x) for x in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"partition must be comma-separated integers, got {text!r}") from None
    if any(v <= 0 for v in vals) or vals != sorted(vals, reverse=True):
        raise argparse.ArgumentTypeError(f"partition must be positive and nonincreasing, got {text!r}")
    return vals


def _positive_int(text) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def read_matrix(path) -> np.ndarray:
    """Square matrix from a row-major CSV file."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        M = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if M.shape[0] != M.shape[1]:
        raise InputError(f"{path}: matrix must be square, got {M.shape[0]} x {M.shape[1]}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{path}: non-finite entries")
    return M


def _read_rect(path) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return M


# ---------------------------------------------------------------------------
# shared builders


def _ctrl(args) -> SeriesControl:
    kw = {}
    if args.max_degree is not None:
        kw["max_degree"] = args.max_degree
    if args.tail_tol is not None:
        kw["tail_tolerance"] = args.tail_tol
    return SeriesControl(**kw)


def _spectrum(args) -> Spectrum:
    if args.matrix is not None:
        return sym_eigenvalues(read_matrix(args.matrix))
    if args.eigs is None:
        raise InputError("give --eigs or --matrix")
    return Spectrum.of(args.eigs)


def _params(args) -> MultimatrixParams:
    if args.params:
        block = json.loads(Path(args.params).read_text())
        for key in ("m", "n0", "n", "a0", "a", "beta"):
            if key in block and getattr(args, key, None) is None:
                setattr(args, key, block[key])
    if args.m is None:
        raise InputError("matrix dimension --m is required")
    beta = args.beta if args.beta is not None else 1
    if args.n0 is not None or args.n is not None:
        if args.n0 is None or args.n is None:
            raise InputError("give both --n0 and --n")
        return MultimatrixParams.from_sizes(int(args.m), float(args.n0), _float_list(args.n), beta)
    if args.a0 is None or args.a is None:
        raise InputError("give --n0/--n or --a0/--a")
    return MultimatrixParams(int(args.m), float(args.a0), tuple(_float_list(args.a)), beta)


def _generator(args, dimension: float) -> EllipticalGenerator:
    kind = args.gen_kind or "gaussian"
    return EllipticalGenerator(kind, dimension, args.gen_shape, args.beta if args.beta is not None else 1)


def _bounds(args) -> ConeBound:
    if args.bound:
        return ConeBound.from_matrices([read_matrix(p) for p in args.bound])
    if args.bound_roots:
        return ConeBound.from_roots(args.bound_roots)
    raise InputError("give --bound FILE (repeatable) or --bound-roots LIST (repeatable)")


def _status(converged: bool) -> int:
    return EXIT_OK if converged else EXIT_CONVERGENCE


# ---------------------------------------------------------------------------
# commands


def cmd_zonal(args) -> int:
    spec = _spectrum(args)
    beta = args.beta if args.beta is not None else 1
    value = zonal_C(args.rho, spec, beta)
    emit(_doc("zonal", partition=args.rho, eigenvalues=list(spec.eigenvalues), beta=beta, value=value), args.format)
    return EXIT_OK


def cmd_series(args) -> int:
    spec = _spectrum(args)
    beta = args.beta if args.beta is not None else 1
    a, b = args.a or [], args.b or []
    if args.partial is not None:
        value = partial_sum_rQq(args.partial, a, b, spec, beta)
        emit(_doc("series", a=a, b=b, r=args.partial, eigenvalues=list(spec.eigenvalues), value=value), args.format)
        return EXIT_OK
    res = hypergeometric_pFq(a, b, spec, beta, _ctrl(args))
    emit(_doc("series", a=a, b=b, eigenvalues=list(spec.eigenvalues), **res.as_dict()), args.format)
    return _status(res.converged)


def cmd_density(args) -> int:
    params = _params(args)
    if not args.input:
        raise InputError("give one --input FILE per block")
    law = args.law
    if law in ("pearson7", "pearson2"):
        blocks = [_read_rect(p) for p in args.input]
    else:
        blocks = [read_matrix(p) for p in args.input]
    if law == "gengamma-wishart":
        if args.v is None:
            raise InputError("gengamma-wishart needs --v")
        gen = _generator(args, 2.0 * params.c)
        value = logpdf_gengamma_wishart(MatrixBlockSample(blocks, law, args.v), params, gen, args.mode)
    elif law == "gen-wishart":
        gen = _generator(args, 2.0 * math.fsum(params.a) * params.m)
        value = logpdf_gen_wishart(MatrixBlockSample(blocks, law), params, gen)
    else:
        value = LOGPDFS[law](MatrixBlockSample(blocks, law), params)
    extra = {"mode": args.mode} if law == "gengamma-wishart" else {}
    emit(_doc("density", law=law, params=params.as_dict(), **extra, logpdf=value), args.format)
    return EXIT_OK


def cmd_coneprob(args) -> int:
    params = _params(args)
    bound = _bounds(args)
    ctrl = _ctrl(args)
    f = args.formula
    if f == "beta2":
        res = prob_beta2_cone(params, bound, ctrl, args.mode)
    elif f == "wishart-gauss":
        res = prob_wishart_gaussian(params, bound, ctrl, args.mode)
    elif f == "wishart-ell":
        gen = _generator(args, 2.0 * math.fsum(params.a) * params.m)
        if params.k == 1:
            res = prob_wishart_elliptical_k1(gen, params, bound.matrices[0], ctrl, args.mode)
        else:
            res = prob_wishart_elliptical_k(gen, params, bound, ctrl, args.mode)
    else:
        if bound.k != 1:
            raise InputError("the beta type I probability is available for one block only")
        res = prob_beta1_k1(params, bound.matrices[0], ctrl)
    emit(_doc("coneprob", formula=f, params=params.as_dict(), **res.as_dict()), args.format)
    return _status(res.converged)


def cmd_affine(args) -> int:
    if args.landmarks:
        U = configuration_from_landmarks(load_landmarks(args.landmarks))
    elif args.free is not None:
        if args.K is None:
            raise InputError("--free needs --K")
        free = np.asarray(args.free, dtype=float)
        if free.size % args.K:
            raise InputError(f"--free has {free.size} values, not a multiple of K = {args.K}")
        U = Configuration.from_free(free.reshape(-1, args.K))
    else:
        raise InputError("give --landmarks FILE or --free LIST with --K")
    K, N = U.K, U.N
    n = N - 1
    beta = args.beta if args.beta is not None else 1
    Sigma = read_matrix(args.sigma) if args.sigma else np.eye(n)
    Omega = read_matrix(args.omega) if args.omega else np.zeros((n, n))
    gen = _generator(args, beta * K * n)
    params = AffineShapeParams(K, N, Sigma, Omega, gen, beta)
    res = affine_shape_logdensity(U, params, _ctrl(args), args.max_r)
    body = res.as_dict()
    body["logdensity"] = body.pop("value")
    emit(_doc("affine", K=K, N=N, beta=beta, generator=gen.to_config(), **body), args.format)
    return _status(res.converged)


def cmd_docking(args) -> int:
    start, end = args.start_roots, args.end_roots
    source = "roots"
    if args.ligand or args.protein:
        if not (args.ligand and args.protein):
            raise InputError("give both --ligand and --protein")
        ligand = load_coordinates(args.ligand, args.coord_format)
        protein = load_coordinates(args.protein, args.coord_format)
        pocket = nearest_atoms(protein, ligand, args.count)
        center = not args.no_center
        start = tuple(sorted(symmetrize(ligand, center)[1].eigenvalues, reverse=True))
        end = tuple(sorted(symmetrize(pocket, center)[1].eigenvalues, reverse=True))
        source = "coordinates"
    params = MultimatrixParams(3, args.a0, (args.a_block,) * args.k)
    spec = PathSpec(
        start_roots=tuple(start) if start is not None else LIGAND_ROOTS,
        end_roots=tuple(end) if end is not None else POCKET_ROOTS,
        steps=args.steps,
        params=params,
        bracket_mode=args.bracket_mode,
        c_mode=args.c_mode,
        c_override=args.c,
        series_mode=args.mode,
    )

    def progress(done, total):
        print(f"docking: {done}/{total} steps", file=sys.stderr)

    steps = probability_path(spec, _ctrl(args), args.threads, progress if args.verbose else None)
    summary = path_summary(spec, steps)
    if args.out:
        write_path_csv(args.out, steps)
        summary["path_csv"] = str(args.out)
    summary["root_source"] = source
    if args.format == "csv" and not args.out:
        write_path_csv(sys.stdout, steps)
    else:
        emit(_doc("docking", **summary), args.format)
    return _status(summary["all_converged"])


def cmd_selftest(args) -> int:
    def progress(name):
        print(f"selftest: {name}", file=sys.stderr)

    report = run_selftest(args.level, progress)
    emit(_doc("selftest", **report), args.format)
    return EXIT_OK if report["passed"] else EXIT_INTERNAL


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="JSON file with option values; flags override it")
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--threads", type=_positive_int, default=1, help="worker cap (results do not depend on it)")
    p.add_argument("--max-degree", type=int, default=None, help="series truncation degree")
    p.add_argument("--tail-tol", type=float, default=None, help="relative tail tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true", help="progress on standard error")
    return p


def _spectrum_opts(p) -> None:
    p.add_argument("--eigs", type=_float_list, help="comma-separated eigenvalues")
    p.add_argument("--matrix", metavar="FILE", help="symmetric matrix CSV")
    p.add_argument("--beta", type=int, default=None, choices=(1, 2, 4, 8))


def _param_opts(p) -> None:
    p.add_argument("--params", metavar="FILE", help="JSON with m and n0/n or a0/a")
    p.add_argument("--m", type=int)
    p.add_argument("--n0", type=float)
    p.add_argument("--n", type=_float_list, help="block sizes n_1,...,n_k")
    p.add_argument("--a0", type=float)
    p.add_argument("--a", type=_float_list, help="block parameters a_1,...,a_k")
    p.add_argument("--beta", type=int, default=None, choices=(1, 2, 4, 8))


def _gen_opts(p) -> None:
    p.add_argument("--gen-kind", default=None, help="gaussian, pearson7 or pearson2")
    p.add_argument("--gen-shape", type=float, default=None, help="nu (Pearson VII) or q (Pearson II)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = _common()
    parser = argparse.ArgumentParser(prog="conekit", description="Multimatrix variate distributions and cone probabilities.")
    parser.add_argument("--version", action="version", version=f"conekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subs = {}

    p = subs["zonal"] = sub.add_parser("zonal", parents=[common], help="zonal polynomial C_rho")
    p.add_argument("--rho", type=_partition, required=True, help="partition, e.g. 2,1")
    _spectrum_opts(p)
    p.set_defaults(func=cmd_zonal)

    p = subs["series"] = sub.add_parser("series", parents=[common], help="hypergeometric series of one matrix argument")
    p.add_argument("--a", type=_float_list, default=None, help="numerator parameters")
    p.add_argument("--b", type=_float_list, default=None, help="denominator parameters")
    p.add_argument("--partial", type=int, default=None, metavar="R", help="only the degree-R block")
    _spectrum_opts(p)
    p.set_defaults(func=cmd_series)

    p = subs["density"] = sub.add_parser("density", parents=[common], help="multimatrix log density")
    p.add_argument("--law", choices=DENSITY_LAWS, required=True)
    _param_opts(p)
    _gen_opts(p)
    p.add_argument("--input", action="append", metavar="FILE", help="block CSV (repeat per block)")
    p.add_argument("--v", type=float, default=None, help="scalar V for gengamma-wishart")
    p.add_argument("--mode", choices=GGW_MODES, default="consistent")
    p.set_defaults(func=cmd_density)

    p = subs["coneprob"] = sub.add_parser("coneprob", parents=[common], help="cone probability P(0 < F_i < A_i)")
    p.add_argument("--formula", choices=FORMULAS, required=True)
    _param_opts(p)
    _gen_opts(p)
    p.add_argument("--bound", action="append", metavar="FILE", help="bound matrix CSV (repeat per block)")
    p.add_argument("--bound-roots", action="append", type=_float_list, metavar="LIST", help="diagonal bound (repeat per block)")
    p.add_argument("--mode", choices=SERIES_MODES, default="kummer")
    p.set_defaults(func=cmd_coneprob)

    p = subs["affine"] = sub.add_parser("affine", parents=[common], help="affine shape log density")
    p.add_argument("--landmarks", metavar="FILE", help="N x K landmark CSV")
    p.add_argument("--free", type=_float_list, help="free block of U, row-major")
    p.add_argument("--K", type=int)
    p.add_argument("--sigma", metavar="FILE")
    p.add_argument("--omega", metavar="FILE")
    p.add_argument("--beta", type=int, default=None, choices=(1, 2, 4, 8))
    p.add_argument("--max-r", type=int, default=None)
    _gen_opts(p)
    p.set_defaults(func=cmd_affine)

    p = subs["docking"] = sub.add_parser("docking", parents=[common], help="docking probability path")
    p.add_argument("--ligand", metavar="FILE")
    p.add_argument("--protein", metavar="FILE")
    p.add_argument("--coord-format", choices=("csv", "xyz"), default=None)
    p.add_argument("--count", type=_positive_int, default=21, help="pocket atoms nearest the ligand")
    p.add_argument("--no-center", action="store_true", help="skip column centring before symmetrization")
    p.add_argument("--start-roots", type=_float_list, default=None)
    p.add_argument("--end-roots", type=_float_list, default=None)
    p.add_argument("--steps", type=_positive_int, default=PATH_STEPS)
    p.add_argument("--a0", type=float, default=FITTED_A0)
    p.add_argument("--a", dest="a_block", type=float, default=FITTED_A)
    p.add_argument("--k", type=_positive_int, default=FITTED_K)
    p.add_argument("--bracket-mode", choices=BRACKET_MODES, default="half")
    p.add_argument("--c-mode", choices=C_MODES, default="marginal")
    p.add_argument("--c", type=float, default=None, help="override the exponent c")
    p.add_argument("--mode", choices=SERIES_MODES, default="kummer")
    p.add_argument("--out", metavar="FILE", help="path CSV")
    p.set_defaults(func=cmd_docking)

    p = subs["selftest"] = sub.add_parser("selftest", parents=[common], help="run oracle suites")
    p.add_argument("--level", choices=LEVELS, default="quick")
    p.set_defaults(func=cmd_selftest)
    return parser, subs


def _config_defaults(path, subparser: argparse.ArgumentParser) -> dict:
    """Map a JSON config onto parser destinations; list values become CSV strings."""
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    for nested in ("params", "generator"):
        block = cfg.pop(nested, None) if isinstance(cfg.get(nested), dict) else None
        if block:
            prefix = "gen_" if nested == "generator" else ""
            for k, v in block.items():
                cfg.setdefault(prefix + k, v)
    dests = {a.dest: a for a in subparser._actions}
    out = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest == "a" and "a_block" in dests:
            dest = "a_block"
        if dest not in dests or dest in ("help", "config"):
            raise InputError(f"{path}: unknown option {key!r}")
        action = dests[dest]
        try:
            if isinstance(action, argparse._AppendAction):
                items = value if isinstance(value, list) else [value]
                value = [action.type(v) if action.type is not None else v for v in items]
            elif action.type is not None and isinstance(value, (str, list)):
                value = action.type(value)
        except argparse.ArgumentTypeError as exc:
            raise InputError(f"{path}: {key}: {exc}") from None
        if action.choices is not None and not isinstance(value, list) and value not in action.choices:
            raise InputError(f"{path}: {key} must be one of {list(action.choices)}")
        out[dest] = value
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    tokens = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(tokens)
    command = next((t for t in tokens if t in subs), None)
    appended = {}
    if known.config and command:
        sp = subs[command]
        defaults = _config_defaults(known.config, sp)
        for action in sp._actions:
            if action.dest in defaults:
                action.required = False
                # append actions would extend a default; fill them after parsing
                if isinstance(action, argparse._AppendAction):
                    appended[action.dest] = defaults.pop(action.dest)
        sp.set_defaults(**defaults)
    args = parser.parse_args(tokens)
    for dest, value in appended.items():
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _error(command: str, code: int, exc: BaseException, fmt: str) -> int:
    msg = str(exc) or type(exc).__name__
    print(f"conekit {command}: error: {msg}", file=sys.stderr)
    emit(_doc(command, error={"type": type(exc).__name__, "message": msg}, exit_code=code), fmt if fmt != "csv" else "json")
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        args = parse_args(argv)
    except InputError as exc:
        print(f"conekit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except argparse.ArgumentTypeError as exc:
        print(f"conekit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    command, fmt = args.command, args.format
    try:
        return args.func(args)
    except (ConvergenceDomainError, QuadratureError) as exc:
        return _error(command, EXIT_CONVERGENCE, exc, fmt)
    except (ValueError, ArithmeticError, OSError, KeyError, argparse.ArgumentTypeError) as exc:
        return _error(command, EXIT_INPUT, exc, fmt)
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        return _error(command, EXIT_INTERNAL, exc, fmt)


if __name__ == "__main__":
    sys.exit(main())
