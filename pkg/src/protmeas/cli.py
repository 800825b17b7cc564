"""Command-line interface: ``protmeas <command> [options]``.

Every command writes a data section plus a run manifest. JSON output is
``{"manifest": ..., "data": ...}``; CSV output starts with a single
``# manifest: {...}`` comment line followed by the table. Floats are written
with full round-trip precision.

Exit codes: 0 success, 1 output contains flagged error rows, 2 usage error,
3 computation failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from .coupling import Bump, CouplingSpec, coupling_samples, solve_series_coefficients
from .dynamics import IntegratorConfig, compare_perturbative, convergence_study
from .exceptions import ProtmeasError
from .fitting import fit_power_law, fit_subexponential
from .perturbation import SystemModel, disturbance_probability
from .spectral import (Envelope, SpectralCurve, analytic_spectrum, bump_certified_limit,
                       calibrate_bump, envelope_extract, find_crossover,
                       oscillation_grid, quadrature_spectrum, window_envelope)

MAX_COEFF_ORDER = 12
EXIT_OK, EXIT_FLAGGED, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


@dataclass
class RunManifest:
    command: str
    parameters: dict
    tool_version: str = field(default_factory=tool_version)
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Output:
    """Result of one command: a table and/or a JSON payload."""

    header: list[str] | None = None
    rows: list[list] = field(default_factory=list)
    payload: object = None
    flagged: bool = False


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, str)):
        return str(v).lower() if isinstance(v, bool) else v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v).__name__}")


def render(out: Output, manifest: RunManifest, fmt: str) -> str:
    if fmt == "json":
        data = out.payload
        if data is None:
            data = [dict(zip(out.header, row)) for row in out.rows]
        return json.dumps({"manifest": manifest.to_dict(), "data": data},
                          indent=2, default=_json_default) + "\n"
    if out.header is None:
        raise ProtmeasError(f"command {manifest.command!r} has no CSV form; use --format json")
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest.to_dict(), default=_json_default) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(out.header)
    for row in out.rows:
        writer.writerow([_num(v) for v in row])
    return buf.getvalue()


def strip_comments(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


# ---------------------------------------------------------------- spec flags

def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("coupling")
    g.add_argument("--shape", choices=("constant", "series", "bump"), default="constant")
    g.add_argument("--N", type=int, default=1, help="series order")
    g.add_argument("--alpha", type=int, default=2)
    g.add_argument("--beta", type=int, default=1)
    g.add_argument("-T", "--duration", type=float, default=1.0, help="measurement time T")


def _spec_from(args, duration: float | None = None) -> CouplingSpec:
    T = args.duration if duration is None else duration
    data = {"shape": args.shape, "T": T, "N": args.N, "alpha": args.alpha, "beta": args.beta}
    return CouplingSpec.from_dict(data)


def _load_model(path: str) -> SystemModel:
    with open(path) as fh:
        return SystemModel.from_dict(json.load(fh))


# ---------------------------------------------------------------- commands

def cmd_coeffs(args) -> Output:
    N = args.N
    if not 1 <= N <= MAX_COEFF_ORDER:
        raise UsageError(f"N must lie in [1, {MAX_COEFF_ORDER}], got {N}")
    coeffs = solve_series_coefficients(N)
    rationals = coeffs.as_strings()
    floats = [float(a) for a in coeffs.values]
    payload = {"N": N, "rationals": rationals, "floats": floats,
               "sum": str(coeffs.moment(0)),
               "vanishing_moments": [str(coeffs.moment(k)) for k in range(1, N)],
               "leading_moment": str(coeffs.leading_moment)}
    rows = [[n, r, f] for n, (r, f) in enumerate(zip(rationals, floats), start=1)]
    return Output(["n", "rational", "float"], rows, payload)


def cmd_coupling(args) -> Output:
    if args.samples < 2:
        raise UsageError("--samples must be >= 2")
    table = coupling_samples(_spec_from(args), args.samples)
    return Output(["t", "g"], [[t, g] for t, g in table])


def _log_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if not 0 < lo < hi:
        raise UsageError("--range needs 0 < lo < hi")
    if points < 2:
        raise UsageError("--points must be >= 2")
    return np.geomspace(lo, hi, points)


def _spectrum_bump(spec: CouplingSpec, grid, want_envelope: bool) -> Output:
    shape = spec.shape
    limit = bump_certified_limit(shape.alpha, shape.beta)
    calibration = None
    header = ["omega_t", "re", "im", "abs"]
    if want_envelope:
        header.append("envelope")
    header += ["extrapolated_envelope", "flag"]
    rows, flagged = [], False
    for x in grid:
        if x <= limit:
            G = quadrature_spectrum(spec, x)
            row = [x, G.real, G.imag, abs(G)]
            if want_envelope:
                row.append(window_envelope(spec, x) if x + math.pi <= limit else None)
            rows.append(row + [None, "certified"])
            continue
        try:
            if calibration is None:
                calibration = calibrate_bump(shape.alpha, shape.beta)
            ext = calibration.evaluate(x)
            flag = "extrapolated"
        except ProtmeasError:
            ext, flag, flagged = None, "cancellation_limit", True
        rows.append([x, None, None, None] + ([None] if want_envelope else []) + [ext, flag])
    return Output(header, rows, flagged=flagged)


def cmd_spectrum(args) -> Output:
    spec = _spec_from(args)
    if args.crossover is not None:
        if not isinstance(spec.shape, Bump):
            raise UsageError("--crossover compares a bump against series orders; use --shape bump")
        rows = []
        for N in args.crossover:
            if not 0 <= N <= MAX_COEFF_ORDER:
                raise UsageError(f"crossover orders must lie in [0, {MAX_COEFF_ORDER}]")
            c = find_crossover(N, spec.shape.alpha, spec.shape.beta)
            rows.append([N, c.omega_t_star, c.certified, not c.certified])
        return Output(["N", "omega_t_star", "certified", "extrapolated"], rows)
    # omega T is the dimensionless variable, so T only rescales frequencies
    if args.per_window:
        grid = oscillation_grid(args.range[0], args.range[1], args.per_window)
    else:
        grid = _log_grid(args.range[0], args.range[1], args.points)
    if isinstance(spec.shape, Bump):
        return _spectrum_bump(spec, grid, args.envelope)
    values = analytic_spectrum(spec, grid) if args.method != "quadrature" \
        else np.array([quadrature_spectrum(spec, x) for x in grid])
    header = ["omega_t", "re", "im", "abs"] + (["envelope"] if args.envelope else [])
    rows = []
    for x, G in zip(grid, values):
        row = [x, G.real, G.imag, abs(G)]
        if args.envelope:
            row.append(window_envelope(spec, x))
        rows.append(row)
    return Output(header, rows)


def _read_envelope(path: str) -> tuple[Envelope, bool]:
    with open(path) as fh:
        text = strip_comments(fh.read())
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    rows = list(reader)
    if "omega_t" not in fields:
        raise UsageError("input CSV needs an omega_t column")
    extrapolated = any(r.get("flag") == "extrapolated" for r in rows)
    if "envelope" in fields and "re" not in fields:
        pairs = [(float(r["omega_t"]), float(r["envelope"])) for r in rows if r["envelope"]]
        x, m = map(np.array, zip(*pairs)) if pairs else (np.array([]), np.array([]))
        return Envelope(x, m), False
    if "re" in fields and "im" in fields:
        usable = [r for r in rows if r["re"] and r["im"]]
        curve = SpectralCurve(np.array([float(r["omega_t"]) for r in usable]),
                              np.array([complex(float(r["re"]), float(r["im"])) for r in usable]))
        return envelope_extract(curve), False
    if "extrapolated_envelope" in fields:
        pairs = [(float(r["omega_t"]), float(r["extrapolated_envelope"]))
                 for r in rows if r["extrapolated_envelope"]]
        return Envelope(*map(np.array, zip(*pairs))), extrapolated
    raise UsageError("input CSV needs re/im columns or an envelope column")


def cmd_fit(args) -> Output:
    envelope, extrapolated = _read_envelope(args.input)
    fit_range = tuple(args.range) if args.range else (float(envelope.omega_t.min()),
                                                      float(envelope.omega_t.max()))
    if args.model == "power":
        fit = fit_power_law(envelope, fit_range, min_points=args.min_points)
    else:
        fit = fit_subexponential(envelope, args.alpha, fit_range, min_points=args.min_points)
    fit.extrapolated = extrapolated
    payload = fit.to_dict()
    return Output(["key", "value"], [[k, json.dumps(v) if isinstance(v, list) else v]
                                         for k, v in payload.items()], payload)


def _config_from(args) -> IntegratorConfig:
    return IntegratorConfig(args.rtol, args.atol, args.max_steps, args.p)


def cmd_simulate(args) -> Output:
    model = _load_model(args.model)
    spec = _spec_from(args)
    config = _config_from(args)
    report = compare_perturbative(model, spec, config)
    payload = report.to_dict()
    if args.scales:
        payload["convergence"] = convergence_study(model, spec, config, args.scales).to_dict()
    columns = ["m", "omega_t", "exact", "first_order", "total_leading",
               "dev_exact_first", "dev_exact_total"]
    rows = [[r.get(c) for c in columns] for r in report.rows]
    return Output(columns, rows, payload)


def cmd_disturbance(args) -> Output:
    model = _load_model(args.model)
    if args.sweep_T:
        lo, hi, count = args.sweep_T
        durations = _log_grid(lo, hi, int(count))
    else:
        durations = [args.duration]
    tiers = ["first_order"] if args.shape == "bump" else ["first_order", "total_leading"]
    rows, flagged = [], False
    for T in durations:
        spec = _spec_from(args, duration=float(T))
        row, flag = [float(T)], "ok"
        for tier in tiers:
            try:
                row.append(disturbance_probability(model, spec, tier, envelope=args.envelope))
            except ProtmeasError as exc:
                row.append(None)
                flag, flagged = type(exc).__name__, True
        rows.append(row + [flag])
    header = ["T"] + [f"disturbance_{t}" for t in tiers] + ["flag"]
    return Output(header, rows, flagged=flagged)


# ---------------------------------------------------------------- parser

class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="FILE", default=argparse.SUPPRESS,
                        help="write output to FILE instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="protmeas", parents=[common],
        description="Coupling functions, spectra and state disturbance of protective measurements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("coeffs", parents=[common], help="exact series coefficients")
    p.add_argument("N", type=int)
    p.set_defaults(func=cmd_coeffs, default_format="json")

    p = sub.add_parser("coupling", parents=[common], help="sample g(t) on [0, T]")
    _add_spec_flags(p)
    p.add_argument("--samples", type=int, default=101)
    p.set_defaults(func=cmd_coupling, default_format="csv")

    p = sub.add_parser("spectrum", parents=[common], help="Fourier transform G(omega T)")
    _add_spec_flags(p)
    p.add_argument("--range", nargs=2, type=float, default=(1.0, 1e4), metavar=("LO", "HI"),
                   help="omega T range (log-spaced grid)")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--per-window", type=int, metavar="K",
                   help="log grid with at least K points per 2 pi (overrides --points); "
                        "needed when the output feeds 'fit'")
    p.add_argument("--envelope", action="store_true",
                   help="add the max of |G| over the centered 2 pi window")
    p.add_argument("--method", choices=("auto", "quadrature"), default="auto")
    p.add_argument("--crossover", nargs="+", type=int, metavar="N",
                   help="report omega T* where the bump drops below each series order")
    p.set_defaults(func=cmd_spectrum, default_format="csv")

    p = sub.add_parser("fit", parents=[common], help="fit a decay law to a spectrum CSV")
    p.add_argument("input", help="CSV from 'spectrum' (re/im columns) or an envelope CSV")
    p.add_argument("--model", choices=("power", "subexp"), default="power")
    p.add_argument("--alpha", type=int, default=2)
    p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--min-points", type=int, default=10)
    p.set_defaults(func=cmd_fit, default_format="json")

    for name, func, helptext in (("simulate", cmd_simulate, "exact dynamics vs perturbation theory"),
                                 ("disturbance", cmd_disturbance, "transition probability")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model", required=True, metavar="FILE",
                       help='JSON {"energies": [...], "observable": [[[re, im], ...]], "initial": n}')
        _add_spec_flags(p)
        p.set_defaults(func=func)
    sim = sub.choices["simulate"]
    sim.add_argument("--rtol", type=float, default=1e-10)
    sim.add_argument("--atol", type=float, default=1e-12)
    sim.add_argument("--max-steps", type=int, default=10**7)
    sim.add_argument("--p", type=float, default=1.0, help="pointer momentum eigenvalue")
    sim.add_argument("--scales", nargs="+", type=float,
                     help="also run a convergence study over these coupling scales")
    sim.set_defaults(default_format="json")
    dist = sub.choices["disturbance"]
    dist.add_argument("--sweep-T", nargs=3, type=float, metavar=("LO", "HI", "COUNT"))
    dist.add_argument("--envelope", action="store_true", help="replace sine factors by 1")
    dist.set_defaults(default_format="csv")
    return parser


_MANIFEST_SKIP = {"func", "default_format", "out", "format", "command"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = getattr(args, "format", None) or args.default_format
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _MANIFEST_SKIP}
    manifest = RunManifest(args.command, params)
    try:
        out = args.func(args)
        text = render(out, manifest, fmt)
    except UsageError as exc:
        parser.error(str(exc))
    except (ProtmeasError, ValueError, OSError) as exc:
        print(f"protmeas {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    target = getattr(args, "out", None)
    if target:
        with open(target, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_FLAGGED if out.flagged else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
