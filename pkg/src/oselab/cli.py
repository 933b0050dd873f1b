"""Command-line entry point: ``oselab {reproduce,spectrum,oseledets,met}``.

Exit codes: 0 when every pinned check passes, 1 when a check fails,
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .cocycle_core import MapCocycle, spectrum
from .interval_maps import NotMarkov, load_map_file, paper_map, pf_matrix
from .met_harness import CheckTolerances, RandomCocycleSpec, generate, verify_splitting
from .oseledets_pushforward import RankCollapse, pushforward_subspaces, rows_to_csv, sweep_rows
from .serialization import dumps_stable, write_atomic
from .reproduction import DEFAULT_TOLERANCES, REPRODUCERS, Report
from .symbolic_drivers import Driver, PeriodicDriver, driver_from_spec, omega_star

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

MAP_FAMILIES = {
    "thm1": ["T1", "T2", "T3"],
    "thm2": [f"S{i}" for i in range(1, 7)],
    "sec7": [f"T{i}" for i in range(1, 7)],
}


class ConfigError(ValueError):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# config parsing


def _load_json(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse_driver(value: str) -> Driver:
    """``"123"`` (periodic word), ``"pi"`` (omega*), inline JSON, or a JSON file path."""
    if value.isdigit():
        return PeriodicDriver(tuple(int(c) for c in value))
    if value in ("pi", "omega_star"):
        return omega_star()
    if value.lstrip().startswith("{"):
        spec = _load_json(value, "--driver")
    else:
        p = Path(value)
        if not p.exists():
            raise ConfigError(f"--driver: no such file {value!r}")
        spec = _load_json(p.read_text(), str(p))
    try:
        return driver_from_spec(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"--driver: field {exc}") from None


def _one_map(token: str):
    try:
        return paper_map(token)
    except ValueError:
        pass
    p = Path(token)
    if not p.exists():
        raise ConfigError(f"--maps: {token!r} is neither a built-in map nor a file")
    try:
        return load_map_file(p)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None


def parse_maps(value: str) -> dict:
    """Family name, or comma-separated map names/files assigned to symbols 1, 2, ..."""
    tokens = MAP_FAMILIES.get(value, value.split(","))
    return {i: _one_map(t.strip()) for i, t in enumerate(tokens, start=1)}


def _tolerance_overrides(pairs: Sequence[str]) -> dict:
    out = {}
    for item in pairs or ():
        name, _, val = item.partition("=")
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"--tol: unknown tolerance {name!r}; known: {', '.join(DEFAULT_TOLERANCES)}")
        try:
            v = float(val)
        except ValueError:
            raise ConfigError(f"--tol {name}: {val!r} is not a number") from None
        if not v > 0:
            raise ConfigError(f"--tol {name}: tolerances must be positive")
        out[name] = v
    return out


# --------------------------------------------------------------------------
# commands


def _report_text(rep: Report) -> str:
    return dumps_stable(rep.to_json_dict()) + "\n"


def cmd_reproduce(args) -> int:
    rep = REPRODUCERS[args.which](_tolerance_overrides(args.tol))
    if args.out:
        out = Path(args.out)
        write_atomic(out / f"{args.which}_report.json", _report_text(rep))
        for name, rows in rep.tables.items():
            write_atomic(out / f"{args.which}_{name}.csv", rows_to_csv(rows))
    elif args.format == "csv":
        sys.stdout.write("".join(f"# {name}\n{rows_to_csv(rows)}" for name, rows in rep.tables.items()))
    else:
        sys.stdout.write(_report_text(rep))
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}", file=sys.stderr)
    bad = rep.first_failure()
    if bad is not None:
        print(f"first failing check: {bad.name}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_spectrum(args) -> int:
    maps = parse_maps(args.maps)
    out = {}
    for s, f in maps.items():
        out[str(s)] = spectrum(pf_matrix(f)).to_json_dict()
    payload = out["1"] if len(out) == 1 else out
    _emit(dumps_stable(payload) + "\n", args.out)
    return EXIT_OK


def _check_depths(args):
    M = args.depth_M if args.depth_M is not None else 2 * args.push_N
    if not (M >= args.push_N >= 0 and M >= 1):
        raise ConfigError(f"need --depth-M >= --push-N >= 0 and --depth-M >= 1 (got M={M}, N={args.push_N})")
    if not args.gap_tol > 0:
        raise ConfigError("--gap-tol must be positive")
    return M


def cmd_oseledets(args) -> int:
    M = _check_depths(args)
    maps = parse_maps(args.maps)
    driver = parse_driver(args.driver)
    coc = MapCocycle(maps, driver).matrix_cocycle()
    if args.format == "csv":
        rows = sweep_rows(coc, [args.push_N], args.base, gap_tol=args.gap_tol, dps=args.dps)
        _emit(rows_to_csv(rows), args.out)
        return EXIT_OK
    approx = pushforward_subspaces(coc, M, args.push_N, args.base, args.gap_tol, dps=args.dps)
    _emit(dumps_stable(approx.to_json_dict()) + "\n", args.out)
    return EXIT_OK


def cmd_met(args) -> int:
    M = _check_depths(args)
    try:
        spec = RandomCocycleSpec(d=args.dim, K=args.generators, singular=args.singular, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(f"met: {exc}") from None
    coc = generate(spec)
    rep = verify_splitting(coc, M, args.push_N, range(args.window), gap_tol=args.gap_tol, dps=args.dps,
                           tolerances=CheckTolerances(), oracle_steps=args.oracle_steps, seed=args.seed)
    _emit(rep.to_jsonl(), args.out)
    n_pass = sum(e["status"] == "PASS" for e in rep.entries)
    print(f"{n_pass} PASS, {len(rep.entries) - n_pass} FAIL", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oselab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reproduce", help="run a worked example and its pinned checks")
    r.add_argument("which", choices=sorted(REPRODUCERS))
    r.add_argument("--out", help="directory for the report and CSV tables (default: stdout)")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a pinned tolerance")
    r.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("spectrum", help="PF-matrix spectrum of one or more maps")
    s.add_argument("--maps", required=True, help="family name, built-in names, or map JSON files")
    s.add_argument("--out")
    s.add_argument("--format", choices=("json",), default="json")
    s.set_defaults(func=cmd_spectrum)

    def depth_flags(q, N, M=None):
        q.add_argument("--depth-M", type=int, default=M, help="Gram depth M (default 2N)")
        q.add_argument("--push-N", type=int, default=N, help="push-forward steps N")
        q.add_argument("--gap-tol", type=float, default=1e-6)
        q.add_argument("--dps", type=int, default=None, help="run in mpmath at this many digits")
        q.add_argument("--out")

    o = sub.add_parser("oseledets", help="Oseledets subspace approximation at one base")
    o.add_argument("--driver", required=True, help='periodic word ("123"), "pi", JSON, or JSON file')
    o.add_argument("--maps", required=True)
    o.add_argument("--base", type=int, default=0)
    o.add_argument("--format", choices=("json", "csv"), default="json")
    depth_flags(o, 20)
    o.set_defaults(func=cmd_oseledets)

    m = sub.add_parser("met", help="splitting checks on a seeded random cocycle (JSON lines)")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--dim", type=int, default=4)
    m.add_argument("--generators", type=int, default=2)
    m.add_argument("--singular", type=int, default=1)
    m.add_argument("--window", type=int, default=2)
    m.add_argument("--oracle-steps", type=int, default=4096)
    m.add_argument("--format", choices=("json",), default="json")
    depth_flags(m, 80, 160)
    m.set_defaults(func=cmd_met, dps=200)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, NotMarkov) as exc:
        print(f"oselab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RankCollapse as exc:
        print(f"oselab: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
