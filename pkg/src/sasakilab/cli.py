"""Command-line driver.

Subcommands::

    sasakilab verify   --manifest run.json [--report out.json] [--format json|text]
                       [--seed N] [--tol name=value ...] [--suite name ...]
    sasakilab ambient  --model sasakian_r3 [--points 200] [--seed N] [--format json|text]
    sasakilab classify --manifest run.json [--format json|text]
    sasakilab explain  [--suite name ...]

Exit codes: 0 when no check fails, 1 when any check fails, 2 on a
configuration or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .errors import ConfigError, SasakiLabError
from .manifest import AMBIENT_POINTS, DEFAULT_SEED, DEFAULT_TOLERANCES, SUITES, parse_manifest
from .models import MODELS
from .runner import classify_samples, run_ambient, run_verification

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _tol_pair(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    if name not in DEFAULT_TOLERANCES:
        raise argparse.ArgumentTypeError(f"unknown tolerance {name!r}; known: {', '.join(DEFAULT_TOLERANCES)}")
    try:
        val = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {name!r} needs a number, got {value!r}") from None
    if not val > 0:
        raise argparse.ArgumentTypeError(f"tolerance {name!r} must be positive")
    return name, val


def _seed(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sasakilab", description="Numerical checks for hypersurfaces of Sasakian manifolds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", help="run a manifest")
    v.add_argument("--manifest", required=True, help="path to the JSON manifest")
    v.add_argument("--report", help="write the report here (default: manifest report_path, else stdout)")
    v.add_argument("--format", choices=("json", "text"), default="json")
    v.add_argument("--seed", type=_seed, help="override the random-sampling seed")
    v.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="NAME=VALUE",
                   help="override a tolerance (repeatable)")
    v.add_argument("--suite", choices=SUITES, action="append", default=[],
                   help="restrict to a suite (repeatable)")

    a = sub.add_parser("ambient", help="check the ambient model axioms only")
    a.add_argument("--model", choices=sorted(MODELS), default="sasakian_r3")
    a.add_argument("--points", type=int, default=AMBIENT_POINTS)
    a.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    a.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="ambient=VALUE")
    a.add_argument("--report")
    a.add_argument("--format", choices=("json", "text"), default="text")

    c = sub.add_parser("classify", help="print the quasi-umbilical fit at each sample point")
    c.add_argument("--manifest", required=True)
    c.add_argument("--seed", type=_seed)
    c.add_argument("--format", choices=("json", "text"), default="text")

    e = sub.add_parser("explain", help="print the identity catalog")
    e.add_argument("--suite", choices=SUITES, action="append", default=[])
    e.add_argument("--format", choices=("json", "text"), default="text")
    return p


def load_catalog() -> list[dict]:
    return json.loads(resources.files("sasakilab").joinpath("catalog.json").read_text())


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write report {path}: {exc.strerror or exc}") from None


def _render(report, fmt: str) -> str:
    return report.to_json() if fmt == "json" else report.to_text()


def cmd_verify(args) -> int:
    m = parse_manifest(args.manifest)
    m = m.with_overrides(seed=args.seed, tolerances=dict(args.tol), suites=args.suite)
    report = run_verification(m)
    path = args.report or m.report_path
    _emit(_render(report, args.format), path)
    if path is not None:
        print(report.summary()["line"])
    return report.exit_code


def cmd_ambient(args) -> int:
    tols = dict(args.tol)
    if set(tols) - {"ambient"}:
        raise ConfigError("the ambient command only takes an 'ambient' tolerance")
    if args.points < 1:
        raise ConfigError("--points must be >= 1")
    report = run_ambient(args.model, args.seed, args.points, tols.get("ambient", DEFAULT_TOLERANCES["ambient"]))
    _emit(_render(report, args.format), args.report)
    if args.report is not None:
        print(report.summary()["line"])
    return report.exit_code


def cmd_classify(args) -> int:
    m = parse_manifest(args.manifest).with_overrides(seed=args.seed)
    rows = classify_samples(m)
    if args.format == "json":
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
        return EXIT_OK
    header = f"{'point':<40} {'class':<17} {'alpha':>12} {'beta':>12} {'lambda':>10} {'fit_res':>9}"
    print(header)
    print("-" * len(header))
    for r in rows:
        pt = "(" + ", ".join(f"{x:g}" for x in r["point"]) + ")"
        print(f"{pt:<40} {r['classification']:<17} {r['alpha']:>12.5g} {r['beta']:>12.5g} "
              f"{r['lambda']:>10.4g} {r['fit_residual']:>9.2e}")
    return EXIT_OK


def cmd_explain(args) -> int:
    entries = [e for e in load_catalog() if not args.suite or e["suite"] in args.suite]
    if args.format == "json":
        sys.stdout.write(json.dumps(entries, indent=2) + "\n")
        return EXIT_OK
    suite = None
    for e in entries:
        if e["suite"] != suite:
            suite = e["suite"]
            print(f"\n[{suite}]")
        print(f"  {e['identity']:<24} {e['reference']:<14} {e['statement']}")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "ambient": cmd_ambient, "classify": cmd_classify, "explain": cmd_explain}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SasakiLabError as exc:
        # errors outside per-point evaluation (e.g. model construction)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BrokenPipeError:
        # output piped into e.g. `head`
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
