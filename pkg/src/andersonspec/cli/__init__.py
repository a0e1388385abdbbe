"""Command-line entry point: ``andersonspec <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.  Errors are also reported as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError, InvalidModel, NumericalError, VerificationFailure
from .commands import COMMAND_TABLE, verification_failure
from .config import COMMANDS, default_workers, load_config
from .output import write_outputs

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="andersonspec",
        description="Exponent spectra of block tridiagonal Hamiltonians via spectral duality",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="single disorder seed (replaces model.seeds)")
    common.add_argument("--workers", type=int, help="worker processes (default: $ANDERSONSPEC_WORKERS or 1)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=["csv", "json"], help="payload format")
    common.add_argument("--angles", type=int, help="initial quadrature angle count")
    common.add_argument("--tol", type=float, help="quadrature convergence tolerance")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "eigenvalue point clouds of H(s)",
        "exponents": "counting curve and exponent breakpoints",
        "lyapunov": "Lyapunov counting curve via the doubled matrix",
        "hatano": "one-dimensional Hatano-Nelson suite",
        "verify": "randomized residual checks of the exact identities",
        "dos": "level density histogram",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {"numerics": {}, "output": {}}
    if args.seed is not None:
        out["model"] = {"seeds": [args.seed]}
    out["numerics"]["workers"] = args.workers if args.workers is not None else default_workers()
    if args.angles is not None:
        out["numerics"]["n_angles"] = args.angles
    if args.tol is not None:
        out["numerics"]["tol"] = args.tol
    if args.out is not None:
        out["output"]["dir"] = args.out
    if args.format is not None:
        out["output"]["format"] = args.format
    return out


def _fail(kind: str, exc: Exception, code: int) -> int:
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, VerificationFailure):
        payload.update(check=exc.check, value=exc.value, threshold=exc.threshold)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.command, _overrides(args))
    except (ConfigError, InvalidModel) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    try:
        env = COMMAND_TABLE[args.command](config)
    except (ConfigError, InvalidModel) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (NumericalError, ArithmeticError, ValueError) as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    paths = write_outputs(env, config)
    for path in paths:
        print(path)
    if args.command == "verify":
        failure = verification_failure(env)
        if failure is not None:
            return _fail("verification", failure, EXIT_VERIFY)
    return EXIT_OK
