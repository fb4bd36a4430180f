"""``ddident`` command line.

    ddident identify --config noiseless_k4.cfg --out results/ --check
    ddident density  --config density_lattice.cfg
    ddident verify   --seed 3
    ddident sweep    --config noise_sweep.cfg --out sweep/

Exit codes: 0 pass, 1 threshold failure (with ``--check``), 2 validation
error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ExperimentConfig, fixture_path, load_config
from .errors import ConfigError, DDIdentError, InvalidParameterError, NumericalError
from .harness import RUNNERS, write_outputs

EXIT_OK, EXIT_THRESHOLD, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULT_FIXTURES = {
    "identify": "noiseless_k4.cfg",
    "sweep": "noise_sweep.cfg",
    "density": "density_lattice.cfg",
    "verify": "verify_default.cfg",
}


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they do not reset flags given earlier
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None),
                        help="JSON experiment configuration (default: bundled fixture)")
    common.add_argument("--seed", type=int, default=d(None), help="override scenario.seed")
    common.add_argument("--out", default=d(None),
                        help="output directory (default: outputs.dir from the config)")
    common.add_argument("--check", action="store_true", default=d(False),
                        help="exit 1 when the run misses its acceptance thresholds")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddident", parents=[_common(False)],
                                     description="Delay-Doppler channel identification harness")
    sub = parser.add_subparsers(dest="command", required=True)
    sub_common = _common(True)
    sub.add_parser("identify", parents=[sub_common], help="simulate and recover channel taps")
    sub.add_parser("density", parents=[sub_common], help="Beurling density estimates and verdict")
    sub.add_parser("verify", parents=[sub_common], help="upper-bound ratio and STFT/Bargmann checks")
    sub.add_parser("sweep", parents=[sub_common], help="noise sweep over SNR values")
    return parser


def _load(args) -> ExperimentConfig:
    path = args.config or fixture_path(DEFAULT_FIXTURES[args.command])
    return load_config(path).with_seed(args.seed)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        outcome = RUNNERS[args.command](cfg)
        out_dir = args.out or cfg.outputs.dir
        write_outputs(outcome, cfg, out_dir)
    except (ConfigError, InvalidParameterError, FileNotFoundError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, DDIdentError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    status = "PASS" if outcome.passed else "FAIL"
    print(json.dumps({"command": outcome.command, "status": status, "out": str(out_dir)}))
    if args.check and not outcome.passed:
        return EXIT_THRESHOLD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
