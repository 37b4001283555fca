"""
Command-line front end for the NRC source-free adaptation toolkit.

Subcommands:
    gen-data   write the synthetic covariate-shift benchmark as a dataset folder
    pretrain   train the source model on labeled source features
    adapt      adapt a source checkpoint to unlabeled target features
    eval       score a checkpoint on a feature file
    diagnose   adapt with curve tracking and pre/post neighbor purity
    ablate     run the ablation grid over seeds

Exit codes:
    0 success, 1 usage or configuration error, 2 data/format error, 3 numeric failure.
Every failure writes one line ``error_code=<CODE> <message>`` to standard error.

Example:
    python scripts/nrc_cli.py adapt --config configs/config.sample.yaml \\
        --model runs/src.nrcm --target runs/data/target.nrcf --out runs/adapted.nrcm
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

# Ensure repo root is on sys.path
REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    """Raised by the parser instead of exiting."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _tools() -> list:
    from tools.ablation_tool import AblationTool
    from tools.adapt_tool import AdaptTool
    from tools.diagnose_tool import DiagnoseTool
    from tools.evaluate_tool import EvaluateTool
    from tools.generate_data_tool import GenerateDataTool
    from tools.pretrain_tool import PretrainTool
    return [GenerateDataTool(), PretrainTool(), AdaptTool(), EvaluateTool(), DiagnoseTool(), AblationTool()]


def build_parser(tools: list) -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="YAML or JSON config file")
    common.add_argument("--seed", type=int, default=None, help="Seed override")
    common.add_argument("--mode", choices=["nrc", "nrc++"], default=None, help="Adaptation mode override")
    common.add_argument("--threads", type=int, default=None,
                        help="Numeric library thread count (default: available parallelism)")

    parser = _Parser(prog="nrc_cli", description="Neighborhood reciprocity clustering for source-free adaptation.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for tool in tools:
        tool_parser = sub.add_parser(tool.name, parents=[common], help=tool.description,
                                     description=tool.description)
        tool.add_arguments(tool_parser)
        tool_parser.set_defaults(tool=tool)
    return parser


def _set_threads(threads: Optional[int]) -> None:
    """Only effective before numpy loads its BLAS backend."""
    if threads is not None and threads > 0:
        for name in THREAD_VARIABLES:
            os.environ[name] = str(threads)
    else:
        for name in THREAD_VARIABLES:
            os.environ.setdefault(name, str(os.cpu_count() or 1))


def _fail(code: int, tag: str, message: object) -> int:
    text = " ".join(str(message).split())
    print(f"error_code={tag} {text}", file=sys.stderr)
    return code


def _peek_threads(argv: Sequence[str]) -> Optional[int]:
    for i, arg in enumerate(argv):
        value = None
        if arg == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
        if value is not None:
            try:
                return int(value)
            except ValueError:
                return None
    return None


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and execute one subcommand.

    Returns:
        int: Exit code (0 success, 1 usage/config, 2 data/format, 3 numeric).
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    _set_threads(_peek_threads(argv))

    from utils.shared.nrc_exceptions import (
        CheckpointFormatError,
        ConfigValidationError,
        FeatureFormatError,
        InvalidInputError,
        NumericFailureError,
    )

    try:
        parser = build_parser(_tools())
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(EXIT_USAGE, "USAGE", e)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        args.tool.execute(args)
    except ConfigValidationError as e:
        return _fail(EXIT_USAGE, "CONFIG", e)
    except CheckpointFormatError as e:
        return _fail(EXIT_DATA, "CHECKPOINT_FORMAT", e)
    except FeatureFormatError as e:
        return _fail(EXIT_DATA, "FORMAT", e)
    except FileNotFoundError as e:
        return _fail(EXIT_DATA, "MISSING_INPUT", e)
    except InvalidInputError as e:
        return _fail(EXIT_DATA, "INVALID_INPUT", e)
    except NumericFailureError as e:
        return _fail(EXIT_NUMERIC, "NUMERIC", e)
    except OSError as e:
        return _fail(EXIT_DATA, "IO", e)
    return EXIT_OK


def main() -> int:
    return run()


if __name__ == "__main__":
    sys.exit(main())
