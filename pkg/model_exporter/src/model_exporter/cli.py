"""Command line entry point: ilens-export.

Evaluates the referenced model on all masked variants of one sample and
writes the value-table JSON.  Exit codes: 0 success, 1 usage, 2 input or
output data problem, 3 model evaluation failure.
"""

from __future__ import annotations

import argparse
import sys

from .export import (
    ExportSpec,
    ModelEvaluationError,
    OutputValueError,
    SpecError,
    export,
    load_model,
    load_sample,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="ilens-export",
        description=(
            "Evaluate a model on all 2^n masked variants of a sample and "
            "write a value-table JSON file"
        ),
    )
    parser.add_argument(
        "--model",
        required=True,
        help="model reference, package.module:attribute, resolving to a callable",
    )
    parser.add_argument(
        "--sample",
        default=None,
        help="sample vector file (JSON list or comma-delimited text); "
        "overrides the spec's sample path",
    )
    parser.add_argument("--spec", required=True, help="export spec JSON file")
    parser.add_argument("--out", required=True, help="output value-table path")
    parser.add_argument(
        "--batch-size",
        type=int,
        default=None,
        help="masked inputs per model call (overrides the spec)",
    )
    return parser


def _run(argv) -> int:
    args = _build_parser().parse_args(argv)
    spec = ExportSpec.from_json(args.spec)
    if args.batch_size is not None:
        spec = ExportSpec(
            n=spec.n,
            mask_strategy=spec.mask_strategy,
            variable_map=spec.variable_map,
            output_mode=spec.output_mode,
            sample=spec.sample,
            label=spec.label,
            mask_token=spec.mask_token,
            batch_size=args.batch_size,
            sample_id=spec.sample_id,
        )
    model = load_model(args.model)
    sample = load_sample(args.sample) if args.sample is not None else None
    export(model, spec, args.out, sample=sample)
    return 0


def main(argv=None) -> int:
    try:
        return _run(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (SpecError, OutputValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ModelEvaluationError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
