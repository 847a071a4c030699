"""Masked-evaluation exporter for external models.

Evaluates a user-supplied model on all 2^n masked variants of one sample
and writes the value-table JSON file that the ilens package reads.  The
boundary between the two packages is that one file format; this package
never computes interactions and never imports ilens.
"""

from .export import (
    ExportError,
    ExportSpec,
    ModelEvaluationError,
    OutputValueError,
    SpecError,
    export,
    load_model,
    load_sample,
)

__all__ = [
    "ExportError",
    "ExportSpec",
    "ModelEvaluationError",
    "OutputValueError",
    "SpecError",
    "export",
    "load_model",
    "load_sample",
]
