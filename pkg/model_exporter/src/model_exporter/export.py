"""Build masked inputs, run the model, and write the value table.

The table enumerates every subset T of the n variables as a bitmask
(bit v set means variable v is present); position 0 is the fully masked
input.  Variables map to disjoint groups of input positions, and masking
a variable overwrites its positions according to the chosen strategy:

- token_mask: write a fixed token value (e.g. a tokenizer's mask id),
- mean_baseline: write the mean of the sample over all mapped positions,
- zero_feature: write 0.0.

The model is any callable taking a (batch, features) float array.  It may
return one scalar per row, or one row of class scores per input, in which
case the spec's label picks the column.  In log_odds mode the outputs are
read as probabilities, clamped into [1e-7, 1 - 1e-7] and mapped through
log(p / (1 - p)); in logit mode they are written as-is.
"""

from __future__ import annotations

import importlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
MAX_VARIABLES = 14
PROB_CLAMP = 1e-7

MASK_STRATEGIES = ("token_mask", "mean_baseline", "zero_feature")
OUTPUT_MODES = ("log_odds", "logit")


class ExportError(Exception):
    """Base class for everything this package raises on purpose."""


class SpecError(ExportError):
    """The export spec, sample, or model reference is unusable."""


class ModelEvaluationError(ExportError):
    """The model raised or violated the batch contract; names the mask."""


class OutputValueError(ExportError):
    """A model output is unusable as table data; names the mask."""


@dataclass(frozen=True)
class ExportSpec:
    """What to mask, how to mask it, and how to read the model's output."""

    n: int
    mask_strategy: str
    variable_map: tuple[tuple[int, ...], ...]
    output_mode: str = "log_odds"
    sample: str | None = None
    label: int | None = None
    mask_token: float | None = None
    batch_size: int = 256
    sample_id: str = "sample"

    def __post_init__(self):
        if not isinstance(self.n, int) or not (1 <= self.n <= MAX_VARIABLES):
            raise SpecError(
                f"n must be an integer in 1..{MAX_VARIABLES}, got {self.n!r}"
            )
        if self.mask_strategy not in MASK_STRATEGIES:
            raise SpecError(
                f"mask_strategy must be one of {MASK_STRATEGIES}, "
                f"got {self.mask_strategy!r}"
            )
        if self.output_mode not in OUTPUT_MODES:
            raise SpecError(
                f"output_mode must be one of {OUTPUT_MODES}, "
                f"got {self.output_mode!r}"
            )
        groups = tuple(tuple(int(p) for p in group) for group in self.variable_map)
        object.__setattr__(self, "variable_map", groups)
        if len(groups) != self.n:
            raise SpecError(
                f"variable_map must list positions for all {self.n} variables, "
                f"got {len(groups)} entries"
            )
        seen: set[int] = set()
        for v, group in enumerate(groups):
            if not group:
                raise SpecError(f"variable {v} maps to no input positions")
            for p in group:
                if p < 0:
                    raise SpecError(f"variable {v} maps to negative position {p}")
                if p in seen:
                    raise SpecError(
                        f"input position {p} is mapped by more than one variable"
                    )
                seen.add(p)
        if self.mask_strategy == "token_mask" and self.mask_token is None:
            raise SpecError("token_mask requires a mask_token value")
        if self.label is not None and (not isinstance(self.label, int) or self.label < 0):
            raise SpecError(f"label must be a nonnegative integer, got {self.label!r}")
        if self.batch_size < 1:
            raise SpecError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def positions(self) -> tuple[int, ...]:
        """Union of all mapped input positions, sorted."""
        return tuple(sorted(p for group in self.variable_map for p in group))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExportSpec":
        if not isinstance(doc, dict):
            raise SpecError("export spec must be a JSON object")
        known = {
            "n",
            "mask_strategy",
            "variable_map",
            "output_mode",
            "sample",
            "label",
            "mask_token",
            "batch_size",
            "sample_id",
        }
        unknown = sorted(set(doc) - known)
        if unknown:
            raise SpecError(f"unknown spec keys: {', '.join(unknown)}")
        for key in ("n", "mask_strategy", "variable_map"):
            if key not in doc:
                raise SpecError(f"export spec is missing required key {key!r}")
        raw_map = doc["variable_map"]
        if isinstance(raw_map, dict):
            try:
                keys = sorted(raw_map, key=int)
            except (TypeError, ValueError) as exc:
                raise SpecError(
                    f"variable_map keys must be integer variable indices: {exc}"
                ) from exc
            if [int(k) for k in keys] != list(range(len(keys))):
                raise SpecError(
                    "variable_map keys must be exactly 0..n-1, got "
                    + ", ".join(map(repr, keys))
                )
            groups = [raw_map[k] for k in keys]
        elif isinstance(raw_map, list):
            groups = raw_map
        else:
            raise SpecError("variable_map must be a list or an object")
        kwargs = {k: doc[k] for k in known & set(doc) if k != "variable_map"}
        mask_token = kwargs.get("mask_token")
        if mask_token is not None:
            kwargs["mask_token"] = float(mask_token)
        return cls(variable_map=tuple(tuple(g) for g in groups), **kwargs)

    @classmethod
    def from_json(cls, path) -> "ExportSpec":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise SpecError(f"cannot read export spec: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SpecError(f"malformed export spec JSON in {path}: {exc}") from exc
        return cls.from_dict(doc)


def load_model(ref: str):
    """Resolve 'package.module:attribute' to the model callable."""
    if ":" not in ref:
        raise SpecError(
            f"model reference must look like package.module:attribute, got {ref!r}"
        )
    module_name, _, attr_path = ref.partition(":")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise SpecError(f"cannot import model module {module_name!r}: {exc}") from exc
    target = module
    for part in attr_path.split("."):
        if not hasattr(target, part):
            raise SpecError(f"{ref!r} does not resolve: no attribute {part!r}")
        target = getattr(target, part)
    if not callable(target):
        raise SpecError(f"{ref!r} resolves to a non-callable {type(target).__name__}")
    return target


def load_sample(path) -> np.ndarray:
    """Read one input vector from a JSON list or a delimited text file."""
    try:
        if os.fspath(path).endswith(".json"):
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
            sample = np.asarray(data, dtype=np.float64)
        else:
            sample = np.loadtxt(path, delimiter=",", dtype=np.float64)
    except OSError as exc:
        raise SpecError(f"cannot read sample: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise SpecError(f"sample file {path} is not numeric: {exc}") from exc
    sample = np.atleast_1d(np.squeeze(sample))
    if sample.ndim != 1:
        raise SpecError(f"sample must be a single vector, got shape {sample.shape}")
    return sample


def masked_inputs(sample: np.ndarray, spec: ExportSpec) -> np.ndarray:
    """All 2^n masked variants of the sample, indexed by variable bitmask."""
    sample = np.asarray(sample, dtype=np.float64)
    positions = spec.positions
    if positions[-1] >= sample.size:
        raise SpecError(
            f"variable_map position {positions[-1]} is out of range for a "
            f"sample of length {sample.size}"
        )
    if spec.mask_strategy == "token_mask":
        fill = float(spec.mask_token)
    elif spec.mask_strategy == "mean_baseline":
        fill = float(sample[list(positions)].mean())
    else:
        fill = 0.0
    size = 1 << spec.n
    batch = np.tile(sample, (size, 1))
    for mask in range(size):
        for v, group in enumerate(spec.variable_map):
            if not mask >> v & 1:
                batch[mask, list(group)] = fill
    return batch


def _to_scalar_outputs(raw, spec: ExportSpec, mask_offset: int) -> np.ndarray:
    out = np.asarray(raw, dtype=np.float64)
    if out.ndim == 2:
        if spec.label is None:
            raise ModelEvaluationError(
                "model returned per-class rows but the spec has no label to select"
            )
        if spec.label >= out.shape[1]:
            raise ModelEvaluationError(
                f"label {spec.label} is out of range for {out.shape[1]} model outputs"
            )
        out = out[:, spec.label]
    if out.ndim != 1:
        raise ModelEvaluationError(
            f"model output must be one value per input, got shape {out.shape}"
        )
    return out


def _evaluate(model, batch: np.ndarray, spec: ExportSpec, mask_offset: int) -> np.ndarray:
    try:
        raw = model(batch)
    except Exception:
        # rerun one at a time so the error can name the offending mask
        for i, row in enumerate(batch):
            try:
                model(row[np.newaxis, :])
            except Exception as exc:
                raise ModelEvaluationError(
                    f"model raised on mask index {mask_offset + i}: {exc}"
                ) from exc
        raise ModelEvaluationError(
            f"model raised on the batch starting at mask index {mask_offset} "
            "but succeeded on every row alone"
        )
    out = _to_scalar_outputs(raw, spec, mask_offset)
    if out.size != len(batch):
        raise ModelEvaluationError(
            f"model returned {out.size} values for {len(batch)} inputs"
        )
    return out


def _to_table_values(outputs: np.ndarray, spec: ExportSpec) -> np.ndarray:
    values = np.empty_like(outputs)
    for mask, raw in enumerate(outputs):
        if not math.isfinite(raw):
            raise OutputValueError(
                f"model output at mask index {mask} is not finite: {raw!r}"
            )
        if spec.output_mode == "logit":
            values[mask] = raw
            continue
        if raw < 0.0 or raw > 1.0:
            raise OutputValueError(
                f"probability at mask index {mask} is outside [0, 1]: {raw!r}"
            )
        p = min(max(raw, PROB_CLAMP), 1.0 - PROB_CLAMP)
        values[mask] = math.log(p) - math.log1p(-p)
    return values


def export(model, spec: ExportSpec, out_path, sample: np.ndarray | None = None) -> np.ndarray:
    """Write the value-table JSON for one sample; returns the values.

    The model is evaluated on all 2^n masked variants in batches of
    spec.batch_size.  sample may be passed directly; otherwise spec.sample
    names the file to load.
    """
    if sample is None:
        if spec.sample is None:
            raise SpecError("no sample: pass one or set the spec's sample path")
        sample = load_sample(spec.sample)
    batch = masked_inputs(sample, spec)
    outputs = np.empty(len(batch))
    for start in range(0, len(batch), spec.batch_size):
        stop = min(start + spec.batch_size, len(batch))
        outputs[start:stop] = _evaluate(model, batch[start:stop], spec, start)
    values = _to_table_values(outputs, spec)

    doc = {
        "format_version": FORMAT_VERSION,
        "n": spec.n,
        "sample_id": spec.sample_id,
        "variable_labels": [f"x{i}" for i in range(spec.n)],
        "baseline_note": (
            f"mask_strategy={spec.mask_strategy}, output_mode={spec.output_mode}"
        ),
        "values": [float(v) for v in values],
    }
    parent = os.path.dirname(os.path.abspath(os.fspath(out_path)))
    if not os.path.isdir(parent):
        raise SpecError(f"output directory does not exist: {parent}")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return values
