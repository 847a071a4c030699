"""Masked-output tables: the 2^n model evaluations of one sample.

A ValueTable stores v(x_T) for every subset T of the n variables, with the
fully-masked output v(x_empty) at mask 0 serving as the bias of the logical
surrogate.  Masking semantics (token replacement, mean baseline, ...) belong
to whatever produced the table; this module only stores, serializes and
diagnoses the numbers.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .subset_lattice import LatticeVector, as_lattice_vector, mask_orders

FORMAT_VERSION = 1


def default_labels(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(n))


def log_odds(p_truth: float) -> float:
    """Scalar confidence v = log(p / (1 - p)) of a class probability."""
    p = float(p_truth)
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise DataError(f"probability must lie strictly in (0, 1), got {p_truth!r}")
    return math.log(p) - math.log1p(-p)


@dataclass(frozen=True)
class ValueTable:
    """All 2^n masked outputs of one sample, indexed by variable bitmask."""

    n: int
    values: LatticeVector
    variable_labels: tuple[str, ...] = ()
    baseline_note: str = ""
    sample_id: str = "sample"

    def __post_init__(self):
        vals = as_lattice_vector(self.values, n=self.n)
        if vals.n != self.n:
            raise DataError(f"values length {len(vals)} does not match n={self.n}")
        object.__setattr__(self, "values", vals)
        labels = tuple(self.variable_labels) or default_labels(self.n)
        if len(labels) != self.n:
            raise DataError(
                f"expected {self.n} variable labels, got {len(labels)}"
            )
        object.__setattr__(self, "variable_labels", labels)

    @property
    def bias(self) -> float:
        """Output on the fully masked sample, v(x_empty)."""
        return self.values[0]

    def centered(self) -> np.ndarray:
        """values - bias as a plain array."""
        return self.values.values - self.bias

    def output_scale(self) -> float:
        """Mean absolute deviation from the fully-masked output.

        Sample-level stand-in for the population mean of |v(x) - v(x_empty)|
        that calibrates the noise bound and the saliency threshold.
        """
        return float(np.abs(self.centered()).mean())


def from_evaluator(
    n: int,
    evaluator,
    *,
    sample_id: str = "sample",
    variable_labels=None,
    baseline_note: str = "",
    reentrant: bool = False,
    jobs: int = 1,
) -> ValueTable:
    """Fill a table by calling `evaluator(mask) -> float` on every mask.

    The callback owns all masking semantics.  Masks are evaluated in
    unspecified order; concurrent invocation only happens when the caller
    declares the callback reentrant.
    """
    if n < 0:
        raise DataError(f"n must be nonnegative, got {n}")
    size = 1 << n
    values = np.empty(size, dtype=np.float64)
    if reentrant and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluator, range(size)))
        values[:] = results
    else:
        for mask in range(size):
            values[mask] = evaluator(mask)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DataError(f"evaluator returned non-finite output at mask {int(bad[0])}")
    return ValueTable(
        n=n,
        values=as_lattice_vector(values, n=n),
        variable_labels=tuple(variable_labels) if variable_labels else (),
        baseline_note=baseline_note,
        sample_id=sample_id,
    )


def save(table: ValueTable, path) -> None:
    """Write the table as a single JSON document (lossless round trip)."""
    doc = {
        "format_version": FORMAT_VERSION,
        "n": table.n,
        "sample_id": table.sample_id,
        "variable_labels": list(table.variable_labels),
        "baseline_note": table.baseline_note,
        "values": [float(v) for v in table.values.values],
    }
    parent = os.path.dirname(os.path.abspath(os.fspath(path)))
    if not os.path.isdir(parent):
        raise DataError(f"parent directory does not exist: {parent}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load(path) -> ValueTable:
    """Read a table written by :func:`save` (or by the exporter)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read value table: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed value-table JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError(f"value table {path} must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"unsupported format_version {doc.get('format_version')!r} in {path}"
        )
    missing = [
        k
        for k in ("n", "sample_id", "variable_labels", "baseline_note", "values")
        if k not in doc
    ]
    if missing:
        raise DataError(f"value table {path} missing keys: {', '.join(missing)}")
    n = doc["n"]
    if not isinstance(n, int) or n < 0:
        raise DataError(f"n must be a nonnegative integer, got {n!r}")
    raw = doc["values"]
    if not isinstance(raw, list) or len(raw) != (1 << n):
        got = len(raw) if isinstance(raw, list) else type(raw).__name__
        raise DataError(f"values must be a list of length {1 << n}, got {got}")
    values = np.asarray(raw, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DataError(f"non-finite value at mask {int(bad[0])} in {path}")
    return ValueTable(
        n=n,
        values=as_lattice_vector(values, n=n),
        variable_labels=tuple(str(s) for s in doc["variable_labels"]),
        baseline_note=str(doc["baseline_note"]),
        sample_id=str(doc["sample_id"]),
    )


@dataclass(frozen=True)
class SparsityReport:
    """Diagnostics on the order-averaged masked outputs of one table.

    mean_output_by_order[k] is the mean of v(x_T) - v(x_empty) over all
    subsets T of size k.  condition2_ok says that profile is non-decreasing
    in k; condition3_ok says some exponent p in the supplied grid gives the
    polynomial lower bound mean[k'] >= (k'/k)^p * mean[k] for all k' <= k
    whenever mean[k] > 0.
    """

    mean_output_by_order: np.ndarray = field(repr=False)
    condition2_ok: bool
    condition3_ok: bool
    fitted_p: float
    max_violation: float


def _condition3_violation(u_bar: np.ndarray, p: float) -> float:
    worst = 0.0
    n = u_bar.size - 1
    for k in range(1, n + 1):
        if u_bar[k] <= 0.0:
            continue
        for kp in range(1, k + 1):
            bound = (kp / k) ** p * u_bar[k]
            worst = max(worst, bound - u_bar[kp])
    return worst


def check_sparsity_conditions(table: ValueTable, p_grid=None) -> SparsityReport:
    """Report whether the table's order profile supports a sparse surrogate."""
    if p_grid is None:
        p_grid = np.linspace(0.2, 6.0, 59)
    p_grid = np.sort(np.asarray(p_grid, dtype=np.float64))
    centered = table.centered()
    orders = mask_orders(table.n)
    u_bar = np.zeros(table.n + 1)
    for k in range(table.n + 1):
        u_bar[k] = centered[orders == k].mean()
    cond2 = bool(np.all(np.diff(u_bar) >= -1e-9))
    tol = 1e-9
    fitted_p = math.nan
    best_violation = math.inf
    for p in p_grid:
        viol = _condition3_violation(u_bar, float(p))
        best_violation = min(best_violation, viol)
        if viol <= tol:
            fitted_p = float(p)
            best_violation = viol
            break
    cond3 = math.isfinite(fitted_p)
    return SparsityReport(
        mean_output_by_order=u_bar,
        condition2_ok=cond2,
        condition3_ok=cond3,
        fitted_p=fitted_p,
        max_violation=float(best_violation),
    )
