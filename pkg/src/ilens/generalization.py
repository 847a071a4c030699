"""Jaccard similarity of interaction distributions across populations.

Salient effects are laid out on a shared ordered universe of
(subset, kind) slots, each split into a nonnegative (+) and (-) component,
then averaged within a population.  The similarity of two populations is
the ratio of the L1 norms of the elementwise min and max of their averaged
vectors, optionally restricted to one interaction order at a time to test
how transferability varies with order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UndefinedSimilarityError
from .extraction import InteractionSet
from .subset_lattice import AND, OR, mask_orders

POPULATIONS = ("train", "test")


@dataclass(frozen=True)
class InteractionVector:
    """Nonnegative effect magnitudes aligned with an ordered slot index."""

    index: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        index = tuple(self.index)
        if values.ndim != 1 or values.size != len(index):
            raise DataError("index and values must align")
        if not np.isfinite(values).all() or values.min(initial=0.0) < 0:
            raise DataError("vector entries must be finite and nonnegative")
        values.flags.writeable = False
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class InteractionDistribution:
    """Population-averaged interaction vector."""

    vector: InteractionVector
    population: str
    count: int

    def __post_init__(self):
        if self.population not in POPULATIONS:
            raise DataError(f"population must be one of {POPULATIONS}")
        if self.count < 1:
            raise DataError(f"count must be >= 1, got {self.count}")


def _slot_value(iset: InteractionSet, mask: int, kind: str) -> float:
    if kind == AND:
        return float(iset.i_and.values[mask]) if mask in iset.omega_and else 0.0
    if kind == OR:
        return float(iset.i_or.values[mask]) if mask in iset.omega_or else 0.0
    raise DataError(f"unknown interaction kind {kind!r}")


def vectorize(iset: InteractionSet, universe) -> InteractionVector:
    """Lay the salient effects of one set onto (+)/(-) slots of a universe."""
    index = []
    values = []
    for mask, kind in universe:
        value = _slot_value(iset, int(mask), kind)
        index.append((int(mask), kind, "+"))
        values.append(max(value, 0.0))
        index.append((int(mask), kind, "-"))
        values.append(max(-value, 0.0))
    return InteractionVector(index=tuple(index), values=np.asarray(values))


def average_distribution(isets, universe, population: str) -> InteractionDistribution:
    """Mean vectorized interactions of one population on a shared universe."""
    isets = list(isets)
    if not isets:
        raise DataError("population must contain at least one interaction set")
    vectors = [vectorize(iset, universe) for iset in isets]
    index = vectors[0].index
    mean = np.mean([v.values for v in vectors], axis=0)
    return InteractionDistribution(
        vector=InteractionVector(index=index, values=mean),
        population=population,
        count=len(isets),
    )


def jaccard(d_train: InteractionDistribution, d_test: InteractionDistribution) -> float:
    """L1 ratio of elementwise min over elementwise max of the two vectors."""
    if d_train.vector.index != d_test.vector.index:
        raise DataError("distributions live on different universes")
    a = d_train.vector.values
    b = d_test.vector.values
    hi = np.maximum(a, b).sum()
    if hi == 0.0:
        raise UndefinedSimilarityError(
            "both distributions are zero; similarity is undefined"
        )
    return float(np.minimum(a, b).sum() / hi)


def order_universe(isets, n: int, m: int):
    """Ordered (mask, kind) slots salient at order m in any of the sets."""
    orders = mask_orders(n)
    and_masks = set()
    or_masks = set()
    for iset in isets:
        if iset.n != n:
            raise DataError(f"interaction sets disagree on n: {iset.n} vs {n}")
        and_masks |= {mask for mask in iset.omega_and if orders[mask] == m}
        or_masks |= {mask for mask in iset.omega_or if orders[mask] == m}
    universe = [(mask, AND) for mask in sorted(and_masks)]
    universe += [(mask, OR) for mask in sorted(or_masks)]
    return tuple(universe)


def orderwise_jaccard(train_sets, test_sets) -> np.ndarray:
    """Similarity per order m = 0..n; NaN where no order-m slot is salient."""
    train_sets = list(train_sets)
    test_sets = list(test_sets)
    if not train_sets or not test_sets:
        raise DataError("both populations must be nonempty")
    n = train_sets[0].n
    sims = np.full(n + 1, np.nan)
    for m in range(n + 1):
        universe = order_universe(train_sets + test_sets, n, m)
        if not universe:
            continue
        d_train = average_distribution(train_sets, universe, "train")
        d_test = average_distribution(test_sets, universe, "test")
        sims[m] = jaccard(d_train, d_test)
    return sims


def save_jaccard_csv(train_sets, test_sets, path) -> np.ndarray:
    """Write the per-order similarity table; returns the similarity array."""
    train_sets = list(train_sets)
    test_sets = list(test_sets)
    sims = orderwise_jaccard(train_sets, test_sets)
    n = train_sets[0].n
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "sim", "n_train", "n_test", "universe_size"])
        for m in range(n + 1):
            universe = order_universe(train_sets + test_sets, n, m)
            writer.writerow(
                [m, repr(float(sims[m])), len(train_sets), len(test_sets), len(universe)]
            )
    return sims


def load_jaccard_csv(path) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read jaccard file: {exc}") from exc
    if not rows or rows[0] != ["m", "sim", "n_train", "n_test", "universe_size"]:
        raise DataError(f"unrecognized jaccard CSV header in {path}")
    if len(rows) < 2:
        raise DataError(f"jaccard CSV {path} has no rows")
    try:
        return np.array([float(r[1]) for r in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed jaccard CSV {path}: {exc}") from exc


def trend_statistic(sims: np.ndarray) -> float:
    """Spearman rank correlation of similarity against order, ignoring NaN."""
    import scipy.stats

    orders = np.arange(sims.size)
    keep = np.isfinite(sims)
    if keep.sum() < 2:
        raise DataError("need at least two populated orders for a trend")
    kept = sims[keep]
    if np.ptp(kept) == 0.0:
        return 0.0
    return float(scipy.stats.spearmanr(orders[keep], kept).statistic)
