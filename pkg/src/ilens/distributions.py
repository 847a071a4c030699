"""Order-wise strength statistics of interaction sets.

Positive and negative effect mass is aggregated per subset size m, giving a
pair of arrays A+(m), A-(m) that summarize how much of the model's behavior
each interaction order carries.  Differences can be taken at two levels: per
subset before aggregation (new-minus-reference effects) or between already
aggregated distributions (absolute order-wise change); the two disagree
whenever effects cancel within an order, so both are provided.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DegenerateNormalizerError
from .extraction import InteractionSet
from .subset_lattice import as_lattice_vector, mask_orders


@dataclass(frozen=True)
class OrderDistribution:
    """Per-order positive and negative interaction mass for m = 0..n."""

    n: int
    pos: np.ndarray = field(repr=False)
    neg: np.ndarray = field(repr=False)
    normalizer: float = 1.0
    salient_only: bool = False

    def __post_init__(self):
        pos = np.asarray(self.pos, dtype=np.float64)
        neg = np.asarray(self.neg, dtype=np.float64)
        if pos.shape != (self.n + 1,) or neg.shape != (self.n + 1,):
            raise DataError(
                f"order arrays must have length n+1={self.n + 1}, "
                f"got {pos.shape} and {neg.shape}"
            )
        if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
            raise DataError("order distribution entries must be finite")
        if pos.min(initial=0.0) < 0 or neg.min(initial=0.0) < 0:
            raise DataError("order distribution entries must be nonnegative")
        pos.flags.writeable = False
        neg.flags.writeable = False
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "neg", neg)

    def total_mass(self) -> float:
        return float(self.pos.sum() + self.neg.sum())


def _masked_effects(iset: InteractionSet, salient_only: bool):
    i_and = iset.i_and.values
    i_or = iset.i_or.values
    if salient_only:
        keep = np.zeros(i_and.size, dtype=bool)
        keep[list(iset.omega_and)] = True
        i_and = np.where(keep, i_and, 0.0)
        keep = np.zeros(i_or.size, dtype=bool)
        keep[list(iset.omega_or)] = True
        i_or = np.where(keep, i_or, 0.0)
    return i_and, i_or


def _aggregate(i_and: np.ndarray, i_or: np.ndarray, n: int):
    orders = mask_orders(n)
    gains = np.maximum(i_and, 0.0) + np.maximum(i_or, 0.0)
    losses = np.minimum(i_and, 0.0) + np.minimum(i_or, 0.0)
    pos = np.bincount(orders, weights=gains, minlength=n + 1)
    neg = -np.bincount(orders, weights=losses, minlength=n + 1)
    return pos, neg


def order_distribution(iset: InteractionSet, salient_only: bool = False) -> OrderDistribution:
    """Aggregate positive and negative effect mass by subset size."""
    i_and, i_or = _masked_effects(iset, salient_only)
    pos, neg = _aggregate(i_and, i_or, iset.n)
    return OrderDistribution(n=iset.n, pos=pos, neg=neg, salient_only=salient_only)


def normalize(d: OrderDistribution, z: float) -> OrderDistribution:
    """Divide both mass arrays by z > 0 and record it."""
    if not (z > 0) or not np.isfinite(z):
        raise DataError(f"normalizer must be positive and finite, got {z}")
    return replace(d, pos=d.pos / z, neg=d.neg / z, normalizer=float(z))


def compute_z(isets) -> float:
    """Mean over sets of the total salient first-order effect magnitude."""
    isets = list(isets)
    if not isets:
        raise DataError("compute_z needs at least one interaction set")
    totals = []
    for iset in isets:
        orders = mask_orders(iset.n)
        total = 0.0
        for m in iset.omega_and:
            if orders[m] == 1:
                total += abs(float(iset.i_and.values[m]))
        for m in iset.omega_or:
            if orders[m] == 1:
                total += abs(float(iset.i_or.values[m]))
        totals.append(total)
    z = float(np.mean(totals))
    if z <= 0.0:
        raise DegenerateNormalizerError(
            "no salient first-order effects; normalizer is zero"
        )
    return z


def _delta_set(a: InteractionSet, b: InteractionSet) -> InteractionSet:
    if a.n != b.n:
        raise DataError(f"interaction sets disagree on n: {a.n} vs {b.n}")
    return InteractionSet(
        n=a.n,
        i_and=as_lattice_vector(a.i_and.values - b.i_and.values),
        i_or=as_lattice_vector(a.i_or.values - b.i_or.values),
        bias=a.bias - b.bias,
        tau=max(a.tau, b.tau),
        omega_and=a.omega_and | b.omega_and,
        omega_or=a.omega_or | b.omega_or,
    )


def delta_distribution(
    a: InteractionSet, b: InteractionSet, salient_only: bool = True
) -> OrderDistribution:
    """Order distribution of the per-subset effect differences a minus b.

    With salient_only, differences are kept only on subsets salient in
    either input; effects that emerge or vanish are then both counted.
    """
    return order_distribution(_delta_set(a, b), salient_only=salient_only)


def delta_stage(d_new: OrderDistribution, d_ref: OrderDistribution) -> OrderDistribution:
    """Elementwise absolute change between two aggregated distributions."""
    if d_new.n != d_ref.n:
        raise DataError(f"distributions disagree on n: {d_new.n} vs {d_ref.n}")
    return OrderDistribution(
        n=d_new.n,
        pos=np.abs(d_new.pos - d_ref.pos),
        neg=np.abs(d_new.neg - d_ref.neg),
        salient_only=d_new.salient_only,
    )


def mean_distribution(dists) -> OrderDistribution:
    """Elementwise mean of several distributions over the same n."""
    dists = list(dists)
    if not dists:
        raise DataError("mean_distribution needs at least one distribution")
    n = dists[0].n
    if any(d.n != n for d in dists):
        raise DataError("distributions disagree on n")
    return OrderDistribution(
        n=n,
        pos=np.mean([d.pos for d in dists], axis=0),
        neg=np.mean([d.neg for d in dists], axis=0),
        normalizer=float(np.mean([d.normalizer for d in dists])),
        salient_only=all(d.salient_only for d in dists),
    )


def argmax_order(d: OrderDistribution) -> int:
    """Subset size m >= 1 carrying the largest combined mass."""
    if d.n < 1:
        raise DataError("argmax_order needs n >= 1")
    combined = d.pos[1:] + d.neg[1:]
    return int(np.argmax(combined)) + 1


def save_distribution_csv(d: OrderDistribution, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "pos", "neg", "normalizer", "salient_only"])
        for m in range(d.n + 1):
            writer.writerow(
                [
                    m,
                    repr(float(d.pos[m])),
                    repr(float(d.neg[m])),
                    repr(float(d.normalizer)),
                    str(bool(d.salient_only)).lower(),
                ]
            )


def load_distribution_csv(path) -> OrderDistribution:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read distribution file: {exc}") from exc
    if not rows or rows[0] != ["m", "pos", "neg", "normalizer", "salient_only"]:
        raise DataError(f"unrecognized distribution CSV header in {path}")
    body = rows[1:]
    if not body:
        raise DataError(f"distribution CSV {path} has no rows")
    try:
        pos = np.array([float(r[1]) for r in body])
        neg = np.array([float(r[2]) for r in body])
        normalizer = float(body[0][3])
        salient_only = body[0][4] == "true"
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed distribution CSV {path}: {exc}") from exc
    return OrderDistribution(
        n=len(body) - 1,
        pos=pos,
        neg=neg,
        normalizer=normalizer,
        salient_only=salient_only,
    )
