"""Bitmask subset lattice and the exact AND/OR interaction transforms.

A subset S of the variable index set {0, ..., n-1} is a plain int bitmask
(bit i set means variable i is present / unmasked).  Families of reals
indexed by all 2^n subsets live in a flat array ordered by mask value,
wrapped in :class:`LatticeVector`.

The two Moebius-style transforms implemented here are

    and_effects[S]  =  sum_{T subset of S} (-1)^(|S|-|T|) * u[T]
    or_effects[S]   = -sum_{T subset of S} (-1)^(|S|-|T|) * u[complement(T)]

computed in O(n * 2^n) by the in-place butterfly over bits, and the inverse
subset-sum (zeta) transform used to evaluate the logical model on every
masked state.  The OR effect of the empty set is fixed to zero: the output
on the fully masked sample is carried by the bias on the AND side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MAX_TRANSFORM_VARS = 20  # flat 2^n arrays
MAX_DENSE_VARS = 12      # dense 2^n x 2^n matrices

AND = "AND"
OR = "OR"


def order(mask: int) -> int:
    """Number of variables in the subset (popcount)."""
    return mask.bit_count()


def full_mask(n: int) -> int:
    return (1 << n) - 1


def check_mask(mask: int, n: int) -> int:
    if n < 0 or n > MAX_TRANSFORM_VARS:
        raise DataError(f"variable count n={n} outside [0, {MAX_TRANSFORM_VARS}]")
    if mask < 0 or mask >= (1 << n):
        raise DataError(f"mask {mask} out of range for n={n}")
    return mask


def mask_orders(n: int) -> np.ndarray:
    """Array of |S| for every mask 0..2^n-1, in mask order."""
    out = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        out = np.concatenate([out, out + 1])
    return out


def submasks(mask: int):
    """Iterate all submasks of `mask`, including 0 and `mask` itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


@dataclass(frozen=True)
class LatticeVector:
    """A real value per subset of {0..n-1}, indexed by bitmask.

    values[k] belongs to the subset whose bitmask is k; length is exactly
    2^n and every entry must be finite.
    """

    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 0 or self.n > MAX_TRANSFORM_VARS:
            raise DataError(
                f"n={self.n} outside supported range [0, {MAX_TRANSFORM_VARS}]"
            )
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size != (1 << self.n):
            raise DataError(
                f"lattice vector for n={self.n} must have length {1 << self.n}, "
                f"got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise DataError(f"non-finite value at mask {bad}")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, mask: int) -> float:
        return float(self.values[mask])


def as_lattice_vector(u, n: int | None = None) -> LatticeVector:
    """Coerce an ndarray (or LatticeVector) into a validated LatticeVector."""
    if isinstance(u, LatticeVector):
        return u
    arr = np.asarray(u, dtype=np.float64)
    if n is None:
        size = arr.size
        n = max(size - 1, 0).bit_length()
        if size != (1 << n):
            raise DataError(f"length {size} is not a power of two")
    return LatticeVector(n, arr)


def _fast_subset_mobius(values: np.ndarray, n: int) -> np.ndarray:
    out = values.astype(np.float64, copy=True)
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 1, :] -= view[:, 0, :]
    return out


def _fast_subset_zeta(values: np.ndarray, n: int) -> np.ndarray:
    out = values.astype(np.float64, copy=True)
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 1, :] += view[:, 0, :]
    return out


def _fast_superset_mobius(values: np.ndarray, n: int) -> np.ndarray:
    # Adjoint of _fast_subset_mobius: g[T] = sum_{S superset T} (-1)^(|S|-|T|) x[S].
    out = values.astype(np.float64, copy=True)
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 0, :] -= view[:, 1, :]
    return out


def _fast_superset_zeta(values: np.ndarray, n: int) -> np.ndarray:
    # Adjoint of _fast_subset_zeta: g[T] = sum_{S superset T} x[S].
    out = values.astype(np.float64, copy=True)
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 0, :] += view[:, 1, :]
    return out


def mobius_and(u) -> LatticeVector:
    """AND interaction effects of a masked-output family.

    effects[S] = sum over T subset of S of (-1)^(|S|-|T|) * u[T].
    """
    u = as_lattice_vector(u)
    return LatticeVector(u.n, _fast_subset_mobius(u.values, u.n))


def mobius_or(u) -> LatticeVector:
    """OR interaction effects of a masked-output family.

    effects[S] = -sum over T subset of S of (-1)^(|S|-|T|) * u[complement(T)];
    the empty-set effect is fixed to 0 (the empty-sample output is attributed
    to the AND side).  Complement indexing is the array reversal, since the
    bitwise complement of mask m within n bits is 2^n-1-m.
    """
    u = as_lattice_vector(u)
    flipped = u.values[::-1]
    out = -_fast_subset_mobius(flipped, u.n)
    out[0] = 0.0
    return LatticeVector(u.n, out)


def zeta_and(i) -> LatticeVector:
    """Subset sums z[T] = sum_{S subset of T} i[S] (inverse of mobius_and)."""
    i = as_lattice_vector(i)
    return LatticeVector(i.n, _fast_subset_zeta(i.values, i.n))


def mobius_and_adjoint(x) -> LatticeVector:
    """Transpose of the mobius_and linear map; used for analytic gradients."""
    x = as_lattice_vector(x)
    return LatticeVector(x.n, _fast_superset_mobius(x.values, x.n))


def reconstruct(b: float, i_and, i_or, T: int) -> float:
    """Logical-model output on the masked state T.

    h(x_T) = b + sum of AND effects over nonempty S subset of T
               + sum of OR effects over S with S intersect T nonempty.
    """
    i_and = as_lattice_vector(i_and)
    i_or = as_lattice_vector(i_or, n=i_and.n)
    n = i_and.n
    check_mask(T, n)
    total = b
    for s in submasks(T):
        if s != 0:
            total += i_and.values[s]
    # OR triggers: everything except subsets of the complement (and the empty set).
    comp = full_mask(n) ^ T
    or_sum = float(i_or.values.sum()) - float(i_or.values[0])
    for s in submasks(comp):
        if s != 0:
            or_sum -= i_or.values[s]
    return total + or_sum


def reconstruct_all(b: float, i_and, i_or) -> np.ndarray:
    """Vectorized reconstruct over every masked state, in mask order."""
    i_and = as_lattice_vector(i_and)
    i_or = as_lattice_vector(i_or, n=i_and.n)
    and_part = _fast_subset_zeta(i_and.values, i_and.n) - i_and.values[0]
    # sum_{S /\ T != 0} i_or[S] = (total - i_or[0]) - sum_{0 != S subset ~T} i_or[S]
    comp_sums = _fast_subset_zeta(i_or.values, i_or.n)[::-1]
    or_part = float(i_or.values.sum()) - comp_sums
    return b + and_part + or_part


def trigger_matrix(n: int, kind: str) -> np.ndarray:
    """Dense 0/1 matrix J with J[T, S] = 1 iff interaction S fires on state T.

    Rows enumerate masked states T, columns interactions S, both in mask
    order.  AND fires iff S is a subset of T; OR fires iff S and T overlap.
    """
    if n < 0 or n > MAX_DENSE_VARS:
        raise DataError(
            f"dense trigger matrix limited to n <= {MAX_DENSE_VARS}, got {n}"
        )
    if kind not in (AND, OR):
        raise DataError(f"kind must be {AND!r} or {OR!r}, got {kind!r}")
    masks = np.arange(1 << n, dtype=np.int64)
    inter = masks[:, None] & masks[None, :]
    if kind == AND:
        fired = inter == masks[None, :]
    else:
        fired = inter != 0
    return fired.astype(np.float64)
