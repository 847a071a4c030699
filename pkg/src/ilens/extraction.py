"""Sparse AND-OR decomposition of a masked-output table.

Every split of the centered table r_T = v(x_T) - v(x_empty) - noise_T into

    u_and_T = 0.5 * r_T + gamma_T        u_or_T = 0.5 * r_T - gamma_T

reproduces the table exactly through the two interaction transforms, for any
choice of the per-subset split parameters gamma_T (the matching identity).
The decomposition is therefore chosen by minimizing the L1 norm of all
interaction effects over gamma and over bounded per-subset noise terms
delta_T in [-zeta, zeta].  The empty-set slots are pinned to zero: the
fully-masked output is carried by the bias, so both interaction vectors
vanish at the empty set by construction.

Solver.  In the variables (i_hat, j_hat) = (AND effects, pre-sign OR
effects) the objective is plainly separable L1 and the split constraint
becomes an affine box,

    subset_sums(i_hat) + reversed(subset_sums(j_hat)) - centered  in
    [-zeta, +zeta]^(2^n),

so the problem is descended with a diagonally preconditioned primal-dual
iteration: soft-thresholding on the effect variables against a running
dual on the box constraint, with restarts to the running average whenever
the true loss stalls.  All operator applications use the O(n 2^n) in-place
butterflies; every iterate maps back to an exact (gamma, delta) split, so
the matching identity holds no matter how early the iteration stops.  The
best split seen is returned.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, OptimizationError
from .subset_lattice import (
    LatticeVector,
    _fast_subset_mobius,
    _fast_subset_zeta,
    _fast_superset_zeta,
    as_lattice_vector,
    mask_orders,
    reconstruct_all,
)
from .value_table import ValueTable

MAX_EXTRACT_VARS = 14
INTERACTIONS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExtractConfig:
    """Settings for the L1 split search.

    learning_rate scales the primal steps (and inversely the dual steps) in
    units of the table's output scale; the product of the two is fixed by
    the convergence condition, so this only shifts the primal/dual balance.
    zeta_coeff and tau_coeff multiply the mean absolute centered output to
    give the noise bound zeta and the saliency threshold tau.  seed is
    reserved; the solver is deterministic.
    """

    learning_rate: float = 0.25
    iterations: int = 4000
    zeta_coeff: float = 0.02
    tau_coeff: float = 0.02
    enable_noise: bool = True
    seed: int = 0
    log_every: int = 20
    restart_patience: int = 12

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise DataError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.iterations < 1:
            raise DataError(f"iterations must be >= 1, got {self.iterations}")
        if self.zeta_coeff < 0 or self.tau_coeff < 0:
            raise DataError("zeta_coeff and tau_coeff must be nonnegative")
        if self.log_every < 1 or self.restart_patience < 1:
            raise DataError("log_every and restart_patience must be >= 1")


@dataclass(frozen=True)
class SplitParams:
    """Optimized per-subset split parameters and bounded noise terms."""

    gamma: LatticeVector
    noise: LatticeVector
    zeta: float

    def __post_init__(self):
        if self.zeta < 0:
            raise DataError(f"zeta must be nonnegative, got {self.zeta}")
        noise = as_lattice_vector(self.noise)
        if np.abs(noise.values).max(initial=0.0) > self.zeta + 1e-12:
            raise DataError("noise terms exceed the bound zeta")
        object.__setattr__(self, "gamma", as_lattice_vector(self.gamma))
        object.__setattr__(self, "noise", noise)


@dataclass(frozen=True)
class InteractionSet:
    """Extracted AND/OR effects with bias, threshold and salient index sets."""

    n: int
    i_and: LatticeVector
    i_or: LatticeVector
    bias: float
    tau: float
    omega_and: frozenset = frozenset()
    omega_or: frozenset = frozenset()

    def __post_init__(self):
        i_and = as_lattice_vector(self.i_and, n=self.n)
        i_or = as_lattice_vector(self.i_or, n=self.n)
        if i_and.n != self.n or i_or.n != self.n:
            raise DataError("interaction vectors disagree with n")
        if abs(i_or.values[0]) > 1e-12:
            raise DataError("OR effect of the empty set must be zero")
        object.__setattr__(self, "i_and", i_and)
        object.__setattr__(self, "i_or", i_or)
        object.__setattr__(self, "omega_and", frozenset(int(m) for m in self.omega_and))
        object.__setattr__(self, "omega_or", frozenset(int(m) for m in self.omega_or))

    def total_l1(self) -> float:
        return float(np.abs(self.i_and.values).sum() + np.abs(self.i_or.values).sum())


@dataclass(frozen=True)
class TraceLog:
    """Best-so-far loss recorded every logging interval."""

    iterations: np.ndarray = field(repr=False)
    loss: np.ndarray = field(repr=False)
    step: np.ndarray = field(repr=False)

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,loss,step\n")
            for it, lo, st in zip(self.iterations, self.loss, self.step):
                fh.write(f"{int(it)},{float(lo)!r},{float(st)!r}\n")


def _split_effects(centered_minus_noise: np.ndarray, gamma: np.ndarray, n: int):
    u_and = 0.5 * centered_minus_noise + gamma
    u_or = 0.5 * centered_minus_noise - gamma
    i_and = _fast_subset_mobius(u_and, n)
    i_or = -_fast_subset_mobius(u_or[::-1], n)
    i_or[0] = 0.0
    return i_and, i_or


def _l1_loss(i_and: np.ndarray, i_or: np.ndarray) -> float:
    return float(np.abs(i_and).sum() + np.abs(i_or).sum())


def _recover_split(i_hat, j_hat, centered, zeta, n):
    # Map effect-space iterates back to an exact (gamma, delta) split.
    p = _fast_subset_zeta(i_hat, n)
    q = _fast_subset_zeta(j_hat, n)[::-1]
    if zeta > 0.0:
        delta = np.clip(centered - p - q, -zeta, zeta)
        delta[0] = 0.0
    else:
        delta = np.zeros(centered.size)
    gamma = p - 0.5 * (centered - delta)
    gamma[0] = 0.0
    return gamma, delta


def _optimize_split(centered, zeta, scale, n, cfg: ExtractConfig):
    """Primal-dual L1 descent; returns (gamma, delta, trace arrays)."""
    size = 1 << n
    orders = mask_orders(n)
    step_scale = cfg.learning_rate * (scale if scale > 0 else 1.0)
    tau = step_scale / (2.0 ** (n - orders))
    sig = 1.0 / (step_scale * (2.0**orders + 2.0 ** (n - orders)))
    lo = centered - zeta
    hi = centered + zeta

    # Warm start at the symmetric split (gamma = 0, delta = 0).
    i_hat = _fast_subset_mobius(0.5 * centered, n)
    j_hat = _fast_subset_mobius((0.5 * centered)[::-1], n)
    y = np.zeros(size)

    gamma, delta = _recover_split(i_hat, j_hat, centered, zeta, n)
    i_and, i_or = _split_effects(centered - delta, gamma, n)
    best_loss = _l1_loss(i_and, i_or)
    best_gamma, best_delta = gamma, delta

    traced = [(0, best_loss, step_scale)]
    ibar, jbar = i_hat.copy(), j_hat.copy()
    avg_i = np.zeros(size)
    avg_j = np.zeros(size)
    avg_y = np.zeros(size)
    count = 0
    stall = 0
    for it in range(1, cfg.iterations + 1):
        lx = _fast_subset_zeta(ibar, n) + _fast_subset_zeta(jbar, n)[::-1]
        v = y + sig * lx
        y = v - sig * np.clip(v / sig, lo, hi)
        lty_i = _fast_superset_zeta(y, n)
        lty_j = _fast_superset_zeta(y[::-1], n)
        i_new = i_hat - tau * lty_i
        j_new = j_hat - tau * lty_j
        # Soft threshold; the empty-set OR slot is unpenalized (zeroed later)
        # and the empty-set AND slot is pinned.
        keep0 = j_new[0]
        i_new = np.sign(i_new) * np.maximum(np.abs(i_new) - tau, 0.0)
        i_new[0] = 0.0
        j_new = np.sign(j_new) * np.maximum(np.abs(j_new) - tau, 0.0)
        j_new[0] = keep0
        ibar = 2.0 * i_new - i_hat
        jbar = 2.0 * j_new - j_hat
        i_hat, j_hat = i_new, j_new
        avg_i += i_hat
        avg_j += j_hat
        avg_y += y
        count += 1
        if it % cfg.log_every == 0 or it == cfg.iterations:
            gamma, delta = _recover_split(i_hat, j_hat, centered, zeta, n)
            i_and, i_or = _split_effects(centered - delta, gamma, n)
            loss = _l1_loss(i_and, i_or)
            if not np.isfinite(loss):
                raise OptimizationError(
                    f"non-finite loss at iteration {it}", iteration=it
                )
            if loss < best_loss - 1e-12 * max(1.0, best_loss):
                best_loss = loss
                best_gamma, best_delta = gamma, delta
                stall = 0
            else:
                stall += 1
                if stall >= cfg.restart_patience:
                    # Restart at the running average; breaks limit cycles.
                    i_hat = avg_i / count
                    j_hat = avg_j / count
                    y = avg_y / count
                    ibar = i_hat.copy()
                    jbar = j_hat.copy()
                    avg_i[:] = 0.0
                    avg_j[:] = 0.0
                    avg_y[:] = 0.0
                    count = 0
                    stall = 0
            traced.append((it, best_loss, step_scale))
    return best_gamma, best_delta, traced


def extract(
    table: ValueTable,
    cfg: ExtractConfig | None = None,
    population_scale: float | None = None,
):
    """Learn the sparsest AND-OR decomposition of one table.

    Returns (InteractionSet, SplitParams, TraceLog).  population_scale, when
    given, is the mean absolute centered output over a sample population and
    calibrates zeta and tau; otherwise the table's own scale is used.
    """
    cfg = cfg or ExtractConfig()
    n = table.n
    if n > MAX_EXTRACT_VARS:
        raise DataError(
            f"extraction optimizes 2*2^n parameters; n={n} exceeds {MAX_EXTRACT_VARS}"
        )
    size = 1 << n
    centered = table.centered()
    scale = table.output_scale() if population_scale is None else float(population_scale)
    if scale < 0 or not np.isfinite(scale):
        raise DataError(f"invalid output scale {scale}")
    zeta = cfg.zeta_coeff * scale if cfg.enable_noise else 0.0
    tau = cfg.tau_coeff * scale

    if np.abs(centered).max(initial=0.0) == 0.0:
        best_gamma = np.zeros(size)
        best_delta = np.zeros(size)
        traced = [(0, 0.0, 0.0)]
    else:
        best_gamma, best_delta, traced = _optimize_split(centered, zeta, scale, n, cfg)

    i_and, i_or = _split_effects(centered - best_delta, best_gamma, n)
    trace = TraceLog(
        iterations=np.asarray([t[0] for t in traced], dtype=np.int64),
        loss=np.asarray([t[1] for t in traced]),
        step=np.asarray([t[2] for t in traced]),
    )
    omega_and, omega_or = _salient_masks(i_and, i_or, tau)
    iset = InteractionSet(
        n=n,
        i_and=as_lattice_vector(i_and, n=n),
        i_or=as_lattice_vector(i_or, n=n),
        bias=table.bias,
        tau=tau,
        omega_and=omega_and,
        omega_or=omega_or,
    )
    params = SplitParams(
        gamma=as_lattice_vector(best_gamma, n=n),
        noise=as_lattice_vector(best_delta, n=n),
        zeta=zeta,
    )
    return iset, params, trace


def matching_error(table: ValueTable, iset: InteractionSet, params: SplitParams) -> float:
    """max over T of |v(x_T) - noise_T - h(x_T)| for the logical surrogate h.

    An identity in the split parameters, not an optimization outcome: any
    gamma gives zero up to float roundoff.
    """
    if table.n != iset.n:
        raise DataError("table and interaction set disagree on n")
    h = reconstruct_all(iset.bias, iset.i_and, iset.i_or)
    resid = table.values.values - params.noise.values - h
    return float(np.abs(resid).max())


def _salient_masks(i_and: np.ndarray, i_or: np.ndarray, tau: float):
    omega_and = frozenset(int(m) for m in np.flatnonzero(np.abs(i_and) > tau))
    omega_or = frozenset(int(m) for m in np.flatnonzero(np.abs(i_or) > tau))
    return omega_and, omega_or


def salient_filter(iset: InteractionSet, tau: float):
    """Index sets of effects whose magnitude exceeds tau."""
    if tau < 0:
        raise DataError(f"tau must be nonnegative, got {tau}")
    return _salient_masks(iset.i_and.values, iset.i_or.values, tau)


def with_tau(iset: InteractionSet, tau: float) -> InteractionSet:
    """Copy of the set with threshold and salient sets recomputed at tau."""
    omega_and, omega_or = salient_filter(iset, tau)
    return replace(iset, tau=tau, omega_and=omega_and, omega_or=omega_or)


def max_order(iset: InteractionSet, tau: float | None = None) -> int:
    """Largest subset size carrying any salient effect; 0 when none do."""
    tau = iset.tau if tau is None else tau
    omega_and, omega_or = salient_filter(iset, tau)
    masks = omega_and | omega_or
    if not masks:
        return 0
    orders = mask_orders(iset.n)
    return int(max(orders[m] for m in masks))


def mean_interactions(isets) -> InteractionSet:
    """Elementwise mean of several sets over the same n; omegas are unioned.

    The population-level reference whose decay damping is fit against the
    mean order distribution.
    """
    isets = list(isets)
    if not isets:
        raise DataError("mean_interactions needs at least one set")
    n = isets[0].n
    if any(s.n != n for s in isets):
        raise DataError("interaction sets disagree on n")
    omega_and = frozenset().union(*(s.omega_and for s in isets))
    omega_or = frozenset().union(*(s.omega_or for s in isets))
    return InteractionSet(
        n=n,
        i_and=as_lattice_vector(np.mean([s.i_and.values for s in isets], axis=0), n=n),
        i_or=as_lattice_vector(np.mean([s.i_or.values for s in isets], axis=0), n=n),
        bias=float(np.mean([s.bias for s in isets])),
        tau=float(np.mean([s.tau for s in isets])),
        omega_and=omega_and,
        omega_or=omega_or,
    )


def save_interactions(iset: InteractionSet, path) -> None:
    doc = {
        "format_version": INTERACTIONS_FORMAT_VERSION,
        "n": iset.n,
        "bias": float(iset.bias),
        "tau": float(iset.tau),
        "i_and": [float(v) for v in iset.i_and.values],
        "i_or": [float(v) for v in iset.i_or.values],
        "omega_and": sorted(iset.omega_and),
        "omega_or": sorted(iset.omega_or),
    }
    parent = os.path.dirname(os.path.abspath(os.fspath(path)))
    if not os.path.isdir(parent):
        raise DataError(f"parent directory does not exist: {parent}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_interactions(path) -> InteractionSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read interactions file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed interactions JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != INTERACTIONS_FORMAT_VERSION:
        raise DataError(f"unsupported interactions file {path}")
    try:
        n = int(doc["n"])
        return InteractionSet(
            n=n,
            i_and=as_lattice_vector(np.asarray(doc["i_and"], dtype=np.float64), n=n),
            i_or=as_lattice_vector(np.asarray(doc["i_or"], dtype=np.float64), n=n),
            bias=float(doc["bias"]),
            tau=float(doc["tau"]),
            omega_and=frozenset(int(m) for m in doc["omega_and"]),
            omega_or=frozenset(int(m) for m in doc["omega_or"]),
        )
    except KeyError as exc:
        raise DataError(f"interactions file {path} missing key {exc}") from exc
