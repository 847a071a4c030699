"""Analytic models of order distributions and the disentanglement fit.

Two parametric shapes are fit to an observed order distribution: a
generalized-binomial "spindle" curve beta * Gamma(alpha n + 1) /
(Gamma(m + 1) Gamma(alpha n - m + 1)) that peaks at interior orders, and a
"decay" curve obtained by pushing a reference interaction set through the
triggering-uncertainty damping matrix M(delta) and aggregating by order.
The fit searches a grid over the two nonlinear parameters (alpha, delta)
and solves the two linear amplitudes (beta, decay_scale) by nonnegative
least squares at every grid point, which makes it reproducible and free of
step-size tuning.  Orders 1..n enter the objective; the order-0 slot holds
no interaction and is reported but never fitted.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .distributions import OrderDistribution, delta_stage, order_distribution
from .errors import DataError, LinearAlgebraError
from .extraction import InteractionSet
from .subset_lattice import AND, OR, as_lattice_vector, mask_orders, trigger_matrix

MAX_DAMPING_VARS = 10
MAX_ALPHA = 4.0


@dataclass(frozen=True)
class SpindleParams:
    """Shape and amplitude of the generalized-binomial curve."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= MAX_ALPHA) or not math.isfinite(self.alpha):
            raise DataError(f"alpha must be in (0, {MAX_ALPHA}], got {self.alpha}")
        if self.beta < 0 or not math.isfinite(self.beta):
            raise DataError(f"beta must be nonnegative, got {self.beta}")


@dataclass(frozen=True)
class DecayParams:
    """Uncertainty magnitude and amplitude of the damping curve."""

    delta: float
    decay_scale: float

    def __post_init__(self):
        if self.delta < 0 or not math.isfinite(self.delta):
            raise DataError(f"delta must be nonnegative, got {self.delta}")
        if self.decay_scale < 0 or not math.isfinite(self.decay_scale):
            raise DataError(f"decay_scale must be nonnegative, got {self.decay_scale}")


@dataclass(frozen=True)
class FitGrid:
    """Candidate (alpha, delta) pairs searched exhaustively."""

    alphas: np.ndarray = field(repr=False)
    deltas: np.ndarray = field(repr=False)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        deltas = np.asarray(self.deltas, dtype=np.float64)
        if alphas.size == 0 or deltas.size == 0:
            raise DataError("fit grid must contain at least one alpha and one delta")
        if (alphas <= 0).any() or (alphas > MAX_ALPHA).any():
            raise DataError(f"grid alphas must lie in (0, {MAX_ALPHA}]")
        if (deltas < 0).any():
            raise DataError("grid deltas must be nonnegative")
        alphas.flags.writeable = False
        deltas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "deltas", deltas)


def default_fit_grid() -> FitGrid:
    return FitGrid(
        alphas=np.round(np.arange(1, 31) * 0.05, 10),
        deltas=np.logspace(-4.0, 0.0, 40),
    )


@dataclass(frozen=True)
class DisentangleResult:
    """Grid-optimal parameters with theory and residual curves for m=0..n."""

    spindle: SpindleParams
    decay: DecayParams
    theory_pos: np.ndarray = field(repr=False)
    theory_neg: np.ndarray = field(repr=False)
    residual_pos: np.ndarray = field(repr=False)
    residual_neg: np.ndarray = field(repr=False)
    objective: float = 0.0
    beta_neg: float | None = None
    decay_scale_neg: float | None = None

    def __post_init__(self):
        arrays = {}
        length = None
        for name in ("theory_pos", "theory_neg", "residual_pos", "residual_neg"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or not np.isfinite(arr).all():
                raise DataError(f"{name} must be a finite 1-d array")
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise DataError("theory and residual arrays must share a length")
            arr.flags.writeable = False
            arrays[name] = arr
        if arrays["residual_pos"].min(initial=0.0) < 0 or arrays[
            "residual_neg"
        ].min(initial=0.0) < 0:
            raise DataError("residuals must be nonnegative")
        if self.objective < 0 or not math.isfinite(self.objective):
            raise DataError(f"objective must be nonnegative, got {self.objective}")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)


def spindle_eval(p, n: int, m: int) -> float:
    """Generalized binomial mass at order m; zero beyond the support."""
    if not (0 <= m <= n):
        raise DataError(f"order m={m} outside 0..{n}")
    top = p.alpha * n + 1.0
    if top <= 0:
        raise DataError(f"alpha*n+1 must be positive, got {top}")
    tail = top - m  # alpha*n - m + 1
    if tail <= 0:
        return 0.0
    return float(p.beta) * math.exp(
        math.lgamma(top) - math.lgamma(m + 1.0) - math.lgamma(tail)
    )


def spindle_curve(p, n: int) -> np.ndarray:
    return np.array([spindle_eval(p, n, m) for m in range(n + 1)])


def _condition_estimate(a: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(a))
    except np.linalg.LinAlgError:
        return float("inf")


def build_m_matrix(delta: float, n: int, kind: str) -> np.ndarray:
    """Damping matrix mapping true effects to effects under uncertainty delta.

    Solves (J^T J + 2^n diag(c)) X = J^T J with c_T = 2^|T| delta^2 for the
    kind-specific trigger matrix J.  At delta = 0 this is the identity
    whenever J is invertible (true for AND; the OR system is singular there
    and raises).
    """
    if delta < 0 or not math.isfinite(delta):
        raise DataError(f"delta must be nonnegative, got {delta}")
    if n > MAX_DAMPING_VARS:
        raise DataError(
            f"damping matrix is dense in 2^n; n={n} exceeds {MAX_DAMPING_VARS}"
        )
    j = trigger_matrix(n, kind)
    gram = j.T @ j
    c = np.exp2(mask_orders(n)) * delta * delta
    system = gram + (2.0**n) * np.diag(c)
    try:
        return scipy.linalg.solve(system, gram, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise LinearAlgebraError(
            f"damping system is not positive definite for delta={delta}, "
            f"n={n}, kind={kind}",
            condition_estimate=_condition_estimate(system),
        ) from exc


def decay_predict(i_star: InteractionSet, delta: float) -> InteractionSet:
    """Effects after injecting triggering uncertainty of magnitude delta."""
    if delta == 0.0:
        # No uncertainty leaves every effect untouched; the OR system is
        # singular at zero and only reaches the identity as a limit.
        return i_star
    m_and = build_m_matrix(delta, i_star.n, AND)
    m_or = build_m_matrix(delta, i_star.n, OR)
    return InteractionSet(
        n=i_star.n,
        i_and=as_lattice_vector(m_and @ i_star.i_and.values),
        i_or=as_lattice_vector(m_or @ i_star.i_or.values),
        bias=i_star.bias,
        tau=i_star.tau,
        omega_and=i_star.omega_and,
        omega_or=i_star.omega_or,
    )


def decay_eval(i_star: InteractionSet, p: DecayParams) -> OrderDistribution:
    """Order distribution of the damped effects, scaled by decay_scale."""
    d = order_distribution(decay_predict(i_star, p.delta), salient_only=False)
    return OrderDistribution(
        n=d.n,
        pos=d.pos * p.decay_scale,
        neg=d.neg * p.decay_scale,
        salient_only=False,
    )


def residual(a: OrderDistribution, theory: OrderDistribution) -> OrderDistribution:
    """Elementwise absolute gap between observed and theoretical mass."""
    return delta_stage(a, theory)


def _nnls_fit(columns, target):
    matrix = np.column_stack(columns)
    coeffs, rnorm = scipy.optimize.nnls(matrix, target)
    return coeffs, rnorm * rnorm


def disentangle(
    a: OrderDistribution,
    i_star: InteractionSet,
    grid: FitGrid | None = None,
    per_sign: bool = False,
) -> DisentangleResult:
    """Split an order distribution into spindle and decay components.

    Exhaustive search over the (alpha, delta) grid; at each point the two
    amplitudes are the exact nonnegative-least-squares optimum, so the
    returned objective is the global grid minimum.  Ties keep the earliest
    grid point, making the result deterministic.  With per_sign, separate
    amplitudes are fit for the positive and negative curves (exploratory);
    the negative-side pair is reported in beta_neg and decay_scale_neg.
    """
    grid = grid or default_fit_grid()
    n = a.n
    if i_star.n != n:
        raise DataError(f"distribution and interaction set disagree on n: {n} vs {i_star.n}")
    if n < 1:
        raise DataError("disentangle needs n >= 1")
    target = np.concatenate([a.pos[1:], a.neg[1:]])
    zero = np.zeros(n)

    spindles = {}
    for alpha in grid.alphas:
        curve = spindle_curve(SpindleParams(alpha=float(alpha), beta=1.0), n)
        spindles[float(alpha)] = curve

    best = None
    for delta in grid.deltas:
        damped = order_distribution(
            decay_predict(i_star, float(delta)), salient_only=False
        )
        dec_pos, dec_neg = damped.pos[1:], damped.neg[1:]
        for alpha in grid.alphas:
            s = spindles[float(alpha)][1:]
            if per_sign:
                columns = [
                    np.concatenate([s, zero]),
                    np.concatenate([zero, s]),
                    np.concatenate([dec_pos, zero]),
                    np.concatenate([zero, dec_neg]),
                ]
            else:
                columns = [
                    np.concatenate([s, s]),
                    np.concatenate([dec_pos, dec_neg]),
                ]
            coeffs, objective = _nnls_fit(columns, target)
            if best is None or objective < best[0] - 1e-15:
                best = (objective, float(alpha), float(delta), coeffs, damped)

    objective, alpha, delta, coeffs, damped = best
    full_spindle = spindle_curve(SpindleParams(alpha=alpha, beta=1.0), n)
    if per_sign:
        beta_pos, beta_neg, scale_pos, scale_neg = (float(v) for v in coeffs)
    else:
        beta_pos = beta_neg = float(coeffs[0])
        scale_pos = scale_neg = float(coeffs[1])
    theory_pos = beta_pos * full_spindle + scale_pos * damped.pos
    theory_neg = beta_neg * full_spindle + scale_neg * damped.neg
    return DisentangleResult(
        spindle=SpindleParams(alpha=alpha, beta=beta_pos),
        decay=DecayParams(delta=delta, decay_scale=scale_pos),
        theory_pos=theory_pos,
        theory_neg=theory_neg,
        residual_pos=np.abs(a.pos - theory_pos),
        residual_neg=np.abs(a.neg - theory_neg),
        objective=float(objective),
        beta_neg=beta_neg if per_sign else None,
        decay_scale_neg=scale_neg if per_sign else None,
    )


def fit_spindle(a: OrderDistribution, alphas=None):
    """Best single-spindle fit to both signed curves over orders 1..n.

    Returns (SpindleParams, objective); the shared amplitude is the exact
    nonnegative least-squares optimum at each candidate alpha.
    """
    if alphas is None:
        alphas = default_fit_grid().alphas
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.size == 0:
        raise DataError("need at least one candidate alpha")
    n = a.n
    if n < 1:
        raise DataError("fit_spindle needs n >= 1")
    target = np.concatenate([a.pos[1:], a.neg[1:]])
    best = None
    for alpha in alphas:
        s = spindle_curve(SpindleParams(alpha=float(alpha), beta=1.0), n)[1:]
        coeffs, objective = _nnls_fit([np.concatenate([s, s])], target)
        if best is None or objective < best[0] - 1e-15:
            best = (objective, float(alpha), float(coeffs[0]))
    objective, alpha, beta = best
    return SpindleParams(alpha=alpha, beta=beta), float(objective)


def save_fit(result: DisentangleResult, path) -> None:
    doc = {
        "alpha": result.spindle.alpha,
        "beta": result.spindle.beta,
        "delta": result.decay.delta,
        "decay_scale": result.decay.decay_scale,
        "objective": result.objective,
        "theory_pos": [float(v) for v in result.theory_pos],
        "theory_neg": [float(v) for v in result.theory_neg],
        "residual_pos": [float(v) for v in result.residual_pos],
        "residual_neg": [float(v) for v in result.residual_neg],
    }
    parent = os.path.dirname(os.path.abspath(os.fspath(path)))
    if not os.path.isdir(parent):
        raise DataError(f"parent directory does not exist: {parent}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_fit(path) -> DisentangleResult:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read fit file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed fit JSON in {path}: {exc}") from exc
    try:
        return DisentangleResult(
            spindle=SpindleParams(alpha=float(doc["alpha"]), beta=float(doc["beta"])),
            decay=DecayParams(
                delta=float(doc["delta"]), decay_scale=float(doc["decay_scale"])
            ),
            theory_pos=np.asarray(doc["theory_pos"], dtype=np.float64),
            theory_neg=np.asarray(doc["theory_neg"], dtype=np.float64),
            residual_pos=np.asarray(doc["residual_pos"], dtype=np.float64),
            residual_neg=np.asarray(doc["residual_neg"], dtype=np.float64),
            objective=float(doc["objective"]),
        )
    except KeyError as exc:
        raise DataError(f"fit file {path} missing key {exc}") from exc
