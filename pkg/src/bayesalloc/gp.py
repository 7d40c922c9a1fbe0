"""Matern-5/2 Gaussian-process regression for value and policy surfaces.

Inputs are affinely mapped per-dimension onto [0, 1] and targets are
standardized before fitting, so one set of hyperparameter search ranges
works for every stage of the backward recursion.  Only the posterior mean
is ever needed, which keeps the predictor a kernel row times a cached
linear solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

__all__ = [
    "FitError",
    "KernelHyper",
    "Surrogate",
    "ConstantSurrogate",
    "matern52",
    "ColumnVaryingPredictor",
    "fit",
    "reconstruct",
]

_SQRT5 = math.sqrt(5.0)

# Search box for the marginal-likelihood multistarts, in log space of
# lengthscale (scaled coordinates) and signal standard deviation.
_LOG_LS_RANGE = (math.log(0.05), math.log(5.0))
_LOG_SD_RANGE = (math.log(0.1), math.log(10.0))

DEFAULT_NUGGET = 1e-6
MAX_NUGGET = 1e-2


class FitError(RuntimeError):
    """Raised when a surrogate cannot be fitted on the given data."""


@dataclass(frozen=True)
class KernelHyper:
    """Matern-5/2 hyperparameters: signal variance, per-dimension lengthscales, nugget."""

    signal_var: float
    lengthscales: tuple[float, ...]
    nugget_var: float

    def __post_init__(self):
        if self.signal_var <= 0.0 or self.nugget_var <= 0.0:
            raise ValueError("signal and nugget variances must be positive")
        ls = tuple(float(v) for v in self.lengthscales)
        object.__setattr__(self, "lengthscales", ls)
        if not ls or any(v <= 0.0 for v in ls):
            raise ValueError("lengthscales must be positive and non-empty")


def _kernel_from_dist(d: np.ndarray, signal_var: float) -> np.ndarray:
    return signal_var * (1.0 + _SQRT5 * d + (5.0 / 3.0) * d * d) * np.exp(-_SQRT5 * d)


@numba.njit(cache=True, parallel=True)
def _matern_mean(q: np.ndarray, x: np.ndarray, alpha: np.ndarray, signal_var: float) -> np.ndarray:
    """Fused kernel-row-times-alpha over lengthscale-scaled coordinates.

    One pass, no kernel-matrix temporaries; each output row is accumulated
    by a single worker, so results do not depend on the thread schedule.
    """
    n_q, k_dims = q.shape
    n_x = x.shape[0]
    out = np.empty(n_q)
    for i in numba.prange(n_q):
        acc = 0.0
        for n in range(n_x):
            s = 0.0
            for k in range(k_dims):
                diff = q[i, k] - x[n, k]
                s += diff * diff
            d = math.sqrt(s) * 2.2360679774997896
            acc += alpha[n] * (1.0 + d + d * d / 3.0) * math.exp(-d)
        out[i] = signal_var * acc
    return out


@numba.njit(cache=True, parallel=True)
def _matern_mean_partial(
    d2_fixed: np.ndarray,
    q_col: np.ndarray,
    x_col: np.ndarray,
    alpha: np.ndarray,
    signal_var: float,
) -> np.ndarray:
    """Kernel-row-times-alpha with all but one scaled coordinate precomputed."""
    n_q = q_col.shape[0]
    n_x = x_col.shape[0]
    out = np.empty(n_q)
    for i in numba.prange(n_q):
        acc = 0.0
        qi = q_col[i]
        for n in range(n_x):
            diff = qi - x_col[n]
            d = math.sqrt(d2_fixed[i, n] + diff * diff) * 2.2360679774997896
            acc += alpha[n] * (1.0 + d + d * d / 3.0) * math.exp(-d)
        out[i] = signal_var * acc
    return out


@numba.njit(cache=True, parallel=True)
def _matern_gram(x: np.ndarray, signal_var: float, nugget_var: float) -> np.ndarray:
    """Kernel matrix with nugget on lengthscale-scaled training inputs."""
    n, k_dims = x.shape
    out = np.empty((n, n))
    for i in numba.prange(n):
        out[i, i] = signal_var + nugget_var
        for j in range(i + 1, n):
            s = 0.0
            for k in range(k_dims):
                diff = x[i, k] - x[j, k]
                s += diff * diff
            d = math.sqrt(s) * 2.2360679774997896
            v = signal_var * (1.0 + d + d * d / 3.0) * math.exp(-d)
            out[i, j] = v
            out[j, i] = v
    return out


def matern52(a, b, hyper: KernelHyper) -> float:
    """Kernel value ``s2 * (1 + sqrt5 d + 5 d^2/3) exp(-sqrt5 d)`` at two points.

    ``d`` is the Euclidean distance after dividing each coordinate by its
    lengthscale.  Symmetric, and equal to the signal variance at ``a == b``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    ls = np.asarray(hyper.lengthscales)
    if a.shape != b.shape or a.shape != ls.shape:
        raise ValueError(
            f"dimension mismatch: a {a.shape}, b {b.shape}, lengthscales {ls.shape}"
        )
    d = math.sqrt(float(np.sum(((a - b) / ls) ** 2)))
    return float(_kernel_from_dist(np.asarray(d), hyper.signal_var))


@dataclass
class ConstantSurrogate:
    """Degenerate surrogate returned when every training target coincides."""

    value: float
    x_raw: np.ndarray
    y_raw: np.ndarray

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            return float(self.value)
        return np.full(x.shape[0], self.value)


@dataclass
class Surrogate:
    """Fitted GP regression model (posterior mean only).

    ``alpha`` caches ``[K + eps^2 I]^{-1} y_std`` so prediction is a kernel
    row times a vector.  ``kept`` lists the input dimensions that vary in
    the training data; degenerate dimensions are excluded from the kernel.
    """

    x_raw: np.ndarray
    y_raw: np.ndarray
    kept: np.ndarray
    lo: np.ndarray
    span: np.ndarray
    t_mean: float
    t_sd: float
    hyper: KernelHyper
    x_scaled: np.ndarray
    alpha: np.ndarray
    lml: float
    start_lmls: tuple[float, ...]

    @property
    def n_train(self) -> int:
        return self.x_raw.shape[0]

    def _scale(self, x: np.ndarray) -> np.ndarray:
        return (x[:, self.kept] - self.lo) / self.span

    def __post_init__(self):
        ls = np.asarray(self.hyper.lengthscales)
        self._xs_ls = np.ascontiguousarray(self.x_scaled / ls)
        self._inv_ls = 1.0 / ls

    def predict(self, x):
        """Posterior-mean prediction at one point (1-D input) or a batch (2-D)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.x_raw.shape[1]:
            raise ValueError(
                f"query has {x.shape[1]} dims, model was trained on {self.x_raw.shape[1]}"
            )
        q = np.ascontiguousarray(self._scale(x) * self._inv_ls)
        out = self.t_mean + self.t_sd * _matern_mean(
            q, self._xs_ls, self.alpha, self.hyper.signal_var
        )
        return float(out[0]) if single else out


class ColumnVaryingPredictor:
    """Fast repeated prediction when only one raw input column changes per call.

    The backward pass probes the value surface at the same transitioned
    beliefs under many candidate controls; only the wealth coordinate of
    each query moves.  Precomputing the squared scaled distance over the
    fixed coordinates leaves one multiply-add per kernel entry per call.
    Agrees with ``Surrogate.predict`` up to roundoff in the distance sum.
    """

    def __init__(self, surrogate: "Surrogate", fixed_queries: np.ndarray, column: int = 0):
        self.surr = surrogate
        q = surrogate._scale(np.asarray(fixed_queries, dtype=float)) * surrogate._inv_ls
        kept = surrogate.kept
        self.col_pos = int(np.flatnonzero(kept == column)[0]) if column in kept else -1
        if self.col_pos >= 0:
            others = np.arange(kept.size) != self.col_pos
            self.d2_fixed = np.ascontiguousarray(
                cdist(q[:, others], surrogate._xs_ls[:, others], "sqeuclidean")
            )
            self.x_col = np.ascontiguousarray(surrogate._xs_ls[:, self.col_pos])
            self.col_scale = surrogate._inv_ls[self.col_pos] / surrogate.span[self.col_pos]
            self.col_shift = surrogate.lo[self.col_pos]
        else:
            # the varying column was degenerate in training: predictions fixed
            self.cached = surrogate.predict(np.asarray(fixed_queries, dtype=float))

    def predict_column(self, col_values: np.ndarray) -> np.ndarray:
        if self.col_pos < 0:
            return self.cached
        qc = np.ascontiguousarray((col_values - self.col_shift) * self.col_scale)
        s = self.surr
        return s.t_mean + s.t_sd * _matern_mean_partial(
            self.d2_fixed, qc, self.x_col, s.alpha, s.hyper.signal_var
        )


def _lml(x_over_ls: np.ndarray, y: np.ndarray, signal_var: float, nugget_var: float) -> float:
    k = _matern_gram(x_over_ls, signal_var, nugget_var)
    try:
        c, low = cho_factor(k, lower=True, overwrite_a=True, check_finite=False)
    except LinAlgError:
        return -np.inf
    alpha = cho_solve((c, low), y, check_finite=False)
    n = y.shape[0]
    return float(-0.5 * y @ alpha - np.log(np.diag(c)).sum() - 0.5 * n * math.log(2.0 * math.pi))


def fit(
    inputs,
    targets,
    seed: int,
    *,
    nugget_var: float = DEFAULT_NUGGET,
    n_starts: int = 5,
):
    """Fit a surrogate by maximizing the log marginal likelihood.

    Hyperparameters are searched in log space with a derivative-free simplex
    from ``n_starts`` seeded uniform starting points; the selected point is
    guaranteed to score at least as well as every start.  Identical targets
    short-circuit to a constant model.  The nugget is fixed, escalating by
    factors of 10 (up to ``MAX_NUGGET``) only if the final factorization fails.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError("inputs and targets disagree on sample count")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise FitError("training data must be finite")
    if np.ptp(y) == 0.0:
        return ConstantSurrogate(value=float(y[0]) if y.size else 0.0, x_raw=x, y_raw=y)
    if x.shape[0] < 2:
        raise FitError("need at least 2 training points for a non-constant fit")

    mins = x.min(axis=0)
    maxs = x.max(axis=0)
    spans = maxs - mins
    kept = np.flatnonzero(spans > 1e-12 * np.maximum(1.0, np.maximum(np.abs(mins), np.abs(maxs))))
    if kept.size == 0:
        raise FitError("all input dimensions are degenerate but targets vary")
    lo = mins[kept]
    span = spans[kept]
    xs = (x[:, kept] - lo) / span
    if np.unique(xs, axis=0).shape[0] < 2:
        raise FitError("need at least 2 distinct inputs after scaling")

    t_mean = float(y.mean())
    t_sd = float(y.std())
    ys = (y - t_mean) / t_sd

    k_dims = kept.size
    rng = np.random.default_rng(seed)
    starts = np.column_stack(
        [
            rng.uniform(_LOG_LS_RANGE[0], _LOG_LS_RANGE[1], size=(n_starts, k_dims)),
            rng.uniform(_LOG_SD_RANGE[0], _LOG_SD_RANGE[1], size=(n_starts, 1)),
        ]
    )

    def objective(theta):
        ls = np.exp(theta[:k_dims])
        sv = math.exp(2.0 * theta[k_dims])
        val = _lml(np.ascontiguousarray(xs / ls), ys, sv, nugget_var)
        return 1e10 if not np.isfinite(val) else -val

    n_params = k_dims + 1
    candidates: list[tuple[float, np.ndarray]] = []
    start_lmls: list[float] = []
    best_seen = -np.inf
    for theta0 in starts:
        l0 = -objective(theta0)
        start_lmls.append(l0 if l0 > -1e9 else -np.inf)
        candidates.append((start_lmls[-1], theta0))
        if not np.isfinite(start_lmls[-1]):
            continue
        # a start far below an already-optimized candidate cannot overtake it
        if start_lmls[-1] < best_seen - 30.0:
            continue
        res = minimize(
            objective,
            theta0,
            method="Nelder-Mead",
            options={"maxiter": max(60, 20 * n_params), "xatol": 5e-2, "fatol": 5e-2},
        )
        candidates.append((-res.fun, res.x))
        best_seen = max(best_seen, -res.fun)
    best_lml, best_theta = max(candidates, key=lambda c: c[0])
    if not np.isfinite(best_lml):
        raise FitError("marginal likelihood is degenerate at every candidate")

    ls = np.exp(best_theta[:k_dims])
    sv = math.exp(2.0 * best_theta[k_dims])

    # Escalate the nugget only if the selected kernel matrix will not factor.
    eps = nugget_var
    while True:
        k = _matern_gram(np.ascontiguousarray(xs / ls), sv, eps)
        try:
            c, low = cho_factor(k, lower=True, overwrite_a=True, check_finite=False)
            break
        except LinAlgError:
            if eps >= MAX_NUGGET:
                raise FitError("kernel matrix is not positive definite even at the nugget ceiling")
            eps *= 10.0
    alpha = cho_solve((c, low), ys, check_finite=False)

    return Surrogate(
        x_raw=x,
        y_raw=y,
        kept=kept,
        lo=lo,
        span=span,
        t_mean=t_mean,
        t_sd=t_sd,
        hyper=KernelHyper(signal_var=sv, lengthscales=tuple(ls), nugget_var=eps),
        x_scaled=xs,
        alpha=alpha,
        lml=best_lml,
        start_lmls=tuple(start_lmls),
    )


def reconstruct(
    x_raw: np.ndarray,
    y_raw: np.ndarray,
    kept: np.ndarray,
    lo: np.ndarray,
    span: np.ndarray,
    t_mean: float,
    t_sd: float,
    hyper: KernelHyper,
) -> Surrogate:
    """Rebuild a fitted surrogate from its serialized record (no re-fitting)."""
    x_raw = np.asarray(x_raw, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float)
    kept = np.asarray(kept, dtype=int)
    lo = np.asarray(lo, dtype=float)
    span = np.asarray(span, dtype=float)
    xs = (x_raw[:, kept] - lo) / span
    ls = np.asarray(hyper.lengthscales)
    k = _matern_gram(np.ascontiguousarray(xs / ls), hyper.signal_var, hyper.nugget_var)
    try:
        c, low = cho_factor(k, lower=True, overwrite_a=True, check_finite=False)
    except LinAlgError as exc:
        raise FitError("stored hyperparameters do not factor on the stored inputs") from exc
    alpha = cho_solve((c, low), (y_raw - t_mean) / t_sd, check_finite=False)
    return Surrogate(
        x_raw=x_raw,
        y_raw=y_raw,
        kept=kept,
        lo=lo,
        span=span,
        t_mean=t_mean,
        t_sd=t_sd,
        hyper=hyper,
        x_scaled=xs,
        alpha=alpha,
        lml=float("nan"),
        start_lmls=(),
    )
