"""Strong-robust and time-consistent adaptive solvers under a Gaussian working model.

Both baselines assume i.i.d. Gaussian log-returns with unknown mean and
variance.  The strong-robust investor plays against the worst parameter
pair inside a fixed confidence region each period; the adaptive investor
plugs in the current maximum-likelihood estimate and carries the estimator
recursion inside the state.  The backward pass shares the design-path
generator, control maximizer, and GP surrogates of the main solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from . import gp
from .dynamics import utility
from .solver_ab import (
    Policy,
    StageSurrogates,
    _fit_seed,
    _simulate_paths,
    maximize_unit_batched,
)

__all__ = [
    "AdaptiveEstimate",
    "ConfidenceRegion",
    "initial_estimates",
    "adaptive_update",
    "adaptive_update_arrays",
    "confidence_region",
    "gauss_hermite_expectation",
    "solve_strong_robust",
    "solve_adaptive",
]

DEFAULT_GH_NODES = 32
DEFAULT_REGION_BOUNDARY = 64
DEFAULT_REGION_RINGS = 2


@dataclass(frozen=True)
class AdaptiveEstimate:
    """Running maximum-likelihood estimate of the Gaussian return parameters.

    ``count`` is the effective number of observations behind the estimate,
    so folding in a new return reproduces the batch MLE over the whole
    implied sample.
    """

    mean_hat: float
    var_hat: float
    count: int

    def __post_init__(self):
        if self.var_hat < 0.0:
            raise ValueError(f"var_hat must be non-negative, got {self.var_hat!r}")
        if self.count < 1:
            raise ValueError(f"count must be at least 1, got {self.count!r}")


def initial_estimates(observations) -> AdaptiveEstimate:
    """Sample mean and maximum-likelihood variance of the historical returns."""
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 1 or obs.size < 2:
        raise ValueError("need at least 2 historical observations")
    return AdaptiveEstimate(
        mean_hat=float(obs.mean()),
        var_hat=float(obs.var()),
        count=int(obs.size),
    )


def adaptive_update_arrays(mean_hat, var_hat, count, z):
    """Vectorized one-observation MLE update; broadcasts over arrays."""
    n = count
    mean_next = (n * mean_hat + z) / (n + 1.0)
    var_next = (n * (n + 1.0) * var_hat + n * (mean_hat - z) ** 2) / (n + 1.0) ** 2
    return mean_next, var_next


def adaptive_update(est: AdaptiveEstimate, z: float) -> AdaptiveEstimate:
    """Fold one return into the running estimate; equals the batch MLE."""
    mean_next, var_next = adaptive_update_arrays(est.mean_hat, est.var_hat, est.count, float(z))
    return AdaptiveEstimate(mean_hat=float(mean_next), var_hat=float(var_next), count=est.count + 1)


@dataclass(frozen=True)
class ConfidenceRegion:
    """Joint confidence ellipse for (mean, variance) with Fisher scaling.

    Membership: ``n (mu - mean)^2 / var + n (v - var)^2 / (2 var^2) <= radius_sq``
    with ``radius_sq`` the chi-square(2) quantile at the requested level.
    """

    mean_center: float
    var_center: float
    count: int
    level: float
    radius_sq: float

    @property
    def mean_halfwidth(self) -> float:
        return math.sqrt(self.radius_sq * self.var_center / self.count)

    @property
    def var_halfwidth(self) -> float:
        return self.var_center * math.sqrt(2.0 * self.radius_sq / self.count)

    def contains(self, mean: float, var: float) -> bool:
        score = (
            self.count * (mean - self.mean_center) ** 2 / self.var_center
            + self.count * (var - self.var_center) ** 2 / (2.0 * self.var_center**2)
        )
        return score <= self.radius_sq

    def candidates(
        self,
        boundary: int = DEFAULT_REGION_BOUNDARY,
        rings: int = DEFAULT_REGION_RINGS,
    ) -> np.ndarray:
        """Discretization of the region: center, interior rings, boundary.

        Returns an array of (mean, variance) rows; variances are clipped to
        stay positive.  Defaults give 1 + rings*(boundary/2) + boundary
        candidates (129 with the stock settings).
        """
        a, b = self.mean_halfwidth, self.var_halfwidth
        pts = [(self.mean_center, self.var_center)]
        ring_pts = max(1, boundary // 2)
        for j in range(1, rings + 1):
            frac = j / (rings + 1.0)
            ang = 2.0 * math.pi * np.arange(ring_pts) / ring_pts
            pts.extend(
                zip(
                    self.mean_center + frac * a * np.cos(ang),
                    self.var_center + frac * b * np.sin(ang),
                )
            )
        ang = 2.0 * math.pi * np.arange(boundary) / boundary
        pts.extend(
            zip(self.mean_center + a * np.cos(ang), self.var_center + b * np.sin(ang))
        )
        out = np.asarray(pts)
        out[:, 1] = np.maximum(out[:, 1], 1e-12 * self.var_center)
        return out


def confidence_region(est: AdaptiveEstimate, level: float) -> ConfidenceRegion:
    """Asymptotic-likelihood confidence ellipse around the estimate.

    The chi-square(2) quantile has the closed form ``-2 log(1 - level)``.
    """
    if not (0.0 < level < 1.0):
        raise ValueError(f"confidence level must be in (0, 1), got {level!r}")
    if est.var_hat <= 0.0:
        raise ValueError("confidence region requires a positive variance estimate")
    return ConfidenceRegion(
        mean_center=est.mean_hat,
        var_center=est.var_hat,
        count=est.count,
        level=level,
        radius_sq=-2.0 * math.log1p(-level),
    )


@lru_cache(maxsize=8)
def _gh_nodes(n: int):
    if n < 1:
        raise ValueError("need at least one quadrature node")
    x, w = np.polynomial.hermite.hermgauss(n)
    return x, w / math.sqrt(math.pi)


def gauss_hermite_expectation(integrand, mean: float, var: float, nodes: int) -> float:
    """Deterministic Gaussian expectation ``E[f(Z)]`` for ``Z ~ N(mean, var)``."""
    if var < 0.0:
        raise ValueError("variance must be non-negative")
    xi, wn = _gh_nodes(nodes)
    z = mean + math.sqrt(2.0 * var) * xi
    vals = np.array([float(integrand(zj)) for zj in z])
    if not np.isfinite(vals).all():
        raise ValueError("integrand returned a non-finite value at a quadrature node")
    return float(wn @ vals)


# ---------------------------------------------------------------------------
# strong robust


@numba.njit(cache=True, parallel=True)
def _robust_values_grid(y, u, egrow, gh_w, r, grid_lo, grid_inv_dx, grid_vals):
    """Worst-candidate quadrature value per site, next stage from a dense lookup."""
    n = y.shape[0]
    n_cand, n_nodes = egrow.shape
    top = grid_vals.shape[0] - 1
    out = np.empty(n)
    for i in numba.prange(n):
        best = np.inf
        for c in range(n_cand):
            acc = 0.0
            for q in range(n_nodes):
                w = y[i] * (1.0 + r + u[i] * egrow[c, q])
                pos = (w - grid_lo) * grid_inv_dx
                if pos <= 0.0:
                    v = grid_vals[0]
                elif pos >= top:
                    v = grid_vals[top]
                else:
                    j = int(pos)
                    v = grid_vals[j] + (pos - j) * (grid_vals[j + 1] - grid_vals[j])
                acc += gh_w[q] * v
            if acc < best:
                best = acc
        out[i] = best
    return out


@numba.njit(cache=True, parallel=True)
def _robust_values_terminal(y, u, egrow, gh_w, r, one_minus_eta):
    """Worst-candidate quadrature value per site against the terminal utility."""
    n = y.shape[0]
    n_cand, n_nodes = egrow.shape
    out = np.empty(n)
    for i in numba.prange(n):
        best = np.inf
        for c in range(n_cand):
            acc = 0.0
            for q in range(n_nodes):
                w = y[i] * (1.0 + r + u[i] * egrow[c, q])
                acc += gh_w[q] * math.expm1(one_minus_eta * math.log(w)) / one_minus_eta
            if acc < best:
                best = acc
        out[i] = best
    return out


class _RobustStageBlock:
    """Values candidate controls at every wealth site against the worst parameters.

    The quadrature nodes per region candidate are fixed for the whole solve.
    The next-stage value is either the closed-form terminal utility, a dense
    uniform-grid lookup of the fitted surrogate (interior stages), or an
    arbitrary elementwise map (the root uses the exact predictor).
    """

    def __init__(self, wealth, egrow, gh_w, r, *, eta=None, table=None, next_fn=None):
        self.y = np.ascontiguousarray(wealth)
        self.eg = np.ascontiguousarray(egrow)
        self.gh_w = np.ascontiguousarray(gh_w)
        self.r = r
        self.eta = eta
        self.table = table  # (lo, inv_dx, vals) uniform grid
        self.next_fn = next_fn

    def values(self, u: np.ndarray) -> np.ndarray:
        u = np.ascontiguousarray(u)
        if self.next_fn is not None:
            fac = 1.0 + self.r + u[:, None, None] * self.eg[None, :, :]
            w = self.y[:, None, None] * fac
            return (self.next_fn(w) @ self.gh_w).min(axis=1)
        if self.table is not None:
            lo, inv_dx, vals = self.table
            return _robust_values_grid(self.y, u, self.eg, self.gh_w, self.r, lo, inv_dx, vals)
        return _robust_values_terminal(self.y, u, self.eg, self.gh_w, self.r, 1.0 - self.eta)


def _interp_table(surrogate, w_lo: float, w_hi: float, size: int = 4097):
    """Dense uniform lookup of a fitted value surface for inner-loop evaluation.

    The strong-robust inner loop evaluates the next-stage value at
    sites x candidates x nodes points per control; a linear interpolant of
    the surrogate on a dense wealth grid makes that affordable while
    staying within interpolation error of the exact predictor.
    """
    grid = np.linspace(w_lo, w_hi, size)
    vals = surrogate.predict(grid[:, None])
    vals = np.asarray(vals) if np.ndim(vals) else np.full(size, vals)
    return (float(grid[0]), float((size - 1) / (w_hi - w_lo)), np.ascontiguousarray(vals))


def _exact_1d(surrogate):
    def fn(w):
        out = surrogate.predict(np.reshape(w, (-1, 1)))
        out = np.asarray(out) if np.ndim(out) else np.full(np.size(w), out)
        return out.reshape(np.shape(w))

    return fn


def solve_strong_robust(config, rng: np.random.Generator | None = None, threads: int = 1) -> Policy:
    """Worst-case-per-period Bellman recursion over the frozen confidence region.

    The value state is wealth alone, so surrogates are one-dimensional.  The
    inner minimization runs over the discretized region with Gauss-Hermite
    expectations; the outer maximization reuses the grid plus golden-section
    machinery.  ``threads`` is accepted for interface parity; the stage
    evaluations are single fused array operations.
    """
    del threads
    if config.mu0_hat is None or config.sigma0_sq_hat is None:
        raise ValueError("initial parameter estimates must be resolved before solving")
    if rng is None:
        rng = np.random.default_rng(config.seeds.design)
    horizon, r, eta = config.T, config.r, config.eta

    est = AdaptiveEstimate(config.mu0_hat, config.sigma0_sq_hat, config.t0)
    region = confidence_region(est, config.confidence_level)
    cand = region.candidates(config.region_boundary, config.region_rings)
    xi, gh_w = _gh_nodes(config.gh_nodes)
    znodes = cand[:, 0][:, None] + np.sqrt(2.0 * cand[:, 1])[:, None] * xi[None, :]
    egrow = np.expm1(znodes) - r  # (C, Q)
    f_lo = min(1.0 + r, 1.0 + r + float(egrow.min()))
    f_hi = max(1.0 + r, 1.0 + r + float(egrow.max()))

    _, _, wealth = _simulate_paths(config, rng)

    stages: dict[int, StageSurrogates] = {}
    table = None  # None means the terminal utility
    for t in range(horizon - 1, 0, -1):
        y_t = wealth[:, t]
        block = _RobustStageBlock(y_t, egrow, gh_w, r, eta=eta, table=table)
        u_star, values = maximize_unit_batched(block.values, y_t.shape[0])
        try:
            value_surr = gp.fit(y_t[:, None], values, _fit_seed(config.seeds.design, 1, t, 0))
            control_surr = gp.fit(y_t[:, None], u_star, _fit_seed(config.seeds.design, 1, t, 1))
        except gp.FitError as exc:
            raise gp.FitError(f"strong-robust surrogate fit failed at stage {t}: {exc}") from exc
        stages[t] = StageSurrogates(value=value_surr, control=control_surr)
        if isinstance(value_surr, gp.ConstantSurrogate):
            table = (0.0, 1.0, np.full(2, float(value_surr.value)))
        else:
            table = _interp_table(value_surr, float(y_t.min()) * f_lo, float(y_t.max()) * f_hi)

    if horizon > 1:
        surr = stages[1].value
        root_fn = (
            (lambda w: np.full(np.shape(w), surr.value))
            if isinstance(surr, gp.ConstantSurrogate)
            else _exact_1d(surr)
        )
        root_block = _RobustStageBlock(
            np.array([config.y0]), egrow, gh_w, r, eta=eta, next_fn=root_fn
        )
    else:
        root_block = _RobustStageBlock(np.array([config.y0]), egrow, gh_w, r, eta=eta)
    u0, w0 = maximize_unit_batched(root_block.values, 1)

    return Policy(
        method="sr",
        c0=None,
        horizon=horizon,
        root_control=float(u0[0]),
        root_value=float(w0[0]),
        eta=eta,
        r=r,
        y0=config.y0,
        stages=stages,
    )


# ---------------------------------------------------------------------------
# time-consistent adaptive


class _AdaptiveStageBlock:
    """Values candidate controls at (wealth, mean, variance) sites.

    Quadrature nodes and the post-observation estimates depend on the site
    but not on the control, so they are precomputed; only the wealth column
    of the regression queries changes per candidate control.
    """

    def __init__(self, wealth, mean_hat, var_hat, count, gh_xi, gh_w, r, next_value, eta):
        n_sites = wealth.shape[0]
        q = gh_xi.shape[0]
        self.y = wealth
        self.gh_w = gh_w
        self.r = r
        self.eta = eta
        z = mean_hat[:, None] + np.sqrt(2.0 * var_hat)[:, None] * gh_xi[None, :]
        self.eg = np.expm1(z) - r  # (n, Q)
        self.mode = "terminal"
        if next_value is not None:
            mean_next, var_next = adaptive_update_arrays(
                mean_hat[:, None], var_hat[:, None], count, z
            )
            queries = np.empty((n_sites * q, 3))
            queries[:, 0] = 0.0
            queries[:, 1] = mean_next.ravel()
            queries[:, 2] = var_next.ravel()
            if isinstance(next_value, gp.ConstantSurrogate):
                self.mode = "constant"
                self.const = float(next_value.value)
            else:
                self.mode = "column"
                self.column_pred = gp.ColumnVaryingPredictor(next_value, queries)

    def values(self, u: np.ndarray) -> np.ndarray:
        w = self.y[:, None] * (1.0 + self.r + u[:, None] * self.eg)
        if self.mode == "terminal":
            v = utility(w, self.eta)
        elif self.mode == "constant":
            v = np.full(w.shape, self.const)
        else:
            v = self.column_pred.predict_column(w.ravel()).reshape(w.shape)
        return v @ self.gh_w


def solve_adaptive(config, rng: np.random.Generator | None = None, threads: int = 1) -> Policy:
    """Bellman recursion under the running point estimate, estimator in the state.

    Design paths roll (wealth, mean, variance) forward with randomized
    controls, the design returns feeding the estimator recursion with
    effective counts offset by the historical sample size.  Surrogates are
    three-dimensional; expectations use Gauss-Hermite quadrature under the
    site's current estimate.  ``threads`` is accepted for interface parity.
    """
    del threads
    if config.mu0_hat is None or config.sigma0_sq_hat is None:
        raise ValueError("initial parameter estimates must be resolved before solving")
    if rng is None:
        rng = np.random.default_rng(config.seeds.design)
    horizon, r, eta, t0 = config.T, config.r, config.eta, config.t0

    _, noise, wealth = _simulate_paths(config, rng)
    n = wealth.shape[0]
    mean_path = np.empty((n, horizon + 1))
    var_path = np.empty((n, horizon + 1))
    mean_path[:, 0] = config.mu0_hat
    var_path[:, 0] = config.sigma0_sq_hat
    for t in range(horizon):
        mean_path[:, t + 1], var_path[:, t + 1] = adaptive_update_arrays(
            mean_path[:, t], var_path[:, t], t0 + t, noise[:, t]
        )

    xi, gh_w = _gh_nodes(config.gh_nodes)
    stages: dict[int, StageSurrogates] = {}
    next_value = None  # terminal stage uses the closed-form utility
    for t in range(horizon - 1, 0, -1):
        block = _AdaptiveStageBlock(
            wealth=wealth[:, t],
            mean_hat=mean_path[:, t],
            var_hat=var_path[:, t],
            count=t0 + t,
            gh_xi=xi,
            gh_w=gh_w,
            r=r,
            next_value=next_value,
            eta=eta,
        )
        u_star, values = maximize_unit_batched(block.values, n)
        sites = np.column_stack([wealth[:, t], mean_path[:, t], var_path[:, t]])
        try:
            value_surr = gp.fit(sites, values, _fit_seed(config.seeds.design, 2, t, 0))
            control_surr = gp.fit(sites, u_star, _fit_seed(config.seeds.design, 2, t, 1))
        except gp.FitError as exc:
            raise gp.FitError(f"adaptive surrogate fit failed at stage {t}: {exc}") from exc
        stages[t] = StageSurrogates(value=value_surr, control=control_surr)
        next_value = value_surr

    root_block = _AdaptiveStageBlock(
        wealth=np.array([config.y0]),
        mean_hat=np.array([config.mu0_hat]),
        var_hat=np.array([config.sigma0_sq_hat]),
        count=t0,
        gh_xi=xi,
        gh_w=gh_w,
        r=r,
        next_value=next_value,
        eta=eta,
    )
    u0, w0 = maximize_unit_batched(root_block.values, 1)

    return Policy(
        method="ad",
        c0=None,
        horizon=horizon,
        root_control=float(u0[0]),
        root_value=float(w0[0]),
        eta=eta,
        r=r,
        y0=config.y0,
        stages=stages,
    )
