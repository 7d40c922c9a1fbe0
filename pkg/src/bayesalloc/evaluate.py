"""Out-of-sample policy evaluation and terminal-utility summary statistics.

Fresh return paths are drawn from the true sampling measure and every
method is rolled forward on the same noise array, so the reported
statistics are paired across methods.  Controls come from the clamped
control surrogates (the direct root decision at stage 0); each method
maintains its own belief or estimator state along the path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import adaptive_update_arrays
from .dynamics import utility
from .measures import PosteriorState, posterior_moments
from .solver_ab import Policy

__all__ = [
    "SummaryStats",
    "EvalReport",
    "quantile",
    "summarize",
    "simulate_out_of_sample",
]


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    var: float
    q30: float
    q90: float
    max: float
    min: float


@dataclass(frozen=True)
class EvalReport:
    """Per-path evaluation record for one solved policy."""

    method: str
    c0: float | None
    terminal_utilities: np.ndarray  # (N',)
    strategy_paths: np.ndarray  # (N', T)
    wealth_paths: np.ndarray  # (N', T+1)
    stats: SummaryStats
    mean_paths: np.ndarray | None = None  # (N', T+1) estimator trajectories, adaptive only


def quantile(samples, p: float) -> float:
    """Linear-interpolation quantile between order statistics.

    Uses rank ``1 + (n-1)p`` (the continuous convention shared by most
    statistical tooling defaults).
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("quantile of an empty sample")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability must be in [0, 1], got {p!r}")
    h = (x.size - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def summarize(utilities) -> SummaryStats:
    """Mean, unbiased variance, 30%/90% quantiles, max, and min."""
    x = np.asarray(utilities, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least 2 samples to summarize")
    return SummaryStats(
        mean=float(x.mean()),
        var=float(x.var(ddof=1)),
        q30=quantile(x, 0.30),
        q90=quantile(x, 0.90),
        max=float(x.max()),
        min=float(x.min()),
    )


def _control_batch(surrogate, queries: np.ndarray) -> np.ndarray:
    out = surrogate.predict(queries)
    out = np.asarray(out) if np.ndim(out) else np.full(queries.shape[0], out)
    return np.clip(out, 0.0, 1.0)


def simulate_out_of_sample(policy: Policy, config, noise: np.ndarray) -> EvalReport:
    """Roll the policy forward on the given noise array and score terminal utility.

    ``noise`` has one row per out-of-sample path and one column per stage,
    drawn from the sampling measure; sharing the array across methods gives
    paired comparisons.  The stage count must match the policy horizon.
    """
    noise = np.asarray(noise, dtype=float)
    n_paths, horizon = noise.shape
    if horizon != policy.horizon:
        raise ValueError(
            f"noise has {horizon} stages but the policy was solved for {policy.horizon}"
        )
    r, eta = policy.r, policy.eta
    wealth = np.full(n_paths, float(policy.y0))
    wealth_paths = np.empty((n_paths, horizon + 1))
    wealth_paths[:, 0] = wealth
    controls = np.empty((n_paths, horizon))

    method = policy.method
    mean_paths = None
    if method == "ab":
        prior = PosteriorState(
            c0=policy.c0, base_mean=config.mu0_hat, base_var=config.sigma0_sq_hat
        )
        moments = np.tile(posterior_moments(prior, config.M), (n_paths, 1))
        k_pow = np.arange(1, config.M + 1)
    elif method == "ad":
        mean_hat = np.full(n_paths, float(config.mu0_hat))
        var_hat = np.full(n_paths, float(config.sigma0_sq_hat))
        mean_paths = np.empty((n_paths, horizon + 1))
        mean_paths[:, 0] = mean_hat
    elif method != "sr":
        raise ValueError(f"unknown policy method {method!r}")

    for t in range(horizon):
        if t == 0:
            u = np.full(n_paths, float(np.clip(policy.root_control, 0.0, 1.0)))
        else:
            stage = policy.stages[t]
            if method == "ab":
                q = np.column_stack([wealth, moments])
            elif method == "sr":
                q = wealth[:, None]
            else:
                q = np.column_stack([wealth, mean_hat, var_hat])
            u = _control_batch(stage.control, q)
        controls[:, t] = u
        z = noise[:, t]
        wealth = wealth * (1.0 + r + u * (np.expm1(z) - r))
        wealth_paths[:, t + 1] = wealth
        if method == "ab":
            c_eff = policy.c0 + t
            moments = (c_eff * moments + z[:, None] ** k_pow) / (c_eff + 1.0)
        elif method == "ad":
            mean_hat, var_hat = adaptive_update_arrays(mean_hat, var_hat, config.t0 + t, z)
            mean_paths[:, t + 1] = mean_hat

    utilities = utility(wealth, eta)
    return EvalReport(
        method=method,
        c0=policy.c0,
        terminal_utilities=utilities,
        strategy_paths=controls,
        wealth_paths=wealth_paths,
        stats=summarize(utilities),
        mean_paths=mean_paths,
    )
