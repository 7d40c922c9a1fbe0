"""Backward-induction solver on a randomized design mesh with GP surrogates.

The design mesh is built by control randomization: each path draws uniform
controls and sampling-measure returns, and rolls the augmented state
forward, so the mesh covers the states a reasonable policy can reach
without knowing that policy.  The backward pass then, per stage, estimates
stage values by Monte Carlo under each site's own belief measure,
maximizes over the control with a grid plus golden-section refinement, and
fits one value surrogate and one control surrogate per stage.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .dynamics import AugmentedState, utility, wealth_step
from .measures import (
    PosteriorState,
    posterior_moments,
    sample_mixture,
    sample_posterior_mean,
)

__all__ = [
    "DesignMesh",
    "StageSurrogates",
    "Policy",
    "generate_mesh",
    "maximize_unit_batched",
    "optimize_control",
    "stage_value_estimate",
    "backward_induction",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0

CONTROL_GRID = 51
CONTROL_TOL = 1e-4


# ---------------------------------------------------------------------------
# design mesh


@dataclass(frozen=True)
class DesignMesh:
    """Randomized state mesh: controls, returns, and the induced state paths.

    ``wealth[i, t]`` and ``moments[i, t]`` describe path i at stage t, with
    ``wealth[:, t+1]`` obtained from ``wealth[:, t]`` through the wealth map
    at ``controls[:, t]`` and ``noise[:, t]``, and the belief gaining
    ``noise[:, t]`` as an atom.
    """

    controls: np.ndarray  # (N, T) uniform in [0, 1]
    noise: np.ndarray  # (N, T) design returns
    wealth: np.ndarray  # (N, T+1)
    moments: np.ndarray  # (N, T+1, M) raw belief moments
    initial_posterior: PosteriorState

    @property
    def n_paths(self) -> int:
        return self.controls.shape[0]

    @property
    def horizon(self) -> int:
        return self.controls.shape[1]

    @property
    def c0(self) -> float:
        return self.initial_posterior.c0

    def site_posterior(self, i: int, t: int) -> PosteriorState:
        base = self.initial_posterior
        return PosteriorState(
            c0=base.c0,
            base_mean=base.base_mean,
            base_var=base.base_var,
            atoms=base.atoms + tuple(self.noise[i, :t]),
        )

    def site_state(self, i: int, t: int) -> AugmentedState:
        return AugmentedState(wealth=float(self.wealth[i, t]), posterior=self.site_posterior(i, t))

    def reduced(self, t: int) -> np.ndarray:
        """All stage-t sites in regression coordinates, shape (N, 1+M)."""
        return np.column_stack([self.wealth[:, t], self.moments[:, t]])


def _simulate_paths(config, rng: np.random.Generator):
    """Draw randomized controls and design returns, roll wealth forward."""
    n, horizon, r = config.N, config.T, config.r
    controls = rng.random((n, horizon))
    noise = sample_mixture(config.sampling_measure, (n, horizon), rng)
    wealth = np.empty((n, horizon + 1))
    wealth[:, 0] = config.y0
    for t in range(horizon):
        wealth[:, t + 1] = wealth[:, t] * (
            1.0 + r + controls[:, t] * (np.expm1(noise[:, t]) - r)
        )
    return controls, noise, wealth


def generate_mesh(
    config,
    rng: np.random.Generator,
    c0: float,
    initial_posterior: PosteriorState | None = None,
) -> DesignMesh:
    """Build the design mesh for a given prior mass.

    All paths start at ``(y0, prior)``; control randomization alone spreads
    the mesh from stage 1 on.  ``initial_posterior`` overrides the Gaussian
    prior built from the config (used for synthetic discrete-return setups).
    """
    if initial_posterior is None:
        initial_posterior = PosteriorState(
            c0=float(c0), base_mean=config.mu0_hat, base_var=config.sigma0_sq_hat
        )
    elif initial_posterior.c0 != c0:
        raise ValueError("initial_posterior prior mass disagrees with c0")
    controls, noise, wealth = _simulate_paths(config, rng)
    n, horizon = controls.shape
    moments = np.empty((n, horizon + 1, config.M))
    for i in range(n):
        state = initial_posterior
        moments[i, 0] = posterior_moments(state, config.M)
        for t in range(horizon):
            state = PosteriorState(
                c0=state.c0,
                base_mean=state.base_mean,
                base_var=state.base_var,
                atoms=state.atoms + (float(noise[i, t]),),
            )
            moments[i, t + 1] = posterior_moments(state, config.M)
    return DesignMesh(
        controls=controls,
        noise=noise,
        wealth=wealth,
        moments=moments,
        initial_posterior=initial_posterior,
    )


# ---------------------------------------------------------------------------
# control maximization


def maximize_unit_batched(f, n: int, grid_size: int = CONTROL_GRID, tol: float = CONTROL_TOL):
    """Maximize ``n`` scalar functions on [0, 1] in lockstep.

    ``f`` maps an (n,)-vector of controls to the (n,)-vector of values, one
    per site.  A uniform grid locates the peak (first index wins ties, so
    ties break toward the smaller control), then golden-section refinement
    narrows the bracketing interval to ``tol``.  If the refined point does
    not beat the best grid point, the grid point is returned, which keeps
    the tie-break exact on flat objectives.
    """
    grid = np.linspace(0.0, 1.0, grid_size)
    vals = np.empty((n, grid_size))
    for j, u in enumerate(grid):
        vals[:, j] = f(np.full(n, u))
    k = vals.argmax(axis=1)
    grid_u = grid[k]
    grid_v = vals[np.arange(n), k]

    a = grid[np.maximum(k - 1, 0)]
    b = grid[np.minimum(k + 1, grid_size - 1)]
    h = b - a
    steps = np.zeros(n, dtype=int)
    wide = h > tol
    if wide.any():
        steps[wide] = np.ceil(np.log(tol / h[wide]) / math.log(_INV_PHI)).astype(int)

    c = a + _INV_PHI_SQ * h
    d = a + _INV_PHI * h
    yc = f(c)
    yd = f(d)
    for it in range(int(steps.max(initial=0)) - 1):
        active = it < steps - 1
        c_old, d_old, yc_old, yd_old = c, d, yc, yd
        left = yc_old > yd_old
        go_l = active & left
        go_r = active & ~left
        b = np.where(go_l, d_old, b)
        a = np.where(go_r, c_old, a)
        h = np.where(active, _INV_PHI * h, h)
        c = np.where(go_l, a + _INV_PHI_SQ * h, np.where(go_r, d_old, c_old))
        d = np.where(go_r, a + _INV_PHI * h, np.where(go_l, c_old, d_old))
        yd = np.where(go_l, yc_old, yd_old)
        yc = np.where(go_r, yd_old, yc_old)
        y_new = f(np.where(go_r, d, c))
        yc = np.where(go_l, y_new, yc)
        yd = np.where(go_r, y_new, yd)
    refined = np.where(yc > yd, 0.5 * (a + d), 0.5 * (c + b))
    refined = np.where(steps == 0, 0.5 * (a + b), refined)
    ref_v = f(refined)

    keep_grid = grid_v >= ref_v
    u_star = np.where(keep_grid, grid_u, refined)
    value = np.where(keep_grid, grid_v, ref_v)
    return u_star, value


def optimize_control(estimator, grid_size: int = CONTROL_GRID, tol: float = CONTROL_TOL):
    """Maximize one estimator ``u -> value`` on [0, 1]; returns ``(u_star, value)``.

    Thin wrapper over the batched maximizer with a single site, so scalar
    and batched optimizations follow the identical evaluation sequence.
    """

    def f(u_vec):
        return np.array([float(estimator(float(u_vec[0])))])

    u, v = maximize_unit_batched(f, 1, grid_size=grid_size, tol=tol)
    return float(u[0]), float(v[0])


# ---------------------------------------------------------------------------
# stage evaluation


class _StageBlock:
    """Per-site-block machinery valuing candidate controls at one stage.

    Shares one set of belief draws per site across every candidate control
    (common random numbers), which makes the Monte Carlo stage value a
    deterministic, smooth function of the control.  Belief draws repeat
    whenever an atom is redrawn, so the draw list collapses to weighted
    unique values; only the wealth coordinate of the transitioned state
    depends on the control, and the belief-moment block of the regression
    queries is precomputed.
    """

    def __init__(self, wealth, moments, draws, c_eff, r, m, next_value, eta):
        n_sites, n_draws = draws.shape
        self.n_sites = n_sites
        self.eta = eta

        site_idx = []
        z_rows = []
        w_rows = []
        for i in range(n_sites):
            z_u, counts = np.unique(draws[i], return_counts=True)
            site_idx.append(np.full(z_u.shape[0], i, dtype=np.intp))
            z_rows.append(z_u)
            w_rows.append(counts / n_draws)
        self.site = np.concatenate(site_idx)
        z = np.concatenate(z_rows)
        self.weight = np.concatenate(w_rows)

        self.bank = (wealth * (1.0 + r))[self.site]  # (R,)
        self.growth = wealth[self.site] * (np.expm1(z) - r)  # (R,)
        self.mode = "terminal"
        if next_value is not None:
            powers = z[:, None] ** np.arange(1, m + 1)
            next_mom = (c_eff * moments[self.site] + powers) / (c_eff + 1.0)
            self.queries = np.empty((z.shape[0], 1 + m))
            self.queries[:, 1:] = next_mom
            if isinstance(next_value, gp.ConstantSurrogate):
                self.mode = "constant"
                self.const = float(next_value.value)
            elif isinstance(next_value, gp.Surrogate):
                self.mode = "column"
                self.column_pred = gp.ColumnVaryingPredictor(next_value, self.queries)
            else:
                self.mode = "callable"
                self.next_value = next_value

    def values(self, u: np.ndarray) -> np.ndarray:
        w = self.bank + u[self.site] * self.growth
        if self.mode == "terminal":
            v = utility(w, self.eta)
        elif self.mode == "constant":
            v = np.full(w.shape[0], self.const)
        elif self.mode == "column":
            v = self.column_pred.predict_column(w)
        else:
            self.queries[:, 0] = w
            v = self.next_value(self.queries)
        return np.bincount(self.site, weights=self.weight * v, minlength=self.n_sites)


def _site_rng(inner_seed: int, stage: int, site: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((inner_seed, stage, site)))


def _block_size(n_draws: int, n_train: int) -> int:
    # Keeps the transient kernel block near 6e6 entries regardless of scale.
    return int(np.clip(6_000_000 // max(1, n_draws * n_train), 4, 64))


def _stage_values_fn(blocks, slices, n_sites, pool):
    def f(u: np.ndarray) -> np.ndarray:
        out = np.empty(n_sites)
        if pool is None:
            for blk, sl in zip(blocks, slices):
                out[sl] = blk.values(u[sl])
        else:
            def run(pair):
                blk, sl = pair
                return sl, blk.values(u[sl])

            for sl, vals in pool.map(run, zip(blocks, slices)):
                out[sl] = vals
        return out

    return f


def _build_stage_blocks(mesh, t, config, next_value, inner_seed):
    """Assemble fixed-size site blocks with per-site belief draws for stage t."""
    n = mesh.n_paths
    c_eff = mesh.c0 + mesh.initial_posterior.t + t
    bs = _block_size(config.L, n)
    blocks, slices = [], []
    for start in range(0, n, bs):
        sl = slice(start, min(start + bs, n))
        draws = np.empty((sl.stop - sl.start, config.L))
        for i in range(sl.start, sl.stop):
            rng = _site_rng(inner_seed, t, i)
            draws[i - sl.start] = sample_posterior_mean(mesh.site_posterior(i, t), config.L, rng)
        blocks.append(
            _StageBlock(
                wealth=mesh.wealth[sl, t],
                moments=mesh.moments[sl, t],
                draws=draws,
                c_eff=c_eff,
                r=config.r,
                m=config.M,
                next_value=next_value,
                eta=config.eta,
            )
        )
        slices.append(sl)
    return blocks, slices


def stage_value_estimate(site: AugmentedState, u: float, next_value, config, rng) -> float:
    """Monte Carlo stage value at one site and control.

    Averages the next-stage value over ``config.L`` draws from the site's
    belief measure; ``next_value`` is a fitted surrogate, a callable on
    reduced-state query matrices, or None for the terminal utility.  The
    same draws would be reused for any other control at this site; callers
    that sweep controls should hold ``rng`` fixed or use the solver loop.
    """
    draws = sample_posterior_mean(site.posterior, config.L, rng)
    block = _StageBlock(
        wealth=np.array([site.wealth]),
        moments=posterior_moments(site.posterior, config.M)[None, :],
        draws=draws[None, :],
        c_eff=site.posterior.c0 + site.posterior.t,
        r=config.r,
        m=config.M,
        next_value=next_value,
        eta=config.eta,
    )
    return float(block.values(np.array([float(u)]))[0])


# ---------------------------------------------------------------------------
# policy


@dataclass(frozen=True)
class StageSurrogates:
    """Fitted value and control surfaces for one interior stage."""

    value: object
    control: object


@dataclass(frozen=True)
class Policy:
    """Per-stage surrogates plus the direct decision at the known initial state.

    ``stages[t]`` (t = 1..T-1) holds the surrogates trained at stage t; the
    stage-0 decision is a single direct optimization because every design
    path starts from the same state.  Control-surrogate outputs must be
    clamped to [0, 1] wherever they are used.
    """

    method: str
    c0: float | None
    horizon: int
    root_control: float
    root_value: float
    eta: float
    r: float
    y0: float
    stages: dict[int, StageSurrogates] = field(default_factory=dict)

    def __post_init__(self):
        expected = set(range(1, self.horizon))
        if set(self.stages) != expected:
            raise ValueError(
                f"policy must carry surrogates exactly for stages {sorted(expected)}"
            )


def _fit_seed(design_seed: int, method_code: int, stage: int, role: int) -> int:
    return int(np.random.SeedSequence((design_seed, method_code, stage, role)).generate_state(1)[0])


def backward_induction(config, mesh: DesignMesh, threads: int = 1) -> Policy:
    """Solve the Bellman recursion on the mesh; returns the fitted policy.

    At the last stage the transitioned states are scored by the closed-form
    terminal utility; earlier stages score them through the value surrogate
    fitted one stage later.  Site optimizations within a stage run in
    lockstep (optionally across ``threads`` workers over fixed-size blocks);
    surrogate fitting is a stage-level barrier.
    """
    horizon = config.T
    if mesh.horizon != horizon or mesh.n_paths != config.N:
        raise ValueError("mesh shape disagrees with config")
    inner_seed = config.seeds.inner
    design_seed = config.seeds.design
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        stages: dict[int, StageSurrogates] = {}
        next_value = None  # terminal stage uses the closed-form utility
        for t in range(horizon - 1, 0, -1):
            blocks, slices = _build_stage_blocks(mesh, t, config, next_value, inner_seed)
            f = _stage_values_fn(blocks, slices, mesh.n_paths, pool)
            u_star, values = maximize_unit_batched(f, mesh.n_paths)
            reduced = mesh.reduced(t)
            try:
                value_surr = gp.fit(reduced, values, _fit_seed(design_seed, 0, t, 0))
                control_surr = gp.fit(reduced, u_star, _fit_seed(design_seed, 0, t, 1))
            except gp.FitError as exc:
                raise gp.FitError(f"surrogate fit failed at stage {t}: {exc}") from exc
            stages[t] = StageSurrogates(value=value_surr, control=control_surr)
            next_value = value_surr

        root_site = AugmentedState(wealth=config.y0, posterior=mesh.initial_posterior)
        root_rng = _site_rng(inner_seed, 0, 0)
        draws = sample_posterior_mean(root_site.posterior, config.L, root_rng)
        root_block = _StageBlock(
            wealth=np.array([root_site.wealth]),
            moments=posterior_moments(root_site.posterior, config.M)[None, :],
            draws=draws[None, :],
            c_eff=mesh.c0 + mesh.initial_posterior.t,
            r=config.r,
            m=config.M,
            next_value=next_value,
            eta=config.eta,
        )
        u0, w0 = maximize_unit_batched(root_block.values, 1)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    return Policy(
        method="ab",
        c0=mesh.c0,
        horizon=horizon,
        root_control=float(u0[0]),
        root_value=float(w0[0]),
        eta=config.eta,
        r=config.r,
        y0=config.y0,
        stages=stages,
    )
