"""Belief measures over the one-period log-return.

The investor's belief is a weighted mixture of a Gaussian base measure and
the return values observed so far.  Observing a new return only reweights
the mixture and appends one atom, so beliefs are cheap to roll forward
along simulated paths.  The bimodal measure used to generate "true" market
returns lives here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "MAX_MOMENT",
    "PosteriorState",
    "MixtureMeasure",
    "posterior_update",
    "gaussian_raw_moments",
    "posterior_moments",
    "sample_posterior_mean",
    "mixture_draw",
    "sample_mixture",
]

# Analytic raw moments are wired up to this order.
MAX_MOMENT = 8


@dataclass(frozen=True)
class PosteriorState:
    """Gaussian base measure of mass ``c0`` plus unit-mass return atoms.

    Represents the probability measure

        (c0 * N(base_mean, base_var) + sum_s delta(atoms[s])) / (c0 + t)

    with ``t = len(atoms)``.  Immutable; updates return new instances.
    """

    c0: float
    base_mean: float
    base_var: float
    atoms: tuple[float, ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.c0) and self.c0 > 0.0):
            raise ValueError(f"prior mass c0 must be positive and finite, got {self.c0!r}")
        if not math.isfinite(self.base_mean):
            raise ValueError(f"base_mean must be finite, got {self.base_mean!r}")
        if not (math.isfinite(self.base_var) and self.base_var > 0.0):
            raise ValueError(f"base_var must be positive and finite, got {self.base_var!r}")
        object.__setattr__(self, "atoms", tuple(float(z) for z in self.atoms))
        if not all(math.isfinite(z) for z in self.atoms):
            raise ValueError("all atoms must be finite")

    @property
    def t(self) -> int:
        """Number of observed returns."""
        return len(self.atoms)

    @property
    def base_weight(self) -> float:
        return self.c0 / (self.c0 + self.t)

    @property
    def atom_weight(self) -> float:
        """Weight carried by each individual atom."""
        return 1.0 / (self.c0 + self.t)


@dataclass(frozen=True)
class MixtureMeasure:
    """Finite mixture of Gaussians, ``components = ((weight, mean, var), ...)``."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(w), float(m), float(v)) for (w, m, v) in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("mixture needs at least one component")
        wsum = math.fsum(w for w, _, _ in comps)
        if abs(wsum - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1 within 1e-12, got {wsum!r}")
        if any(w < 0.0 for w, _, _ in comps):
            raise ValueError("mixture weights must be non-negative")
        if any(v <= 0.0 for _, _, v in comps):
            raise ValueError("mixture variances must be positive")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _, _ in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([m for _, m, _ in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([v for _, _, v in self.components])

    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))


def posterior_update(state: PosteriorState, z: float) -> PosteriorState:
    """Fold one observed return into the belief.

    The returned measure equals ``((c0 + t) * old + delta_z) / (c0 + t + 1)``:
    the base keeps mass c0, every atom keeps mass 1, and z joins with mass 1.
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"observed return must be finite, got {z!r}")
    return replace(state, atoms=state.atoms + (z,))


def gaussian_raw_moments(mean: float, var: float, m: int) -> np.ndarray:
    """First ``m`` raw moments of N(mean, var).

    Uses the recursion E[X^k] = mean*E[X^(k-1)] + (k-1)*var*E[X^(k-2)],
    exact for Gaussians.  Supported up to order ``MAX_MOMENT``.
    """
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool):
        raise ValueError(f"moment count must be an integer, got {m!r}")
    if m < 1 or m > MAX_MOMENT:
        raise ValueError(f"moment count must be in [1, {MAX_MOMENT}], got {m}")
    if not (var > 0.0):
        raise ValueError(f"var must be positive, got {var!r}")
    out = np.empty(m)
    prev2, prev1 = 1.0, float(mean)  # E[X^0], E[X^1]
    out[0] = prev1
    for k in range(2, m + 1):
        prev2, prev1 = prev1, mean * prev1 + (k - 1) * var * prev2
        out[k - 1] = prev1
    return out


def posterior_moments(state: PosteriorState, m: int) -> np.ndarray:
    """First ``m`` raw moments of the belief measure.

    Weight-linear in the mixture: (c0 * base moments + sum_s z_s^k) / (c0 + t).
    """
    base = gaussian_raw_moments(state.base_mean, state.base_var, m)
    if state.t == 0:
        return base
    atoms = np.asarray(state.atoms)
    powers = atoms[:, None] ** np.arange(1, m + 1)
    return (state.c0 * base + powers.sum(axis=0)) / (state.c0 + state.t)


def sample_posterior_mean(state: PosteriorState, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. returns from the belief measure.

    Composite sampling: with probability c0/(c0+t) a Gaussian base draw,
    otherwise a uniformly chosen atom.  Deterministic given the generator
    state; ``count=0`` returns an empty array.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.empty(0)
    sd = math.sqrt(state.base_var)
    base = rng.normal(state.base_mean, sd, size=count)
    if state.t == 0:
        return base
    pick_base = rng.random(count) < state.base_weight
    idx = rng.integers(0, state.t, size=count)
    return np.where(pick_base, base, np.asarray(state.atoms)[idx])


def sample_mixture(measure: MixtureMeasure, shape, rng: np.random.Generator) -> np.ndarray:
    """Array of draws from a Gaussian mixture, component then value."""
    cum = np.cumsum(measure.weights)
    comp = np.searchsorted(cum, rng.random(shape), side="right")
    comp = np.minimum(comp, len(measure.components) - 1)
    sds = np.sqrt(measure.variances)
    return rng.normal(measure.means[comp], sds[comp])


def mixture_draw(measure: MixtureMeasure, rng: np.random.Generator) -> float:
    """Single draw from a Gaussian mixture."""
    return float(sample_mixture(measure, (), rng))
