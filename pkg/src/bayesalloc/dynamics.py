"""Wealth dynamics, terminal utility, and the augmented (wealth, belief) state.

One trading period moves wealth by ``y * (1 + r + u*(e^z - 1 - r))`` where
``u`` is the fraction held in the risky asset and ``z`` its log-return; the
belief gains the observed return as a new atom.  Controls live in [0, 1] so
wealth stays strictly positive for any finite return path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import PosteriorState, posterior_moments, posterior_update

__all__ = [
    "AugmentedState",
    "wealth_step",
    "utility",
    "utility_bound",
    "transition",
    "reduce_state",
]


@dataclass(frozen=True)
class AugmentedState:
    """Current wealth paired with the current belief about the return law."""

    wealth: float
    posterior: PosteriorState

    def __post_init__(self):
        if not (math.isfinite(self.wealth) and self.wealth > 0.0):
            raise ValueError(f"wealth must be positive and finite, got {self.wealth!r}")


def wealth_step(y, u, r, z):
    """One-period wealth update ``y * (1 + r + u*(e^z - 1 - r))``.

    Accepts scalars or arrays.  With ``u`` in [0, 1] and ``1 + r > 0`` the
    result is a convex combination of ``1 + r`` and ``e^z`` scaled by ``y``,
    hence strictly positive for finite ``z``.
    """
    if np.any(np.asarray(u) < 0.0) or np.any(np.asarray(u) > 1.0):
        raise ValueError("control must lie in [0, 1]")
    if np.any(np.asarray(y) <= 0.0):
        raise ValueError("wealth must be positive")
    if not (1.0 + r > 0.0):
        raise ValueError(f"per-period rate must satisfy 1 + r > 0, got r={r!r}")
    return y * (1.0 + r + u * (np.expm1(z) - r))


def utility(y, eta: float):
    """CRRA utility ``(y^(1-eta) - 1) / (1 - eta)`` for ``eta > 1``.

    Evaluated as ``expm1((1-eta)*log y) / (1-eta)`` so that risk-aversion
    levels barely above 1 keep close to full precision.  Strictly increasing
    in ``y`` and bounded above by ``1 / (eta - 1)``.
    """
    if eta <= 1.0:
        raise ValueError(f"risk aversion eta must exceed 1, got {eta!r}")
    if np.any(np.asarray(y) <= 0.0):
        raise ValueError("utility requires positive wealth")
    return np.expm1((1.0 - eta) * np.log(y)) / (1.0 - eta)


def utility_bound(eta: float) -> float:
    """Least upper bound of the utility, ``1 / (eta - 1)``."""
    return 1.0 / (eta - 1.0)


def transition(
    t: int,
    state: AugmentedState,
    u: float,
    z: float,
    r: float,
    c0: float | None = None,
) -> AugmentedState:
    """Joint one-period update of wealth and belief.

    ``t`` is the stage index; the belief-update weight is governed by the
    belief's own atom count, which equals ``t`` on-policy but may differ for
    synthetic states.  ``c0``, when given, must match the belief's prior mass.
    """
    if t < 0:
        raise ValueError(f"stage index must be non-negative, got {t}")
    if c0 is not None and c0 != state.posterior.c0:
        raise ValueError(
            f"prior mass mismatch: got {c0!r}, state carries {state.posterior.c0!r}"
        )
    return AugmentedState(
        wealth=float(wealth_step(state.wealth, u, r, z)),
        posterior=posterior_update(state.posterior, z),
    )


def reduce_state(state: AugmentedState, m: int) -> np.ndarray:
    """Finite-dimensional image ``(wealth, m^1, ..., m^M)`` used for regression."""
    return np.concatenate(([state.wealth], posterior_moments(state.posterior, m)))
