"""Brute-force dynamic programming on tiny discrete-return instances.

Independent yardstick for the surrogate solver: beliefs are finite
weighted-atom measures, expectations are exact sums, and controls are
swept on a dense grid.  The formulas here are deliberately written in
their naive textbook form, separate from the solver's numerics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["OracleInstance", "OracleReport", "load_instance", "solve_instance"]

MAX_HORIZON = 2
MAX_ATOMS = 8


@dataclass(frozen=True)
class OracleInstance:
    """A discrete-return control problem small enough to enumerate.

    ``atoms``/``probs`` give both the initial belief and the branch measure;
    ``prior_count`` is the total prior mass behind that belief, so observing
    atom k moves the weights to ``(prior_count * w + e_k) / (prior_count + 1)``.
    """

    horizon: int
    r: float
    eta: float
    y0: float
    atoms: tuple[float, ...]
    probs: tuple[float, ...]
    prior_count: float
    control_step: float = 1e-3

    def __post_init__(self):
        if self.horizon not in (1, MAX_HORIZON):
            raise ValueError(f"oracle supports horizons 1..{MAX_HORIZON}, got {self.horizon}")
        if not (0 < len(self.atoms) <= MAX_ATOMS):
            raise ValueError(f"oracle supports at most {MAX_ATOMS} return atoms")
        if len(self.atoms) != len(self.probs):
            raise ValueError("atoms and probs must have equal length")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must sum to 1")
        if any(p < 0 for p in self.probs):
            raise ValueError("probs must be non-negative")
        if self.eta <= 1.0 or self.y0 <= 0.0 or self.prior_count <= 0.0:
            raise ValueError("need eta > 1, y0 > 0, prior_count > 0")
        if not (0.0 < self.control_step <= 0.1):
            raise ValueError("control_step must be in (0, 0.1]")


@dataclass(frozen=True)
class OracleReport:
    u_star: float
    value: float
    control_step: float


def load_instance(path) -> OracleInstance:
    """Parse a flat key=value instance file ('#' starts a comment)."""
    fields: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed instance line: {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            fields[key] = val
    try:
        return OracleInstance(
            horizon=int(fields["T"]),
            r=float(fields["r"]),
            eta=float(fields["eta"]),
            y0=float(fields["y0"]),
            atoms=tuple(float(v) for v in fields["atoms"].split(",")),
            probs=tuple(float(v) for v in fields["probs"].split(",")),
            prior_count=float(fields["prior_count"]),
            control_step=float(fields.get("control_step", "1e-3")),
        )
    except KeyError as exc:
        raise ValueError(f"instance file is missing key {exc.args[0]!r}") from exc


def _resolution(step: float) -> int:
    return int(round(1.0 / step)) + 1


def solve_instance(inst: OracleInstance) -> OracleReport:
    """Exhaustive-grid dynamic programming; ties break toward the smaller control."""
    grid = np.linspace(0.0, 1.0, _resolution(inst.control_step))
    z = np.asarray(inst.atoms)
    p = np.asarray(inst.probs)
    growth = np.exp(z) - 1.0 - inst.r  # naive form, on purpose
    eta, r, y0 = inst.eta, inst.r, inst.y0

    def crra(y):
        return (y ** (1.0 - eta) - 1.0) / (1.0 - eta)

    # wealth factors per (grid control, atom)
    fac = 1.0 + r + grid[:, None] * growth[None, :]

    if inst.horizon == 1:
        vals = (crra(y0 * fac) * p[None, :]).sum(axis=1)
        k = int(vals.argmax())
        return OracleReport(u_star=float(grid[k]), value=float(vals[k]), control_step=inst.control_step)

    # horizon 2: per first-stage branch, the belief shifts toward the observed atom
    n0 = inst.prior_count
    branch_w = (n0 * p[None, :] + np.eye(len(z))) / (n0 + 1.0)  # (K branches, K atoms)

    def stage1_value(y1: np.ndarray, w: np.ndarray) -> np.ndarray:
        # y1: states, w: (K,) belief weights; returns best achievable value per state
        util = crra(y1[:, None, None] * fac[None, :, :])  # (S, grid, K)
        return (util * w[None, None, :]).sum(axis=2).max(axis=1)

    y1 = y0 * fac  # (grid, K): wealth after (u0, branch k)
    v1 = np.empty_like(y1)
    for k in range(len(z)):
        v1[:, k] = stage1_value(y1[:, k], branch_w[k])
    vals0 = (v1 * p[None, :]).sum(axis=1)
    k0 = int(vals0.argmax())
    return OracleReport(u_star=float(grid[k0]), value=float(vals0[k0]), control_step=inst.control_step)
