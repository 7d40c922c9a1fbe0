import numpy as np
import pytest

from bayesalloc.config import ExperimentConfig, derive_seeds
from bayesalloc.gp import fit as gp_fit
from bayesalloc.measures import MixtureMeasure
from bayesalloc.solver_ab import Policy, StageSurrogates


def make_config(**overrides) -> ExperimentConfig:
    """Small but non-trivial configuration for fast solver tests."""
    base = dict(
        T=3,
        r=0.02 / 30,
        eta=1.5,
        y0=100.0,
        N=40,
        N_prime=30,
        L=120,
        M=4,
        t0=50,
        c0_list=(1.0,),
        confidence_level=0.8,
        sampling_measure=MixtureMeasure(
            ((0.5, -0.02 / 30, 0.16 / 30), (0.5, 0.13 / 30, 0.09 / 30))
        ),
        seeds=derive_seeds(4242),
        mu0_hat=4.615e-3,
        sigma0_sq_hat=5.609e-2**2,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def constant_control_policy(config, control: float, method: str = "sr") -> Policy:
    """Policy whose every stage plays a fixed control; for evaluation stubs."""
    dims = {"sr": 1, "ab": 1 + config.M, "ad": 3}[method]
    x = np.tile(np.linspace(90.0, 110.0, 4)[:, None], (1, dims))
    surr = gp_fit(x, np.full(4, control), seed=0)
    stages = {
        t: StageSurrogates(value=gp_fit(x, np.zeros(4), seed=0), control=surr)
        for t in range(1, config.T)
    }
    return Policy(
        method=method,
        c0=config.c0_list[0] if method == "ab" else None,
        horizon=config.T,
        root_control=control,
        root_value=0.0,
        eta=config.eta,
        r=config.r,
        y0=config.y0,
        stages=stages,
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240809)
