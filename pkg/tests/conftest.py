"""Shared fixtures: baseline setup and the expensive artifacts (baseline
trajectory, fixed point) computed once per session."""

from __future__ import annotations

import numpy as np
import pytest

from gcdsim import macro
from gcdsim.integrate import RunConfig, integrate
from gcdsim.stationary import solve_stationary


@pytest.fixture(scope="session")
def params():
    return macro.MacroParams()


@pytest.fixture(scope="session")
def x0(params):
    return macro.baseline_state(params)


@pytest.fixture(scope="session")
def model(params):
    return macro.build_model(params)


@pytest.fixture(scope="session")
def baseline_traj(params, x0):
    return integrate(params, None, x0, RunConfig())


@pytest.fixture(scope="session")
def fixed_point(params, baseline_traj):
    return solve_stationary(params, baseline_traj.final_state)


def random_feasible_states(params, n, sigma=0.25, seed=1234):
    """Log-normal perturbations of the baseline start, rejecting draws
    outside the feasible region."""
    base = macro.baseline_state(params).to_vector()
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        draw = base * np.exp(sigma * rng.standard_normal(macro.N_STATE))
        if macro.validate_state(draw, params):
            continue
        out.append(draw)
    return out
