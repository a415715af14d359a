"""Shared heavy fixtures: solved boundaries and lattice oracles per drift.

Solves are expensive (seconds each), so they are computed once per session
and memoized by drift; every test module pulls from the same cache.
"""

import numpy as np
import pytest

from lastzero import (ProblemSpec, SolverConfig, solve_boundaries,
                      LatticeSpec, bellman_solve)

T_DEFAULT = 1.0


@pytest.fixture(scope="session")
def boundaries_for():
    cache = {}

    def get(mu, n_steps=400):
        key = (mu, n_steps)
        if key not in cache:
            spec = ProblemSpec(mu=mu, T=T_DEFAULT)
            cache[key] = solve_boundaries(spec,
                                          SolverConfig(n_steps=n_steps))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def bellman_for():
    cache = {}

    def get(mu, n_t=2000, n_x=2001):
        key = (mu, n_t, n_x)
        if key not in cache:
            spec = ProblemSpec(mu=mu, T=T_DEFAULT)
            cache[key] = bellman_solve(spec, LatticeSpec(n_t=n_t, n_x=n_x))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def z_star_bellman(bellman_for):
    """Square-root-rule constant extracted from the mu=0 lattice oracle."""
    _, bb = bellman_for(0.0)
    mask = (bb.grid >= 0.05) & (bb.grid <= 0.9)
    return float(np.median(bb.b_plus[mask] / np.sqrt(T_DEFAULT - bb.grid[mask])))
