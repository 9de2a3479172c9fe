"""Shared fixtures: benchmark games, the Smith protocol, converged runs.

The long runs are session scoped so the expensive trajectories are computed
once and shared by the module tests and the acceptance gate.
"""

import numpy as np
import pytest

import popdyn as pd


def random_simplex(rng, dim, mass):
    # independent of the package's own sampler on purpose
    e = rng.exponential(size=dim)
    return mass * e / e.sum()


def null_dual(game):
    mu = np.zeros(game.q + 1)
    mu[0] = game.dual_mass
    return pd.DualState(mu, mass=game.dual_mass)


def read_csv_rows(path):
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


@pytest.fixture(scope="session")
def smith():
    return pd.smith_protocol()


@pytest.fixture(scope="session")
def congestion():
    return pd.paper_congestion()


@pytest.fixture(scope="session")
def rps():
    return pd.paper_rps()


@pytest.fixture(scope="session")
def congestion_run(congestion, smith):
    x0 = pd.sample_simplex(congestion.n, congestion.primal_mass, seed=0)
    traj = pd.integrate(
        congestion,
        smith,
        x0,
        null_dual(congestion),
        pd.SimParams(horizon=200.0, step=0.01),
    )
    assert traj.converged, "benchmark congestion run must settle within the horizon"
    return traj


@pytest.fixture(scope="session")
def rps_run(rps, smith):
    x0 = pd.PrimalState(np.full(3, 1.0 / 3.0), mass=1.0)
    return pd.integrate(
        rps,
        smith,
        x0,
        null_dual(rps),
        pd.SimParams(horizon=200.0, step=0.01),
    )


@pytest.fixture(scope="session")
def congestion_oracle(congestion):
    return pd.oracle_solve(congestion, resolution=200, refine_iters=2000, seed=0)
