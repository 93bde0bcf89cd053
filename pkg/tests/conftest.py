import math

import numpy as np
import pytest

from dataselect.behavior import PolicyConfig, init_policy
from dataselect.data import Dataset, DatasetMeta
from dataselect.report import benchmark_fixture_path, load_rank_fixtures

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(n=6, state_dim=2, action_dim=1, starts=(0,), rewards=None, meta=None, seed=0, name="toy"):
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(n, state_dim))
    actions = rng.uniform(-0.9, 0.9, size=(n, action_dim))
    if rewards is None:
        rewards = rng.uniform(0, 1, size=n)
    return Dataset(
        name=name,
        states=states,
        actions=actions,
        rewards=np.asarray(rewards, dtype=float),
        next_states=np.roll(states, -1, axis=0),
        episode_starts=np.asarray(starts),
        meta=meta or DatasetMeta(),
    )


def raw_for_log_std(log_std, lo=-5.0, hi=2.0):
    """Pre-clamp head output that produces ``log_std`` after the soft clamp."""
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + half * math.atanh((log_std - mid) / half)


def constant_policy(mu, sigma, state_dim=1):
    """Policy whose outputs ignore the state: mean ``mu`` and std ``sigma`` per action dim."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    policy = init_policy(state_dim, mu.size, PolicyConfig(hidden=(4,)), np.random.default_rng(0))
    policy.params["W_mu"][:] = 0.0
    policy.params["b_mu"][:] = mu
    policy.params["W_ls"][:] = 0.0
    policy.params["b_ls"][:] = [raw_for_log_std(math.log(s)) for s in sigma]
    return policy


@pytest.fixture
def ib_fixtures():
    return load_rank_fixtures(benchmark_fixture_path("ib"))


@pytest.fixture
def mujoco_fixtures():
    return load_rank_fixtures(benchmark_fixture_path("mujoco"))
