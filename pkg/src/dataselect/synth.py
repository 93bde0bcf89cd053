"""Synthetic datasets with known action stochasticity and expected return.

States follow a stationary AR(1) process (unit marginal variance, clipped
to +-STATE_BOUND), independent of actions. Actions are
``tanh(mean_fn(state) + sigma * noise)``. Because the state marginal is
standard normal, the expected per-step reward is a 1-D or 2-D Gaussian
integral, evaluated by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, DatasetMeta

STATE_BOUND = 5.0
LOG_STD_RANGE = (-5.0, 2.0)
MEAN_FNS = ("zero", "linear", "sinusoidal")
REWARD_FNS = ("action-quadratic", "state-linear")


@dataclass(frozen=True)
class SynthConfig:
    state_dim: int = 3
    action_dim: int = 2
    n_trajectories: int = 200
    trajectory_length: int = 100
    mean_fn: str = "linear"
    sigma_true: float = 0.3
    reward_fn: str = "action-quadratic"
    seed: int = 0
    # optional second behavior policy, chosen per trajectory with probability mix_fraction
    sigma_mix: float | None = None
    mix_fraction: float = 0.5
    state_rho: float = 0.9
    discount: float = 1.0
    name: str | None = None

    def __post_init__(self) -> None:
        for key in ("state_dim", "action_dim", "n_trajectories", "trajectory_length"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be >= 1")
        if self.mean_fn not in MEAN_FNS:
            raise ValueError(f"mean_fn must be one of {MEAN_FNS}")
        if self.reward_fn not in REWARD_FNS:
            raise ValueError(f"reward_fn must be one of {REWARD_FNS}")
        lo, hi = math.exp(LOG_STD_RANGE[0]), math.exp(LOG_STD_RANGE[1])
        for key in ("sigma_true", "sigma_mix"):
            s = getattr(self, key)
            # small tolerance so sigma_true=exp(-5) written as a rounded literal still passes
            if s is not None and not (lo * (1 - 1e-6) <= s <= hi * (1 + 1e-6)):
                raise ValueError(f"{key} must lie in [e^-5, e^2], got {s}")
        if not 0.0 <= self.mix_fraction <= 1.0:
            raise ValueError("mix_fraction must lie in [0, 1]")
        if not -1.0 < self.state_rho < 1.0:
            raise ValueError("state_rho must lie in (-1, 1)")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")

    @property
    def n_transitions(self) -> int:
        return self.n_trajectories * self.trajectory_length

    @property
    def dataset_name(self) -> str:
        if self.name:
            return self.name
        return f"synth-{self.mean_fn}-sigma{self.sigma_true:g}-seed{self.seed}"


@dataclass(frozen=True)
class GroundTruth:
    sigma_true: float
    sigma_mix: float | None
    trajectory_sigma: np.ndarray
    expected_step_reward: float
    expected_return: float
    empirical_noise_std: float
    config: dict


def _mean_weights(rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    return 0.8 * rng.normal(size=(config.state_dim, config.action_dim)) / math.sqrt(config.state_dim)


def _mean_fn(kind: str, states: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if kind == "zero":
        return np.zeros((states.shape[0], weights.shape[1]))
    proj = states @ weights
    return proj if kind == "linear" else np.sin(proj)


def _expected_step_reward(config: SynthConfig, weights: np.ndarray, sigma: float) -> float:
    if config.reward_fn == "state-linear":
        # symmetric clipped AR(1) marginal has zero mean
        return 0.0
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    total = 0.0
    for k in range(config.action_dim):
        scale = float(np.linalg.norm(weights[:, k]))
        if config.mean_fn == "zero" or scale == 0.0:
            pre = sigma * x
            e_sq = float(w @ np.tanh(pre) ** 2)
        elif config.mean_fn == "linear":
            pre = math.sqrt(scale**2 + sigma**2) * x
            e_sq = float(w @ np.tanh(pre) ** 2)
        else:
            pre = np.sin(scale * x)[:, None] + sigma * x[None, :]
            e_sq = float(w @ np.tanh(pre) ** 2 @ w)
        total += e_sq
    return 1.0 - total / config.action_dim


def generate(config: SynthConfig) -> tuple[Dataset, GroundTruth]:
    """Generate a dataset and its ground-truth record; deterministic in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    weights = _mean_weights(rng, config)
    n_traj, length = config.n_trajectories, config.trajectory_length
    ds, da = config.state_dim, config.action_dim

    if config.sigma_mix is None:
        traj_sigma = np.full(n_traj, config.sigma_true)
    else:
        use_mix = rng.random(n_traj) < config.mix_fraction
        traj_sigma = np.where(use_mix, config.sigma_mix, config.sigma_true)

    rho = config.state_rho
    innov = math.sqrt(1.0 - rho * rho)
    path = np.empty((n_traj, length + 1, ds))
    path[:, 0] = rng.normal(size=(n_traj, ds))
    for t in range(length):
        path[:, t + 1] = rho * path[:, t] + innov * rng.normal(size=(n_traj, ds))
    np.clip(path, -STATE_BOUND, STATE_BOUND, out=path)

    states = path[:, :-1].reshape(-1, ds)
    next_states = path[:, 1:].reshape(-1, ds)
    eps = rng.normal(size=(n_traj * length, da))
    noise = np.repeat(traj_sigma, length)[:, None] * eps
    actions = np.tanh(_mean_fn(config.mean_fn, states, weights) + noise)

    if config.reward_fn == "action-quadratic":
        rewards = 1.0 - np.mean(actions**2, axis=1)
        floor = 0.0
    else:
        rewards = states.mean(axis=1)
        floor = -STATE_BOUND * _horizon_weight(length, config.discount)

    meta = DatasetMeta(
        state_min=np.full(ds, -STATE_BOUND),
        state_max=np.full(ds, STATE_BOUND),
        action_min=-np.ones(da),
        action_max=np.ones(da),
        return_floor=floor,
        discount=config.discount,
    )
    dataset = Dataset(
        name=config.dataset_name,
        states=states,
        actions=actions,
        rewards=rewards,
        next_states=next_states,
        episode_starts=np.arange(0, n_traj * length, length),
        meta=meta,
    )

    sigmas = [config.sigma_true] if config.sigma_mix is None else [config.sigma_true, config.sigma_mix]
    frac = [1.0] if config.sigma_mix is None else [1.0 - config.mix_fraction, config.mix_fraction]
    step = sum(f * _expected_step_reward(config, weights, s) for f, s in zip(frac, sigmas))
    truth = GroundTruth(
        sigma_true=config.sigma_true,
        sigma_mix=config.sigma_mix,
        trajectory_sigma=traj_sigma,
        expected_step_reward=step,
        expected_return=step * _horizon_weight(length, config.discount),
        empirical_noise_std=float(noise.std()),
        config=asdict(config),
    )
    return dataset, truth


def _horizon_weight(length: int, discount: float) -> float:
    if discount == 1.0:
        return float(length)
    return (1.0 - discount**length) / (1.0 - discount)
