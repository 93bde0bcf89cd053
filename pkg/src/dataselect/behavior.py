"""Behavior cloning with a tanh-squashed Gaussian policy and the EAS indicator.

The policy is a small ReLU MLP feature map shared by a mean head and a
log-std head. Everything (forward pass, analytic NLL gradient, Adam) is
plain numpy in float64 so training is reproducible for a fixed seed and
the gradient can be audited against finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, normalize_actions

LOG_2PI = math.log(2.0 * math.pi)


class TrainingError(RuntimeError):
    """Non-finite loss during training."""

    def __init__(self, message: str, report: TrainReport | None = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class PolicyConfig:
    hidden: tuple[int, ...] = (100, 100)
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    log_std_bias_init: float = -1.0
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    standardize_states: bool = True
    sigma_reduction: str = "mean"  # or "max" over action dimensions

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be >= 1")
        if not self.log_std_min < self.log_std_max:
            raise ValueError("log_std_min must be below log_std_max")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.sigma_reduction not in ("mean", "max"):
            raise ValueError("sigma_reduction must be 'mean' or 'max'")


@dataclass
class BehaviorPolicy:
    """Parameters of the fitted policy.

    ``params`` holds ``W{i}``/``b{i}`` for the hidden layers and
    ``W_mu``/``b_mu``, ``W_ls``/``b_ls`` for the two heads. Weights are
    stored input-major, i.e. a layer computes ``x @ W + b``.
    """

    params: dict[str, np.ndarray]
    state_mean: np.ndarray
    state_std: np.ndarray
    config: PolicyConfig

    @property
    def state_dim(self) -> int:
        return self.params["W0"].shape[0]

    @property
    def action_dim(self) -> int:
        return self.params["W_mu"].shape[1]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def standardize(self, states) -> np.ndarray:
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return (s - self.state_mean) / self.state_std

    def predict(self, states) -> tuple[np.ndarray, np.ndarray]:
        """Pre-tanh mean and standard deviation for each state."""
        mu, log_std, _ = _forward(self.params, self.standardize(states), self.config)
        return mu, np.exp(log_std)


@dataclass
class TrainReport:
    epoch_nll: list[float]
    final_nll: float
    epochs_run: int
    seed: int
    n_steps: int
    n_transitions: int
    config: dict = field(default_factory=dict)


def param_names(n_hidden: int) -> list[str]:
    names = []
    for i in range(n_hidden):
        names += [f"W{i}", f"b{i}"]
    return names + ["W_mu", "b_mu", "W_ls", "b_ls"]


def init_policy(
    state_dim: int,
    action_dim: int,
    config: PolicyConfig | None = None,
    rng: np.random.Generator | None = None,
) -> BehaviorPolicy:
    """Uniform fan-in initialization; the log-std head bias starts at ``log_std_bias_init``."""
    config = config or PolicyConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    fan_in = state_dim
    for i, width in enumerate(config.hidden):
        bound = 1.0 / math.sqrt(fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, width))
        params[f"b{i}"] = rng.uniform(-bound, bound, size=width)
        fan_in = width
    bound = 1.0 / math.sqrt(fan_in)
    params["W_mu"] = rng.uniform(-bound, bound, size=(fan_in, action_dim))
    params["b_mu"] = rng.uniform(-bound, bound, size=action_dim)
    params["W_ls"] = rng.uniform(-bound, bound, size=(fan_in, action_dim))
    params["b_ls"] = np.full(action_dim, config.log_std_bias_init, dtype=np.float64)
    return BehaviorPolicy(
        params=params,
        state_mean=np.zeros(state_dim),
        state_std=np.ones(state_dim),
        config=config,
    )


def _soft_clamp(raw: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    # scaled tanh: slope 1 at the midpoint, strictly inside (lo, hi), derivative never exactly 0
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    t = np.tanh((raw - mid) / half)
    return mid + half * t, 1.0 - t * t


def _forward(params: dict[str, np.ndarray], x: np.ndarray, config: PolicyConfig):
    n_hidden = len(config.hidden)
    acts = [x]
    pre = []
    h = x
    for i in range(n_hidden):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        h = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(h)
    mu = h @ params["W_mu"] + params["b_mu"]
    raw_ls = h @ params["W_ls"] + params["b_ls"]
    log_std, dclamp = _soft_clamp(raw_ls, config.log_std_min, config.log_std_max)
    return mu, log_std, (acts, pre, dclamp)


def _check_actions(actions_norm) -> np.ndarray:
    a = np.atleast_2d(np.asarray(actions_norm, dtype=np.float64))
    if np.any(np.abs(a) >= 1.0):
        raise ValueError("normalized actions must lie strictly inside (-1, 1); clip them first")
    return a


def log_prob(policy: BehaviorPolicy, states, actions_norm) -> np.ndarray | float:
    """Log density of normalized actions under the tanh-Gaussian policy.

    Accepts a single (state, action) pair or batches; returns a scalar or a
    vector accordingly.
    """
    single = np.ndim(actions_norm) == 1
    a = _check_actions(actions_norm)
    mu, log_std, _ = _forward(policy.params, policy.standardize(states), policy.config)
    out = _tanh_gaussian_logpdf(a, mu, log_std)
    return float(out[0]) if single else out


def _tanh_gaussian_logpdf(a: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    u = np.arctanh(a)
    z = (u - mu) * np.exp(-log_std)
    per_dim = -0.5 * z * z - log_std - 0.5 * LOG_2PI - np.log1p(-a * a)
    return per_dim.sum(axis=1)


def mean_nll(policy: BehaviorPolicy, states, actions_norm) -> float:
    return float(-np.mean(log_prob(policy, np.atleast_2d(states), np.atleast_2d(actions_norm))))


def _loss_and_grad(params, x, a, config):
    """Mean NLL over the batch and its gradient for every parameter tensor."""
    n = x.shape[0]
    mu, log_std, (acts, pre, dclamp) = _forward(params, x, config)
    u = np.arctanh(a)
    inv_std = np.exp(-log_std)
    z = (u - mu) * inv_std
    nll = -(-0.5 * z * z - log_std - 0.5 * LOG_2PI - np.log1p(-a * a)).sum(axis=1)
    loss = float(nll.mean())

    # d(mean nll)/d(mu) and d/d(raw log-std)
    g_mu = -z * inv_std / n
    g_raw_ls = (1.0 - z * z) * dclamp / n

    grads: dict[str, np.ndarray] = {}
    h = acts[-1]
    grads["W_mu"] = h.T @ g_mu
    grads["b_mu"] = g_mu.sum(axis=0)
    grads["W_ls"] = h.T @ g_raw_ls
    grads["b_ls"] = g_raw_ls.sum(axis=0)
    g_h = g_mu @ params["W_mu"].T + g_raw_ls @ params["W_ls"].T
    for i in reversed(range(len(config.hidden))):
        g_z = g_h * (pre[i] > 0.0)
        grads[f"W{i}"] = acts[i].T @ g_z
        grads[f"b{i}"] = g_z.sum(axis=0)
        if i:
            g_h = g_z @ params[f"W{i}"].T
    return loss, grads


def nll_gradient(policy: BehaviorPolicy, states, actions_norm) -> dict[str, np.ndarray]:
    """Exact gradient of the batch-mean NLL with respect to each parameter tensor."""
    a = _check_actions(actions_norm)
    _, grads = _loss_and_grad(policy.params, policy.standardize(states), a, policy.config)
    return grads


@dataclass
class GradientCheck:
    max_rel_error: float
    per_param: dict[str, float]
    n_coords: int
    n_kink_skipped: int


def _loss_and_pattern(params, x, a, config):
    mu, log_std, (_, pre, _) = _forward(params, x, config)
    loss = -float(np.mean(_tanh_gaussian_logpdf(a, mu, log_std)))
    return loss, [z > 0.0 for z in pre]


def _same_pattern(p, q) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(p, q))


def check_gradients(
    policy: BehaviorPolicy, states, actions_norm, h: float = 1e-4, abs_floor: float = 1e-8
) -> GradientCheck:
    """Compare ``nll_gradient`` with central finite differences over every coordinate.

    Relative error is ``|analytic - numeric| / max(|analytic|, |numeric|, abs_floor)``.
    A coordinate whose +-h perturbation flips any ReLU on/off straddles a kink,
    where central differences do not estimate the derivative; such coordinates
    are excluded and counted in ``n_kink_skipped``.
    """
    a = _check_actions(actions_norm)
    x = policy.standardize(states)
    config = policy.config
    _, analytic = _loss_and_grad(policy.params, x, a, config)
    _, base = _loss_and_pattern(policy.params, x, a, config)
    params = {k: v.copy() for k, v in policy.params.items()}
    per_param = {}
    n_coords = skipped = 0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = analytic[name].reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            plus, pat_plus = _loss_and_pattern(params, x, a, config)
            flat[j] = old - h
            minus, pat_minus = _loss_and_pattern(params, x, a, config)
            flat[j] = old
            if not (_same_pattern(pat_plus, base) and _same_pattern(pat_minus, base)):
                skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * h)
            denom = max(abs(g[j]), abs(numeric), abs_floor)
            worst = max(worst, abs(g[j] - numeric) / denom)
        per_param[name] = worst
        n_coords += flat.size
    return GradientCheck(max(per_param.values()), per_param, n_coords, skipped)


def _standardization(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = states.mean(axis=0)
    std = states.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return mean, std


def train_behavior_policy(
    d: Dataset,
    config: PolicyConfig | None = None,
    actions_norm: np.ndarray | None = None,
) -> tuple[BehaviorPolicy, TrainReport]:
    """Fit the policy by mini-batch Adam on the mean NLL.

    ``actions_norm`` defaults to ``normalize_actions(d).values``.
    """
    config = config or PolicyConfig()
    if d.n_transitions < 1:
        raise ValueError("dataset has no transitions")
    if actions_norm is None:
        actions_norm = normalize_actions(d).values
    a = _check_actions(actions_norm)
    states = d.states.astype(np.float64)
    if a.shape[0] != states.shape[0]:
        raise ValueError("actions and states disagree in length")

    rng = np.random.default_rng(config.seed)
    policy = init_policy(d.state_dim, d.action_dim, config, rng)
    if config.standardize_states:
        policy.state_mean, policy.state_std = _standardization(states)
    x_all = policy.standardize(states)

    params = policy.params
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    b1, b2 = config.beta1, config.beta2
    n = x_all.shape[0]
    step = 0
    history: list[float] = []

    def report(epochs_run: int) -> TrainReport:
        return TrainReport(
            epoch_nll=history,
            final_nll=history[-1] if history else float("nan"),
            epochs_run=epochs_run,
            seed=config.seed,
            n_steps=step,
            n_transitions=n,
            config=asdict(config),
        )

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = _loss_and_grad(params, x_all[idx], a[idx], config)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    f"try a smaller learning rate than {config.learning_rate:g} "
                    "or check the dataset for extreme state values",
                    report(epoch),
                )
            step += 1
            corr1 = 1.0 - b1**step
            corr2 = 1.0 - b2**step
            for k, g in grads.items():
                m[k] *= b1
                m[k] += (1.0 - b1) * g
                v[k] *= b2
                v[k] += (1.0 - b2) * g * g
                params[k] -= config.learning_rate * (m[k] / corr1) / (np.sqrt(v[k] / corr2) + config.adam_eps)
            total += loss * idx.size
        history.append(total / n)
    return policy, report(config.epochs)


def action_stochasticity_profile(
    policy: BehaviorPolicy, states, reduction: str | None = None, chunk: int = 65536
) -> np.ndarray:
    """Predicted pre-tanh standard deviation per state, reduced over action dimensions.

    ``states`` may be a ``Dataset`` or an array of raw states.
    """
    if isinstance(states, Dataset):
        states = states.states
    reduction = reduction or policy.config.sigma_reduction
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    out = np.empty(states.shape[0])
    for start in range(0, states.shape[0], chunk):
        _, std = policy.predict(states[start : start + chunk])
        out[start : start + chunk] = std.max(axis=1) if reduction == "max" else std.mean(axis=1)
    return out


def eas(profile) -> float:
    """Mean estimated action stochasticity."""
    p = np.asarray(profile, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty action-stochasticity profile")
    return float(p.mean())


# --------------------------------------------------------------------------
# serialization: JSON manifest + little-endian float64 parameter blob


def save_policy(policy: BehaviorPolicy, path: str | Path) -> Path:
    path = Path(path)
    blob_path = path.with_suffix(".params.bin")
    names = param_names(len(policy.config.hidden))
    tensors = [policy.state_mean, policy.state_std] + [policy.params[k] for k in names]
    layout = [{"name": "state_mean", "shape": list(policy.state_mean.shape)},
              {"name": "state_std", "shape": list(policy.state_std.shape)}]
    layout += [{"name": k, "shape": list(policy.params[k].shape)} for k in names]
    blob_path.write_bytes(b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in tensors))
    manifest = {
        "kind": "tanh-gaussian-behavior-policy",
        "config": asdict(policy.config),
        "tensors": layout,
        "data_file": blob_path.name,
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_policy(path: str | Path) -> BehaviorPolicy:
    path = Path(path)
    manifest = json.loads(path.read_text())
    config = PolicyConfig(**manifest["config"])
    raw = np.fromfile(path.parent / manifest["data_file"], dtype="<f8")
    tensors = {}
    offset = 0
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        tensors[entry["name"]] = raw[offset : offset + size].reshape(entry["shape"]).copy()
        offset += size
    if offset != raw.size:
        raise ValueError(f"parameter blob has {raw.size} values, manifest describes {offset}")
    mean, std = tensors.pop("state_mean"), tensors.pop("state_std")
    return BehaviorPolicy(params=tensors, state_mean=mean, state_std=std, config=config)
