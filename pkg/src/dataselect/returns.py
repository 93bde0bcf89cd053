"""Trajectory returns, floor normalization and the estimated relative return improvement (ERI)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, segment_trajectories


class ReturnError(ValueError):
    pass


def discounted_return(rewards, discount: float = 1.0) -> float:
    """Sum of ``discount**t * rewards[t]`` with t counted from the trajectory start.

    Accumulates in float64 regardless of the input dtype.
    """
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if r.size == 0:
        raise ReturnError("empty trajectory")
    if not (0.0 < discount <= 1.0):
        raise ReturnError("discount must lie in (0, 1]")
    if discount == 1.0:
        return float(np.sum(r))
    weights = discount ** np.arange(r.size, dtype=np.float64)
    return float(np.dot(weights, r))


def trajectory_returns(d: Dataset, discount: float | None = None) -> np.ndarray:
    gamma = d.meta.discount if discount is None else discount
    return np.array(
        [discounted_return(d.rewards[s:e], gamma) for s, e in segment_trajectories(d)]
    )


def normalize_returns(returns, floor: float) -> np.ndarray:
    """Shift returns by ``floor`` so they are non-negative.

    Raises if any trajectory's return lies below the floor.
    """
    r = np.asarray(returns, dtype=np.float64)
    out = r - float(floor)
    below = np.flatnonzero(out < 0)
    if below.size:
        i = int(below[0])
        raise ReturnError(
            f"floor above observed minimum: trajectory {i} has return {r[i]:.6g} < floor {floor:.6g}"
        )
    return out


def eri(normalized_returns) -> float:
    """(max - mean) / mean of floor-normalized returns."""
    r = np.asarray(normalized_returns, dtype=np.float64)
    if r.size == 0:
        raise ReturnError("no returns")
    mean = float(np.mean(r))
    if mean <= 0.0:
        raise ReturnError("degenerate return distribution: mean normalized return is 0")
    return max(0.0, (float(np.max(r)) - mean) / mean)


@dataclass(frozen=True)
class ReturnStats:
    returns: np.ndarray
    normalized_returns: np.ndarray
    mean_norm: float
    max_norm: float
    min_raw: float
    eri: float
    return_floor: float
    floor_source: str  # "declared" | "override" | "observed-min"
    warnings: tuple[str, ...] = field(default=())


def return_stats(
    d: Dataset, floor: float | None = None, discount: float | None = None
) -> ReturnStats:
    """Per-trajectory returns and ERI for one dataset.

    The floor is taken from ``floor`` if given, else from the dataset's
    metadata, else the observed minimum return (flagged in ``warnings``).
    """
    returns = trajectory_returns(d, discount)
    warnings: list[str] = []
    if floor is not None:
        used, source = float(floor), "override"
    elif d.meta.return_floor is not None:
        used, source = float(d.meta.return_floor), "declared"
    else:
        used, source = float(returns.min()), "observed-min"
        warnings.append(
            "no return floor declared; using the observed minimum return, "
            "so ERI's denominator depends on in-sample data"
        )
    norm = normalize_returns(returns, used)
    value = eri(norm)
    if returns.size == 1:
        warnings.append("dataset has a single trajectory; ERI is 0 by construction")
    return ReturnStats(
        returns=returns,
        normalized_returns=norm,
        mean_norm=float(norm.mean()),
        max_norm=float(norm.max()),
        min_raw=float(returns.min()),
        eri=value,
        return_floor=used,
        floor_source=source,
        warnings=tuple(warnings),
    )
