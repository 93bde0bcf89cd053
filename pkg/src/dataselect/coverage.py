"""Hypercube state-coverage ratio.

This is a diagnostic only. It was reported as uncorrelated with exploration
or algorithm performance and is never folded into COI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class CoverageResult:
    observed_min: np.ndarray
    observed_max: np.ndarray
    log_observed_volume: float
    log_full_volume: float
    ratio: float
    excluded_dims: tuple[int, ...]
    out_of_range_dims: tuple[int, ...]


def coverage_ratio(d: Dataset) -> CoverageResult | None:
    """Volume of the observed state bounding box over the declared one.

    Returns ``None`` when the dataset declares no state ranges. Volumes are
    accumulated in log space; observed extents are intersected with the
    declared box so the ratio stays in [0, 1]. Dimensions with zero declared
    width are left out of both products and listed in ``excluded_dims``.
    """
    meta = d.meta
    if not meta.has_state_ranges:
        return None
    states = d.states.astype(np.float64)
    obs_lo, obs_hi = states.min(axis=0), states.max(axis=0)
    lo, hi = meta.state_min, meta.state_max
    outside = (obs_lo < lo) | (obs_hi > hi)

    width = hi - lo
    keep = width > 0
    obs_width = np.minimum(obs_hi, hi) - np.maximum(obs_lo, lo)
    obs_width = np.maximum(obs_width, 0.0)
    with np.errstate(divide="ignore"):
        log_obs = float(np.sum(np.log(obs_width[keep])))
    log_full = float(np.sum(np.log(width[keep])))
    ratio = float(np.exp(log_obs - log_full)) if keep.any() else 1.0
    return CoverageResult(
        observed_min=obs_lo,
        observed_max=obs_hi,
        log_observed_volume=log_obs,
        log_full_volume=log_full,
        ratio=min(1.0, ratio),
        excluded_dims=tuple(int(i) for i in np.flatnonzero(~keep)),
        out_of_range_dims=tuple(int(i) for i in np.flatnonzero(outside)),
    )
