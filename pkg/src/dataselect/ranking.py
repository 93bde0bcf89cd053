"""Ranks, the combined offline indicator (COI), validation against TRI, and selection.

Rank convention throughout: ranks are 0..n-1 and a higher indicator value
gets a higher rank number, i.e. rank n-1 is the most promising dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

RANK_CONVENTION = "ascending ranks 0..n-1; higher value -> higher rank -> better"
COI_WEIGHTS = (2, 1)


class RankingError(ValueError):
    pass


def _names_or_index(n: int, names: Sequence[str] | None) -> list[str]:
    if names is None:
        return [f"{i:09d}" for i in range(n)]
    if len(names) != n:
        raise RankingError(f"{len(names)} names for {n} values")
    return list(names)


def rank_values(values, names: Sequence[str] | None = None) -> np.ndarray:
    """Ascending integer ranks; exact ties go to the lexicographically smaller name first."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise RankingError("cannot rank an empty vector")
    if not np.all(np.isfinite(v)):
        raise RankingError("non-finite value in ranking input")
    labels = _names_or_index(v.size, names)
    order = sorted(range(v.size), key=lambda i: (v[i], labels[i]))
    ranks = np.empty(v.size, dtype=np.int64)
    ranks[order] = np.arange(v.size)
    return ranks


def find_ties(values, names: Sequence[str] | None = None) -> list[list[str]]:
    """Groups of names whose values are exactly equal (groups of size >= 2)."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    labels = _names_or_index(v.size, names)
    groups: dict[float, list[str]] = {}
    for value, label in zip(v, labels):
        groups.setdefault(float(value), []).append(label)
    return [sorted(g) for g in groups.values() if len(g) > 1]


def is_permutation(ranks) -> bool:
    r = np.asarray(ranks)
    return r.ndim == 1 and np.array_equal(np.sort(r), np.arange(r.size))


def _check_permutations(a, b, what: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise RankingError(f"{what}: length mismatch ({a.size} vs {b.size})")
    for label, r in (("first", a), ("second", b)):
        if not is_permutation(r):
            raise RankingError(f"{what}: {label} argument is not a permutation of 0..n-1")
    return a.astype(np.int64), b.astype(np.int64)


def coi_scores(eri_ranks, eas_ranks) -> np.ndarray:
    eri_r, eas_r = _check_permutations(eri_ranks, eas_ranks, "coi_combine")
    return COI_WEIGHTS[0] * eri_r + COI_WEIGHTS[1] * eas_r


def coi_combine(eri_ranks, eas_ranks, names: Sequence[str] | None = None) -> np.ndarray:
    """Rank of ``2 * eri_rank + eas_rank``.

    Score ties go to the dataset with the higher EAS rank, then to the
    lexicographically larger name.
    """
    scores = coi_scores(eri_ranks, eas_ranks)
    eas_r = np.asarray(eas_ranks, dtype=np.int64)
    labels = _names_or_index(scores.size, names)
    order = sorted(range(scores.size), key=lambda i: (scores[i], eas_r[i], labels[i]))
    ranks = np.empty(scores.size, dtype=np.int64)
    ranks[order] = np.arange(scores.size)
    return ranks


def spearman_rho(ranks_a, ranks_b) -> float:
    """Spearman's rho for two tie-free rankings (permutations of 0..n-1)."""
    a, b = _check_permutations(ranks_a, ranks_b, "spearman_rho")
    n = a.size
    if n < 2:
        raise RankingError("spearman_rho needs n >= 2")
    d = a - b
    return 1.0 - 6.0 * float(np.dot(d, d)) / (n * (n * n - 1))


def rerank(ranks) -> np.ndarray:
    """Compress a subset of distinct ranks back to 0..m-1, preserving order."""
    r = np.asarray(ranks, dtype=np.int64)
    if np.unique(r).size != r.size:
        raise RankingError("rerank input contains duplicates")
    return np.argsort(np.argsort(r, kind="stable"), kind="stable").astype(np.int64)


def spearman_subset(ranks_a, ranks_b, keep) -> float:
    """Spearman's rho on a subset of datasets after re-ranking both columns within it."""
    keep = np.asarray(keep)
    a = np.asarray(ranks_a)[keep]
    b = np.asarray(ranks_b)[keep]
    return spearman_rho(rerank(a), rerank(b))


def top_half_size(n: int) -> int:
    return math.ceil(n / 2)


@dataclass(frozen=True)
class HalfSplit:
    correct: np.ndarray
    hits: int
    fraction: float
    top_size: int


def in_top_half(ranks) -> np.ndarray:
    r = np.asarray(ranks)
    return r >= r.size - top_half_size(r.size)


def half_split(coi_ranks, tri_ranks) -> HalfSplit:
    """Per-dataset flags: does the COI half (top/bottom) match the TRI half?

    For odd n the top half has ceil(n/2) members.
    """
    coi_r, tri_r = _check_permutations(coi_ranks, tri_ranks, "half_split")
    correct = in_top_half(coi_r) == in_top_half(tri_r)
    hits = int(correct.sum())
    return HalfSplit(correct=correct, hits=hits, fraction=hits / correct.size, top_size=top_half_size(correct.size))


def tri(r_algo: float, mean_data_return_norm: float) -> float:
    """True relative improvement (R_algo - mean data return) / mean data return.

    Both arguments must be normalized with the same return floor.
    """
    if mean_data_return_norm == 0:
        raise RankingError("mean normalized data return is 0; TRI undefined")
    return (r_algo - mean_data_return_norm) / mean_data_return_norm


def meta_return(
    delta_r: float, deploy_cost: float, fixed_cost: float, horizon: int, discount: float = 1.0
) -> float:
    """Discounted payoff ``sum_{t=0}^{H} discount^t * delta_r`` minus ``deploy_cost + fixed_cost``."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if not 0.0 < discount <= 1.0:
        raise ValueError("discount must lie in (0, 1]")
    if discount == 1.0:
        weight = horizon + 1.0
    else:
        weight = (1.0 - discount ** (horizon + 1)) / (1.0 - discount)
    return weight * delta_r - (deploy_cost + fixed_cost)


@dataclass
class IndicatorRecord:
    name: str
    eri: float
    eas: float
    coverage: float | None = None
    tri: float | None = None
    r_algo: float | None = None
    mean_norm_return: float | None = None
    return_floor: float | None = None
    deploy_cost: float = 0.0
    fixed_cost: float = 0.0
    discount: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eri) and self.eri >= 0):
            raise ValueError(f"{self.name}: eri must be finite and >= 0")
        if not (math.isfinite(self.eas) and self.eas > 0):
            raise ValueError(f"{self.name}: eas must be finite and > 0")
        if self.coverage is not None and not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"{self.name}: coverage must lie in [0, 1]")


@dataclass
class RankTable:
    names: list[str]
    eri_rank: np.ndarray
    eas_rank: np.ndarray
    coi_score: np.ndarray
    coi_rank: np.ndarray
    tri_rank: np.ndarray | None = None
    rho: dict[str, float] | None = None
    subset_rho: dict[str, dict[str, float]] = field(default_factory=dict)
    half: HalfSplit | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.names)

    def order_by_coi(self) -> list[int]:
        """Row indices from best to worst COI rank."""
        return sorted(range(self.n), key=lambda i: -self.coi_rank[i])


def build_rank_table(
    names: Sequence[str],
    eri_ranks,
    eas_ranks,
    tri_ranks=None,
    subsets: dict[str, Sequence[bool]] | None = None,
    warnings: list[str] | None = None,
) -> RankTable:
    """Assemble a RankTable from rank columns.

    ``subsets`` maps a label to a boolean mask of datasets to keep; each
    produces a re-ranked Spearman row (requires ``tri_ranks``).
    """
    names = list(names)
    if len(names) < 2:
        raise RankingError("ranking requires >= 2 datasets")
    if len(set(names)) != len(names):
        raise RankingError("dataset names must be unique")
    eri_r, eas_r = _check_permutations(eri_ranks, eas_ranks, "rank table")
    if eri_r.size != len(names):
        raise RankingError("rank columns do not match the number of names")
    warnings = list(warnings or [])
    scores = coi_scores(eri_r, eas_r)
    for group in find_ties(scores, names):
        warnings.append(f"COI score tie resolved by higher EAS rank: {', '.join(group)}")
    table = RankTable(
        names=names,
        eri_rank=eri_r,
        eas_rank=eas_r,
        coi_score=scores,
        coi_rank=coi_combine(eri_r, eas_r, names),
        warnings=warnings,
    )
    if tri_ranks is not None:
        tri_r, _ = _check_permutations(tri_ranks, eri_r, "rank table")
        table.tri_rank = tri_r
        table.rho = {
            "eri": spearman_rho(eri_r, tri_r),
            "eas": spearman_rho(eas_r, tri_r),
            "coi": spearman_rho(table.coi_rank, tri_r),
        }
        table.half = half_split(table.coi_rank, tri_r)
        if len(names) % 2:
            table.warnings.append(
                f"odd number of datasets: top half holds {top_half_size(len(names))} members"
            )
        for label, mask in (subsets or {}).items():
            mask = np.asarray(mask, dtype=bool)
            if mask.sum() < 2:
                continue
            table.subset_rho[label] = {
                "eri": spearman_subset(eri_r, tri_r, mask),
                "eas": spearman_subset(eas_r, tri_r, mask),
                "coi": spearman_subset(table.coi_rank, tri_r, mask),
            }
    return table


def rank_indicators(
    records: Sequence[IndicatorRecord], subsets: dict[str, Sequence[bool]] | None = None
) -> RankTable:
    """Rank real-valued indicators; TRI is ranked too when every record carries one."""
    names = [r.name for r in records]
    if len(names) < 2:
        raise RankingError("ranking requires >= 2 datasets")
    warnings = []
    columns = {"ERI": [r.eri for r in records], "EAS": [r.eas for r in records]}
    has_tri = all(r.tri is not None for r in records)
    if has_tri:
        columns["TRI"] = [r.tri for r in records]
    ranks = {}
    for label, values in columns.items():
        for group in find_ties(values, names):
            warnings.append(f"exact {label} tie broken by name order: {', '.join(group)}")
        ranks[label] = rank_values(values, names)
    return build_rank_table(
        names,
        ranks["ERI"],
        ranks["EAS"],
        ranks.get("TRI"),
        subsets=subsets,
        warnings=warnings,
    )


def select_top(table: RankTable, k: int) -> list[str]:
    """Names of the k best datasets by COI rank, best first."""
    if not 1 <= k <= table.n:
        raise RankingError(f"cannot select k={k} of {table.n} datasets")
    return [table.names[i] for i in table.order_by_coi()[:k]]
