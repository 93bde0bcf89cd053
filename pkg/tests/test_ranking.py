import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dataselect.ranking import (
    IndicatorRecord,
    RankingError,
    build_rank_table,
    coi_combine,
    find_ties,
    half_split,
    is_permutation,
    meta_return,
    rank_indicators,
    rank_values,
    rerank,
    select_top,
    spearman_rho,
    spearman_subset,
    tri,
)

IB_PRINTED_COI = [10, 11, 12, 5, 15, 13, 9, 14, 8, 7, 6, 3, 0, 1, 4, 2]
MUJOCO_PRINTED_COI = [8, 7, 9, 11, 10, 5, 4, 3, 6, 1, 0, 2]


def pairwise_rank_oracle(values):
    """Quadratic-time: rank = number of strictly smaller values (inputs tie-free)."""
    return [sum(1 for w in values if w < v) for v in values]


def pearson_oracle(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    return float((da * db).sum() / np.sqrt((da * da).sum() * (db * db).sum()))


permutations = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.permutations(range(n)), st.permutations(range(n)))
)


class TestRankValues:
    def test_basic(self):
        assert rank_values([0.5, 0.1, 0.9]).tolist() == [1, 0, 2]

    def test_single(self):
        assert rank_values([3.0]).tolist() == [0]

    def test_ties_by_name(self):
        ranks = rank_values([1.0, 1.0, 0.0], names=["zeta", "alpha", "mid"])
        assert ranks.tolist() == [2, 1, 0]
        assert find_ties([1.0, 1.0, 0.0], ["zeta", "alpha", "mid"]) == [["alpha", "zeta"]]

    def test_non_finite(self):
        with pytest.raises(RankingError, match="non-finite"):
            rank_values([0.1, np.nan])

    @pytest.mark.parametrize("seed", range(20))
    def test_pairwise_oracle(self, seed):
        values = np.random.default_rng(seed).normal(size=30)
        assert rank_values(values).tolist() == pairwise_rank_oracle(values.tolist())

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=20, unique=True))
    def test_monotone_transform_invariant(self, values):
        # integer grid keeps the transform strictly monotone in floating point too
        v = np.asarray(values) / 7.0
        assert np.array_equal(rank_values(v), rank_values(3 * v**3 + v - 5))
        assert np.array_equal(rank_values(v), rank_values(np.exp(v / 1e5)))


class TestCoi:
    def test_mujoco_printed(self, mujoco_fixtures):
        got = coi_combine(mujoco_fixtures.eri_rank, mujoco_fixtures.eas_rank, mujoco_fixtures.names)
        assert got.tolist() == MUJOCO_PRINTED_COI

    def test_ib_printed(self, ib_fixtures):
        got = coi_combine(ib_fixtures.eri_rank, ib_fixtures.eas_rank, ib_fixtures.names)
        assert got.tolist() == IB_PRINTED_COI

    def test_ib_tie_resolution_is_forced(self, ib_fixtures):
        """Of every ordering of the tied score pairs, only the higher-EAS-first one matches the table."""
        eri, eas = ib_fixtures.eri_rank, ib_fixtures.eas_rank
        scores = 2 * eri + eas
        tied = [g for g in find_ties(scores, ib_fixtures.names)]
        assert sorted(map(sorted, tied)) == sorted(
            [["bad-0.2", "bad-0.4"], ["mediocre-0.2", "mediocre-0.4"], ["bad-0.6", "mediocre-1.0"]]
        )
        idx = {n: i for i, n in enumerate(ib_fixtures.names)}
        matches = []
        for flips in itertools.product([False, True], repeat=len(tied)):
            # break each tie by EAS rank, reversed where flipped
            key_bonus = np.zeros(len(eri))
            for flip, group in zip(flips, tied):
                for name in group:
                    key_bonus[idx[name]] = -eas[idx[name]] if flip else eas[idx[name]]
            order = sorted(range(len(eri)), key=lambda i: (scores[i], key_bonus[i]))
            ranks = np.empty(len(eri), dtype=int)
            ranks[order] = np.arange(len(eri))
            matches.append(ranks.tolist() == IB_PRINTED_COI)
        assert matches == [True] + [False] * (2 ** len(tied) - 1)

    def test_identical_inputs(self):
        r = np.array([3, 0, 2, 1])
        assert coi_combine(r, r).tolist() == r.tolist()

    def test_length_mismatch(self):
        with pytest.raises(RankingError, match="length mismatch"):
            coi_combine([0, 1], [0, 1, 2])

    @pytest.mark.parametrize("n", range(1, 6))
    def test_exhaustive_small(self, n):
        for a in itertools.permutations(range(n)):
            for b in itertools.permutations(range(n)):
                assert is_permutation(coi_combine(a, b))

    @settings(max_examples=1000, deadline=None)
    @given(permutations)
    def test_always_permutation(self, pair):
        a, b = pair
        out = coi_combine(a, b)
        assert is_permutation(out)
        # ordering agrees with the 2:1 score wherever scores differ
        s = 2 * np.asarray(a) + np.asarray(b)
        for i, j in itertools.combinations(range(len(a)), 2):
            if s[i] != s[j]:
                assert (out[i] > out[j]) == (s[i] > s[j])


class TestSpearman:
    def test_ib_eri(self, ib_fixtures):
        d = ib_fixtures.eri_rank - ib_fixtures.tri_rank
        assert int((d * d).sum()) == 62
        assert spearman_rho(ib_fixtures.eri_rank, ib_fixtures.tri_rank) == pytest.approx(1 - 372 / 4080, abs=1e-15)

    def test_ib_eas(self, ib_fixtures):
        assert round(spearman_rho(ib_fixtures.eas_rank, ib_fixtures.tri_rank), 2) == 0.13

    def test_extremes(self):
        r = np.arange(7)
        assert spearman_rho(r, r) == 1.0
        assert spearman_rho(r, r[::-1]) == -1.0

    def test_not_permutation(self):
        with pytest.raises(RankingError, match="not a permutation"):
            spearman_rho([0, 0, 1], [0, 1, 2])

    def test_too_short(self):
        with pytest.raises(RankingError, match="n >= 2"):
            spearman_rho([0], [0])

    @settings(max_examples=1000, deadline=None)
    @given(permutations)
    def test_symmetric_and_equals_pearson(self, pair):
        a, b = pair
        rho = spearman_rho(a, b)
        assert rho == spearman_rho(b, a)
        assert abs(rho - pearson_oracle(a, b)) < 1e-12

    def test_subset_reranks(self):
        a = [0, 5, 2, 3, 4, 1]
        b = [1, 5, 0, 4, 3, 2]
        keep = [True, True, False, True, True, False]
        assert spearman_subset(a, b, keep) == pytest.approx(pearson_oracle([0, 3, 1, 2], [0, 3, 2, 1]))
        assert rerank([7, 2, 9]).tolist() == [1, 0, 2]


class TestHalfSplit:
    def test_mujoco(self, mujoco_fixtures):
        coi = coi_combine(mujoco_fixtures.eri_rank, mujoco_fixtures.eas_rank, mujoco_fixtures.names)
        res = half_split(coi, mujoco_fixtures.tri_rank)
        assert res.hits == 10
        misses = [n for n, ok in zip(mujoco_fixtures.names, res.correct) if not ok]
        assert misses == ["hopper_mixed", "hopper_medium_expert"]

    def test_identity(self):
        r = np.arange(8)
        assert half_split(r, r).hits == 8

    def test_reversed(self):
        r = np.arange(4)
        assert half_split(r[::-1], r).hits == 0

    def test_odd_top_is_larger(self):
        res = half_split([0, 1, 2, 3, 4], [0, 1, 2, 3, 4])
        assert res.top_size == 3

    @settings(max_examples=300, deadline=None)
    @given(permutations, st.randoms())
    def test_relabel_invariant(self, pair, rnd):
        a, b = map(np.asarray, pair)
        perm = list(range(len(a)))
        rnd.shuffle(perm)
        assert half_split(a, b).hits == half_split(a[perm], b[perm]).hits


class TestTriAndMetaReturn:
    def test_tri(self):
        assert tri(5.0, 5.0) == 0.0
        assert tri(10.0, 5.0) == 1.0
        assert tri(2.5, 5.0) == -0.5

    def test_tri_zero_mean(self):
        with pytest.raises(RankingError):
            tri(1.0, 0.0)

    def test_meta_return_zero_improvement(self):
        assert meta_return(0.0, 3.0, 2.0, 10, 0.9) == -5.0

    def test_meta_return_undiscounted(self):
        assert meta_return(1.0, 2.0, 3.0, 9, 1.0) == 5.0

    def test_meta_return_geometric(self):
        assert meta_return(2.0, 0.0, 0.0, 2, 0.5) == pytest.approx(3.5)

    @pytest.mark.parametrize("h,gamma", [(0, 0.9), (5, 0.7), (30, 0.99)])
    def test_meta_return_matches_loop(self, h, gamma):
        loop = sum(gamma**t * 1.3 for t in range(h + 1)) - 4.0
        assert meta_return(1.3, 1.0, 3.0, h, gamma) == pytest.approx(loop, rel=1e-12)


class TestTables:
    def test_records_to_table(self):
        recs = [IndicatorRecord(f"d{i}", eri=e, eas=s, tri=t)
                for i, (e, s, t) in enumerate([(0.1, 0.2, 0.0), (0.5, 0.1, 1.0), (0.3, 0.4, 0.5)])]
        table = rank_indicators(recs)
        assert table.eri_rank.tolist() == [0, 2, 1]
        assert table.eas_rank.tolist() == [1, 0, 2]
        assert table.tri_rank.tolist() == [0, 2, 1]
        assert table.rho["eri"] == 1.0

    def test_monotone_transform_leaves_table(self):
        rng = np.random.default_rng(9)
        eri, eas, t = rng.uniform(0.1, 3, size=(3, 10))
        names = [f"d{i}" for i in range(10)]
        base = rank_indicators([IndicatorRecord(n, a, b, tri=c) for n, a, b, c in zip(names, eri, eas, t)])
        moved = rank_indicators(
            [IndicatorRecord(n, a**3, np.log1p(b), tri=c) for n, a, b, c in zip(names, eri, eas, t)]
        )
        assert base.coi_rank.tolist() == moved.coi_rank.tolist()
        assert base.rho == moved.rho

    def test_needs_two(self):
        with pytest.raises(RankingError, match=">= 2 datasets"):
            rank_indicators([IndicatorRecord("only", 0.1, 0.1)])

    def test_select_top(self, mujoco_fixtures):
        table = build_rank_table(mujoco_fixtures.names, mujoco_fixtures.eri_rank, mujoco_fixtures.eas_rank)
        assert select_top(table, 1) == ["walker_medium_expert"]
        assert len(select_top(table, 12)) == 12
        with pytest.raises(RankingError):
            select_top(table, 13)

    def test_indicator_record_invariants(self):
        with pytest.raises(ValueError):
            IndicatorRecord("x", eri=-0.1, eas=0.2)
        with pytest.raises(ValueError):
            IndicatorRecord("x", eri=0.1, eas=0.0)
        with pytest.raises(ValueError):
            IndicatorRecord("x", eri=0.1, eas=0.2, coverage=1.5)
