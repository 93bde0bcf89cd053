import json

import numpy as np
import pytest

from dataselect.data import (
    ACTION_EPS,
    Dataset,
    DatasetError,
    DatasetMeta,
    load_dataset,
    normalize_actions,
    save_dataset,
    segment_trajectories,
)

from conftest import make_dataset


def write_csv(tmp_path, body, header="s0,a0,r,ns0,episode_start", meta=None, stem="toy"):
    path = tmp_path / f"{stem}.csv"
    path.write_text(header + "\n" + body)
    if meta is not None:
        (tmp_path / f"{stem}.meta.json").write_text(json.dumps(meta))
    return path


class TestLoadCsv:
    def test_minimal_single_episode(self, tmp_path):
        path = write_csv(tmp_path, "0.1,0.5,1.0,0.2,1\n0.2,0.1,2.0,0.3,0\n0.3,-0.4,3.0,0.4,0\n")
        d = load_dataset(path, "csv")
        assert d.n_transitions == 3
        assert list(d.episode_starts) == [0]
        assert d.state_dim == 1 and d.action_dim == 1
        assert d.name == "toy"

    def test_nan_reward_rejected(self, tmp_path):
        path = write_csv(tmp_path, "0.1,0.5,nan,0.2,1\n")
        with pytest.raises(DatasetError, match="non-finite value") as err:
            load_dataset(path, "csv")
        assert "column r" in str(err.value)
        assert "row 2" in str(err.value)

    def test_bad_header(self, tmp_path):
        path = write_csv(tmp_path, "0.1,0.5,1,0.2,1\n", header="s0,r,a0,ns0,episode_start")
        with pytest.raises(DatasetError, match="malformed header"):
            load_dataset(path, "csv")

    def test_short_row(self, tmp_path):
        path = write_csv(tmp_path, "0.1,0.5,1,0.2,1\n0.1,0.5,1\n")
        with pytest.raises(DatasetError, match="dimension mismatch") as err:
            load_dataset(path, "csv")
        assert "row 3" in str(err.value)

    def test_first_row_must_start_episode(self, tmp_path):
        path = write_csv(tmp_path, "0.1,0.5,1,0.2,0\n")
        with pytest.raises(DatasetError, match="first transition"):
            load_dataset(path, "csv")

    def test_sidecar_meta(self, tmp_path):
        meta = {"name": "plant-7", "action_min": [-2], "action_max": [2], "return_floor": -350, "deploy_cost": 3}
        path = write_csv(tmp_path, "0.1,0.5,1,0.2,1\n0.2,0.5,1,0.2,1\n", meta=meta)
        d = load_dataset(path)
        assert d.name == "plant-7"
        assert d.meta.return_floor == -350
        assert d.meta.deploy_cost == 3
        assert list(d.episode_starts) == [0, 1]

    def test_csv_round_trip(self, tmp_path):
        d = make_dataset(n=10, state_dim=3, action_dim=2, starts=(0, 4, 7))
        path = save_dataset(d, tmp_path / "rt.csv")
        back = load_dataset(path)
        for key in ("states", "actions", "rewards", "next_states", "episode_starts"):
            np.testing.assert_array_equal(getattr(back, key), getattr(d, key))


class TestPortable:
    def test_round_trip_bit_exact(self, tmp_path):
        meta = DatasetMeta(
            state_min=[-3, -3], state_max=[3, 3], action_min=[-1], action_max=[1],
            return_floor=-10.0, deploy_cost=1.5, fixed_cost=2.0, discount=0.99,
        )
        d = make_dataset(n=50, starts=(0, 10, 25), meta=meta)
        path = save_dataset(d, tmp_path / "ds.json")
        back = load_dataset(path)
        for key in ("states", "actions", "rewards", "next_states"):
            assert getattr(back, key).tobytes() == getattr(d, key).tobytes()
        np.testing.assert_array_equal(back.episode_starts, d.episode_starts)
        assert back.meta.to_dict() == d.meta.to_dict()
        # saving again yields identical bytes
        path2 = save_dataset(back, tmp_path / "ds2.json")
        assert (tmp_path / "ds.bin").read_bytes() == (tmp_path / "ds2.bin").read_bytes()
        assert path2.exists()

    def test_blob_layout(self, tmp_path):
        d = make_dataset(n=4, state_dim=2, action_dim=1)
        save_dataset(d, tmp_path / "ds.json")
        raw = np.fromfile(tmp_path / "ds.bin", dtype="<f4")
        np.testing.assert_array_equal(raw[:8], d.states.reshape(-1))
        np.testing.assert_array_equal(raw[8:12], d.actions.reshape(-1))
        np.testing.assert_array_equal(raw[12:16], d.rewards)
        np.testing.assert_array_equal(raw[16:], d.next_states.reshape(-1))

    def test_declared_dim_mismatch(self, tmp_path):
        d = make_dataset(n=5, state_dim=3, action_dim=1)
        path = save_dataset(d, tmp_path / "ds.json")
        manifest = json.loads(path.read_text())
        manifest["state_dim"] = 4
        path.write_text(json.dumps(manifest))
        with pytest.raises(DatasetError, match="dimension mismatch"):
            load_dataset(path)

    def test_missing_header_field(self, tmp_path):
        d = make_dataset()
        path = save_dataset(d, tmp_path / "ds.json")
        manifest = json.loads(path.read_text())
        del manifest["n_transitions"]
        path.write_text(json.dumps(manifest))
        with pytest.raises(DatasetError, match="malformed header") as err:
            load_dataset(path)
        assert err.value.location == "n_transitions"

    def test_unsorted_episode_starts(self, tmp_path):
        d = make_dataset(n=6, starts=(0, 3))
        path = save_dataset(d, tmp_path / "ds.json")
        manifest = json.loads(path.read_text())
        manifest["episode_starts"] = [0, 4, 2]
        path.write_text(json.dumps(manifest))
        with pytest.raises(DatasetError, match="strictly increasing") as err:
            load_dataset(path)
        assert err.value.location == "episode_starts[2]"

    def test_non_finite_payload(self, tmp_path):
        d = make_dataset(n=4)
        save_dataset(d, tmp_path / "ds.json")
        raw = np.fromfile(tmp_path / "ds.bin", dtype="<f4")
        raw[9] = np.inf  # an action value
        raw.tofile(tmp_path / "ds.bin")
        with pytest.raises(DatasetError, match="non-finite value") as err:
            load_dataset(tmp_path / "ds.json")
        assert "actions" in err.value.location


class TestDatasetInvariants:
    def test_duplicate_starts_rejected(self):
        with pytest.raises(DatasetError, match="strictly increasing"):
            make_dataset(n=5, starts=(0, 0, 2))

    def test_first_start_nonzero(self):
        with pytest.raises(DatasetError, match=r"episode_starts\[0\]"):
            make_dataset(n=5, starts=(1,))

    def test_start_beyond_end(self):
        with pytest.raises(DatasetError, match="beyond"):
            make_dataset(n=5, starts=(0, 5))

    def test_row_count_mismatch(self):
        with pytest.raises(DatasetError, match="dimension mismatch"):
            Dataset("x", np.zeros((3, 1)), np.zeros((2, 1)), np.zeros(3), np.zeros((3, 1)), [0])

    def test_empty(self):
        with pytest.raises(DatasetError, match="no transitions"):
            Dataset("x", np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1)), [0])

    def test_arrays_read_only(self):
        d = make_dataset()
        with pytest.raises(ValueError):
            d.states[0, 0] = 1.0

    def test_inverted_range_rejected(self):
        with pytest.raises(DatasetError, match="minimum above maximum"):
            DatasetMeta(action_min=[1.0], action_max=[0.0])

    def test_range_length_checked(self):
        with pytest.raises(DatasetError, match="action range length"):
            make_dataset(action_dim=1, meta=DatasetMeta(action_min=[0, 0], action_max=[1, 1]))

    def test_discount_bounds(self):
        with pytest.raises(DatasetError, match="discount"):
            DatasetMeta(discount=0.0)


class TestSegment:
    def test_single(self):
        d = make_dataset(n=5, starts=(0,))
        assert segment_trajectories(d) == [(0, 5)]

    def test_multiple(self):
        d = make_dataset(n=6, starts=(0, 2, 3))
        assert segment_trajectories(d) == [(0, 2), (2, 3), (3, 6)]

    @pytest.mark.parametrize("seed", range(5))
    def test_partition(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 200))
        starts = np.unique(np.concatenate([[0], rng.integers(0, n, size=rng.integers(0, 20))]))
        d = make_dataset(n=n, starts=starts)
        ranges = segment_trajectories(d)
        covered = np.concatenate([np.arange(s, e) for s, e in ranges])
        np.testing.assert_array_equal(covered, np.arange(n))
        assert all(s < e for s, e in ranges)


class TestNormalizeActions:
    def meta(self):
        return DatasetMeta(action_min=[-2.0, 0.0], action_max=[2.0, 10.0])

    def test_boundaries_and_midpoint(self):
        acts = np.array([[-2.0, 0.0], [0.0, 5.0], [2.0, 10.0]])
        d = Dataset("x", np.zeros((3, 1)), acts, np.zeros(3), np.zeros((3, 1)), [0], self.meta())
        out = normalize_actions(d)
        np.testing.assert_allclose(out.values[0], -1 + ACTION_EPS)
        np.testing.assert_allclose(out.values[1], 0.0, atol=1e-12)
        np.testing.assert_allclose(out.values[2], 1 - ACTION_EPS)
        assert not out.used_observed_ranges
        assert np.all(np.abs(out.values) < 1)

    def test_constant_column_degenerate(self):
        acts = np.column_stack([np.full(4, 0.7), np.linspace(-1, 1, 4)])
        d = Dataset("x", np.zeros((4, 1)), acts, np.zeros(4), np.zeros((4, 1)), [0])
        out = normalize_actions(d)
        assert out.used_observed_ranges
        assert out.degenerate_dims == (0,)
        np.testing.assert_array_equal(out.values[:, 0], 0.0)

    def test_monotone(self):
        rng = np.random.default_rng(3)
        acts = np.sort(rng.uniform(-2, 2, size=(100, 1)), axis=0)
        d = Dataset("x", np.zeros((100, 1)), acts, np.zeros(100), np.zeros((100, 1)), [0],
                    DatasetMeta(action_min=[-2.0], action_max=[2.0]))
        out = normalize_actions(d).values[:, 0]
        assert np.all(np.diff(out) >= 0)

    def test_out_of_range_clipped_and_counted(self):
        acts = np.array([[3.0, 5.0]])
        d = Dataset("x", np.zeros((1, 1)), acts, np.zeros(1), np.zeros((1, 1)), [0], self.meta())
        out = normalize_actions(d)
        assert out.clipped_count == 1
        assert out.values[0, 0] == 1 - ACTION_EPS
