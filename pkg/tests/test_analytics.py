import numpy as np

from anfrl import analytics
from anfrl.agents import TD3Agent, AgentHyperparams
from anfrl.analytics import (ConnectivityTimeline, export_snapshot_csv,
                             export_timeline_svg, export_timelines_csv,
                             load_timelines_csv, record_connectivity,
                             snapshot_neurons, split_means)
from anfrl.topology import SparseMode, SparsityConfig


def _sparse_agent(state_dim=20, action_dim=2, seed=0):
    sp = SparsityConfig(input_layer_sparsity=0.8, drop_fraction=0.05,
                        topology_period=10, mode=SparseMode.DYNAMIC)
    hp = AgentHyperparams(hidden_dims=(16, 16), batch_size=8)
    return TD3Agent(state_dim, action_dim, hp, sp, np.random.default_rng(seed))


class TestSplitMeans:
    def test_hand_rolled_example(self):
        # 4 state inputs: counts 3,1,0,2; relevant = {0,1} -> means 2.0 and 1.0
        counts = np.array([3, 1, 0, 2, 99])  # trailing action column ignored
        rel, noise = split_means(counts, np.array([0, 1]), num_state_inputs=4)
        assert rel == 2.0
        assert noise == 1.0

    def test_all_relevant_gives_nan_noise(self):
        rel, noise = split_means(np.array([1, 2]), np.array([0, 1]), 2)
        assert rel == 1.5
        assert np.isnan(noise)


class TestRecording:
    def test_dense_agent_records_nothing(self):
        hp = AgentHyperparams(hidden_dims=(8,), batch_size=8)
        agent = TD3Agent(10, 2, hp, None, np.random.default_rng(1))
        timelines = {}
        assert not record_connectivity(agent, 0, np.arange(2), 10, timelines)
        assert timelines == {}

    def test_sparse_agent_tracks_three_networks(self):
        agent = _sparse_agent()
        timelines = {}
        assert record_connectivity(agent, 0, np.arange(4), 20, timelines)
        record_connectivity(agent, 10, np.arange(4), 20, timelines)
        assert sorted(timelines) == ["actor", "critic1", "critic2"]
        for tl in timelines.values():
            assert tl.steps == [0, 10]
            assert all(np.isfinite(v) for v in tl.relevant_mean)

    def test_counts_match_mask_column_sums(self):
        agent = _sparse_agent()
        snap = snapshot_neurons(agent, 5, np.arange(4), network="actor")
        mask = agent.input_masks()["actor"]
        np.testing.assert_array_equal(snap.counts, mask.existing.sum(axis=0))

    def test_recording_never_mutates_the_agent(self):
        agent = _sparse_agent()
        before = {n: sn.net[0].weights.copy() for n, sn in agent.networks().items()}
        masks_before = {n: sn.masks[0].existing.copy()
                        for n, sn in agent.networks().items()}
        record_connectivity(agent, 0, np.arange(4), 20, {})
        snapshot_neurons(agent, 0, np.arange(4))
        for n, sn in agent.networks().items():
            np.testing.assert_array_equal(sn.net[0].weights, before[n])
            np.testing.assert_array_equal(sn.masks[0].existing, masks_before[n])

    def test_dense_snapshot_is_none(self):
        hp = AgentHyperparams(hidden_dims=(8,), batch_size=8)
        agent = TD3Agent(10, 2, hp, None, np.random.default_rng(2))
        assert snapshot_neurons(agent, 0, np.arange(2)) is None


class TestExports:
    def _timelines(self):
        return {
            "actor": ConnectivityTimeline("actor", [0, 10, 20],
                                          [1.0, 1.5, 2.25], [1.0, 0.75, 0.5]),
            "critic1": ConnectivityTimeline("critic1", [0, 10, 20],
                                            [1.0, 1.25, 1.5], [1.0, 1.0, 0.875]),
        }

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "conn.csv"
        export_timelines_csv(self._timelines(), path)
        loaded = load_timelines_csv(path)
        assert sorted(loaded) == ["actor", "critic1"]
        for name, tl in self._timelines().items():
            assert loaded[name].steps == tl.steps
            assert loaded[name].relevant_mean == tl.relevant_mean
            assert loaded[name].noise_mean == tl.noise_mean

    def test_svg_byte_stable_and_wellformed(self, tmp_path):
        import xml.etree.ElementTree as ET
        p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
        export_timeline_svg(self._timelines(), p1)
        export_timeline_svg(self._timelines(), p2)
        assert p1.read_bytes() == p2.read_bytes()
        root = ET.parse(p1).getroot()
        ns = "{http://www.w3.org/2000/svg}"
        polylines = root.findall(f"{ns}polyline")
        assert len(polylines) == 4  # relevant + noise for two networks

    def test_svg_skips_nan_series(self, tmp_path):
        tl = {"actor": ConnectivityTimeline("actor", [0, 10], [1.0, 2.0],
                                            [float("nan"), float("nan")])}
        path = tmp_path / "nan.svg"
        export_timeline_svg(tl, path)
        assert path.read_text().count("<polyline") == 1

    def test_snapshot_csv(self, tmp_path):
        agent = _sparse_agent(state_dim=6)
        snap = snapshot_neurons(agent, 7, np.array([0, 1]))
        path = tmp_path / "snap.csv"
        export_snapshot_csv(snap, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,neuron_index,count,is_relevant"
        assert len(lines) == 1 + len(snap.counts)
        assert lines[1].split(",")[3] == "1"
        assert lines[3].split(",")[3] == "0"

    def test_curve_csv_columns_sorted(self, tmp_path):
        path = tmp_path / "curves.csv"
        analytics.export_curve_csv([0, 1], {"b": [1.0, 2.0], "a": [3.0, 4.0]}, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,a,b"
        assert lines[1] == "0,3.0,1.0"
