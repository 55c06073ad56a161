import os
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odyn.errors import DataError, DomainError, NumericalError, ShapeError
from odyn.graphnet import fully_connected_edges
from odyn.models import build_nets, get_preset
from odyn.models.predictors import forward
from odyn.models.variants import ModelVariant, variant_from_name
from odyn.pipeline import (
    EvalReport,
    ResultRow,
    TrainConfig,
    batch_windows,
    downsample_mask,
    episode_to_graphs,
    evaluate,
    format_table,
    frame_graph,
    iou,
    make_batches,
    read_csv,
    rollout,
    split_epochs,
    train,
    window_controls,
    window_targets,
    write_csv,
)
from odyn.sim import Episode, generate_episode
from odyn.tensor import Tensor, no_grad

GN_VARIANTS = [
    ModelVariant.GN_POS_VEL,
    ModelVariant.GN_SEGM,
    ModelVariant.GN_SEGM_NO_RGBD,
    ModelVariant.GN_NO_EDGES,
]


@pytest.fixture(scope="module")
def eps():
    """Four tiny scripted-push episodes matching the smallest preset."""
    return [generate_episode("train3", s, width=8, height=6) for s in range(4)]


def fake_episode(masks: np.ndarray) -> Episode:
    """Episode scaffolding around a hand-written (T+1, N, H, W) mask stack."""
    tp1, n, h, w = masks.shape
    return Episode(
        rgb=np.zeros((tp1, h, w, 3), dtype=np.float32),
        depth=np.zeros((tp1, h, w), dtype=np.float32),
        masks=masks.astype(np.uint8),
        pos=np.zeros((tp1, n, 3), dtype=np.float32),
        vel=np.zeros((tp1, n, 3), dtype=np.float32),
        control=np.zeros((tp1, 6), dtype=np.float32),
        shape_ids=tuple(range(n)),
    )


class TestDownsample:
    def test_block_mean(self, rng):
        m = rng.random((6, 8)).astype(np.float32)
        out = downsample_mask(m, 2)
        assert out.shape == (3, 4)
        for i in range(3):
            for j in range(4):
                assert out[i, j] == pytest.approx(
                    m[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean()
                )

    def test_rejects_ragged_factor(self):
        with pytest.raises(ShapeError):
            downsample_mask(np.zeros((6, 9)), 2)


class TestFrameGraphs:
    def test_one_graph_per_frame(self, eps):
        ep = eps[0]
        gs = episode_to_graphs(ep, ModelVariant.AP)
        assert len(gs) == ep.num_steps + 1

    @pytest.mark.parametrize(
        "name,channels,pose,edge_shape",
        [
            ("gn_pos_vel", 5, True, (6, 9)),
            ("gn_segm", 5, False, (6, 1, 3, 4)),
            ("gn_segm_no_rgbd", 1, False, (6, 1, 3, 4)),
            ("gn_no_edges", 5, True, None),
            ("ap", 5, False, None),
            ("ap_no_interact", 5, False, None),
            ("baseline", 5, False, None),
        ],
    )
    def test_variant_attribute_layout(self, eps, name, channels, pose, edge_shape):
        ep = eps[0]
        v = variant_from_name(name)
        g = frame_graph(ep, 2, v)
        assert g.visual.shape == (3, channels, 6, 8)
        assert (g.pose is not None) == pose
        if v.edge_kind is None:
            assert g.edge is None
        else:
            assert g.edge.shape == edge_shape
        assert g.u.shape == (1, 6)
        # edge-free graph variant carries no connectivity at all
        expect_edges = 0 if name == "gn_no_edges" else 6
        assert g.num_edges == expect_edges

    def test_visual_stack_channels(self, eps):
        ep = eps[0]
        g = frame_graph(ep, 1, ModelVariant.AP)
        vis = g.visual.data
        for i in range(ep.n_objects):
            assert np.array_equal(vis[i, :3], np.moveaxis(ep.rgb[1], -1, 0))
            assert np.array_equal(vis[i, 3], ep.masks[1, i])
            assert np.array_equal(vis[i, 4], ep.depth[1])

    def test_pose_rows(self, eps):
        ep = eps[0]
        g = frame_graph(ep, 2, ModelVariant.GN_POS_VEL)
        assert np.array_equal(g.pose.data[:, :3], ep.pos[2])
        assert np.array_equal(g.pose.data[:, 3:], ep.vel[2])

    def test_edge_vector_is_sender_history(self, eps):
        ep = eps[0]
        senders, _ = fully_connected_edges(ep.n_objects)
        g = frame_graph(ep, 2, ModelVariant.GN_POS_VEL)
        for e, s in enumerate(senders):
            row = g.edge.data[e]
            assert np.array_equal(row[0:3], ep.vel[2, s])
            assert np.array_equal(row[3:6], ep.pos[1, s])
            assert np.array_equal(row[6:9], ep.pos[2, s])

    def test_first_frame_duplicates_position(self, eps):
        g = frame_graph(eps[0], 0, ModelVariant.GN_POS_VEL)
        assert np.array_equal(g.edge.data[:, 3:6], g.edge.data[:, 6:9])

    def test_segm_edge_is_downsampled_sender_mask(self, eps):
        ep = eps[0]
        senders, _ = fully_connected_edges(ep.n_objects)
        g = frame_graph(ep, 1, ModelVariant.GN_SEGM)
        for e, s in enumerate(senders):
            want = downsample_mask(ep.masks[1, s].astype(np.float32), 2)
            assert np.allclose(g.edge.data[e, 0], want)

    def test_control_is_frame_global(self, eps):
        ep = eps[0]
        g = frame_graph(ep, 3, ModelVariant.AP)
        assert np.array_equal(g.u.data[0], ep.control[3])

    def test_frame_out_of_range(self, eps):
        with pytest.raises(DomainError):
            frame_graph(eps[0], eps[0].num_steps + 1, ModelVariant.AP)


class TestWindows:
    def test_controls_track_recorded_rows(self, eps):
        ep = eps[0]
        cs = window_controls(ep, 2, 3)
        assert len(cs) == 3
        for k in range(3):
            assert np.array_equal(cs[k][0], ep.control[2 + k])

    def test_controls_overrun(self, eps):
        ep = eps[0]
        with pytest.raises(DomainError):
            window_controls(ep, ep.num_steps, 1)

    def test_targets_are_future_frames(self, eps):
        ep = eps[0]
        ts = window_targets(ep, 1, 2, ModelVariant.GN_POS_VEL)
        assert len(ts) == 2
        for k, t in enumerate(ts, start=1):
            assert np.array_equal(t.masks.data[:, 0], ep.masks[1 + k])
            assert np.array_equal(t.poses.data[:, :3], ep.pos[1 + k])
            assert t.edges.shape == (6, 9)

    def test_targets_mask_only_for_update_family(self, eps):
        ts = window_targets(eps[0], 0, 1, ModelVariant.AP)
        assert ts[0].poses is None and ts[0].edges is None

    def test_targets_overrun(self, eps):
        ep = eps[0]
        with pytest.raises(DomainError):
            window_targets(ep, ep.num_steps - 1, 2, ModelVariant.AP)

    def test_batch_stacks_in_episode_order(self, eps):
        a, b = eps[0], eps[1]
        g, cs, ts = batch_windows([a, b], [0, 1], 1, ModelVariant.GN_POS_VEL)
        assert g.num_nodes == 6 and g.num_graphs == 2
        assert np.array_equal(cs[0].data[0], a.control[0])
        assert np.array_equal(cs[0].data[1], b.control[1])
        assert np.array_equal(ts[0].masks.data[:3, 0], a.masks[1])
        assert np.array_equal(ts[0].masks.data[3:, 0], b.masks[2])

    def test_batch_needs_matching_starts(self, eps):
        with pytest.raises(DomainError):
            batch_windows([eps[0]], [0, 1], 1, ModelVariant.AP)
        with pytest.raises(DomainError):
            batch_windows([], [], 1, ModelVariant.AP)


class TestIoU:
    def test_known_values(self):
        a = np.array([[1, 1], [0, 0]], dtype=np.uint8)
        b = np.array([[1, 0], [0, 0]], dtype=np.uint8)
        assert iou(a, a) == 1.0
        assert iou(a, b) == pytest.approx(0.5)
        assert iou(a, 1 - a) == 0.0
        assert iou(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**20 - 1), st.integers(0, 2**20 - 1))
    def test_matches_pair_counting(self, abits, bbits):
        a = np.array([(abits >> i) & 1 for i in range(20)]).reshape(4, 5)
        b = np.array([(bbits >> i) & 1 for i in range(20)]).reshape(4, 5)
        inter = int(np.sum(a & b))
        union = int(np.sum(a | b))
        want = 1.0 if union == 0 else inter / union
        assert iou(a, b) == pytest.approx(want, abs=0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            iou(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_non_binary_rejected(self):
        with pytest.raises(DomainError):
            iou(np.array([[0.5, 0.0]]), np.array([[1.0, 0.0]]))


class TestSplitEpochs:
    def test_thirteen_over_five(self):
        assert split_epochs(13, 5) == [3, 3, 3, 2, 2]

    def test_exact_and_single(self):
        assert split_epochs(5, 5) == [1, 1, 1, 1, 1]
        assert split_epochs(7, 1) == [7]
        assert split_epochs(7, 3) == [3, 2, 2]

    @given(st.integers(1, 60), st.integers(1, 12))
    def test_conserves_budget(self, total, stages):
        if total < stages:
            with pytest.raises(DomainError):
                split_epochs(total, stages)
            return
        parts = split_epochs(total, stages)
        assert sum(parts) == total
        assert max(parts) - min(parts) <= 1
        assert sorted(parts, reverse=True) == parts

    def test_rejects_zero_stages(self):
        with pytest.raises(DomainError):
            split_epochs(4, 0)


class TestMakeBatches:
    def test_groups_same_object_count_and_drops_singletons(self, eps, rng):
        # fake a 5-object episode alongside four 3-object ones
        big = generate_episode("test5_2novel", 0, width=8, height=6)
        pool = list(eps) + [big]
        perm = np.arange(len(pool))
        batches = make_batches(pool, perm, 2, rng)
        for b in batches:
            assert len(b) >= 2
            counts = {pool[i].n_objects for i in b}
            assert len(counts) == 1
        flat = sorted(i for b in batches for i in b)
        assert flat == [0, 1, 2, 3]  # the lone 5-object episode is dropped

    def test_deterministic_for_same_generator(self, eps):
        perm = np.array([2, 0, 3, 1])
        a = make_batches(eps, perm, 2, np.random.default_rng(5))
        b = make_batches(eps, perm, 2, np.random.default_rng(5))
        assert a == b

    def test_all_singletons_rejected(self, eps):
        big = generate_episode("test5_2novel", 0, width=8, height=6)
        with pytest.raises(DomainError):
            make_batches([eps[0], big], np.arange(2), 4, np.random.default_rng(0))


class TestTrainConfig:
    def test_validation_failures(self):
        with pytest.raises(DomainError):
            TrainConfig(horizon=0).validate()
        with pytest.raises(DomainError):
            TrainConfig(batch=1).validate()
        with pytest.raises(DomainError):
            TrainConfig(horizon=5, epochs=4).validate()
        with pytest.raises(DomainError):
            TrainConfig(variant="gn_segm", use_latent=True).validate()
        with pytest.raises(DomainError):
            TrainConfig(variant="nope").validate()
        with pytest.raises(DomainError):
            TrainConfig(lr=0.0).validate()

    def test_no_curriculum_allows_few_epochs(self):
        TrainConfig(horizon=5, epochs=1, curriculum=False).validate()


class TestTrain:
    def cfg(self, **kw):
        base = dict(
            variant="ap", preset="test", horizon=1, epochs=1, batch=2, seed=7
        )
        base.update(kw)
        return TrainConfig(**base)

    def test_smoke(self, eps, tmp_path):
        res = train(eps, self.cfg(), out_dir=str(tmp_path))
        assert res.steps == 2  # 4 episodes in batches of 2
        assert all(np.isfinite(v) for v in res.losses)
        assert (tmp_path / "stage_1.odck").is_file()

    def test_curriculum_stages_and_logs(self, eps, tmp_path):
        logs = []
        res = train(
            eps,
            self.cfg(horizon=3, epochs=3),
            out_dir=str(tmp_path),
            log=logs.append,
        )
        assert res.stages_run == [1, 2, 3]
        for k in (1, 2, 3):
            assert (tmp_path / f"stage_{k}.odck").is_file()
        stage_lines = [l for l in logs if l.startswith("stage ")]
        assert stage_lines == ["stage 1/3", "stage 2/3", "stage 3/3"]

    def test_deterministic_from_seed(self, eps):
        r1 = train(eps, self.cfg(horizon=2, epochs=2))
        r2 = train(eps, self.cfg(horizon=2, epochs=2))
        assert r1.losses == r2.losses
        p1, p2 = r1.nets.params(), r2.nets.params()
        for k in p1:
            assert np.array_equal(p1[k].data, p2[k].data)

    def test_resume_retraces_uninterrupted_run(self, eps, tmp_path):
        full = tmp_path / "full"
        part = tmp_path / "part"
        part.mkdir()
        cfg = self.cfg(variant="gn_pos_vel", horizon=2, epochs=2)
        r1 = train(eps, cfg, out_dir=str(full))
        shutil.copy(full / "stage_1.odck", part / "stage_1.odck")
        r2 = train(eps, cfg, out_dir=str(part), resume=True)
        assert r2.stages_run == [2]
        p1, p2 = r1.nets.params(), r2.nets.params()
        for k in p1:
            assert np.allclose(p1[k].data, p2[k].data, atol=1e-6)

    def test_resume_needs_out_dir(self, eps):
        with pytest.raises(DomainError):
            train(eps, self.cfg(), resume=True)

    def test_max_steps_stops_early(self, eps):
        res = train(eps, self.cfg(epochs=4, max_steps=3))
        assert res.steps == 3
        assert res.stopped == "max_steps"

    def test_horizon_longer_than_episodes(self, eps):
        short = min(ep.num_steps for ep in eps)
        with pytest.raises(DomainError):
            train(eps, self.cfg(horizon=short + 1, epochs=short + 1))

    def test_empty_dataset(self):
        with pytest.raises(DomainError):
            train([], self.cfg())

    def test_non_finite_loss_aborts_with_location(self, eps, monkeypatch):
        import importlib

        train_mod = importlib.import_module("odyn.pipeline.train")

        def poisoned(*a, **kw):
            return Tensor(np.array(np.nan, dtype=np.float32))

        monkeypatch.setattr(train_mod, "loss_eq1", poisoned)
        with pytest.raises(NumericalError, match="stage 1"):
            train(eps, self.cfg())

    def test_latent_loss_variant_trains(self, eps):
        res = train(eps, self.cfg(use_latent=True, max_steps=2))
        assert all(np.isfinite(v) for v in res.losses)

    @pytest.mark.parametrize("name", [v.value for v in GN_VARIANTS])
    def test_every_gn_variant_trains(self, eps, name):
        res = train(eps, self.cfg(variant=name, max_steps=2))
        assert res.steps == 2
        assert all(np.isfinite(v) for v in res.losses)

    def test_baseline_trains(self, eps):
        res = train(eps, self.cfg(variant="baseline", max_steps=2))
        assert all(np.isfinite(v) for v in res.losses)


class TestRollout:
    def nets(self, name="ap"):
        v = variant_from_name(name)
        return build_nets(v, get_preset("test", 1), np.random.default_rng(3))

    def test_single_step_equals_forward(self, eps):
        ep = eps[0]
        nets = self.nets("gn_segm")
        got = rollout(nets, ep, 3, 1)
        g = frame_graph(ep, 3, nets.variant)
        with no_grad():
            want = forward(nets, g, [Tensor(ep.control[3][None])], training=False)
        assert len(got) == 1
        assert np.array_equal(got[0].masks.data, want[0].masks.data)

    def test_overrun_rejected(self, eps):
        ep = eps[0]
        with pytest.raises(DomainError):
            rollout(self.nets(), ep, ep.num_steps - 1, 2)
        with pytest.raises(DomainError):
            rollout(self.nets(), ep, 0, 0)

    def test_re_encode_only_for_update_family(self, eps):
        with pytest.raises(DomainError):
            rollout(self.nets("gn_pos_vel"), eps[0], 0, 2, re_encode=True)

    def test_re_encode_diverges_after_first_step(self, eps):
        nets = self.nets("ap")
        a = rollout(nets, eps[0], 0, 2)
        b = rollout(nets, eps[0], 0, 2, re_encode=True)
        assert np.allclose(a[0].masks.data, b[0].masks.data)
        assert not np.allclose(a[1].masks.data, b[1].masks.data)


class TestEvaluate:
    def micro(self):
        masks = np.zeros((3, 2, 2, 2), dtype=np.uint8)
        masks[1, 0] = [[1, 1], [0, 0]]
        masks[1, 1] = [[0, 0], [1, 1]]
        masks[2, 0] = [[1, 0], [0, 0]]
        return fake_episode(masks)

    @staticmethod
    def stub(ep, t, horizon):
        pred = np.zeros((2, 2, 2), dtype=np.float64)
        pred[0] = [[0.9, 0.9], [0.1, 0.1]]
        pred[1] = [[0.5, 0.0], [0.0, 0.0]]
        return [pred] * horizon

    def test_micro_dataset_matches_brute_force(self):
        ep = self.micro()
        rep = evaluate(self.stub, [ep], horizon=1)
        # start 0 -> truth frame 1: obj0 exact (1.0), obj1 disjoint (0.0)
        # start 1 -> truth frame 2: obj0 half (0.5), obj1 0.5-rounds-up vs
        # empty truth (0.0)
        assert rep.n_items == 4
        assert rep.mean_iou == pytest.approx((1.0 + 0.0 + 0.5 + 0.0) / 4)
        assert rep.per_step == {1: pytest.approx(0.375)}
        assert rep.per_objects == {2: pytest.approx(0.375)}

    def test_opening_frame_only(self):
        rep = evaluate(self.stub, [self.micro()], horizon=1, all_starts=False)
        assert rep.n_items == 2
        assert rep.mean_iou == pytest.approx(0.5)

    def test_tie_rounds_to_filled(self):
        # if 0.5 rounded down, obj1 at start 1 would score both-empty 1.0
        rep = evaluate(self.stub, [self.micro()], horizon=1)
        assert rep.mean_iou < 0.5

    def test_multi_step_breakdown(self):
        rep = evaluate(self.stub, [self.micro()], horizon=2)
        assert rep.n_items == 4  # single valid start, 2 steps, 2 objects
        assert set(rep.per_step) == {1, 2}

    def test_empty_dataset(self):
        with pytest.raises(DomainError):
            evaluate(self.stub, [], horizon=1)

    def test_no_window_long_horizon(self):
        with pytest.raises(DomainError):
            evaluate(self.stub, [self.micro()], horizon=9)

    def test_real_nets_report_in_range(self, eps):
        nets = build_nets(
            variant_from_name("baseline"), get_preset("test", 1), np.random.default_rng(0)
        )
        rep = evaluate(nets, eps[:2], horizon=2)
        assert 0.0 <= rep.mean_iou <= 1.0
        assert rep.horizon == 2
        assert set(rep.per_step) == {1, 2}
        assert set(rep.per_objects) == {3}


class TestReport:
    def rows(self):
        rep = EvalReport(mean_iou=0.8125, n_items=48, horizon=2)
        return [
            ResultRow.from_report(rep, dataset="test3", variant="ap", seed=0),
            ResultRow("test5", "baseline", 2, 0.5, 96, 1),
        ]

    def test_table_lists_all_rows(self):
        text = format_table(self.rows())
        lines = text.splitlines()
        assert lines[0].split() == [
            "dataset", "variant", "horizon", "mean_iou", "n_items", "seed"
        ]
        assert len(lines) == 4
        assert "0.8125" in lines[2]

    def test_csv_roundtrip(self, tmp_path):
        path = str(tmp_path / "results.csv")
        write_csv(self.rows(), path)
        back = read_csv(path)
        assert back == self.rows()

    def test_rejects_malformed(self, tmp_path):
        p = tmp_path / "bad.csv"
        with pytest.raises(DataError):
            read_csv(str(tmp_path / "missing.csv"))
        p.write_text("")
        with pytest.raises(DataError):
            read_csv(str(p))
        p.write_text("dataset,variant,horizon\n")
        with pytest.raises(DataError):
            read_csv(str(p))
        p.write_text("dataset,variant,horizon,mean_iou,n_items,seed\n")
        with pytest.raises(DataError):
            read_csv(str(p))
        p.write_text("dataset,variant,horizon,mean_iou,n_items,seed\na,b,x,0.5,4,0\n")
        with pytest.raises(DataError):
            read_csv(str(p))

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(DataError):
            format_table([])
        with pytest.raises(DataError):
            write_csv([], str(tmp_path / "x.csv"))
