"""Training loop mechanics and scene-wise evaluation.

Training tests run the real pipeline on small random videos with a slim
model so each case stays in the seconds range. Motion estimation is
disabled (identity alignment) because the flow code has its own suite.
"""

import json
import logging

import numpy as np
import pytest

from revq.media import Video
from revq.nn.models import ModelConfig, QualityModel
from revq.pipeline.calibrate import logistic_map
from revq.pipeline.evaluate import (
    EvalReport,
    NoEvaluableScenes,
    SceneRow,
    evaluate,
    write_report,
)
from revq.pipeline.score import score_video
from revq.pipeline.stats import pearson, spearman
from revq.pipeline.train import (
    STAGE_FULL,
    STAGE_STREAM_B,
    EmptyTrainSet,
    EpochLog,
    MissingLabels,
    TrainConfig,
    VideoItem,
    train,
    write_training_log,
)
from revq.sampling import SamplerParams

CFG = ModelConfig(detector_channels=(10, 4, 1), stability_hidden=(16, 8, 1),
                  fusion_hidden=(2, 4, 1), scorer_channels=(3, 4, 4),
                  scorer_pools=(4, 4), patch_size=16)
SAMPLER = SamplerParams(clips=2, frames_per_clip=2, grid=7, patch=16)


def _video(seed: int, frames: int = 6) -> Video:
    rng = np.random.default_rng([903, seed])
    return Video(rng.random((frames, 484, 804, 3), dtype=np.float32))


def _items(n: int, oa=None, ts=None, scenes=None) -> list:
    out = []
    for i in range(n):
        out.append(VideoItem(
            f"v{i}",
            scenes[i] if scenes is not None else f"sc{i}",
            lambda i=i: _video(i),
            oa_mos=None if oa is None else oa[i],
            ts_mos=None if ts is None else ts[i],
        ))
    return out


def _snap(module) -> list:
    return [p.data.copy() for p in module.parameters()]


def _unchanged(snap, module) -> bool:
    return all(np.array_equal(a, p.data) for a, p in zip(snap, module.parameters()))


def _any_changed(snap, module) -> bool:
    return any(not np.array_equal(a, p.data) for a, p in zip(snap, module.parameters()))


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.batch_size == 16
        assert cfg.learning_rate == 0.001
        assert cfg.beta1 == 0.9
        assert cfg.beta2 == 0.999
        assert cfg.eps == 1e-8
        assert cfg.alpha == 0.3
        assert cfg.stage == STAGE_FULL
        assert cfg.freeze_pretrained is False
        assert cfg.early_stop_train_srcc is None

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError, match="batch_size"):
            TrainConfig(batch_size=1)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError, match="alpha"):
            TrainConfig(alpha=-0.1)

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError, match="stage"):
            TrainConfig(stage="warmup")


class TestTrainValidation:
    def test_empty_train_set(self):
        model = QualityModel(CFG, seed=0)
        with pytest.raises(EmptyTrainSet):
            train(model, [], TrainConfig(batch_size=2))

    def test_stream_b_requires_ts_labels(self):
        model = QualityModel(CFG, seed=0)
        items = _items(2, oa=[1.0, 2.0])  # ts missing
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_STREAM_B)
        with pytest.raises(MissingLabels, match="v0.*ts_mos"):
            train(model, items, cfg)

    def test_full_stage_requires_oa_labels(self):
        model = QualityModel(CFG, seed=0)
        items = _items(2, ts=[1.0, 2.0])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_FULL)
        with pytest.raises(MissingLabels, match="v0.*oa_mos"):
            train(model, items, cfg)

    def test_labels_checked_before_any_work(self):
        # second item is the broken one, but no batch should run at all
        model = QualityModel(CFG, seed=0)
        before = _snap(model)
        items = _items(2, ts=[1.0, None])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_STREAM_B)
        with pytest.raises(MissingLabels, match="v1"):
            train(model, items, cfg)
        assert _unchanged(before, model)


class TestStreamBTraining:
    def test_epoch_logs_and_loss_composition(self, tmp_path):
        model = QualityModel(CFG, seed=1)
        items = _items(2, ts=[1.0, 2.0])
        cfg = TrainConfig(batch_size=2, epochs=2, alpha=0.3, stage=STAGE_STREAM_B)
        logs = train(model, items, cfg, flow=None, sampler=SAMPLER,
                     cache_dir=tmp_path)
        assert [lg.epoch for lg in logs] == [0, 1]
        for lg in logs:
            assert lg.batches == 1
            assert lg.skipped_batches == 0
            # plain floats, not numpy scalars: repr() lands in the log CSV
            for v in (lg.mean_loss, lg.mean_plcc_loss, lg.mean_ranking_loss,
                      lg.train_srcc):
                assert type(v) is float
            assert np.isfinite(lg.mean_loss)
            assert 0.0 <= lg.mean_plcc_loss <= 1.0
            assert lg.mean_ranking_loss >= 0.0
            # the tape sums in float32, the recomposition here in float64
            assert lg.mean_loss == pytest.approx(
                lg.mean_plcc_loss + cfg.alpha * lg.mean_ranking_loss, rel=1e-6)
            assert -1.0 <= lg.train_srcc <= 1.0

    def test_only_stream_b_parameters_move(self, tmp_path):
        model = QualityModel(CFG, seed=0)
        scorer0, fusion0 = _snap(model.scorer), _snap(model.fusion)
        det0, mlp0 = _snap(model.detector), _snap(model.stability_mlp)
        items = _items(2, ts=[1.0, 2.0])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_STREAM_B)
        train(model, items, cfg, flow=None, sampler=SAMPLER, cache_dir=tmp_path)
        assert _unchanged(scorer0, model.scorer)
        assert _unchanged(fusion0, model.fusion)
        assert _any_changed(det0, model.detector)
        assert _any_changed(mlp0, model.stability_mlp)


class TestFullTraining:
    def test_every_parameter_group_moves(self, tmp_path):
        model = QualityModel(CFG, seed=3)
        snaps = {name: _snap(getattr(model, name))
                 for name in ("scorer", "detector", "stability_mlp", "fusion")}
        items = _items(2, oa=[1.0, 2.0])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_FULL)
        train(model, items, cfg, flow=None, sampler=SAMPLER, cache_dir=tmp_path)
        for name, snap in snaps.items():
            assert _any_changed(snap, getattr(model, name)), name

    def test_freeze_pretrained_pins_stream_b(self, tmp_path):
        # same seed as the unfrozen case above, where every group moves, so
        # the pinning observed here is the flag and not a dead gradient
        model = QualityModel(CFG, seed=3)
        det0, mlp0 = _snap(model.detector), _snap(model.stability_mlp)
        scorer0, fusion0 = _snap(model.scorer), _snap(model.fusion)
        items = _items(2, oa=[1.0, 2.0])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_FULL,
                          freeze_pretrained=True)
        train(model, items, cfg, flow=None, sampler=SAMPLER, cache_dir=tmp_path)
        assert _unchanged(det0, model.detector)
        assert _unchanged(mlp0, model.stability_mlp)
        assert _any_changed(scorer0, model.scorer)
        assert _any_changed(fusion0, model.fusion)


class TestDegenerateBatches:
    def test_constant_labels_skip_every_batch(self, caplog):
        model = QualityModel(CFG, seed=5)
        before = _snap(model)
        items = _items(4, ts=[2.5, 2.5, 2.5, 2.5])
        cfg = TrainConfig(batch_size=4, epochs=1, stage=STAGE_STREAM_B)
        with caplog.at_level(logging.INFO, logger="revq.pipeline.train"):
            logs = train(model, items, cfg, flow=None, sampler=SAMPLER)
        assert logs[0].batches == 0
        assert logs[0].skipped_batches == 1
        assert logs[0].mean_loss == 0.0
        assert logs[0].train_srcc == 0.0
        assert _unchanged(before, model)
        assert "skipped degenerate batch" in caplog.text

    def test_trailing_single_item_batch_skipped(self, tmp_path):
        model = QualityModel(CFG, seed=6)
        items = _items(3, ts=[1.0, 2.0, 3.0])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_STREAM_B)
        logs = train(model, items, cfg, flow=None, sampler=SAMPLER,
                     cache_dir=tmp_path)
        assert logs[0].batches == 1
        assert logs[0].skipped_batches == 1


class TestEarlyStop:
    def test_threshold_met_breaks_after_the_epoch(self, tmp_path):
        model = QualityModel(CFG, seed=7)
        items = _items(2, ts=[1.0, 2.0])
        # any correlation clears a threshold of -2, so exactly one epoch runs
        cfg = TrainConfig(batch_size=2, epochs=4, stage=STAGE_STREAM_B,
                          early_stop_train_srcc=-2.0)
        logs = train(model, items, cfg, flow=None, sampler=SAMPLER,
                     cache_dir=tmp_path)
        assert len(logs) == 1
        assert logs[0].epoch == 0


class TestFeatureCache:
    def test_cold_and_warm_runs_are_bitwise_identical(self, tmp_path):
        items = _items(2, oa=[1.0, 2.0])
        cfg = TrainConfig(batch_size=2, epochs=1, stage=STAGE_FULL)

        def run():
            model = QualityModel(CFG, seed=8)
            logs = train(model, items, cfg, flow=None, sampler=SAMPLER,
                         cache_dir=tmp_path)
            return model, logs

        cold_model, cold_logs = run()  # populates the cache
        expected = sorted(
            [f"v{i}.s0.ident.all.maps.npy" for i in range(2)]
            + [f"v{i}.s0.c2m2g7k16.frags.npy" for i in range(2)])
        assert sorted(p.name for p in tmp_path.iterdir()) == expected

        maps = np.load(tmp_path / "v0.s0.ident.all.maps.npy")
        assert maps.dtype == np.float16
        assert maps.shape == (10, 10, 480, 800)
        frags = np.load(tmp_path / "v0.s0.c2m2g7k16.frags.npy")
        assert frags.dtype == np.float16
        assert frags.shape == (4, 3, 112, 112)

        warm_model, warm_logs = run()
        again_model, again_logs = run()
        assert warm_logs == cold_logs
        assert again_logs == cold_logs
        for a, b, c in zip(cold_model.parameters(), warm_model.parameters(),
                           again_model.parameters()):
            assert np.array_equal(a.data, b.data)
            assert np.array_equal(a.data, c.data)
            assert a.data.dtype == b.data.dtype


class TestWriteTrainingLog:
    def test_exact_csv_round_trip(self, tmp_path):
        logs = [EpochLog(0, 0.5, 0.25, 0.1, 2, 1, 0.9),
                EpochLog(1, 1 / 3, 0.2, 4 / 30, 2, 0, -1.0)]
        path = tmp_path / "log.csv"
        write_training_log(logs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("epoch,mean_loss,mean_plcc_loss,mean_ranking_loss,"
                            "batches,skipped_batches,train_srcc")
        assert lines[1] == "0,0.5,0.25,0.1,2,1,0.9"
        assert lines[2] == f"1,{(1 / 3)!r},0.2,{(4 / 30)!r},2,0,-1.0"
        # repr floats survive a parse exactly
        fields = lines[2].split(",")
        assert float(fields[1]) == 1 / 3
        assert float(fields[3]) == 4 / 30


@pytest.fixture(scope="module")
def scored_scenes():
    """One evaluation over four scenes: two healthy, one degenerate, one too small."""
    model = QualityModel(CFG, seed=1)
    items = _items(8,
                   oa=[1.0, 2.0, 3.0, 2.0, 4.0, 3.0, 3.0, 1.5],
                   scenes=["a", "a", "a", "b", "b", "c", "c", "d"])
    report = evaluate(model, items, channel="oa", output="q_pred",
                      flow=None, sampler=SAMPLER, seed=0)
    return model, items, report


class TestEvaluate:
    def test_rows_cover_correlatable_scenes_in_order(self, scored_scenes):
        _, _, report = scored_scenes
        assert report.channel == "oa"
        assert report.output == "q_pred"
        assert [r.scene_id for r in report.scenes] == ["a", "b", "c"]
        assert [r.count for r in report.scenes] == [3, 2, 2]
        assert report.skipped_scenes == ["d"]
        assert "v7" not in report.predictions
        assert len(report.predictions) == 7

    def test_scene_correlations_match_recomputation(self, scored_scenes):
        _, items, report = scored_scenes
        for row in report.scenes:
            if row.degenerate:
                continue
            scene_items = [it for it in items if it.scene_id == row.scene_id]
            preds = np.array([report.predictions[it.video_id] for it in scene_items])
            mos = np.array([it.oa_mos for it in scene_items])
            assert row.srcc == spearman(preds, mos)
            assert row.plcc == pearson(logistic_map(preds, mos), mos)

    def test_degenerate_scene_flagged_with_zero_correlations(self, scored_scenes):
        _, _, report = scored_scenes
        row = next(r for r in report.scenes if r.scene_id == "c")
        assert row.degenerate  # constant MOS cannot be correlated
        assert row.srcc == 0.0
        assert row.plcc == 0.0
        assert all(not r.degenerate for r in report.scenes if r.scene_id != "c")

    def test_weighting_is_count_weighted_mean(self, scored_scenes):
        _, _, report = scored_scenes
        total = sum(r.count for r in report.scenes)
        assert report.weighted_srcc == sum(r.srcc * r.count for r in report.scenes) / total
        assert report.weighted_plcc == sum(r.plcc * r.count for r in report.scenes) / total

    def test_scene_filter_and_determinism(self, scored_scenes):
        model, items, _ = scored_scenes
        first = evaluate(model, items, test_scenes=["b"], channel="oa",
                         output="q_pred", flow=None, sampler=SAMPLER, seed=0)
        second = evaluate(model, items, test_scenes=["b"], channel="oa",
                          output="q_pred", flow=None, sampler=SAMPLER, seed=0)
        assert [r.scene_id for r in first.scenes] == ["b"]
        assert set(first.predictions) == {"v3", "v4"}
        assert first == second

    def test_output_selects_the_reported_quantity(self, scored_scenes):
        model, items, _ = scored_scenes
        report = evaluate(model, items, test_scenes=["b"], channel="oa",
                          output="q_b", flow=None, sampler=SAMPLER, seed=0)
        direct = score_video(model, _video(3), "v3", seed=0, flow=None,
                             sampler=SAMPLER)
        assert report.predictions["v3"] == direct.q_b

    def test_missing_channel_label_rejected(self, scored_scenes):
        model, items, _ = scored_scenes
        with pytest.raises(ValueError, match="ts"):
            evaluate(model, items, test_scenes=["b"], channel="ts",
                     flow=None, sampler=SAMPLER, seed=0)

    def test_argument_validation(self, scored_scenes):
        model, items, _ = scored_scenes
        with pytest.raises(ValueError, match="channel"):
            evaluate(model, items, channel="overall")
        with pytest.raises(ValueError, match="output"):
            evaluate(model, items, output="q_c")

    def test_no_evaluable_scenes(self, scored_scenes):
        model, items, _ = scored_scenes
        with pytest.raises(NoEvaluableScenes):
            evaluate(model, items, test_scenes=["d"], channel="oa",
                     flow=None, sampler=SAMPLER, seed=0)


class TestWriteReport:
    def test_json_payload(self, tmp_path):
        rows = [SceneRow("a", 3, 0.5, 0.25),
                SceneRow("b", 2, 0.0, 0.0, degenerate=True)]
        report = EvalReport("oa", "q_pred", rows, 0.3, 0.15,
                            skipped_scenes=["c"], predictions={"v0": 1.25})
        path = tmp_path / "report.json"
        write_report(report, path)
        text = path.read_text()
        assert text.endswith("\n")
        assert json.loads(text) == {
            "channel": "oa",
            "output": "q_pred",
            "scenes": [
                {"scene_id": "a", "count": 3, "srcc": 0.5, "plcc": 0.25,
                 "degenerate": False},
                {"scene_id": "b", "count": 2, "srcc": 0.0, "plcc": 0.0,
                 "degenerate": True},
            ],
            "weighted": {"srcc": 0.3, "plcc": 0.15},
            "skipped_scenes": ["c"],
            "predictions": {"v0": 1.25},
        }
