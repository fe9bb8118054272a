"""Video attributes, annotation screening, MOS aggregation, and study files."""

import numpy as np
import pytest

from revq.dataset import (
    CORRELATION_FLOOR,
    GOLD_TOLERANCE,
    MIN_OVERLAP,
    REPEAT_TOLERANCE,
    Rating,
    SESSIONS,
    aggregate_mos,
    clean_annotations,
    compute_attributes,
    load_gold_csv,
    load_manifest,
    load_ratings_csv,
    load_repeats_csv,
    load_splits,
    make_splits,
    on_score_grid,
    save_splits,
    write_mos_csv,
    ManifestEntry,
    SplitSpec,
)
from revq.media import Video, luma

RNG = np.random.default_rng(41)


def _video(frames):
    return Video(np.asarray(frames, dtype=np.float32))


# ----------------------------------------------------------------------
# attributes


class TestAttributes:
    def test_brightness_and_contrast_loop_oracle(self):
        frames = RNG.random((4, 6, 8, 3), dtype=np.float32)
        attrs = compute_attributes(_video(frames))
        lum = luma(frames)
        assert attrs.brightness == pytest.approx(lum.mean(), abs=1e-9)
        want_contrast = np.mean([lum[t].std() for t in range(4)])
        assert attrs.contrast == pytest.approx(want_contrast, abs=1e-9)

    def test_colorfulness_loop_oracle(self):
        frames = RNG.random((3, 5, 5, 3), dtype=np.float32)
        attrs = compute_attributes(_video(frames))
        vals = []
        for f in frames:
            rg = f[..., 0] - f[..., 1]
            yb = 0.5 * (f[..., 0] + f[..., 1]) - f[..., 2]
            vals.append(np.sqrt(rg.var() + yb.var())
                        + 0.3 * np.sqrt(rg.mean() ** 2 + yb.mean() ** 2))
        assert attrs.colorfulness == pytest.approx(np.mean(vals), abs=1e-9)

    def test_temporal_information_is_max_diff_std(self):
        frames = RNG.random((5, 6, 6, 3), dtype=np.float32)
        attrs = compute_attributes(_video(frames))
        lum = luma(frames)
        want = max(float((lum[t] - lum[t - 1]).std()) for t in range(1, 5))
        assert attrs.temporal_information == pytest.approx(want, abs=1e-9)

    def test_gray_video_has_no_color_or_motion(self):
        frames = np.full((3, 4, 4, 3), 0.5, np.float32)
        attrs = compute_attributes(_video(frames))
        assert attrs.brightness == pytest.approx(0.5, abs=1e-6)
        assert attrs.contrast == 0.0
        assert attrs.colorfulness == 0.0
        assert attrs.temporal_information == 0.0

    def test_spatial_stats_ignore_frame_order_ti_does_not(self):
        a = RNG.random((1, 8, 8, 3), dtype=np.float32)
        b = a + 0.1
        c = a - 0.05
        fwd = compute_attributes(_video(np.concatenate([a, b, c])))
        perm = compute_attributes(_video(np.concatenate([a, c, b])))
        assert fwd.brightness == pytest.approx(perm.brightness, abs=1e-9)
        assert fwd.contrast == pytest.approx(perm.contrast, abs=1e-9)
        assert fwd.colorfulness == pytest.approx(perm.colorfulness, abs=1e-9)
        # a->b jumps 0.1 but b->c jumps -0.15; reordering changes the max step
        lum = luma(np.concatenate([a, b, c]))
        assert fwd.temporal_information == pytest.approx(
            max(float((lum[1] - lum[0]).std()), float((lum[2] - lum[1]).std())), abs=1e-9)

    def test_single_frame_video_has_zero_ti(self):
        attrs = compute_attributes(_video(RNG.random((1, 4, 4, 3), dtype=np.float32)))
        assert attrs.temporal_information == 0.0


# ----------------------------------------------------------------------
# screening


def _fixture_ratings():
    """Six annotators, exactly one violating each screening rule.

    Videos v1..v5 have consensus scores 1..5 on both channels, g1 is the gold
    video with reference (3.0, 3.0), and (v2, v2r) is the repeat pair.
    """
    true = {"v1": 1.0, "v2": 2.0, "v3": 3.0, "v4": 4.0, "v5": 5.0}
    ratings = []

    def add(ann, scores, g1, v2r):
        for vid, val in scores.items():
            ratings.append(Rating(ann, vid, val, val))
        ratings.append(Rating(ann, "g1", g1, g1))
        ratings.append(Rating(ann, "v2r", v2r, v2r))

    add("alice", true, g1=3.0, v2r=2.0)
    add("bob", {**true, "v1": 1.5}, g1=3.5, v2r=2.5)   # within every tolerance
    add("carol", true, g1=2.5, v2r=2.0)
    add("dave", true, g1=4.5, v2r=2.0)                  # gold: |4.5 - 3| > 1
    add("erin", {**true, "v2": 1.5}, g1=3.0, v2r=3.0)   # repeat: |1.5 - 3| > 1
    reversed_scores = {v: 6.0 - s for v, s in true.items()}
    add("frank", reversed_scores, g1=3.0, v2r=4.0)      # anti-correlated
    golds = {"g1": (3.0, 3.0)}
    repeats = [("v2", "v2r")]
    return ratings, golds, repeats


class TestCleaning:
    def test_each_rule_catches_exactly_its_violator(self):
        ratings, golds, repeats = _fixture_ratings()
        report = clean_annotations(ratings, golds, repeats)
        assert report.rejected == {"dave": ["gold"],
                                   "erin": ["repeat"],
                                   "frank": ["correlation"]}
        assert report.rejected_by_rule("gold") == ["dave"]
        assert report.rejected_by_rule("repeat") == ["erin"]
        assert report.rejected_by_rule("correlation") == ["frank"]
        assert report.annotators == ["alice", "bob", "carol", "dave", "erin", "frank"]
        kept = {r.annotator_id for r in report.retained}
        assert kept == {"alice", "bob", "carol"}

    def test_ts_channel_is_screened_too(self):
        ratings, golds, repeats = _fixture_ratings()
        patched = [Rating(r.annotator_id, r.video_id, r.oa, 4.5)
                   if (r.annotator_id, r.video_id) == ("alice", "g1") else r
                   for r in ratings]
        report = clean_annotations(patched, golds, repeats)
        assert "gold" in report.rejected["alice"]

    def test_tolerances_are_inclusive(self):
        ratings = [Rating("a", "g1", 4.0, 3.0), Rating("a", "v1", 1.0, 1.0),
                   Rating("a", "v1r", 2.0, 2.0)]
        report = clean_annotations(ratings, {"g1": (3.0, 3.0)}, [("v1", "v1r")])
        assert report.rejected == {}  # both deviations equal the limit exactly

    def test_rules_reported_together_for_multi_violators(self):
        ratings, golds, repeats = _fixture_ratings()
        patched = [Rating(r.annotator_id, r.video_id, 4.5, 4.5)
                   if (r.annotator_id, r.video_id) == ("erin", "g1") else r
                   for r in ratings]
        report = clean_annotations(patched, golds, repeats)
        assert report.rejected["erin"] == ["gold", "repeat"]

    def test_screening_is_idempotent(self):
        ratings, golds, repeats = _fixture_ratings()
        first = clean_annotations(ratings, golds, repeats)
        second = clean_annotations(first.retained, golds, repeats)
        assert second.rejected == {}
        assert second.retained == first.retained

    def test_small_overlap_is_flagged_not_screened(self):
        ratings = []
        for ann in ("a", "b", "c"):
            for vid, val in [("v1", 1.0), ("v2", 3.0)]:
                ratings.append(Rating(ann, vid, val, val))
        report = clean_annotations(ratings, {}, [])
        assert report.rejected == {}
        assert all("insufficient_overlap" in f for f in report.flags.values())

    def test_constant_scores_are_degenerate_and_rejected(self):
        ratings, golds, repeats = _fixture_ratings()
        flat = [Rating("gina", vid, 3.0, 3.0)
                for vid in ("v1", "v2", "v3", "v4", "v5", "g1", "v2r")]
        report = clean_annotations(ratings + flat, golds, repeats)
        assert "correlation" in report.rejected["gina"]
        assert "degenerate_oa" in report.flags["gina"]
        assert "degenerate_ts" in report.flags["gina"]

    def test_missing_gold_rating_is_an_error(self):
        ratings = [Rating("a", "v1", 1.0, 1.0), Rating("a", "v2", 2.0, 2.0)]
        with pytest.raises(ValueError):
            clean_annotations(ratings, {"g1": (3.0, 3.0)}, [])

    def test_duplicate_rating_is_an_error(self):
        ratings = [Rating("a", "v1", 1.0, 1.0), Rating("a", "v1", 2.0, 2.0)]
        with pytest.raises(ValueError):
            clean_annotations(ratings, {}, [])

    def test_off_grid_scores_are_an_error(self):
        with pytest.raises(ValueError):
            clean_annotations([Rating("a", "v1", 3.25, 3.0)], {}, [])
        with pytest.raises(ValueError):
            clean_annotations([Rating("a", "v1", 3.0, 5.5)], {}, [])

    def test_report_as_dict_is_json_ready(self):
        ratings, golds, repeats = _fixture_ratings()
        d = clean_annotations(ratings, golds, repeats).as_dict()
        assert d["rejected_annotators"] == [["dave", "gold"], ["erin", "repeat"],
                                            ["frank", "correlation"]]
        assert d["retained_rating_count"] == 21
        assert d["annotators"][0] == "alice"

    def test_grid_predicate(self):
        assert on_score_grid(1.0) and on_score_grid(3.5) and on_score_grid(5.0)
        assert not on_score_grid(0.5)
        assert not on_score_grid(5.5)
        assert not on_score_grid(3.25)


class TestAggregateMos:
    def test_exact_means_and_counts(self):
        ratings, golds, repeats = _fixture_ratings()
        retained = clean_annotations(ratings, golds, repeats).retained
        rows = {r.video_id: r for r in aggregate_mos(retained)}
        assert rows["v1"].oa_mos == np.mean([1.0, 1.5, 1.0])
        assert rows["v1"].n_ratings == 3
        assert rows["v3"].oa_mos == 3.0
        assert rows["v3"].ts_mos == 3.0
        assert rows["g1"].oa_mos == np.mean([3.0, 3.5, 2.5])

    def test_rows_sorted_by_video_id(self):
        rows = aggregate_mos([Rating("a", "z", 1.0, 1.0), Rating("a", "b", 2.0, 2.0)])
        assert [r.video_id for r in rows] == ["b", "z"]

    def test_mos_stays_between_observed_extremes(self):
        for _ in range(50):
            vals = RNG.integers(2, 11, size=5) / 2.0
            ratings = [Rating(f"a{i}", "v", float(v), float(v))
                       for i, v in enumerate(vals)]
            row = aggregate_mos(ratings)[0]
            assert vals.min() <= row.oa_mos <= vals.max()


# ----------------------------------------------------------------------
# manifests and splits


class TestManifest:
    def test_load_with_defaults_and_golds(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("""[
          {"video_path": "clips/a.y4m", "scene_id": "sc1"},
          {"video_id": "bb", "video_path": "clips/b.y4m", "scene_id": "sc2",
           "oa_mos": 3.5, "ts_mos": 4.0, "display_class": "s720p"},
          {"video_id": "gold1", "video_path": "clips/g.y4m", "scene_id": "sc3",
           "gold_oa": 3.0, "gold_ts": 2.5}
        ]""")
        entries = load_manifest(path)
        assert entries[0].video_id == "a"
        assert entries[0].display_class == "s1080p"
        assert not entries[0].is_gold
        assert entries[1].oa_mos == 3.5
        assert entries[2].is_gold
        assert entries[2].gold_ts == 2.5

    def test_missing_fields_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('[{"scene_id": "sc1"}]')
        with pytest.raises(ValueError):
            load_manifest(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("""[
          {"video_path": "x/a.y4m", "scene_id": "s1"},
          {"video_path": "y/a.y4m", "scene_id": "s2"}
        ]""")
        with pytest.raises(ValueError):
            load_manifest(path)


class TestSplits:
    SCENES = [f"sc{i}" for i in range(10)]

    def test_splits_are_scene_disjoint_and_cover_everything(self):
        for s in make_splits(self.SCENES, n_splits=5, test_fraction=0.2, seed=3):
            assert not set(s.train_scenes) & set(s.test_scenes)
            assert sorted(s.train_scenes + s.test_scenes) == self.SCENES
            assert len(s.test_scenes) == 2

    def test_deterministic_per_seed_and_rep(self):
        a = make_splits(self.SCENES, seed=5)
        b = make_splits(self.SCENES, seed=5)
        c = make_splits(self.SCENES, seed=6)
        assert [(s.train_scenes, s.test_scenes) for s in a] == \
               [(s.train_scenes, s.test_scenes) for s in b]
        assert any(sa.test_scenes != sc.test_scenes for sa, sc in zip(a, c))
        assert len({tuple(s.test_scenes) for s in a}) > 1  # reps differ

    def test_single_test_scene_minimum(self):
        splits = make_splits(["a", "b", "c"], n_splits=2, test_fraction=0.1)
        assert all(len(s.test_scenes) == 1 for s in splits)

    def test_too_few_scenes_rejected(self):
        with pytest.raises(ValueError):
            make_splits(["only"], n_splits=1)

    def test_overlapping_spec_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(0, ["a", "b"], ["b", "c"])

    def test_save_load_round_trip(self, tmp_path):
        splits = make_splits(self.SCENES, seed=1)
        path = tmp_path / "splits.json"
        save_splits(splits, path)
        loaded = load_splits(path)
        assert [(s.repetition, s.train_scenes, s.test_scenes) for s in loaded] == \
               [(s.repetition, s.train_scenes, s.test_scenes) for s in splits]


# ----------------------------------------------------------------------
# CSV schemas


class TestCsvFiles:
    def test_ratings_round_trip(self, tmp_path):
        path = tmp_path / "ratings.csv"
        path.write_text(
            "annotator_id,video_id,oa,ts,session,timestamp\n"
            "a1,v1,3.0,4.5,s720p,12.5\n"
            "a2,v1,2.5,2.0,s2k,99.0\n")
        rows = load_ratings_csv(path)
        assert rows[0] == Rating("a1", "v1", 3.0, 4.5, "s720p", 12.5)
        assert rows[1].session == "s2k"

    def test_ratings_unknown_session_rejected_with_line(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("annotator_id,video_id,oa,ts,session,timestamp\n"
                        "a1,v1,3.0,4.5,s4k,0.0\n")
        with pytest.raises(ValueError, match="line 2"):
            load_ratings_csv(path)
        assert SESSIONS == ("s720p", "s1080p", "s2k")

    def test_ratings_bad_number_rejected_with_line(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("annotator_id,video_id,oa,ts,session,timestamp\n"
                        "a1,v1,3.0,4.5,s720p,0.0\n"
                        "a1,v2,bad,4.5,s720p,1.0\n")
        with pytest.raises(ValueError, match="line 3"):
            load_ratings_csv(path)

    def test_ratings_missing_column_rejected(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("annotator_id,video_id,oa,ts\na1,v1,3.0,4.5\n")
        with pytest.raises(ValueError, match="session"):
            load_ratings_csv(path)

    def test_gold_and_repeat_files(self, tmp_path):
        gold = tmp_path / "gold.csv"
        gold.write_text("video_id,oa,ts\ng1,3.0,2.5\ng2,4.0,4.0\n")
        assert load_gold_csv(gold) == {"g1": (3.0, 2.5), "g2": (4.0, 4.0)}
        rep = tmp_path / "repeats.csv"
        rep.write_text("original_id,repeat_id\nv1,v1r\nv9,v9r\n")
        assert load_repeats_csv(rep) == [("v1", "v1r"), ("v9", "v9r")]

    def test_gold_csv_bad_value_reports_line(self, tmp_path):
        gold = tmp_path / "gold.csv"
        gold.write_text("video_id,oa,ts\ng1,x,2.5\n")
        with pytest.raises(ValueError, match="line 2"):
            load_gold_csv(gold)

    def test_mos_csv_uses_repr_floats(self, tmp_path):
        rows = aggregate_mos([Rating("a", "v1", 1.0, 2.0),
                              Rating("b", "v1", 2.0, 2.5)])
        path = tmp_path / "mos.csv"
        write_mos_csv(rows, path)
        assert path.read_text() == "video_id,oa_mos,ts_mos,n\nv1,1.5,2.25,2\n"
