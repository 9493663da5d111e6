import itertools

import pytest
from hypothesis import given, settings, strategies as st

from whymine.corpus import ClipRecord, GoldRecord, Split
from whymine.evalreport import (
    EvalError,
    calibrate_threshold,
    evaluate_predictions,
    instance_metrics,
    macro_report,
    most_frequent_baseline,
    read_predictions,
    write_predictions,
)


def _gold(clip_id, reasons):
    return GoldRecord(clip_id=clip_id, gold_reason_ids=tuple(reasons),
                      per_reason_votes={}, majority_confidence="high",
                      majority_modality="verbal")


def _clip(clip_id, action, candidates):
    return ClipRecord(clip_id=clip_id, video_id="v", start_s=0.0, end_s=30.0,
                      action=action, candidate_reason_ids=tuple(candidates),
                      excerpt="x")


class TestInstanceMetrics:
    def test_hand_worked_example(self):
        # gold {a,b}, predicted {b,c} over {a,b,c,d}:
        # tp=1 fp=1 fn=1 tn=1 -> accuracy 1/2, P 1/2, R 1/2, F1 1/2
        m = instance_metrics({"a", "b"}, {"b", "c"}, ["a", "b", "c", "d"])
        assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 1)
        assert m.accuracy == m.precision == m.recall == m.f1 == pytest.approx(0.5)

    def test_empty_gold_empty_prediction(self):
        m = instance_metrics(set(), set(), ["a", "b"])
        assert m.accuracy == m.precision == m.recall == pytest.approx(1.0)
        assert m.f1 == pytest.approx(1.0)

    def test_empty_prediction_nonempty_gold(self):
        m = instance_metrics({"a"}, set(), ["a", "b"])
        assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
        assert m.accuracy == pytest.approx(0.5)

    def test_gold_outside_candidates_is_an_error(self):
        with pytest.raises(EvalError):
            instance_metrics({"z"}, set(), ["a", "b"])

    def test_prediction_outside_candidates_is_an_error(self):
        with pytest.raises(EvalError):
            instance_metrics(set(), {"z"}, ["a", "b"])

    def test_exhaustive_against_per_label_oracle(self):
        """All 256 (gold, predicted) pairs over a 4-label universe,
        checked against a literal per-label loop."""
        universe = ["a", "b", "c", "d"]
        subsets = [set(c) for r in range(5) for c in itertools.combinations(universe, r)]
        for gold in subsets:
            for pred in subsets:
                m = instance_metrics(gold, pred, universe)
                tp = fp = fn = tn = 0
                for label in universe:
                    in_g, in_p = label in gold, label in pred
                    tp += in_g and in_p
                    fp += (not in_g) and in_p
                    fn += in_g and (not in_p)
                    tn += (not in_g) and (not in_p)
                assert (m.tp, m.fp, m.fn, m.tn) == (tp, fp, fn, tn)
                assert m.accuracy == pytest.approx((tp + tn) / 4)
                p = tp / (tp + fp) if tp + fp else (1.0 if not gold else 0.0)
                r = tp / (tp + fn) if tp + fn else 1.0
                assert m.precision == pytest.approx(p)
                assert m.recall == pytest.approx(r)
                f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
                assert m.f1 == pytest.approx(f1)


class TestMacroReport:
    def test_actions_weighted_equally(self):
        # action x: one clip at F1 0.0; action y: three clips at F1 0.8.
        # macro F1 = (0.0 + 0.8) / 2 = 0.4, not the clip-weighted 0.6.
        instances = [instance_metrics({"a"}, set(), ["a", "b"], "c1", "x")]
        for i in range(3):
            # gold {a}, pred {a, b} over {a, b, c}: P=1/2 R=1 F1=2/3... use
            # exact 0.8: gold {a,b}, pred {a,b,c}: P=2/3 R=1 F1=0.8
            instances.append(
                instance_metrics({"a", "b"}, {"a", "b", "c"},
                                 ["a", "b", "c"], f"d{i}", "y"))
        report = macro_report(instances)
        assert report.per_action["x"]["f1"] == 0.0
        assert report.per_action["y"]["f1"] == pytest.approx(0.8)
        assert report.macro["f1"] == pytest.approx(0.4)
        assert report.clip_counts == {"x": 1, "y": 3}

    def test_empty_input_is_an_error(self):
        with pytest.raises(EvalError):
            macro_report([])

    def test_text_rendering_contains_percentages(self):
        instances = [instance_metrics({"a"}, {"a"}, ["a", "b"], "c1", "clean")]
        text = macro_report(instances, method="m", input_descriptor="i").to_text()
        assert "clean" in text and "100.00" in text and "macro" in text

    def test_instance_order_invariance(self):
        instances = [
            instance_metrics({"a"}, {"a"}, ["a", "b"], "c1", "x"),
            instance_metrics({"b"}, {"a"}, ["a", "b"], "c2", "x"),
            instance_metrics({"a"}, set(), ["a", "b"], "c3", "y"),
        ]
        fwd = macro_report(instances)
        rev = macro_report(list(reversed(instances)))
        assert fwd.macro == rev.macro and fwd.per_action == rev.per_action


CLIPS = {
    "c1": _clip("c1", "clean", ["r1", "r2", "r3"]),
    "c2": _clip("c2", "clean", ["r1", "r2", "r3"]),
    "c3": _clip("c3", "clean", ["r1", "r2", "r3"]),
    "c4": _clip("c4", "cook", ["s1", "s2"]),
}
GOLD = {
    "c1": _gold("c1", ["r1"]),
    "c2": _gold("c2", ["r1", "r2"]),
    "c3": _gold("c3", ["r2"]),
    "c4": _gold("c4", ["s2"]),
}


class TestMostFrequentBaseline:
    def test_frequency_on_test_gold(self):
        split = Split(dev=("c3",), test=("c1", "c2", "c4"))
        preds = most_frequent_baseline(GOLD, CLIPS, split)
        # on test, clean: r1 appears twice, r2 once -> r1 everywhere
        assert preds == {"c1": {"r1"}, "c2": {"r1"}, "c4": {"s2"}}

    def test_estimate_on_dev(self):
        split = Split(dev=("c3",), test=("c1", "c2"))
        preds = most_frequent_baseline(GOLD, CLIPS, split, estimate_on="dev")
        # dev gold for clean is only r2
        assert preds == {"c1": {"r2"}, "c2": {"r2"}}

    def test_tie_breaks_on_smallest_label(self):
        labels = {"r1": "zebra reason", "r2": "apple reason", "r3": "c"}
        split = Split(dev=(), test=("c1", "c3"))
        # r1 and r2 each appear once on test -> label tie-break picks r2
        preds = most_frequent_baseline(GOLD, CLIPS, split, labels=labels)
        assert preds == {"c1": {"r2"}, "c3": {"r2"}}

    def test_action_without_gold_predicts_nothing(self):
        gold = dict(GOLD)
        gold["c4"] = _gold("c4", [])
        split = Split(dev=(), test=("c4",))
        assert most_frequent_baseline(gold, CLIPS, split) == {"c4": set()}

    def test_bad_estimate_on(self):
        with pytest.raises(EvalError):
            most_frequent_baseline(GOLD, CLIPS, Split(dev=(), test=()),
                                   estimate_on="train")


class TestEvaluatePredictions:
    def test_perfect_predictions(self):
        preds = {cid: set(g.gold_reason_ids) for cid, g in GOLD.items()}
        report = evaluate_predictions(GOLD, preds, CLIPS, list(CLIPS))
        assert report.macro["f1"] == pytest.approx(1.0)
        assert report.macro["accuracy"] == pytest.approx(1.0)

    def test_missing_prediction_counts_as_empty(self):
        report = evaluate_predictions(GOLD, {}, CLIPS, ["c1"])
        assert report.macro["f1"] == 0.0


class TestCalibrateThreshold:
    DEV_SCORES = {
        "c1": {"r1": 0.9, "r2": 0.4, "r3": 0.1},
        "c2": {"r1": 0.8, "r2": 0.7, "r3": 0.2},
        "c3": {"r1": 0.3, "r2": 0.6, "r3": 0.1},
    }

    def _oracle(self, grid, comparator=">="):
        """Independent sweep: recompute dev macro F1 at each threshold."""
        from whymine.scoring import threshold_select

        out = []
        for t in sorted(grid):
            instances = [
                instance_metrics(set(GOLD[cid].gold_reason_ids),
                                 threshold_select(scores, t, comparator),
                                 CLIPS[cid].candidate_reason_ids, cid,
                                 CLIPS[cid].action)
                for cid, scores in self.DEV_SCORES.items()
            ]
            out.append((t, macro_report(instances).macro["f1"]))
        return out

    def test_matches_exhaustive_sweep(self):
        grid = [0.1, 0.3, 0.5, 0.65, 0.85]
        result = calibrate_threshold(self.DEV_SCORES, GOLD, CLIPS, grid)
        swept = self._oracle(grid)
        assert list(result.grid) == [(t, pytest.approx(f)) for t, f in swept]
        best = max(swept, key=lambda tf: (tf[1], -tf[0]))
        assert (result.threshold, result.dev_f1) == pytest.approx(best)

    def test_tie_goes_to_smallest_threshold(self):
        # both thresholds select exactly {r1} on c1 only
        scores = {"c1": {"r1": 0.9, "r2": 0.0, "r3": 0.0}}
        gold = {"c1": GOLD["c1"]}
        result = calibrate_threshold(scores, gold, CLIPS, [0.5, 0.6, 0.7])
        assert result.threshold == 0.5
        assert result.dev_f1 == pytest.approx(1.0)

    def test_empty_grid_is_an_error(self):
        with pytest.raises(EvalError):
            calibrate_threshold(self.DEV_SCORES, GOLD, CLIPS, [])

    @settings(max_examples=30)
    @given(grid=st.lists(st.floats(0, 1), min_size=1, max_size=6, unique=True))
    def test_reported_best_is_max_of_grid_column(self, grid):
        result = calibrate_threshold(self.DEV_SCORES, GOLD, CLIPS, grid)
        assert result.dev_f1 == pytest.approx(max(f for _, f in result.grid))
        winners = [t for t, f in result.grid
                   if f == pytest.approx(result.dev_f1)]
        assert result.threshold == min(winners)


class TestPredictionsFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        selections = {"c1": {"r1", "r2"}, "c2": set()}
        scores = {"c1": {"r1": 0.9, "r2": 0.8, "r3": 0.1}}
        write_predictions(path, "nli-transcript", selections, scores)
        got_sel, got_scores, method = read_predictions(path)
        assert got_sel == selections
        assert got_scores == scores
        assert method == "nli-transcript"
