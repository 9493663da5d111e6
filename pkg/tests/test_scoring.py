import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from protocol_suite import run_protocol_suite
from whymine.config import DEFAULT_MARKERS
from whymine.scoring import (
    BLANK,
    ObjectDetection,
    ScoringError,
    TimeSlotCaption,
    TransportError,
    ScorerClient,
    VectorStore,
    build_premise,
    cosine_select,
    dedup_captions,
    fitb_prompt,
    nli_hypothesis,
    softmax,
    threshold_select,
    vicinity_select,
)
from whymine.textmine import extract_causal_candidates, tokenize
from test_textmine import LEX, _sentences


class TestCosineSelect:
    def test_identity_selected(self):
        v = np.array([1.0, 0.0])
        selected, scores = cosine_select(v, {"r": v}, 0.1)
        assert selected == {"r"} and scores["r"] == pytest.approx(1.0)

    def test_orthogonal_not_selected(self):
        selected, scores = cosine_select(np.array([1.0, 0.0]),
                                         {"r": np.array([0.0, 1.0])}, 0.1)
        assert selected == set() and scores["r"] == pytest.approx(0.0)

    def test_exact_threshold_excluded(self):
        # constructed vectors with dot product exactly 0.1
        doc = np.array([1.0, 0.0])
        reason = np.array([0.1, math.sqrt(1 - 0.01)])
        selected, scores = cosine_select(doc, {"r": reason}, 0.1)
        assert scores["r"] == pytest.approx(0.1)
        assert selected == set()

    def test_dimension_mismatch(self):
        with pytest.raises(ScoringError):
            cosine_select(np.zeros(2), {"r": np.zeros(3)}, 0.1)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(0)
        doc = rng.normal(size=4)
        doc /= np.linalg.norm(doc)
        reasons = {}
        for i in range(3):
            v = rng.normal(size=4)
            reasons[f"r{i}"] = v / np.linalg.norm(v)
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        _, base = cosine_select(doc, reasons, 0.1)
        _, rotated = cosine_select(q @ doc, {k: q @ v for k, v in reasons.items()}, 0.1)
        for rid in reasons:
            assert rotated[rid] == pytest.approx(base[rid])


class TestVicinitySelect:
    def _candidate(self):
        sents = _sentences("the house was dusty so i clean because guests arrive today")
        return extract_causal_candidates(sents, LEX, DEFAULT_MARKERS, 15)[0]

    def test_window_text_identical_to_reason(self):
        cand = self._candidate()
        from whymine.textmine import context_window

        text = context_window(cand, 2)
        store = VectorStore({text: np.array([1.0, 0.0])})
        selected, _ = vicinity_select(cand, 2, {"r": np.array([1.0, 0.0])}, 0.1, store)
        assert selected == {"r"}

    def test_missing_embedding_names_text(self):
        cand = self._candidate()
        with pytest.raises(ScoringError, match="clean because"):
            vicinity_select(cand, 2, {"r": np.array([1.0, 0.0])}, 0.1, VectorStore())

    def test_huge_window_equals_whole_context(self):
        cand = self._candidate()
        store = VectorStore({cand.context_text.strip(): np.array([0.0, 1.0])})
        selected, scores = vicinity_select(cand, 10_000, {"r": np.array([0.0, 1.0])},
                                           0.1, store)
        expected_sel, expected_scores = cosine_select(np.array([0.0, 1.0]),
                                                      {"r": np.array([0.0, 1.0])}, 0.1)
        assert selected == expected_sel and scores == expected_scores


class TestNliHypothesis:
    def test_template_text(self):
        assert nli_hypothesis("cleaning", "declutter") == \
            "The reason for cleaning is declutter."

    def test_substitution(self):
        assert nli_hypothesis("writing", "take notes") == \
            "The reason for writing is take notes."

    def test_empty_reason_rejected(self):
        with pytest.raises(ScoringError):
            nli_hypothesis("cleaning", "")


class TestBuildPremise:
    def test_objects_threshold(self):
        premise = build_premise("objects",
                                objects=[ObjectDetection("sink", 0.9),
                                         ObjectDetection("sponge", 0.65)])
        assert premise == "sink"

    def test_objects_dedup_first_appearance_order(self):
        premise = build_premise("objects",
                                objects=[ObjectDetection("sink", 0.9),
                                         ObjectDetection("towel", 0.8),
                                         ObjectDetection("sink", 0.95)])
        assert premise == "sink, towel"

    def test_transcript_verbatim(self):
        assert build_premise("transcript", excerpt="i clean  Because yes") == \
            "i clean  Because yes"

    def test_combined_objects_then_captions(self):
        premise = build_premise("objects+captions",
                                objects=[ObjectDetection("sink", 0.9)],
                                captions=["a person washes dishes"])
        assert premise == "sink. a person washes dishes"

    def test_missing_artifact_is_an_error(self):
        with pytest.raises(ScoringError):
            build_premise("objects")


class TestDedupCaptions:
    def test_covered_slot_dropped(self):
        a = TimeSlotCaption(10, 20, "short")
        b = TimeSlotCaption(0, 60, "long")
        assert dedup_captions([a, b], 0.8) == [b]

    def test_disjoint_slots_kept(self):
        a = TimeSlotCaption(0, 10, "a")
        b = TimeSlotCaption(20, 40, "b")
        assert dedup_captions([b, a], 0.8) == [a, b]  # ordered by start

    def test_small_overlap_kept(self):
        a = TimeSlotCaption(0, 10, "a")
        b = TimeSlotCaption(9, 30, "b")
        # interval arithmetic: overlap 1s = 10% of a's duration < 80%
        assert dedup_captions([a, b], 0.8) == [a, b]

    @settings(max_examples=100)
    @given(slots=st.lists(
        st.tuples(st.floats(0, 100, allow_nan=False), st.floats(0.5, 50)),
        min_size=1, max_size=12), fraction=st.floats(0.1, 1.0))
    def test_antichain(self, slots, fraction):
        captions = [TimeSlotCaption(s, s + d, f"cap{i}")
                    for i, (s, d) in enumerate(slots)]
        kept = dedup_captions(captions, fraction)
        for a in kept:
            for b in kept:
                if b.duration_s > a.duration_s:
                    overlap = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
                    assert overlap < fraction * a.duration_s


class TestFitbPrompt:
    def test_punctuated_sentence(self):
        assert fitb_prompt("I clean the windows.", "clean") == \
            f"I clean the windows because {BLANK}."

    def test_unpunctuated(self):
        assert fitb_prompt("i clean the windows", "clean") == \
            f"i clean the windows because {BLANK}"

    def test_blank_after_first_mention_only(self):
        out = fitb_prompt("I clean daily. Then I clean again.", "clean")
        assert out == f"I clean daily because {BLANK}. Then I clean again."
        assert out.count(BLANK) == 1

    def test_mention_in_second_sentence(self):
        out = fitb_prompt("It was messy. So I cleaned it up!", "cleaned")
        assert out == f"It was messy. So I cleaned it up because {BLANK}!"

    def test_missing_mention_is_an_error(self):
        with pytest.raises(ScoringError):
            fitb_prompt("nothing relevant here", "clean")

    @settings(max_examples=60)
    @given(st.text(alphabet="abc .!?", min_size=1, max_size=40))
    def test_preserves_all_other_characters(self, noise):
        excerpt = noise + " clean " + noise
        out = fitb_prompt(excerpt, "clean")
        assert out.count(BLANK) == 1
        assert out.replace(f" because {BLANK}", "", 1) == excerpt


class TestThresholdSelect:
    def test_all_zero_scores_empty(self):
        assert threshold_select({"a": 0.0, "b": 0.0}, 0.5) == set()

    def test_nli_boundary(self):
        assert threshold_select({"a": 0.81, "b": 0.79}, 0.8, ">=") == {"a"}

    def test_softmax_thresholding_matches_hand_computation(self):
        lls = [-1.0, -2.0, -3.0]
        probs = softmax(lls)
        # softmax by hand on the 3-candidate toy
        z = math.exp(-1) + math.exp(-2) + math.exp(-3)
        assert probs == pytest.approx([math.exp(-1) / z, math.exp(-2) / z,
                                       math.exp(-3) / z])
        scores = dict(zip("abc", probs))
        assert threshold_select(scores, 0.5, ">=") == {"a"}

    def test_strict_comparator(self):
        assert threshold_select({"a": 0.1}, 0.1, ">") == set()
        assert threshold_select({"a": 0.1}, 0.1, ">=") == {"a"}

    def test_non_finite_score_rejected(self):
        with pytest.raises(ScoringError):
            threshold_select({"a": float("nan")}, 0.5)

    @settings(max_examples=60)
    @given(scores=st.dictionaries(st.text("abcdef", min_size=1, max_size=3),
                                  st.floats(0, 1), min_size=1, max_size=8),
           t1=st.floats(0, 1), t2=st.floats(0, 1))
    def test_monotone_in_threshold(self, scores, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        for comparator in (">", ">="):
            assert threshold_select(scores, hi, comparator) <= \
                threshold_select(scores, lo, comparator)


class TestVectorStore:
    def test_round_trip(self, tmp_path):
        store = VectorStore({"hello": np.array([0.6, 0.8])})
        store.save(tmp_path / "vecs.jsonl")
        loaded = VectorStore.load(tmp_path / "vecs.jsonl")
        assert np.allclose(loaded.get("hello"), [0.6, 0.8])

    def test_missing_text_named(self):
        with pytest.raises(ScoringError, match="nope"):
            VectorStore().get("nope")


class TestRemoteScorer:
    def test_stub_protocol_conformance(self, stub_server):
        run_protocol_suite(stub_server.endpoint)

    def test_unreachable_endpoint_raises_transport_error(self):
        client = ScorerClient("127.0.0.1:1", timeout=0.2, retries=1, backoff_s=0.01)
        with pytest.raises(TransportError):
            client.embed(["x"])
