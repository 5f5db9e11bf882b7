import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parlda import (
    EvalReport,
    Hyperparams,
    align_columns,
    coherence_npmi,
    export_features,
    histogram_intersection,
    match_topics,
    roc_curve,
    topic_recovery_count,
)
from parlda.evaluation import top_term_ids

import oracles


class TestHistogramIntersection:
    def test_hand_example(self):
        got = histogram_intersection([0.2, 0.3, 0.5], [0.3, 0.3, 0.4])
        assert got == pytest.approx(0.9, abs=1e-12)

    def test_identical_is_one(self):
        p = np.array([0.1, 0.6, 0.3])
        assert histogram_intersection(p, p) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_is_zero(self):
        assert histogram_intersection([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_symmetry_and_l1_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.dirichlet(np.ones(6))
            q = rng.dirichlet(np.ones(6))
            a = histogram_intersection(p, q)
            assert a == pytest.approx(histogram_intersection(q, p), abs=1e-15)
            assert a == pytest.approx(1.0 - 0.5 * np.abs(p - q).sum(), abs=1e-12)

    @pytest.mark.parametrize(
        "p,q",
        [
            ([0.5, 0.5], [0.3, 0.3, 0.4]),          # shape mismatch
            ([0.5, 0.4], [0.5, 0.5]),                # p not normalized
            ([0.5, 0.5], [0.9, 0.2]),                # q not normalized
        ],
    )
    def test_validation(self, p, q):
        with pytest.raises(ValueError):
            histogram_intersection(p, q)


class TestTopTerms:
    def test_descending_order(self):
        ids = top_term_ids(np.array([[0.1, 0.5, 0.4]]), 3)
        assert ids.tolist() == [[1, 2, 0]]

    def test_boundary_tie_takes_lower_id(self):
        ids = top_term_ids(np.array([[0.4, 0.3, 0.3]]), 2)
        assert ids.tolist() == [[0, 1]]

    def test_all_equal_row(self):
        ids = top_term_ids(np.full((1, 5), 0.2), 3)
        assert ids.tolist() == [[0, 1, 2]]

    def test_rejects_top_n_above_vocab(self):
        with pytest.raises(ValueError):
            top_term_ids(np.ones((1, 3)), 4)


def _peaked(v, hot, mass=0.9):
    row = np.full(v, (1.0 - mass) / (v - len(hot)))
    for t in hot:
        row[t] = mass / len(hot)
    return row


class TestMatchTopics:
    def test_identity(self):
        truth = np.vstack([_peaked(12, [i]) for i in range(4)])
        m = match_topics(truth, truth)
        assert [(i, j) for i, j, _ in m.pairs] == [(i, i) for i in range(4)]
        assert all(s == pytest.approx(1.0, abs=1e-12) for _, _, s in m.pairs)
        assert m.unmatched_true == []

    def test_recovers_row_permutation(self):
        truth = np.vstack([_peaked(12, [i]) for i in range(4)])
        perm = [2, 0, 3, 1]
        learned = truth[perm]
        m = match_topics(learned, truth)
        # learned row number j holds true topic perm[j]
        assert {(i, j) for i, j, _ in m.pairs} == {(perm[j], j) for j in range(4)}

    def test_fewer_learned_rows_leaves_unmatched(self):
        truth = np.vstack([_peaked(10, [i]) for i in range(3)])
        m = match_topics(truth[:2], truth)
        assert len(m.pairs) == 2
        assert m.unmatched_true == [2]

    def test_tie_breaks_are_deterministic(self):
        flat = np.full((3, 8), 1.0 / 8)
        m = match_topics(flat, flat)
        assert [(i, j) for i, j, _ in m.pairs] == [(0, 0), (1, 1), (2, 2)]

    def test_pairs_sorted_by_true_id(self):
        rng = np.random.default_rng(3)
        truth = rng.dirichlet(np.ones(9), size=5)
        learned = rng.dirichlet(np.ones(9), size=5)
        for method in ("greedy", "exhaustive"):
            m = match_topics(learned, truth, method=method)
            assert [i for i, _, _ in m.pairs] == sorted(i for i, _, _ in m.pairs)

    def test_exhaustive_never_below_greedy(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            truth = rng.dirichlet(np.ones(6), size=4)
            learned = rng.dirichlet(np.ones(6), size=4)
            g = sum(s for _, _, s in match_topics(learned, truth).pairs)
            e = sum(s for _, _, s in
                    match_topics(learned, truth, method="exhaustive").pairs)
            assert e >= g - 1e-12

    def test_exhaustive_equals_greedy_when_separated(self):
        truth = np.vstack([_peaked(12, [i]) for i in range(4)])
        learned = truth[[3, 1, 0, 2]]
        g = match_topics(learned, truth)
        e = match_topics(learned, truth, method="exhaustive")
        assert g.pairs == e.pairs

    def test_exhaustive_beats_greedy_on_adversarial_instance(self):
        # Two-bin histograms [a, 1-a] and [b, 1-b] intersect at 1 - |a-b|,
        # giving the similarity matrix [[0.9, 0.9], [0.7, 0.5]]: greedy
        # takes (0,0) on the tie and is forced into the 0.5 corner, while
        # the exhaustive search finds the 0.9 + 0.7 pairing.
        truth = np.array([[0.5, 0.5], [0.9, 0.1]])
        learned = np.array([[0.6, 0.4], [0.4, 0.6]])
        sims = np.array([[histogram_intersection(t, l) for l in learned] for t in truth])
        assert np.allclose(sims, [[0.9, 0.9], [0.7, 0.5]], atol=1e-12)
        g = match_topics(learned, truth)
        e = match_topics(learned, truth, method="exhaustive")
        assert sum(s for _, _, s in g.pairs) == pytest.approx(1.4)
        assert sum(s for _, _, s in e.pairs) == pytest.approx(1.6)

    def test_exhaustive_size_cap(self):
        big = np.dstack([np.eye(9), 1 - np.eye(9)]).reshape(9, 18) / 9.0 * 9
        big = big / big.sum(axis=1, keepdims=True)
        with pytest.raises(ValueError, match="exhaustive"):
            match_topics(big, big, method="exhaustive")

    def test_unknown_method(self):
        flat = np.full((2, 4), 0.25)
        with pytest.raises(ValueError, match="method"):
            match_topics(flat, flat, method="hungarian")

    def test_vocabulary_mismatch(self):
        with pytest.raises(ValueError):
            match_topics(np.ones((2, 3)) / 3, np.ones((2, 4)) / 4)


class TestTopicRecovery:
    def test_perfect_model_recovers_everything(self):
        truth = np.vstack([_peaked(30, list(range(5 * i, 5 * i + 5))) for i in range(4)])
        assert topic_recovery_count(truth, truth, top_n=5, overlap_min=5) == 4

    def test_uninformative_model_recovers_nothing(self):
        # hot sets of exactly top_n terms keep tie-broken background ids
        # out of the truth's top lists
        truth = np.vstack(
            [_peaked(60, list(range(20 + 10 * i, 30 + 10 * i))) for i in range(4)]
        )
        flat = np.full((4, 60), 1.0 / 60)  # top terms collapse to ids 0..9
        assert topic_recovery_count(flat, truth, top_n=10, overlap_min=5) == 0

    def test_partial_overlap_threshold(self):
        truth = _peaked(20, [0, 1, 2, 3, 4])[None, :]
        learned = _peaked(20, [0, 1, 2, 10, 11])[None, :]
        assert topic_recovery_count(learned, truth, top_n=5, overlap_min=3) == 1
        assert topic_recovery_count(learned, truth, top_n=5, overlap_min=4) == 0

    def test_top_n_larger_than_vocab_rejected(self):
        truth = np.full((1, 4), 0.25)
        with pytest.raises(ValueError):
            topic_recovery_count(truth, truth, top_n=5)


class TestRoc:
    def test_hand_example(self):
        r = roc_curve([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0])
        assert r.auc == pytest.approx(0.75, abs=1e-12)
        assert r.points == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]

    def test_perfect_and_inverted(self):
        scores = [0.1, 0.4, 0.35, 0.8]
        labels = [0, 0, 0, 1]
        assert roc_curve(scores, labels).auc == pytest.approx(1.0)
        flipped = [1 - s for s in scores]
        assert roc_curve(flipped, labels).auc == pytest.approx(0.0)

    def test_all_tied_scores_degenerate_diagonal(self):
        r = roc_curve([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert r.points == [(0.0, 0.0), (1.0, 1.0)]
        assert r.auc == pytest.approx(0.5)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.random(60)
        labels = (rng.random(60) < 0.4).astype(int)
        base = roc_curve(scores, labels).auc
        assert roc_curve(np.exp(3 * scores), labels).auc == pytest.approx(base, abs=1e-12)

    def test_complement_symmetry(self):
        rng = np.random.default_rng(2)
        scores = rng.permutation(40) / 40.0  # all distinct
        labels = (rng.random(40) < 0.5).astype(int)
        if labels.sum() in (0, 40):
            labels[0] = 1 - labels[0]
        a = roc_curve(scores, labels).auc
        b = roc_curve(-scores, labels).auc
        assert a + b == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize(
        "scores,labels",
        [
            ([], []),
            ([0.5], [1]),                 # one class only
            ([0.5, 0.6], [0, 0]),
            ([0.5, 0.6], [1, 2]),         # non-binary label
            ([0.5, 0.6, 0.7], [1, 0]),    # length mismatch
        ],
    )
    def test_validation(self, scores, labels):
        with pytest.raises(ValueError):
            roc_curve(scores, labels)


class TestCoherence:
    def test_balanced_independence_scores_zero(self):
        # 4 one-window paragraphs; a and b each in 2, together in 1:
        # P(a,b) = P(a)P(b), so NPMI must vanish.
        ref = oracles.toy_corpus([[[0, 1], [0, 2], [1, 3], [2, 3]]], 4)
        got = coherence_npmi([["t0", "t1"]], ref, window=20)
        assert abs(got[0]) < 1e-9

    def test_always_cooccurring_pair_scores_exactly_one(self):
        ref = oracles.toy_corpus([[[0, 1], [1, 0], [0, 1]]], 2)
        got = coherence_npmi([["t0", "t1"]], ref, window=20)
        assert got[0] == 1.0

    def test_half_cooccurrence_approaches_one(self):
        ref = oracles.toy_corpus([[[0, 1], [0, 1], [2, 3], [2, 3]]], 4)
        got = coherence_npmi([["t0", "t1"]], ref, window=20)
        assert got[0] == pytest.approx(1.0, abs=1e-9)

    def test_never_cooccurring_pair_strongly_negative(self):
        ref = oracles.toy_corpus([[[0, 2], [0, 3], [1, 2], [1, 3]]], 4)
        got = coherence_npmi([["t0", "t1"]], ref, window=20)
        assert -1.0 <= got[0] < -0.9

    def test_sliding_window_counts(self):
        # [a, b, c, a, d] with window 3 gives exactly 3 windows; b appears
        # in the first two, a in all three, so P(a)=1 makes the pair
        # independent-at-ceiling and NPMI again collapses to ~0.
        ref = oracles.toy_corpus([[[0, 1, 2, 0, 3]]], 4)
        got = coherence_npmi([["t0", "t1"]], ref, window=3)
        assert abs(got[0]) < 1e-9

    def test_short_paragraph_is_single_window(self):
        ref = oracles.toy_corpus([[[0, 1]]], 2)
        got = coherence_npmi([["t0", "t1"]], ref, window=50)
        assert got[0] == 1.0

    def test_windows_do_not_span_paragraphs(self):
        # a and b only ever in different paragraphs: no co-occurrence even
        # though the corpus-level sequence would put them side by side.
        ref = oracles.toy_corpus([[[0, 2], [1, 2]], [[0, 2], [1, 2]]], 3)
        got = coherence_npmi([["t0", "t1"]], ref, window=20)
        assert got[0] < -0.5

    def test_unknown_terms_skipped_and_topic_zeroed(self, caplog):
        ref = oracles.toy_corpus([[[0, 1]]], 2)
        with caplog.at_level("WARNING", logger="parlda.evaluation"):
            got = coherence_npmi([["zzz", "yyy"], ["t0", "t1"]], ref)
        assert got[0] == 0.0
        assert got[1] == 1.0
        assert any("coherence" in r.message for r in caplog.records)

    def test_pair_with_one_unknown_term_skipped(self):
        ref = oracles.toy_corpus([[[0, 1], [0, 1]]], 2)
        got = coherence_npmi([["t0", "t1", "zzz"]], ref)
        # only the (t0, t1) pair is scorable
        assert got[0] == 1.0

    def test_topic_order_preserved(self):
        ref = oracles.toy_corpus([[[0, 1], [2, 3], [2, 3]]], 4)
        both = coherence_npmi([["t0", "t1"], ["t2", "t3"]], ref)
        flipped = coherence_npmi([["t2", "t3"], ["t0", "t1"]], ref)
        assert both[0] == flipped[1] and both[1] == flipped[0]

    def test_values_always_in_unit_interval(self):
        rng = np.random.default_rng(5)
        docs = [[[int(t) for t in rng.integers(0, 12, size=rng.integers(3, 30))]
                 for _ in range(4)] for _ in range(6)]
        ref = oracles.toy_corpus(docs, 12)
        tops = [[f"t{i}" for i in rng.choice(12, size=4, replace=False)] for _ in range(5)]
        got = coherence_npmi(tops, ref, window=7)
        assert np.all(got >= -1.0) and np.all(got <= 1.0)

    def test_validation(self):
        ref = oracles.toy_corpus([[[0]]], 1)
        with pytest.raises(ValueError):
            coherence_npmi([], ref)
        with pytest.raises(ValueError):
            coherence_npmi([["t0"]], ref, window=0)


class TestAlignColumns:
    def test_reorder_and_missing(self):
        m = np.array([[0.6, 0.3, 0.1]])
        out = align_columns(m, ["a", "b", "c"], ["c", "a", "x"])
        assert out.tolist() == [[0.1, 0.6, 0.0]]

    def test_identity(self):
        m = np.random.default_rng(0).random((3, 4))
        assert np.array_equal(align_columns(m, list("abcd"), list("abcd")), m)

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            align_columns(np.ones((1, 2)), ["a", "b", "c"], ["a"])


class TestExportFeatures:
    def _state(self):
        docs = [[[0, 1, 2], [2, 2]], [[1, 0]]]
        corpus = oracles.toy_corpus(docs, 3)
        corpus.gold_paragraph_labels = [[1, 0], [1]]
        h = Hyperparams(n_general_topics=2, n_specific_topics=2)
        state = oracles.make_state(
            corpus, h, x=[1, 0, 1], src=[1, 0, 0, 0, 0, 1, 0], z=[1, 0, 1, 0, 1, 0, 1]
        )
        return corpus, state

    def test_rows_and_counts(self, tmp_path):
        corpus, state = self._state()
        out = tmp_path / "features.csv"
        export_features(state, corpus, out, p_specific=[0.9, 0.1, 0.8])
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == corpus.n_paragraphs()
        assert list(rows[0].keys()) == [
            "doc_id", "paragraph_index", "gold_label", "p_specific",
            "general_0", "general_1", "specific_0", "specific_1",
        ]
        lengths = [3, 2, 2]
        expected = state.paragraph_topic_counts()
        for r, row in enumerate(rows):
            counts = [int(row[c]) for c in
                      ("general_0", "general_1", "specific_0", "specific_1")]
            assert sum(counts) == lengths[r]
            assert counts == expected[r].tolist()
        assert rows[0]["doc_id"] == "doc-0" and rows[2]["doc_id"] == "doc-1"
        assert [row["paragraph_index"] for row in rows] == ["0", "1", "0"]
        assert [row["gold_label"] for row in rows] == ["1", "0", "1"]
        assert [float(row["p_specific"]) for row in rows] == [0.9, 0.1, 0.8]

    def test_optional_columns_blank(self, tmp_path):
        corpus, state = self._state()
        corpus.gold_paragraph_labels = None
        out = tmp_path / "features.csv"
        export_features(state, corpus, out)
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert all(row["gold_label"] == "" and row["p_specific"] == "" for row in rows)

    def test_mismatched_p_specific_length(self, tmp_path):
        corpus, state = self._state()
        with pytest.raises(ValueError):
            export_features(state, corpus, tmp_path / "f.csv", p_specific=[0.5])


class TestEvalReport:
    def test_to_dict_is_json_ready(self):
        r = roc_curve([0.9, 0.2], [1, 0])
        rep = EvalReport(config={"seed": 1}, roc=r, mean_similarity=0.5,
                         recovered_topics=3, coherence_per_topic=[0.1, -0.2],
                         mean_coherence_all=-0.05, mean_coherence_specific=0.1,
                         matched_pairs=[(0, 1, 0.7)])
        text = json.dumps(rep.to_dict())
        back = json.loads(text)
        assert back["roc"]["auc"] == 1.0
        assert back["matched_pairs"] == [[0, 1, 0.7]]

    def test_empty_report(self):
        assert json.loads(json.dumps(EvalReport(config={}).to_dict()))["roc"] is None


@given(st.integers(0, 2**31), st.integers(2, 6), st.integers(2, 5))
@settings(max_examples=30, deadline=None)
def test_histogram_intersection_bounds(seed, v, rows):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(v))
    q = rng.dirichlet(np.ones(v))
    a = histogram_intersection(p, q)
    assert 0.0 <= a <= 1.0 + 1e-12


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_roc_auc_bounds(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 40))
    scores = rng.random(n)
    labels = np.zeros(n, dtype=int)
    labels[: max(1, n // 3)] = 1
    rng.shuffle(labels)
    r = roc_curve(scores, labels)
    assert 0.0 <= r.auc <= 1.0
    assert r.points[0] == (0.0, 0.0) and r.points[-1] == (1.0, 1.0)
    fprs = [a for a, _ in r.points]
    tprs = [b for _, b in r.points]
    assert fprs == sorted(fprs) and tprs == sorted(tprs)