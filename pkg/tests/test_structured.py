import math

import numpy as np
import pytest

from mmner.network import EmissionMatrix
from mmner.structured import beam_topk, sentence_score, viterbi

from oracles import enumerate_all, random_instance


def em_from_probs(rows):
    probs = np.asarray(rows, dtype=float)
    return EmissionMatrix(probs, np.log(probs))


class TestSentenceScore:
    def test_single_uniform(self):
        em = em_from_probs([[0.5, 0.5]])
        assert sentence_score(em, np.zeros((3, 2)), [0]) == pytest.approx(math.log(0.5))

    def test_two_positions(self):
        em = em_from_probs([[0.9, 0.1], [0.8, 0.2]])
        score = sentence_score(em, np.zeros((3, 2)), [0, 0])
        assert score == pytest.approx(math.log(0.9) + math.log(0.8))
        assert score == pytest.approx(-0.328504, abs=1e-6)

    def test_transition_terms(self):
        em = em_from_probs([[0.5, 0.5], [0.5, 0.5]])
        trans = np.arange(6, dtype=float).reshape(3, 2)
        # start row is trans[2]; path 1 -> 0 uses trans[2,1] then trans[1,0]
        assert sentence_score(em, trans, [1, 0]) == pytest.approx(
            5.0 + 2.0 + 2 * math.log(0.5)
        )

    def test_constant_shift_adds_n_times_c(self):
        rng = np.random.default_rng(0)
        em, trans = random_instance(rng, 4, 3)
        labels = [2, 0, 1, 1]
        base = sentence_score(em, trans, labels)
        shifted = sentence_score(em, trans + 2.5, labels)
        assert shifted == pytest.approx(base + 4 * 2.5, rel=1e-12)

    def test_length_mismatch(self):
        em = em_from_probs([[0.5, 0.5]])
        with pytest.raises(ValueError):
            sentence_score(em, np.zeros((3, 2)), [0, 1])
        with pytest.raises(ValueError):
            sentence_score(em, np.zeros((4, 3)), [0])


class TestViterbi:
    def test_single_label(self):
        em = em_from_probs([[1.0], [1.0], [1.0]])
        trans = np.full((2, 1), 0.25)
        out = viterbi(em, trans)
        assert out.labels == [0, 0, 0]
        assert out.score == pytest.approx(0.75)

    def test_all_ties_pick_lowest_index(self):
        em = em_from_probs([[0.25] * 4] * 3)
        out = viterbi(em, np.zeros((5, 4)))
        assert out.labels == [0, 0, 0]
        assert out.score == pytest.approx(3 * math.log(0.25))

    def test_matches_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            n = int(rng.integers(1, 8))
            n_labels = int(rng.integers(1, 6))
            em, trans = random_instance(rng, n, n_labels)
            got = viterbi(em, trans)
            best_score, best_labels = enumerate_all(em, trans)[0]
            assert got.labels == list(best_labels)
            assert got.score == pytest.approx(best_score, abs=1e-9)

    def test_score_reverifies(self):
        rng = np.random.default_rng(7)
        em, trans = random_instance(rng, 5, 4)
        out = viterbi(em, trans)
        assert out.score == sentence_score(em, trans, out.labels)

    def test_shift_invariance_of_argmax(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            em, trans = random_instance(rng, 4, 3)
            assert viterbi(em, trans).labels == viterbi(em, trans - 3.7).labels


class TestBeamTopk:
    def test_k1_is_viterbi(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            em, trans = random_instance(rng, int(rng.integers(1, 6)), int(rng.integers(1, 5)))
            top = beam_topk(em, trans, 1)
            assert len(top) == 1
            assert top[0].labels == viterbi(em, trans).labels

    def test_single_position_ranking(self):
        em = em_from_probs([[0.5, 0.3, 0.2]])
        top = beam_topk(em, np.zeros((4, 3)), 2)
        assert [s.labels for s in top] == [[0], [1]]
        assert top[0].score == pytest.approx(math.log(0.5))
        assert top[1].score == pytest.approx(math.log(0.3))

    def test_full_width_matches_enumeration(self):
        rng = np.random.default_rng(10)
        for _ in range(30):
            n = int(rng.integers(1, 6))
            n_labels = int(rng.integers(1, 4))
            em, trans = random_instance(rng, n, n_labels)
            k = n_labels ** n
            got = beam_topk(em, trans, k)
            expected = enumerate_all(em, trans)
            assert len(got) == len(expected)
            for seq, (score, labels) in zip(got, expected):
                assert seq.labels == list(labels)
                assert seq.score == pytest.approx(score, abs=1e-9)

    def test_scores_non_increasing_and_reverify(self):
        rng = np.random.default_rng(11)
        em, trans = random_instance(rng, 5, 3)
        top = beam_topk(em, trans, 7)
        scores = [s.score for s in top]
        assert scores == sorted(scores, reverse=True)
        for seq in top:
            assert seq.score == sentence_score(em, trans, seq.labels)

    def test_no_duplicates(self):
        rng = np.random.default_rng(12)
        em, trans = random_instance(rng, 4, 3)
        top = beam_topk(em, trans, 81)
        assert len({tuple(s.labels) for s in top}) == len(top)

    def test_k_validation(self):
        em = em_from_probs([[1.0]])
        with pytest.raises(ValueError):
            beam_topk(em, np.zeros((2, 1)), 0)
