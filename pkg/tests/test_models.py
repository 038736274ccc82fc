"""Denoiser models: scripted oracle, ramp oracle, n-gram counts, persistence."""

import math

import numpy as np
import pytest

from dlmdecode import (
    BOUNDARY,
    EmptyCorpusError,
    InvalidConfigError,
    InvalidInputError,
    LogitMatrix,
    MASK_LOGIT,
    ModelMismatchError,
    ScheduleExhaustedError,
    ScriptedOracle,
    TokenSequence,
    Vocabulary,
    load_ngram,
    make_ramp_oracle,
    new_sequence,
    predict_logits,
    save_ngram,
    train_ngram,
)
from helpers import random_logit_matrix, random_scripted_oracle

VOCAB = Vocabulary(size=5, mask_id=0)


class TestLogitMatrix:
    def test_mask_column_is_sentinel(self):
        m = LogitMatrix.from_scores(np.ones((3, 5)), mask_id=0)
        assert (m.values[:, 0] == MASK_LOGIT).all()

    def test_argmax_never_mask(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            m = random_logit_matrix(rng, int(rng.integers(1, 10)), VOCAB)
            assert (m.argmax_tokens() != VOCAB.mask_id).all()

    def test_non_finite_rejected(self):
        values = np.ones((2, 5))
        values[1, 3] = np.nan
        with pytest.raises(InvalidInputError):
            LogitMatrix.from_scores(values, mask_id=0)

    def test_from_scores_copies(self):
        values = np.ones((2, 5))
        m = LogitMatrix.from_scores(values, mask_id=0)
        values[0, 1] = 99.0
        assert m.values[0, 1] == 1.0

    def test_values_frozen(self):
        m = LogitMatrix.from_scores(np.ones((2, 5)), mask_id=0)
        with pytest.raises(ValueError):
            m.values[0, 1] = 2.0


class TestScriptedOracle:
    def test_lookup_returns_scheduled_matrix(self):
        rng = np.random.default_rng(0)
        matrices = {t: random_logit_matrix(rng, 4, VOCAB) for t in range(1, 9)}
        oracle = ScriptedOracle(VOCAB, matrices, t_max=8)
        seq = new_sequence([1], 3, VOCAB)
        assert predict_logits(oracle, seq, 5) is matrices[5]

    def test_schedule_exhausted(self):
        oracle = random_scripted_oracle(np.random.default_rng(0), VOCAB, 4, 3)
        seq = new_sequence([1], 3, VOCAB)
        with pytest.raises(ScheduleExhaustedError):
            predict_logits(oracle, seq, 4)

    def test_schedule_must_cover_every_step(self):
        rng = np.random.default_rng(0)
        matrices = {t: random_logit_matrix(rng, 4, VOCAB) for t in (1, 3)}
        with pytest.raises(InvalidConfigError, match="schedule"):
            ScriptedOracle(VOCAB, matrices, t_max=3)

    def test_predict_checks_sequence_length(self):
        oracle = random_scripted_oracle(np.random.default_rng(0), VOCAB, 4, 3)
        wrong = new_sequence([1], 5, VOCAB)
        with pytest.raises(ModelMismatchError):
            predict_logits(oracle, wrong, 2)

    def test_predict_checks_mask_id(self):
        oracle = random_scripted_oracle(np.random.default_rng(0), VOCAB, 4, 3)
        other = TokenSequence(np.array([0, 0, 0, 0]), prompt_len=0, mask_id=1)
        with pytest.raises(ModelMismatchError):
            predict_logits(oracle, other, 2)

    def test_determinism(self):
        oracle = random_scripted_oracle(np.random.default_rng(3), VOCAB, 4, 6)
        seq = new_sequence([2], 3, VOCAB)
        a = predict_logits(oracle, seq, 4)
        b = predict_logits(oracle, seq, 4)
        assert np.array_equal(a.values, b.values)


class TestRampOracle:
    def setup_method(self):
        self.target = [2, 3, 4, 1]
        self.oracle = make_ramp_oracle(
            stabilize_step=7, pre_gap=1.0, post_gap=9.0,
            target=self.target, t_max=10, vocab=VOCAB,
        )
        self.seq = new_sequence([1, 2], 4, VOCAB)

    def test_stable_phase_matches_target_with_exact_gap(self):
        for t in range(1, 8):
            m = predict_logits(self.oracle, self.seq, t)
            gen = slice(2, 6)
            assert m.argmax_tokens()[gen].tolist() == self.target
            assert (m.confidence_gaps()[gen] == 9.0).all()

    def test_decoy_phase_never_matches_target(self):
        for t in range(8, 11):
            m = predict_logits(self.oracle, self.seq, t)
            args = m.argmax_tokens()[2:6]
            assert (args != np.asarray(self.target)).all()
            assert np.allclose(m.confidence_gaps()[2:6], 1.0)

    def test_decoys_cycle_over_steps(self):
        picks = {
            int(predict_logits(self.oracle, self.seq, t).argmax_tokens()[2])
            for t in range(8, 11)
        }
        assert len(picks) > 1

    def test_gap_order_validated(self):
        with pytest.raises(InvalidConfigError, match="post_gap"):
            make_ramp_oracle(5, 2.0, 1.0, self.target, 10, VOCAB)

    def test_stabilize_step_bounds(self):
        with pytest.raises(InvalidConfigError, match="stabilize_step"):
            make_ramp_oracle(11, 1.0, 9.0, self.target, 10, VOCAB)

    def test_target_length_checked_at_predict(self):
        wrong = new_sequence([1], 3, VOCAB)
        with pytest.raises(ModelMismatchError):
            predict_logits(self.oracle, wrong, 5)

    def test_mask_target_rejected(self):
        with pytest.raises(InvalidInputError):
            make_ramp_oracle(5, 1.0, 9.0, [0, 1, 2, 3], 10, VOCAB)


# Three-token vocabulary for hand-counted examples: mask=0, a=1, b=2 (c=3 below).
AB_VOCAB = Vocabulary(size=3, mask_id=0)


class TestNGramCounts:
    def test_alternating_corpus_predicts_continuation(self):
        # "a b a b a b": the only token seen with left 'a' and right boundary is 'b'.
        model = train_ngram([[1, 2, 1, 2, 1, 2]], order=1, alpha=0.5, vocab=AB_VOCAB)
        seq = new_sequence([1], 1, AB_VOCAB)
        m = predict_logits(model, seq, 1)
        assert int(m.argmax_tokens()[1]) == 2

    def test_single_pair_counts(self):
        model = train_ngram([[1, 2]], order=1, alpha=1.0, vocab=AB_VOCAB)
        key = ((1,), (BOUNDARY,))
        assert key in model.counts
        assert model.counts[key][2] == 1

    def test_add_alpha_probability(self):
        # corpus {"a b", "a c"}: counts under (left=a, right=boundary) are b:1, c:1,
        # so P(b) = (1+1) / (2 + 3*1) with three non-mask tokens and alpha=1.
        vocab = Vocabulary(size=4, mask_id=0)
        model = train_ngram([[1, 2], [1, 3]], order=1, alpha=1.0, vocab=vocab)
        seq = new_sequence([1], 1, vocab)
        row = predict_logits(model, seq, 1).values[1]
        probs = np.exp(row - row.max())
        probs /= probs.sum()
        assert probs[2] == pytest.approx((1 + 1) / (2 + 3), abs=1e-12)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            train_ngram([], order=1, alpha=1.0, vocab=AB_VOCAB)

    def test_mask_in_corpus_rejected(self):
        with pytest.raises(InvalidInputError):
            train_ngram([[1, 0, 2]], order=1, alpha=1.0, vocab=AB_VOCAB)

    def test_alpha_must_be_positive(self):
        with pytest.raises(InvalidConfigError, match="alpha"):
            train_ngram([[1, 2]], order=1, alpha=0.0, vocab=AB_VOCAB)

    def test_order_zero_is_unigram(self):
        model = train_ngram([[1, 2, 2]], order=0, alpha=1.0, vocab=AB_VOCAB)
        seq = new_sequence([], 3, AB_VOCAB)
        m = predict_logits(model, seq, 1)
        assert (m.values == m.values[0]).all()
        assert int(m.argmax_tokens()[0]) == 2

    def test_rows_are_distributions_over_non_mask(self):
        rng = np.random.default_rng(11)
        corpus = [rng.integers(1, 3, size=8).tolist() for _ in range(20)]
        model = train_ngram(corpus, order=1, alpha=0.7, vocab=AB_VOCAB)
        seq = TokenSequence(np.array([1, 0, 2, 0, 0]), prompt_len=1, mask_id=0)
        m = predict_logits(model, seq, 1)
        probs = np.exp(m.values - m.values.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs[:, 1:] > 0).all()
        assert np.allclose(probs[:, 0], 0.0)

    def test_masked_context_slots_use_boundary(self):
        # With both neighbours masked the key is unseen, so the row is uniform.
        model = train_ngram([[1, 2, 1, 2]], order=1, alpha=1.0, vocab=AB_VOCAB)
        seq = new_sequence([], 3, AB_VOCAB)
        row = predict_logits(model, seq, 1).values[1]
        assert row[1] == row[2] == pytest.approx(math.log(1.0))


class TestNGramPersistence:
    def _model(self):
        rng = np.random.default_rng(5)
        corpus = [rng.integers(1, 4, size=10).tolist() for _ in range(15)]
        return train_ngram(corpus, order=1, alpha=0.25, vocab=Vocabulary(size=4, mask_id=0))

    def test_round_trip_bytes(self, tmp_path):
        model = self._model()
        first = tmp_path / "m1.ngram"
        second = tmp_path / "m2.ngram"
        save_ngram(model, first)
        save_ngram(load_ngram(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_round_trip_predictions(self, tmp_path):
        model = self._model()
        path = tmp_path / "m.ngram"
        save_ngram(model, path)
        loaded = load_ngram(path)
        seq = TokenSequence(np.array([1, 0, 3, 0]), prompt_len=1, mask_id=0)
        assert np.array_equal(
            predict_logits(model, seq, 1).values, predict_logits(loaded, seq, 1).values
        )

    def test_order_zero_round_trip(self, tmp_path):
        model = train_ngram([[1, 2, 2]], order=0, alpha=1.0, vocab=AB_VOCAB)
        first = tmp_path / "u1.ngram"
        second = tmp_path / "u2.ngram"
        save_ngram(model, first)
        save_ngram(load_ngram(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_header_line(self, tmp_path):
        model = train_ngram([[1, 2]], order=1, alpha=0.5, vocab=AB_VOCAB)
        path = tmp_path / "m.ngram"
        save_ngram(model, path)
        assert path.read_text().splitlines()[0] == "ngram v1 1 0.5 3 0"

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.ngram"
        path.write_text("ngram v1 1 0.5 3 0\n1 | _ | nonsense\n")
        with pytest.raises(InvalidInputError, match="line 2"):
            load_ngram(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.ngram"
        path.write_text("not a model\n")
        with pytest.raises(InvalidInputError, match="header"):
            load_ngram(path)
