import logging
import math

import numpy as np
import pytest

from lbmha.adapt import (
    CorpusStats,
    FilterReason,
    TermStats,
    adapt_pipeline,
    corpus_stats,
    drop_names,
    frequency_filter,
    load_name_list,
    retrain_lexicon,
    usage_filter,
)
from lbmha.errors import ConfigError, InsufficientDataError, ValidationError
from lbmha.scoring import ANX, DEP, Lexicon


def stats(n_users=10, **vocab):
    """vocab: term=(mean_freq, std_freq, usage)"""
    return CorpusStats(
        n_users, {t: TermStats(*v) for t, v in vocab.items()}
    )


class TestCorpusStats:
    def test_two_point_mean(self):
        out = corpus_stats([{"word": 0.5}, {"other": 1.0}])
        assert out.vocab["word"].mean_freq == pytest.approx(0.25)
        assert out.vocab["word"].usage == pytest.approx(0.5)

    def test_uniform_usage(self):
        out = corpus_stats([{"word": 0.2}, {"word": 0.2}])
        assert out.vocab["word"].std_freq == 0.0
        assert out.vocab["word"].usage == 1.0

    def test_hand_computed_population_std(self):
        out = corpus_stats([{"w": 0.1}, {"w": 0.1}, {"w": 0.3}, {"w": 0.3}])
        term = out.vocab["w"]
        assert term.mean_freq == pytest.approx(0.2)
        assert term.std_freq == pytest.approx(0.1)
        assert term.usage == 1.0

    def test_empty_corpus(self):
        with pytest.raises(InsufficientDataError):
            corpus_stats([])

    def test_record_sum_validation(self):
        with pytest.raises(ValidationError):
            corpus_stats([{"a": 0.9, "b": 0.3}])


class TestUsageFilter:
    def test_factor_ten_is_excluded_strict(self):
        source = stats(word=(0.001, 0.0, 0.02))
        target = stats(word=(0.001, 0.0, 0.2))
        (decision,) = usage_filter(source, target)
        assert decision.log_usage_ratio == pytest.approx(1.0)
        assert not decision.kept and decision.reason is FilterReason.USAGE

    def test_equal_usage_kept(self):
        source = stats(word=(0.001, 0.0, 0.4))
        target = stats(word=(0.002, 0.0, 0.4))
        (decision,) = usage_filter(source, target)
        assert decision.kept and decision.log_usage_ratio == 0.0

    def test_unused_in_source_excluded(self):
        source = stats()
        target = stats(word=(0.001, 0.0, 0.5))
        (decision,) = usage_filter(source, target)
        assert not decision.kept and decision.reason is FilterReason.USAGE
        assert math.isnan(decision.log_usage_ratio)

    def test_symmetric_under_corpus_swap(self):
        rng = np.random.default_rng(0)
        source = stats(**{f"t{i}": (0.01, 0.0, float(rng.uniform(0.01, 1))) for i in range(20)})
        target = stats(**{f"t{i}": (0.01, 0.0, float(rng.uniform(0.01, 1))) for i in range(20)})
        forward = {d.term: d.kept for d in usage_filter(source, target)}
        backward = {d.term: d.kept for d in usage_filter(target, source)}
        assert forward == backward


class TestFrequencyFilter:
    def test_small_shift_kept(self):
        source = stats(word=(1.0e-4, 1.0e-4, 0.5))
        target = stats(word=(1.1e-4, 0.0, 0.5))
        (decision,) = frequency_filter(source, target)
        assert decision.freq_d == pytest.approx(0.1)
        assert decision.kept

    def test_boundary_exactly_at_bound_kept(self):
        source = stats(word=(1.0, 10.0, 0.5))
        target = stats(word=(3.0, 0.0, 0.5))
        (decision,) = frequency_filter(source, target)
        assert decision.freq_d == 0.2
        assert decision.kept

    def test_zero_sigma_equal_means_kept(self):
        source = stats(word=(0.25, 0.0, 1.0))
        target = stats(word=(0.25, 0.0, 1.0))
        (decision,) = frequency_filter(source, target)
        assert decision.kept and decision.freq_d == 0.0

    def test_zero_sigma_unequal_means_excluded(self):
        source = stats(word=(0.25, 0.0, 1.0))
        target = stats(word=(0.30, 0.0, 1.0))
        (decision,) = frequency_filter(source, target)
        assert not decision.kept and decision.reason is FilterReason.FREQUENCY

    def test_not_symmetric(self):
        # normalization uses the source std only, so swapping corpora flips the verdict
        source = stats(word=(1.0, 100.0, 0.5))
        target = stats(word=(3.0, 0.001, 0.5))
        (forward,) = frequency_filter(source, target)
        (backward,) = frequency_filter(target, source)
        assert forward.kept and not backward.kept


class TestDropNames:
    NAMES = {"emma", "noah", "olivia", "liam"}

    def test_exact_match_excluded(self):
        (decision,) = drop_names(["emma"], self.NAMES)
        assert not decision.kept and decision.reason is FilterReason.NAME

    def test_prefix_not_excluded(self):
        (decision,) = drop_names(["emmanuel"], self.NAMES)
        assert decision.kept

    def test_empty_list_is_identity(self):
        decisions = drop_names(["emma", "noah"], set())
        assert all(d.kept for d in decisions)

    def test_name_file_loading(self, tmp_path):
        path = tmp_path / "names.txt"
        path.write_text("Emma\nnoah\n\nliam\n", encoding="utf-8")
        assert load_name_list(path) == {"emma", "noah", "liam"}

    def test_missing_name_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_name_list(tmp_path / "nope.txt")


def ten_term_fixture():
    """Hand-built corpora over a 10-term lexicon.

    charlie: usage ratio exactly 10 (log ratio 1.0, strict bound) -> usage
    delta:   unused in the target -> usage
    echo:    frequency shift d = 0.5 -> frequency
    emma:    common first name -> name
    india:   frequency shift d = exactly 0.2 (inclusive bound) -> kept
    alpha, bravo, foxtrot, golf, hotel: kept
    """
    terms = "alpha bravo charlie delta echo emma foxtrot golf hotel india".split()
    base = Lexicon(
        "base",
        (DEP, ANX),
        {t: {DEP: 0.1, ANX: 0.2} for t in terms},
        {DEP: 2.0, ANX: 2.0},
    )
    source_vocab = {t: TermStats(1.0e-3, 2.0e-3, 0.5) for t in terms}
    target_vocab = {t: TermStats(1.0e-3, 1.0e-3, 0.5) for t in terms}
    source_vocab["charlie"] = TermStats(1.0e-3, 2.0e-3, 0.05)
    target_vocab["charlie"] = TermStats(1.0e-3, 1.0e-3, 0.5)
    del target_vocab["delta"]
    source_vocab["echo"] = TermStats(1.0e-3, 2.0e-3, 0.5)
    target_vocab["echo"] = TermStats(2.0e-3, 1.0e-3, 0.5)
    source_vocab["india"] = TermStats(1.0e-3, 5.0e-3, 0.5)
    target_vocab["india"] = TermStats(2.0e-3, 1.0e-3, 0.5)
    return (
        CorpusStats(20, source_vocab),
        CorpusStats(20, target_vocab),
        base,
        {"emma", "noah", "olivia", "liam"},
    )


class TestAdaptPipeline:
    def test_hand_derived_survivor_set(self):
        source, target, base, names = ten_term_fixture()
        adapted, audit = adapt_pipeline(source, target, base, names)
        assert adapted.vocabulary == {"alpha", "bravo", "foxtrot", "golf", "hotel", "india"}
        reasons = {d.term: d.reason for d in audit}
        assert reasons["charlie"] is FilterReason.USAGE
        assert reasons["delta"] is FilterReason.USAGE
        assert reasons["echo"] is FilterReason.FREQUENCY
        assert reasons["emma"] is FilterReason.NAME
        assert reasons["india"] is FilterReason.KEPT

    def test_identity_on_identical_corpora(self):
        source, _, base, _ = ten_term_fixture()
        adapted, audit = adapt_pipeline(source, source, base, set())
        assert adapted.vocabulary == base.vocabulary
        assert all(d.kept for d in audit)

    def test_audit_has_one_row_per_term_with_first_reason(self):
        source, target, base, names = ten_term_fixture()
        # make emma fail usage too: the audit must blame usage, not names
        source.vocab["emma"] = TermStats(1.0e-3, 2.0e-3, 0.02)
        target.vocab["emma"] = TermStats(1.0e-3, 1.0e-3, 0.4)
        _, audit = adapt_pipeline(source, target, base, names)
        assert len(audit) == len(base.vocabulary)
        reasons = {d.term: d.reason for d in audit}
        assert reasons["emma"] is FilterReason.USAGE

    def test_survivor_counts_monotone_in_filters(self):
        source, target, base, names = ten_term_fixture()
        after_usage = sum(
            d.kept for d in usage_filter(source, target, terms=sorted(base.vocabulary))
        )
        survivors_usage = [
            d.term for d in usage_filter(source, target, terms=sorted(base.vocabulary)) if d.kept
        ]
        after_freq = sum(
            d.kept for d in frequency_filter(source, target, terms=survivors_usage)
        )
        adapted, _ = adapt_pipeline(source, target, base, names)
        assert len(base.vocabulary) >= after_usage >= after_freq >= len(adapted.vocabulary)

    def test_weights_and_intercepts_preserved(self):
        source, target, base, names = ten_term_fixture()
        adapted, _ = adapt_pipeline(source, target, base, names)
        assert adapted.intercepts == base.intercepts
        assert adapted.terms["alpha"] == base.terms["alpha"]

    def test_unknown_vocabulary_logged_and_excluded(self, caplog):
        source, target, base, names = ten_term_fixture()
        base.terms["zulu"] = {DEP: 0.0, ANX: 0.0}
        with caplog.at_level(logging.WARNING):
            adapted, audit = adapt_pipeline(source, target, base, names)
        assert "zulu" not in adapted.vocabulary
        assert any("neither corpus" in m for m in caplog.messages)


class TestRetrain:
    def make_problem(self, n=50, m=10, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.normal(0.0, 1.0, (n, m))
        w = rng.normal(0.0, 1.0, m)
        y = X @ w + 1.7
        return X, w, y

    def test_planted_recovery_full_rank(self):
        X, w, y = self.make_problem()
        lex = retrain_lexicon(
            X, [f"t{i}" for i in range(10)], {DEP: y}, alpha=1e-9, k_components=10
        )
        recovered = np.array([lex.terms[f"t{i}"][DEP] for i in range(10)])
        assert np.abs(recovered - w).max() < 1e-6
        predictions = X @ recovered + lex.intercepts[DEP]
        assert np.abs(predictions - y).max() < 1e-6

    def test_constant_targets(self):
        X, _, _ = self.make_problem()
        lex = retrain_lexicon(
            X, [f"t{i}" for i in range(10)], {DEP: np.full(50, 3.3)}, alpha=0.001,
            k_components=10,
        )
        weights = np.array([lex.terms[f"t{i}"][DEP] for i in range(10)])
        assert np.abs(weights).max() < 1e-12
        assert lex.intercepts[DEP] == pytest.approx(3.3)

    def test_huge_alpha_shrinks_to_zero(self):
        X, _, y = self.make_problem()
        lex = retrain_lexicon(
            X, [f"t{i}" for i in range(10)], {DEP: y}, alpha=1e9, k_components=10
        )
        weights = np.array([lex.terms[f"t{i}"][DEP] for i in range(10)])
        assert np.abs(weights).max() < 1e-6

    def test_truncated_matches_normal_equations_oracle(self):
        X, _, y = self.make_problem(n=10, m=5, seed=3)
        k, alpha = 3, 0.01
        lex = retrain_lexicon(X, [f"t{i}" for i in range(5)], {DEP: y}, alpha, k)
        # brute-force oracle: explicit normal equations on projected features
        Xc = X - X.mean(axis=0)
        _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
        Vk = Vt[:k].T
        P = Xc @ Vk
        wz = np.linalg.solve(P.T @ P + alpha * np.eye(k), P.T @ (y - y.mean()))
        expected = Vk @ wz
        got = np.array([lex.terms[f"t{i}"][DEP] for i in range(5)])
        assert np.abs(got - expected).max() < 1e-6

    def test_full_rank_low_alpha_matches_ols_oracle(self):
        X, _, y = self.make_problem(n=10, m=5, seed=4)
        lex = retrain_lexicon(X, [f"t{i}" for i in range(5)], {DEP: y}, 1e-12, 5)
        Xc = X - X.mean(axis=0)
        ols = np.linalg.solve(Xc.T @ Xc, Xc.T @ (y - y.mean()))
        got = np.array([lex.terms[f"t{i}"][DEP] for i in range(5)])
        assert np.abs(got - ols).max() < 1e-6

    def test_k_above_rank_reduced_with_warning(self, caplog):
        rng = np.random.default_rng(5)
        base = rng.normal(0, 1, (20, 2))
        X = np.hstack([base, base @ rng.normal(0, 1, (2, 3))])  # rank 2
        y = X @ rng.normal(0, 1, 5)
        with caplog.at_level(logging.WARNING):
            lex = retrain_lexicon(X, [f"t{i}" for i in range(5)], {DEP: y}, 1e-6, 5)
        assert any("rank" in m for m in caplog.messages)
        assert len(lex.terms) == 5

    def test_two_outcomes_share_projection(self):
        X, w, y = self.make_problem()
        lex = retrain_lexicon(
            X, [f"t{i}" for i in range(10)], {DEP: y, ANX: 2 * y}, alpha=1e-9,
            k_components=10,
        )
        dep = np.array([lex.terms[f"t{i}"][DEP] for i in range(10)])
        anx = np.array([lex.terms[f"t{i}"][ANX] for i in range(10)])
        assert np.abs(anx - 2 * dep).max() < 1e-6
