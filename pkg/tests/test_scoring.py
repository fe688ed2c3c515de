import math

import pytest
from hypothesis import given, strategies as st

from lbmha.errors import DomainError, InsufficientDataError, ValidationError
from lbmha.scoring import (
    ANX,
    DEP,
    Lexicon,
    UserCellFeatures,
    UserScore,
    WeightTable,
    anscombe,
    attach_weight,
    load_lexicon_csv,
    multiply_weight,
    save_lexicon_csv,
    score_user_cell,
)
from lbmha.units import TimeUnit, county, week_cell

CELL = week_cell(2020, 10)
HERE = county("36061")


def features(counts, n_posts=3, total=None):
    return UserCellFeatures(
        user_id="u1",
        region=HERE,
        cell=CELL,
        counts=dict(counts),
        total_tokens=total if total is not None else sum(counts.values()),
        n_posts=n_posts,
    )


def lexicon(weights, intercept, outcome=DEP):
    terms = {t: {outcome: w} for t, w in weights.items()}
    return Lexicon("test", (outcome,), terms, {outcome: intercept})


class TestAnscombe:
    def test_closed_form_values(self):
        assert anscombe(0.0) == pytest.approx(1.224744871391589, abs=1e-12)
        assert anscombe(1.0) == pytest.approx(2.345207879911715, abs=1e-12)
        assert anscombe(0.625) == pytest.approx(2.0, abs=1e-15)

    def test_negative_is_domain_error(self):
        with pytest.raises(DomainError):
            anscombe(-1e-9)

    @given(st.floats(min_value=0, max_value=1e6), st.floats(min_value=1e-9, max_value=1e6))
    def test_strictly_increasing(self, x, delta):
        assert anscombe(x) < anscombe(x + delta)


class TestScoreUserCell:
    def test_worked_example(self):
        # 2 of 3 tokens are "happy" with weight -0.5 and intercept 2.0.
        lex = lexicon({"happy": -0.5}, 2.0)
        f = features({"happy": 2, "sad": 1})
        assert score_user_cell(f, lex, DEP) == pytest.approx(0.979379, abs=1e-6)

    def test_empty_intersection_returns_clipped_intercept(self):
        lex = lexicon({"happy": -0.5}, 2.0)
        f = features({"unrelated": 4})
        assert score_user_cell(f, lex, DEP) == 2.0

    def test_upper_clip(self):
        lex = lexicon({"happy": -0.5}, 7.0)
        f = features({"unrelated": 4})
        assert score_user_cell(f, lex, DEP) == 5.0

    def test_lower_clip(self):
        lex = lexicon({"bad": -50.0}, 2.0)
        f = features({"bad": 3})
        assert score_user_cell(f, lex, DEP) == 0.0

    def test_zero_tokens_is_error(self):
        lex = lexicon({"happy": -0.5}, 2.0)
        with pytest.raises(InsufficientDataError):
            score_user_cell(features({}, total=0), lex, DEP)

    def test_invariant_under_count_scaling(self):
        lex = lexicon({"a": 0.8, "b": -0.3}, 2.5)
        base = features({"a": 2, "b": 1, "c": 3})
        scaled = features({"a": 10, "b": 5, "c": 15})
        assert score_user_cell(base, lex, DEP) == score_user_cell(scaled, lex, DEP)

    def test_out_of_lexicon_token_acts_only_through_denominator(self):
        lex = lexicon({"a": 1.0}, 0.0)
        without = features({"a": 2, "x": 2})
        with_extra = features({"a": 2, "x": 2, "y": 4})
        expected = anscombe(2 / 8) * 1.0
        assert score_user_cell(with_extra, lex, DEP) == pytest.approx(expected)
        assert score_user_cell(with_extra, lex, DEP) < score_user_cell(without, lex, DEP)

    def test_linearity_single_term_no_intercept(self):
        lex = lexicon({"a": 0.7}, 0.0)
        f = features({"a": 3, "pad": 5})
        assert score_user_cell(f, lex, DEP) == anscombe(3 / 8) * 0.7

    def test_dense_mode_adds_zero_count_terms(self):
        lex = lexicon({"a": 1.0, "unused": 0.5}, 0.0)
        f = features({"a": 4})
        sparse = score_user_cell(f, lex, DEP)
        dense = score_user_cell(f, lex, DEP, dense=True)
        assert dense == pytest.approx(sparse + anscombe(0.0) * 0.5)

    @given(
        st.dictionaries(
            st.sampled_from(["a", "b", "c", "d"]),
            st.integers(min_value=0, max_value=50),
            min_size=1,
        ),
        st.floats(min_value=-10, max_value=10),
    )
    def test_scores_always_in_range(self, counts, intercept):
        counts = {t: c for t, c in counts.items() if c} or {"a": 1}
        lex = lexicon({"a": 2.0, "b": -3.0}, intercept)
        score = score_user_cell(features(counts), lex, DEP)
        assert 0.0 <= score <= 5.0


class TestWeights:
    def score(self, dep=2.0):
        return UserScore("u1", HERE, CELL, dep=dep, anx=3.0)

    def test_lookup(self):
        table = WeightTable({("u1", CELL): 2.5})
        assert attach_weight(self.score(), table).weight == 2.5

    def test_default_for_absent_user(self):
        table = WeightTable({}, default_weight=1.0)
        assert attach_weight(self.score(), table).weight == 1.0

    def test_scores_unchanged_by_attach(self):
        table = WeightTable({("u1", CELL): 2.5})
        out = attach_weight(self.score(), table)
        assert (out.dep, out.anx) == (2.0, 3.0)

    def test_zero_weight_rejected_at_load(self):
        with pytest.raises(ValidationError):
            WeightTable({("u1", CELL): 0.0})
        with pytest.raises(ValidationError):
            WeightTable({}, default_weight=-1.0)

    def test_multiply_mode_folds_weight_and_clips(self):
        table = WeightTable({("u1", CELL): 2.0})
        out = multiply_weight(self.score(dep=1.5), table)
        assert out.dep == 3.0
        assert out.anx == 5.0  # 3.0 * 2.0 clipped
        assert out.weight == 1.0


class TestLexiconIO:
    def test_round_trip(self, tmp_path):
        lex = Lexicon(
            "demo",
            (DEP, ANX),
            {"happy": {DEP: -0.5, ANX: -0.25}, "worried": {DEP: 0.1, ANX: 0.9}},
            {DEP: 2.0, ANX: 2.5},
        )
        path = tmp_path / "lex.csv"
        save_lexicon_csv(lex, path)
        loaded = load_lexicon_csv(path)
        assert loaded.terms == lex.terms
        assert loaded.intercepts == lex.intercepts
        assert set(loaded.outcomes) == {DEP, ANX}

    def test_missing_outcome_weights_filled_with_zero(self, tmp_path):
        path = tmp_path / "lex.csv"
        path.write_text(
            "term,category,weight\n_intercept,DEP,2.0\n_intercept,ANX,2.5\n"
            "happy,DEP,-0.5\n",
            encoding="utf-8",
        )
        lex = load_lexicon_csv(path)
        assert lex.terms["happy"] == {"DEP": -0.5, "ANX": 0.0}

    def test_empty_lexicon_rejected(self):
        with pytest.raises(ValidationError):
            Lexicon("empty", (DEP,), {}, {DEP: 0.0})

    def test_uppercase_term_rejected(self):
        with pytest.raises(ValidationError):
            Lexicon("bad", (DEP,), {"Happy": {DEP: 1.0}}, {DEP: 0.0})
