"""Per-(user, time-cell) depression/anxiety scoring.

A score is the lexicon intercept plus, for every lexicon word the user used,
the Anscombe-transformed relative frequency of that word times its lexicon
weight; the result is clipped to [0, 5].  Post-stratification weights are
carried alongside the score and applied as a normalized weighted mean at
aggregation time (an optional mode multiplies them into the score instead).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DomainError, InsufficientDataError, ValidationError
from .units import RegionCode, TimeCell, TimeUnit, week_cell

DEP = "DEP"
ANX = "ANX"
DEFAULT_OUTCOMES = (DEP, ANX)

SCORE_MIN = 0.0
SCORE_MAX = 5.0

INTERCEPT_TERM = "_intercept"


def anscombe(x: float) -> float:
    """Variance-stabilizing transform 2*sqrt(x + 3/8); strictly increasing."""
    if x < 0:
        raise DomainError(f"anscombe is defined for x >= 0, got {x}")
    return 2.0 * math.sqrt(x + 0.375)


@dataclass
class Lexicon:
    """Term weights per outcome plus a per-outcome intercept.

    Terms are lowercase (tokenizer-normalized); every term carries a weight
    for every declared outcome (absent entries are filled with 0.0 at load).
    """

    name: str
    outcomes: tuple[str, ...]
    terms: dict[str, dict[str, float]]
    intercepts: dict[str, float]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValidationError(f"lexicon {self.name!r} has no terms")
        for outcome in self.outcomes:
            self.intercepts.setdefault(outcome, 0.0)
        for term, weights in self.terms.items():
            if term != term.lower():
                raise ValidationError(f"lexicon term {term!r} is not lowercase")
            for outcome in self.outcomes:
                weights.setdefault(outcome, 0.0)

    @property
    def vocabulary(self) -> set[str]:
        return set(self.terms)

    def weight(self, term: str, outcome: str) -> float:
        return self.terms[term][outcome]

    def restrict(self, vocabulary: Iterable[str], name: str | None = None) -> "Lexicon":
        """Copy of this lexicon keeping only the given terms."""
        keep = set(vocabulary)
        terms = {t: dict(w) for t, w in self.terms.items() if t in keep}
        return Lexicon(
            name=name or self.name,
            outcomes=self.outcomes,
            terms=terms,
            intercepts=dict(self.intercepts),
        )


def load_lexicon_csv(path: str | Path, name: str | None = None) -> Lexicon:
    """Load a ``term,category,weight`` CSV; the intercept is term ``_intercept``."""
    path = Path(path)
    terms: dict[str, dict[str, float]] = {}
    intercepts: dict[str, float] = {}
    outcomes: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"term", "category", "weight"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValidationError(f"{path}: lexicon CSV needs columns {sorted(required)}")
        for row in reader:
            term = row["term"].strip().lower()
            outcome = row["category"].strip()
            try:
                weight = float(row["weight"])
            except ValueError as exc:
                raise ValidationError(f"{path}: bad weight {row['weight']!r}") from exc
            if outcome not in outcomes:
                outcomes.append(outcome)
            if term == INTERCEPT_TERM:
                intercepts[outcome] = weight
            else:
                terms.setdefault(term, {})[outcome] = weight
    return Lexicon(
        name=name or path.stem,
        outcomes=tuple(outcomes),
        terms=terms,
        intercepts=intercepts,
    )


def save_lexicon_csv(lexicon: Lexicon, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["term", "category", "weight"])
        for outcome in lexicon.outcomes:
            writer.writerow([INTERCEPT_TERM, outcome, repr(lexicon.intercepts[outcome])])
        for term in sorted(lexicon.terms):
            for outcome in lexicon.outcomes:
                writer.writerow([term, outcome, repr(lexicon.terms[term][outcome])])


@dataclass(slots=True)
class UserCellFeatures:
    """Token counts for one user in one (region, time-cell).

    ``total_tokens`` counts every emitted token, in or out of the lexicon, so
    relative frequencies share a common denominator.
    """

    user_id: str
    region: RegionCode
    cell: TimeCell
    counts: dict[str, int]
    total_tokens: int
    n_posts: int

    @classmethod
    def from_token_streams(
        cls,
        user_id: str,
        region: RegionCode,
        cell: TimeCell,
        streams: Iterable[Iterable[str]],
    ) -> "UserCellFeatures":
        counts: dict[str, int] = {}
        total = 0
        n_posts = 0
        for stream in streams:
            n_posts += 1
            for token in stream:
                counts[token] = counts.get(token, 0) + 1
                total += 1
        return cls(user_id, region, cell, counts, total, n_posts)


def score_user_cell(
    features: UserCellFeatures,
    lexicon: Lexicon,
    outcome: str,
    dense: bool = False,
) -> float:
    """Evaluate the lexicon score for one outcome, clipped to [0, 5].

    Sparse convention (default): lexicon terms the user never used contribute
    nothing.  Dense mode adds anscombe(0) * weight for every unused lexicon
    term, for sensitivity analysis.
    """
    if features.total_tokens <= 0:
        raise InsufficientDataError(
            f"user {features.user_id} cell {features.cell} has no tokens"
        )
    total = float(features.total_tokens)
    score = lexicon.intercepts[outcome]
    if dense:
        zero = anscombe(0.0)
        for term, weights in lexicon.terms.items():
            count = features.counts.get(term, 0)
            transformed = anscombe(count / total) if count else zero
            score += transformed * weights[outcome]
    else:
        for term, count in features.counts.items():
            weights = lexicon.terms.get(term)
            if weights is not None and count:
                score += anscombe(count / total) * weights[outcome]
    return min(max(score, SCORE_MIN), SCORE_MAX)


@dataclass(slots=True)
class UserScore:
    user_id: str
    region: RegionCode
    cell: TimeCell
    dep: float
    anx: float
    weight: float = 1.0


def score_features(
    features: UserCellFeatures, lexicon: Lexicon, dense: bool = False
) -> UserScore:
    """Score both standard outcomes for one user-cell (unit weight attached)."""
    return UserScore(
        user_id=features.user_id,
        region=features.region,
        cell=features.cell,
        dep=score_user_cell(features, lexicon, DEP, dense=dense),
        anx=score_user_cell(features, lexicon, ANX, dense=dense),
    )


@dataclass
class WeightTable:
    """Post-stratification weights keyed by (user_id, time cell)."""

    weights: dict[tuple[str, TimeCell], float] = field(default_factory=dict)
    default_weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.default_weight > 0 or not math.isfinite(self.default_weight):
            raise ValidationError("default weight must be finite and > 0")
        for key, w in self.weights.items():
            if not w > 0 or not math.isfinite(w):
                raise ValidationError(f"weight for {key} must be finite and > 0, got {w}")

    def lookup(self, user_id: str, cell: TimeCell) -> float:
        return self.weights.get((user_id, cell), self.default_weight)


def load_weight_table(
    path: str | Path, default_weight: float = 1.0
) -> WeightTable:
    """Load a ``user_id,iso_year,iso_week,weight`` CSV (week-cell weights)."""
    weights: dict[tuple[str, TimeCell], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"user_id", "iso_year", "iso_week", "weight"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValidationError(f"{path}: weight CSV needs columns {sorted(required)}")
        for row in reader:
            cell = week_cell(int(row["iso_year"]), int(row["iso_week"]))
            weights[(row["user_id"], cell)] = float(row["weight"])
    return WeightTable(weights, default_weight)


def attach_weight(score: UserScore, table: WeightTable) -> UserScore:
    """Attach the post-stratification weight for this user-cell; scores unchanged."""
    return replace(score, weight=table.lookup(score.user_id, score.cell))


def multiply_weight(score: UserScore, table: WeightTable) -> UserScore:
    """Literal-equation mode: fold the weight into the scores and re-clip.

    The resulting record carries unit weight so downstream aggregation
    degenerates to a plain mean.
    """
    w = table.lookup(score.user_id, score.cell)
    clip = lambda v: min(max(v, SCORE_MIN), SCORE_MAX)
    return replace(score, dep=clip(score.dep * w), anx=clip(score.anx * w), weight=1.0)
