"""End-to-end wiring: posts -> user scores -> region cells, plus descriptives.

Scoring is a pure map over (user, region, cell) groups and runs on the worker
pool; groups are scored in a fixed sort order and reduced in the main
process, so results are identical for any worker count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Mapping, Sequence

from .aggregate import (
    DEFAULT_MAX_GAP,
    Provenance,
    RegionCell,
    aggregate_cell,
    apply_user_threshold,
    bin_super_counties,
    drop_gap_regions,
    interpolate_missing,
    series_map,
)
from .errors import InsufficientDataError
from .ingest import Post, apply_upt, filter_posts, group_posts
from .parallel import pmap
from .scoring import (
    Lexicon,
    UserCellFeatures,
    UserScore,
    WeightTable,
    attach_weight,
    multiply_weight,
    score_features,
)
from .tokenizer import tokenize
from .units import RegionCode, TimeCell, TimeUnit

log = logging.getLogger(__name__)

ScoreJob = tuple[str, RegionCode, TimeCell, tuple[str, ...]]


def _score_job(
    job: ScoreJob, lexicon: Lexicon, dense: bool
) -> tuple[UserScore, int, tuple[str, ...]]:
    user_id, region, cell, texts = job
    features = UserCellFeatures.from_token_streams(
        user_id, region, cell, (tokenize(t).tokens for t in texts)
    )
    score = score_features(features, lexicon, dense=dense)
    return score, features.total_tokens, tuple(sorted(set(features.counts)))


@dataclass
class ScoreRun:
    user_scores: list[UserScore]
    filtered_posts: list[Post]
    n_range_errors: int
    word_instances: int
    unique_words: int
    groups_before_threshold: dict[tuple[str, TimeCell], int]


def build_user_scores(
    posts: Iterable[Post],
    lexicon: Lexicon,
    unit: TimeUnit = TimeUnit.WEEK,
    min_posts: int = 3,
    weight_table: WeightTable | None = None,
    dense: bool = False,
    multiply_weights: bool = False,
    workers: int = 1,
) -> ScoreRun:
    """Filter, group, tokenize and score a corpus into per-user-cell scores."""
    filtered = filter_posts(posts)
    if not filtered:
        raise InsufficientDataError("no posts after filtering")
    grouped, n_range_errors = group_posts(filtered, unit)
    posts_per_user_cell = {
        (user, cell): len(group) for (user, _, cell), group in grouped.items()
    }
    grouped = apply_upt(grouped, min_posts)
    if not grouped:
        raise InsufficientDataError(
            f"no (user, cell) groups with at least {min_posts} posts"
        )

    jobs: list[ScoreJob] = [
        (user, region, cell, tuple(p.text for p in group))
        for (user, region, cell), group in sorted(
            grouped.items(),
            key=lambda kv: (kv[0][0], kv[0][1].sort_key(), kv[0][2].sort_key()),
        )
    ]
    results = pmap(partial(_score_job, lexicon=lexicon, dense=dense), jobs, workers)

    table = weight_table or WeightTable()
    weigh = multiply_weight if multiply_weights else attach_weight
    scores = [weigh(score, table) for score, _, _ in results]
    vocabulary: set[str] = set()
    word_instances = 0
    for _, total, uniques in results:
        word_instances += total
        vocabulary.update(uniques)
    return ScoreRun(
        user_scores=scores,
        filtered_posts=filtered,
        n_range_errors=n_range_errors,
        word_instances=word_instances,
        unique_words=len(vocabulary),
        groups_before_threshold=posts_per_user_cell,
    )


@dataclass
class AggregateRun:
    observed: list[RegionCell]
    final: list[RegionCell]
    n_rejected: int
    n_super: int


def aggregate_user_scores(
    user_scores: Sequence[UserScore],
    ut: int,
    unit: TimeUnit = TimeUnit.WEEK,
    max_gap: int = DEFAULT_MAX_GAP,
    interpolate: bool = True,
    state_of: Callable[[RegionCode], RegionCode] | None = None,
    super_weight_by: str = "users",
) -> AggregateRun:
    """Aggregate user scores into gated region cells.

    Week series additionally pass through gap dropping (before interpolation,
    so filled cells cannot defeat the drop rule) and interior interpolation;
    super cells are treated as regions of their own for both steps.
    """
    by_cell: dict[tuple[RegionCode, TimeCell], list[UserScore]] = {}
    for score in user_scores:
        by_cell.setdefault((score.region, score.cell), []).append(score)
    observed = [
        aggregate_cell(group)
        for _, group in sorted(
            by_cell.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key())
        )
    ]

    kept, rejected = apply_user_threshold(observed, ut)
    supers = bin_super_counties(rejected, ut, state_of=state_of, weight_by=super_weight_by)

    final: list[RegionCell] = kept + supers
    if unit is TimeUnit.WEEK and final:
        series = series_map(final)
        series = drop_gap_regions(series, max_gap)
        cells: list[RegionCell] = []
        for region in sorted(series, key=lambda r: r.sort_key()):
            cells.extend(
                (interpolate_missing(series[region]) if interpolate else series[region]).values()
            )
        final = cells
    final.sort(key=lambda c: c.sort_key())
    return AggregateRun(
        observed=observed,
        final=final,
        n_rejected=len(rejected),
        n_super=len(supers),
    )


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


@dataclass
class Descriptives:
    """Corpus and county-week coverage statistics for the run report."""

    word_instances: int
    posts: int
    unique_words: int
    users: int
    counties: int
    posts_per_user_year: tuple[float, float]
    posts_per_user_week: tuple[float, float]
    users_per_county: tuple[float, float]
    thresholds: dict[str, dict[str, object]] = field(default_factory=dict)


def compute_descriptives(
    run: ScoreRun,
    observed_cells: Sequence[RegionCell],
    thresholds: Sequence[int] = (50, 200),
) -> Descriptives:
    posts = run.filtered_posts
    users = {p.user_id for p in posts}
    counties = {p.region for p in posts}

    per_user_year: dict[tuple[str, int], int] = {}
    for p in posts:
        key = (p.user_id, p.timestamp.year)
        per_user_year[key] = per_user_year.get(key, 0) + 1
    per_county_users: dict[RegionCode, set[str]] = {}
    for p in posts:
        per_county_users.setdefault(p.region, set()).add(p.user_id)

    blocks: dict[str, dict[str, object]] = {}
    for label, minimum in [("full", 1)] + [(f"ut{t}", t) for t in thresholds]:
        cells = [c for c in observed_cells if c.n_users >= minimum]
        blocks[label] = {
            "county_weeks": len(cells),
            "distinct_counties": len({c.region for c in cells}),
            "distinct_states": len({c.region.state_prefix() for c in cells}),
            "users_per_county_week": _mean_sd([float(c.n_users) for c in cells]),
            "dep": _mean_sd([c.dep for c in cells]),
            "anx": _mean_sd([c.anx for c in cells]),
        }

    return Descriptives(
        word_instances=run.word_instances,
        posts=len(posts),
        unique_words=run.unique_words,
        users=len(users),
        counties=len(counties),
        posts_per_user_year=_mean_sd(list(map(float, per_user_year.values()))),
        posts_per_user_week=_mean_sd(
            list(map(float, run.groups_before_threshold.values()))
        ),
        users_per_county=_mean_sd(
            [float(len(u)) for u in per_county_users.values()]
        ),
        thresholds=blocks,
    )


def render_descriptives(d: Descriptives) -> str:
    """Plain-text report with corpus coverage and gated county-week stats."""

    def ms(pair: tuple[float, float]) -> str:
        return f"{pair[0]:.6f} ({pair[1]:.6f})"

    lines = [
        "Corpus descriptives (after inclusion filters)",
        f"  word instances:       {d.word_instances}",
        f"  posts:                {d.posts}",
        f"  unique words:         {d.unique_words}",
        f"  users:                {d.users}",
        f"  counties:             {d.counties}",
        f"  posts per user/year:  {ms(d.posts_per_user_year)}",
        f"  posts per user/week:  {ms(d.posts_per_user_week)}",
        f"  users per county:     {ms(d.users_per_county)}",
        "",
        "County-week descriptives by user threshold",
    ]
    for label, block in d.thresholds.items():
        title = "full" if label == "full" else f"n >= {label[2:]}"
        lines.append(f"  [{title}]")
        lines.append(f"    county-weeks:          {block['county_weeks']}")
        lines.append(f"    distinct counties:     {block['distinct_counties']}")
        lines.append(f"    distinct states:       {block['distinct_states']}")
        lines.append(f"    users per county-week: {ms(block['users_per_county_week'])}")
        lines.append(f"    depression score:      {ms(block['dep'])}")
        lines.append(f"    anxiety score:         {ms(block['anx'])}")
    return "\n".join(lines) + "\n"
