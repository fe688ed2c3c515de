"""Synthetic fixtures with known ground truth.

The corpus generator inverts the scoring equation: each user-week draws a
latent score per outcome, converts it back through the Anscombe transform to
a relative frequency of a signal token, quantizes that to an integer count,
and records the score the quantized counts reproduce as the truth.  Running
the full pipeline at zero noise must therefore recover the truth file
exactly.  The panel generator plants a known slope with optional entity
effects correlated with the regressor, to exercise the endogeneity
correction of the within estimator.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import PanelObservation
from .errors import ConfigError
from .scoring import ANX, DEP, Lexicon, anscombe
from .units import RegionCode, RegionLevel, TimeCell, TimeUnit, week_cell

DEP_TOKEN = "marker_dep"
ANX_TOKEN = "marker_anx"

#: Weight/intercept choice keeping latent scores in [1, 4] reachable with
#: token fractions small enough that both signal tokens fit in one cell.
SIGNAL_WEIGHT = 8.0
SIGNAL_INTERCEPT = -9.5

_STATE_PREFIXES = ("01", "06", "12", "36", "48")


def planted_lexicon() -> Lexicon:
    return Lexicon(
        name="planted",
        outcomes=(DEP, ANX),
        terms={
            DEP_TOKEN: {DEP: SIGNAL_WEIGHT, ANX: 0.0},
            ANX_TOKEN: {DEP: 0.0, ANX: SIGNAL_WEIGHT},
        },
        intercepts={DEP: SIGNAL_INTERCEPT, ANX: SIGNAL_INTERCEPT},
    )


@dataclass
class SynthConfig:
    seed: int
    n_counties: int = 20
    users_per_county: tuple[int, int] = (60, 60)
    weeks: int = 10
    start_year: int = 2020
    start_week: int = 1
    vocab_size: int = 100
    noise_sigma: float = 0.0
    tokens_per_user_week: int = 60
    posts_per_user_week: tuple[int, int] = (3, 5)
    latent_range: tuple[float, float] = (1.0, 4.0)
    lexicon: Lexicon = field(default_factory=planted_lexicon)

    def validate(self) -> None:
        lo, hi = self.users_per_county
        if self.n_counties < 1 or lo < 1 or hi < lo:
            raise ConfigError("county/user counts must be positive")
        if self.weeks < 1 or self.vocab_size < 1 or self.tokens_per_user_week < 6:
            raise ConfigError("weeks, vocab_size, tokens_per_user_week too small")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.posts_per_user_week[0] < 3:
            raise ConfigError("each user-week must emit at least 3 posts")
        if self.posts_per_user_week[1] > max(2, self.tokens_per_user_week // 10):
            raise ConfigError("not enough filler tokens for the post count")
        # The latent range must invert to token fractions that fit in a cell.
        f_lo = self._target_fraction(self.latent_range[0])
        f_hi = self._target_fraction(self.latent_range[1])
        if f_lo * self.tokens_per_user_week < 1.0:
            raise ConfigError(
                "lower latent bound needs at least one signal token; "
                "raise tokens_per_user_week or the latent range"
            )
        if 2 * f_hi + 0.1 > 1.0:
            raise ConfigError("upper latent bound leaves no room for filler tokens")

    @staticmethod
    def _target_fraction(score: float) -> float:
        transformed = (score - SIGNAL_INTERCEPT) / SIGNAL_WEIGHT
        return (transformed / 2.0) ** 2 - 0.375


def _achievable_score(count: int, total: int) -> float:
    return SIGNAL_INTERCEPT + SIGNAL_WEIGHT * anscombe(count / float(total))


def _count_for(score: float, total: int, c_max: int) -> int:
    fraction = SynthConfig._target_fraction(score)
    return min(max(int(round(fraction * total)), 1), c_max)


def generate_corpus(cfg: SynthConfig, out_dir: str | Path) -> tuple[Path, Path]:
    """Write posts.jsonl and truth.csv; returns their paths.

    Deterministic for a fixed seed.  Truth records the quantized latent
    scores, which the zero-noise pipeline reproduces bit-for-bit.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    posts_path = out_dir / "posts.jsonl"
    truth_path = out_dir / "truth.csv"

    rng = np.random.default_rng(cfg.seed)
    total = cfg.tokens_per_user_week
    c_max = (total - max(2, total // 10)) // 2
    lat_lo, lat_hi = cfg.latent_range
    weeks = []
    cell = week_cell(cfg.start_year, cfg.start_week)
    for _ in range(cfg.weeks):
        weeks.append(cell)
        cell = cell.next()

    message_no = 0
    with open(posts_path, "w", encoding="utf-8", newline="\n") as posts_fh, open(
        truth_path, "w", encoding="utf-8", newline=""
    ) as truth_fh:
        truth_fh.write("user_id,county_fips,iso_year,iso_week,dep,anx\n")
        for county_idx in range(cfg.n_counties):
            state = _STATE_PREFIXES[county_idx % len(_STATE_PREFIXES)]
            fips = f"{state}{county_idx:03d}"
            n_users = int(rng.integers(cfg.users_per_county[0], cfg.users_per_county[1] + 1))
            for user_idx in range(n_users):
                user_id = f"u{county_idx:03d}{user_idx:04d}"
                for week in weeks:
                    counts = {}
                    truths = {}
                    for outcome, token in ((DEP, DEP_TOKEN), (ANX, ANX_TOKEN)):
                        latent = float(rng.uniform(lat_lo, lat_hi))
                        count = _count_for(latent, total, c_max)
                        truths[outcome] = _achievable_score(count, total)
                        if cfg.noise_sigma > 0:
                            noisy = truths[outcome] + float(
                                rng.normal(0.0, cfg.noise_sigma)
                            )
                            count = _count_for(
                                min(max(noisy, lat_lo), lat_hi), total, c_max
                            )
                        counts[token] = count
                    message_no = _write_user_week(
                        posts_fh,
                        rng,
                        cfg,
                        user_id,
                        fips,
                        week,
                        counts,
                        total,
                        message_no,
                    )
                    truth_fh.write(
                        f"{user_id},{fips},{week.iso_year},{week.index},"
                        f"{truths[DEP]!r},{truths[ANX]!r}\n"
                    )
    return posts_path, truth_path


def _write_user_week(
    fh,
    rng: np.random.Generator,
    cfg: SynthConfig,
    user_id: str,
    fips: str,
    week: TimeCell,
    signal_counts: dict[str, int],
    total: int,
    message_no: int,
) -> int:
    n_posts = int(rng.integers(cfg.posts_per_user_week[0], cfg.posts_per_user_week[1] + 1))
    n_fill = total - sum(signal_counts.values())
    tokens = [t for t, c in signal_counts.items() for _ in range(c)]
    tokens += [
        f"pad{int(k):03d}"
        for k in rng.integers(0, cfg.vocab_size, size=n_fill - n_posts)
    ]
    order = rng.permutation(len(tokens))
    tokens = [tokens[i] for i in order]

    bounds = np.linspace(0, len(tokens), n_posts + 1).astype(int)
    monday = week.start_date()
    for p in range(n_posts):
        chunk = tokens[bounds[p] : bounds[p + 1]]
        # A week+post tag token (out of lexicon, one per post) keeps every
        # text unique per user, so the duplicate filter never fires; it
        # counts toward the token total like any filler.
        chunk = [f"w{week.iso_year}{week.index:02d}p{p}", *chunk]
        text = " ".join(chunk)
        when = dt.datetime.combine(
            monday + dt.timedelta(days=p % 7),
            dt.time(hour=9 + p % 12, minute=message_no % 60),
            tzinfo=dt.timezone.utc,
        )
        record = {
            "message_id": f"m{message_no:09d}",
            "user_id": user_id,
            "timestamp": when.isoformat().replace("+00:00", "Z"),
            "text": text,
            "county_fips": fips,
            "lang": "en",
        }
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        message_no += 1
    return message_no


def generate_panel(
    n_entities: int,
    n_periods: int,
    beta: float,
    entity_effect_scale: float = 1.0,
    confound: bool = False,
    noise: float = 0.1,
    seed: int = 0,
) -> list[PanelObservation]:
    """Panel with y = beta x + entity effect + noise.

    With ``confound`` the entity effect is added into x as well, so the
    entity-mean of x correlates with the effect and pooled OLS is biased
    while the within estimator is not.
    """
    if n_entities < 2 or n_periods < 2:
        raise ConfigError("panel needs >= 2 entities and >= 2 periods")
    rng = np.random.default_rng(seed)
    cells = []
    cell = week_cell(2020, 1)
    for _ in range(n_periods):
        cells.append(cell)
        cell = cell.next()

    panel: list[PanelObservation] = []
    for e in range(n_entities):
        region = RegionCode(RegionLevel.COUNTY, f"{e:05d}")
        effect = float(rng.normal(0.0, entity_effect_scale))
        for cell in cells:
            x = float(rng.normal(0.0, 1.0)) + (effect if confound else 0.0)
            y = beta * x + effect + float(rng.normal(0.0, noise))
            panel.append(PanelObservation(region, cell, x, y))
    return panel
