"""Validity statistics: within fixed-effects regression, external-criteria
correlations, and the event-week study with bootstrap confidence intervals.

The within (fixed-effects) estimator regresses entity-demeaned y on entity-
demeaned x, which removes any time-invariant per-entity confound that a
pooled regression would absorb into the slope.  The event study compares
z-scored week-over-week percent changes between event and non-event weeks via
Cohen's d, with a percentile bootstrap over the two pools.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .errors import (
    DegenerateDataError,
    DomainError,
    InsufficientDataError,
    ValidationError,
)
from .units import RegionCode, TimeCell, TimeUnit

log = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP_ITERATIONS = 10_000
_BOOTSTRAP_BLOCK = 1024


@dataclass(slots=True)
class PanelObservation:
    region: RegionCode
    cell: TimeCell
    x: float
    y: float


@dataclass(slots=True)
class FixedEffectsResult:
    beta: float
    std_err: float
    t_stat: float
    p_value: float
    n_obs: int
    n_entities: int


@dataclass(frozen=True, slots=True)
class EventCalendar:
    events: frozenset[tuple[dt.date, str]]
    year: int

    def __post_init__(self) -> None:
        for day, _ in self.events:
            if day.year != self.year:
                raise ValidationError(f"event date {day} outside year {self.year}")


@dataclass(slots=True)
class EventStudyResult:
    outcome: str
    cohens_d: float
    ci95: tuple[float, float]
    n_event_weeks: int
    n_nonevent_weeks: int
    n_bootstrap: int


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson product-moment correlation of two equal-length samples."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size:
        raise ValidationError("pearson needs equal-length samples")
    if x.size < 3:
        raise InsufficientDataError("pearson needs at least 3 observations")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = math.sqrt(float(xd @ xd) * float(yd @ yd))
    if denom == 0.0:
        raise DegenerateDataError("correlation undefined: zero variance")
    return float(np.clip((xd @ yd) / denom, -1.0, 1.0))


def pearson_with_p(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """(r, two-sided p) using the exact t transform with n - 2 degrees of freedom."""
    r = pearson(xs, ys)
    n = len(xs)
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * sps.t.sf(abs(t), n - 2))


def within_fixed_effects(
    panel: Sequence[PanelObservation], cluster_robust: bool = False
) -> FixedEffectsResult:
    """Within (entity-demeaned) estimator for a single regressor.

    beta = sum(x~ y~) / sum(x~^2) over entity-demeaned values; the default
    standard error is the homoskedastic within-estimator SE with
    n_obs - n_entities - 1 degrees of freedom; ``cluster_robust`` switches to
    entity-clustered errors.
    """
    if not panel:
        raise InsufficientDataError("empty panel")
    entities: dict[RegionCode, list[int]] = {}
    for i, obs in enumerate(panel):
        entities.setdefault(obs.region, []).append(i)
    if len(entities) < 2:
        raise InsufficientDataError("fixed effects need >= 2 entities")

    x = np.array([o.x for o in panel], dtype=float)
    y = np.array([o.y for o in panel], dtype=float)
    xd = np.empty_like(x)
    yd = np.empty_like(y)
    for idx in entities.values():
        idx = np.array(idx)
        xd[idx] = x[idx] - x[idx].mean()
        yd[idx] = y[idx] - y[idx].mean()

    sxx = float(xd @ xd)
    if sxx == 0.0:
        raise DegenerateDataError("no within-entity variance in the regressor")
    beta = float(xd @ yd) / sxx
    resid = yd - beta * xd
    n_obs = len(panel)
    n_entities = len(entities)
    dof = n_obs - n_entities - 1
    if dof < 1:
        raise InsufficientDataError("not enough observations for the fixed-effects dof")

    if cluster_robust:
        meat = 0.0
        for idx in entities.values():
            idx = np.array(idx)
            score = float(xd[idx] @ resid[idx])
            meat += score * score
        correction = (n_entities / (n_entities - 1)) * ((n_obs - 1) / dof)
        se = math.sqrt(meat * correction) / sxx
    else:
        sigma2 = float(resid @ resid) / dof
        se = math.sqrt(sigma2 / sxx)

    if se == 0.0:
        t_stat = math.inf if beta != 0 else 0.0
        p_value = 0.0 if beta != 0 else 1.0
    else:
        t_stat = beta / se
        p_value = float(2.0 * sps.t.sf(abs(t_stat), dof))
    return FixedEffectsResult(beta, se, t_stat, p_value, n_obs, n_entities)


def pooled_ols(panel: Sequence[PanelObservation]) -> float:
    """Pooled OLS slope (no entity effects); the contrast case for the within estimator."""
    x = np.array([o.x for o in panel], dtype=float)
    y = np.array([o.y for o in panel], dtype=float)
    xd = x - x.mean()
    sxx = float(xd @ xd)
    if sxx == 0.0:
        raise DegenerateDataError("no variance in the regressor")
    return float(xd @ (y - y.mean())) / sxx


def external_correlations(
    region_scores: Mapping[str, float],
    criteria: Mapping[str, Mapping[str, float]],
    min_overlap: int = 3,
) -> dict[str, tuple[float, float, int]]:
    """Pearson r of a cross-sectional score against each criteria variable.

    ``criteria`` maps county -> variable -> value; counties missing a
    variable are skipped for that variable, and variables with fewer than
    ``min_overlap`` overlapping counties are skipped with a warning.
    Returns variable -> (r, p, n).
    """
    variables: dict[str, list[tuple[float, float]]] = {}
    for county_id, values in criteria.items():
        score = region_scores.get(county_id)
        if score is None:
            continue
        for variable, value in values.items():
            variables.setdefault(variable, []).append((score, value))

    out: dict[str, tuple[float, float, int]] = {}
    for variable in sorted(variables):
        pairs = variables[variable]
        if len(pairs) < min_overlap:
            log.warning(
                "skipping %s: only %d overlapping counties", variable, len(pairs)
            )
            continue
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        r, p = pearson_with_p(xs, ys)
        out[variable] = (r, p, len(pairs))
    return out


def zscored_pct_change(series: Sequence[float]) -> np.ndarray:
    """Z-scored week-over-week percent changes of a positive weekly series.

    A series of length n yields n - 1 changes; z-scoring uses the population
    mean/std over all changes, with an all-zeros result when the changes are
    constant.
    """
    values = np.asarray(series, dtype=float)
    if values.size < 3:
        raise InsufficientDataError("percent changes need >= 3 consecutive weeks")
    if np.any(values <= 0.0):
        raise DomainError("percent change undefined for nonpositive values")
    changes = np.diff(values) / values[:-1]
    sd = changes.std(ddof=0)
    if sd == 0.0:
        return np.zeros_like(changes)
    return (changes - changes.mean()) / sd


def mark_event_weeks(calendar: EventCalendar) -> set[TimeCell]:
    """ISO weeks touched by any event date or the day after it.

    The one-day buffer means an event on the last ISO weekday (Sunday) marks
    both its own week and the next.
    """
    weeks: set[TimeCell] = set()
    for day, _ in calendar.events:
        weeks.add(TimeCell.of(day, TimeUnit.WEEK))
        weeks.add(TimeCell.of(day + dt.timedelta(days=1), TimeUnit.WEEK))
    return weeks


def _cohens_d(event: np.ndarray, nonevent: np.ndarray) -> float:
    n1, n2 = event.size, nonevent.size
    pooled_var = (
        (n1 - 1) * event.var(ddof=1) + (n2 - 1) * nonevent.var(ddof=1)
    ) / (n1 + n2 - 2)
    if pooled_var == 0.0:
        raise DegenerateDataError("effect size undefined: zero pooled variance")
    return float((event.mean() - nonevent.mean()) / math.sqrt(pooled_var))


def event_cohens_d(
    changes: Mapping[TimeCell, float], event_weeks: set[TimeCell]
) -> float:
    """Cohen's d (Bessel-corrected pooled SD) between event and non-event changes."""
    event = np.array([v for w, v in changes.items() if w in event_weeks])
    nonevent = np.array([v for w, v in changes.items() if w not in event_weeks])
    if event.size < 2 or nonevent.size < 2:
        raise InsufficientDataError("both partitions need >= 2 weeks")
    return _cohens_d(event, nonevent)


def _block_seed(seed: int, block: int) -> int:
    digest = hashlib.blake2b(f"{seed}|block{block}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def bootstrap_ci(
    event_pool: Sequence[float],
    nonevent_pool: Sequence[float],
    n_iter: int = DEFAULT_BOOTSTRAP_ITERATIONS,
    rng_seed: int = 0,
    statistic: str = "mean_diff",
) -> tuple[float, float]:
    """Percentile bootstrap CI for the difference between two pools.

    Each pool is resampled with replacement at its own size; the per-iteration
    statistic is the mean difference or Cohen's d (zero when a resample is
    degenerate with equal means).  The CI is the 2.5th/97.5th percentile of
    the bootstrap distribution.  Iterations draw from fixed-size blocks with
    seeds derived from (rng_seed, block index), so results do not depend on
    how the blocks are scheduled.
    """
    if statistic not in ("mean_diff", "cohens_d"):
        raise ValidationError(f"unknown bootstrap statistic {statistic!r}")
    ev = np.asarray(event_pool, dtype=float)
    nv = np.asarray(nonevent_pool, dtype=float)
    if ev.size == 0 or nv.size == 0:
        raise InsufficientDataError("bootstrap pools must be nonempty")

    samples: list[np.ndarray] = []
    done = 0
    block = 0
    while done < n_iter:
        size = min(_BOOTSTRAP_BLOCK, n_iter - done)
        rng = np.random.default_rng(_block_seed(rng_seed, block))
        a = ev[rng.integers(0, ev.size, size=(size, ev.size))]
        b = nv[rng.integers(0, nv.size, size=(size, nv.size))]
        diff = a.mean(axis=1) - b.mean(axis=1)
        if statistic == "mean_diff":
            samples.append(diff)
        else:
            pooled_var = (
                (ev.size - 1) * a.var(axis=1, ddof=1)
                + (nv.size - 1) * b.var(axis=1, ddof=1)
            ) / (ev.size + nv.size - 2)
            sd = np.sqrt(pooled_var)
            with np.errstate(divide="ignore", invalid="ignore"):
                d = np.where(
                    sd > 0.0,
                    diff / np.where(sd > 0.0, sd, 1.0),
                    np.where(diff == 0.0, 0.0, np.sign(diff) * np.inf),
                )
            samples.append(d)
        done += size
        block += 1
    draws = np.concatenate(samples)
    return float(np.percentile(draws, 2.5)), float(np.percentile(draws, 97.5))


def event_study(
    weekly_series: Mapping[TimeCell, float],
    event_weeks: set[TimeCell],
    outcome: str,
    n_iter: int = DEFAULT_BOOTSTRAP_ITERATIONS,
    rng_seed: int = 0,
) -> EventStudyResult:
    """Cohen's d of z-scored percent changes between event and non-event weeks.

    The change for week t is the percent change from week t-1, so the first
    week of the series contributes no observation.  The CI bootstraps the
    same d statistic over the two pools of week-level changes.
    """
    cells = sorted(weekly_series, key=lambda c: c.sort_key())
    if any(c.unit is not TimeUnit.WEEK for c in cells):
        raise ValidationError("event study expects a week-unit series")
    z = zscored_pct_change([weekly_series[c] for c in cells])
    changes = {cell: float(v) for cell, v in zip(cells[1:], z)}
    d = event_cohens_d(changes, event_weeks)
    event = [v for w, v in changes.items() if w in event_weeks]
    nonevent = [v for w, v in changes.items() if w not in event_weeks]
    ci = bootstrap_ci(event, nonevent, n_iter, rng_seed, statistic="cohens_d")
    return EventStudyResult(
        outcome=outcome,
        cohens_d=d,
        ci95=ci,
        n_event_weeks=len(event),
        n_nonevent_weeks=len(nonevent),
        n_bootstrap=n_iter,
    )
