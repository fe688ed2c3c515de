"""Measurement reliability across spatiotemporal resolutions.

The split-half reliability of a space-time cell is R = 1 - |mu_a - mu_b| /
sigma, where a and b are a random partition of the cell's user scores into
halves whose sizes differ by at most one and sigma is the population standard
deviation of the pooled scores.  The mean difference enters in absolute
value: signed differences are symmetric around zero and would average to ~1
over repeated splits regardless of noise, making the statistic useless as a
quality gate.  RSR is the mean of R over repeated independent partitions.

ICC1/ICC2 come from a one-way ANOVA over groups; ICC2 is ICC1 corrected for
mean group size (Spearman-Brown).
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateDataError, InsufficientDataError, ValidationError
from .scoring import DEP, UserScore
from .units import (
    LEVEL_ORDER,
    NATION,
    RegionCode,
    RegionLevel,
    TimeCell,
    TimeUnit,
    UNIT_ORDER,
)
from .aggregate import CountyMapping

log = logging.getLogger(__name__)

MIN_SPLIT_USERS = 20
DEFAULT_N_REPEATS = 100


def pair_seed(seed: int, region: RegionCode, cell: TimeCell) -> int:
    """Stable per-(region, cell) seed so results are worker-count invariant."""
    key = f"{seed}|{region}|{cell}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def r_from_halves(a: Sequence[float], b: Sequence[float]) -> float:
    """R = 1 - |mean(a) - mean(b)| / sigma(a + b) for an explicit split."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pooled = np.concatenate([a, b])
    sigma = pooled.std(ddof=0)
    if sigma == 0.0:
        return 1.0
    return float(1.0 - abs(a.mean() - b.mean()) / sigma)


def _rsr(scores: np.ndarray, n_repeats: int, rng_seed: int) -> float:
    n = scores.size
    sigma = scores.std(ddof=0)
    if sigma == 0.0:
        return 1.0
    rng = np.random.default_rng(rng_seed)
    # One permutation per repeat via row-wise argsort of uniform draws.
    perms = rng.random((n_repeats, n)).argsort(axis=1)
    shuffled = scores[perms]
    h = n // 2
    mu_a = shuffled[:, :h].mean(axis=1)
    mu_b = shuffled[:, h:].mean(axis=1)
    return float(np.mean(1.0 - np.abs(mu_a - mu_b) / sigma))


def split_half_r(scores: Sequence[float], rng_seed: int) -> float:
    """Split-half reliability of one cell's user scores under a seeded partition.

    Requires at least MIN_SPLIT_USERS scores.  All-identical scores give
    R = 1 by convention (zero variance, equal means).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size < MIN_SPLIT_USERS:
        raise InsufficientDataError(
            f"split-half reliability needs >= {MIN_SPLIT_USERS} users, got {scores.size}"
        )
    return _rsr(scores, 1, rng_seed)


def rsr(scores: Sequence[float], n_repeats: int, rng_seed: int) -> float:
    """Mean split-half R over ``n_repeats`` independent seeded partitions."""
    if n_repeats < 1:
        raise ValidationError("n_repeats must be >= 1")
    scores = np.asarray(scores, dtype=float)
    if scores.size < MIN_SPLIT_USERS:
        raise InsufficientDataError(
            f"repeated split-half needs >= {MIN_SPLIT_USERS} users, got {scores.size}"
        )
    return _rsr(scores, n_repeats, rng_seed)


@dataclass(slots=True)
class ReliabilityReport:
    level: RegionLevel
    unit: TimeUnit
    mean_r: float
    n_pairs: int
    std_err: float
    per_pair: dict[tuple[RegionCode, TimeCell], float] | None = None


@dataclass(slots=True)
class UTSweepPoint:
    ut: int
    mean_r: float
    ci95: tuple[float, float]
    n_cells: int


def _coarsen_region(
    region: RegionCode, level: RegionLevel, mapping: CountyMapping | None
) -> RegionCode | None:
    """Map a county to a coarser region, or None when not derivable."""
    if region.level is level:
        return region
    if region.level is not RegionLevel.COUNTY:
        return None
    if level is RegionLevel.NATION:
        return NATION
    if level is RegionLevel.STATE and mapping is None:
        return RegionCode(RegionLevel.STATE, region.state_prefix())
    if mapping is not None and level in (RegionLevel.STATE, RegionLevel.CENSUS_REGION):
        try:
            return mapping.target(region.code, level)
        except Exception:
            return None
    return None


def _coarsen_cell(cell: TimeCell, unit: TimeUnit) -> TimeCell | None:
    if cell.unit is unit:
        return cell
    if cell.unit is not TimeUnit.DAY:
        return None  # only day-precision scores are re-derivable
    return TimeCell.of(cell.start_date(), unit)


def _pool_user_scores(
    user_scores: Iterable[UserScore],
    level: RegionLevel,
    unit: TimeUnit,
    mapping: CountyMapping | None,
    outcome: str,
) -> dict[tuple[RegionCode, TimeCell], np.ndarray]:
    """Per (region, cell): one score per user (mean of the user's finer scores)."""
    sums: dict[tuple[RegionCode, TimeCell], dict[str, tuple[float, int]]] = {}
    for score in user_scores:
        region = _coarsen_region(score.region, level, mapping)
        cell = _coarsen_cell(score.cell, unit)
        if region is None or cell is None:
            continue
        value = getattr(score, outcome.lower())
        per_user = sums.setdefault((region, cell), {})
        total, count = per_user.get(score.user_id, (0.0, 0))
        per_user[score.user_id] = (total + value, count + 1)
    return {
        key: np.array(
            [total / count for _, (total, count) in sorted(per_user.items())]
        )
        for key, per_user in sums.items()
    }


def reliability_grid(
    user_scores: Sequence[UserScore],
    levels: Iterable[RegionLevel],
    units: Iterable[TimeUnit],
    min_users: int = MIN_SPLIT_USERS,
    n_repeats: int = DEFAULT_N_REPEATS,
    rng_seed: int = 0,
    mapping: CountyMapping | None = None,
    outcome: str = DEP,
    keep_per_pair: bool = False,
) -> dict[tuple[RegionLevel, TimeUnit], ReliabilityReport]:
    """Mean RSR per (region level, time unit), coarse-to-fine.

    Input scores should carry county/day precision; resolutions that cannot
    be derived from them (or with no qualifying pair) are absent from the
    result.
    """
    levels = [lv for lv in LEVEL_ORDER if lv in set(levels)]
    units = [u for u in UNIT_ORDER if u in set(units)]
    grid: dict[tuple[RegionLevel, TimeUnit], ReliabilityReport] = {}
    for unit in units:
        for level in levels:
            pools = _pool_user_scores(user_scores, level, unit, mapping, outcome)
            per_pair: dict[tuple[RegionCode, TimeCell], float] = {}
            for (region, cell), values in sorted(
                pools.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key())
            ):
                if values.size < max(min_users, MIN_SPLIT_USERS):
                    continue
                per_pair[(region, cell)] = _rsr(
                    values, n_repeats, pair_seed(rng_seed, region, cell)
                )
            if not per_pair:
                continue
            rs = np.array(list(per_pair.values()))
            grid[(level, unit)] = ReliabilityReport(
                level=level,
                unit=unit,
                mean_r=float(rs.mean()),
                n_pairs=rs.size,
                std_err=float(rs.std(ddof=1) / np.sqrt(rs.size)) if rs.size > 1 else 0.0,
                per_pair=per_pair if keep_per_pair else None,
            )
    return grid


def ut_sweep(
    user_scores: Sequence[UserScore],
    ut_values: Sequence[int],
    n_repeats: int = DEFAULT_N_REPEATS,
    rng_seed: int = 0,
    min_users: int = MIN_SPLIT_USERS,
    outcome: str = DEP,
) -> list[UTSweepPoint]:
    """Mean county-week RSR as a function of the minimum user threshold.

    Cells below MIN_SPLIT_USERS cannot produce a split-half value, so
    ``n_cells`` counts the cells actually pooled at each threshold.  The 95%
    interval is mean +/- 1.96 standard errors across cells.
    """
    pools = _pool_user_scores(
        user_scores, RegionLevel.COUNTY, TimeUnit.WEEK, None, outcome
    )
    cells = sorted(pools.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key()))
    cached: list[tuple[int, float]] = []
    for (region, cell), values in cells:
        if values.size < min_users:
            continue
        cached.append(
            (values.size, _rsr(values, n_repeats, pair_seed(rng_seed, region, cell)))
        )

    points: list[UTSweepPoint] = []
    for ut in sorted(ut_values):
        rs = np.array([r for n, r in cached if n >= ut])
        if rs.size == 0:
            points.append(UTSweepPoint(ut, float("nan"), (float("nan"), float("nan")), 0))
            continue
        se = float(rs.std(ddof=1) / np.sqrt(rs.size)) if rs.size > 1 else 0.0
        mean = float(rs.mean())
        points.append(
            UTSweepPoint(ut, mean, (mean - 1.96 * se, mean + 1.96 * se), int(rs.size))
        )
    return points


def intraclass_correlations(
    groups: Mapping[object, Sequence[float]] | Iterable[Sequence[float]],
) -> tuple[float, float]:
    """One-way ANOVA ICC1 and its test-length corrected ICC2.

    ICC1 = (MSB - MSW) / (MSB + (k - 1) MSW) with k the mean group size;
    ICC2 = k ICC1 / (1 + (k - 1) ICC1).

    Raises
    ------
    InsufficientDataError
        Fewer than 2 groups, or any group with fewer than 2 members.
    DegenerateDataError
        All values identical (both mean squares zero).
    """
    if isinstance(groups, Mapping):
        arrays = [np.asarray(groups[k], dtype=float) for k in sorted(groups, key=str)]
    else:
        arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2 or any(a.size < 2 for a in arrays):
        raise InsufficientDataError("ICC needs >= 2 groups with >= 2 members each")

    n_total = sum(a.size for a in arrays)
    n_groups = len(arrays)
    grand = np.concatenate(arrays).mean()
    ssb = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ssw = sum(((a - a.mean()) ** 2).sum() for a in arrays)
    msb = ssb / (n_groups - 1)
    msw = ssw / (n_total - n_groups)
    if msb == 0.0 and msw == 0.0:
        raise DegenerateDataError("ICC undefined: no variance between or within groups")
    kbar = n_total / n_groups
    icc1 = (msb - msw) / (msb + (kbar - 1) * msw)
    icc2 = kbar * icc1 / (1 + (kbar - 1) * icc1)
    return float(icc1), float(icc2)
