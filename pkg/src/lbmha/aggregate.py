"""Region x time aggregation of user scores.

User scores become weighted region-cell means, gated by a minimum unique-user
threshold (UT).  Counties failing the UT are pooled per state into super
cells that must pass the same UT; week series with long interior outages are
dropped, remaining interior gaps are linearly interpolated, and a prior-year
baseline can be subtracted.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import InsufficientDataError, RecordError, ValidationError
from .scoring import UserScore
from .units import NATION, RegionCode, RegionLevel, TimeCell, TimeUnit

log = logging.getLogger(__name__)

DEFAULT_USER_THRESHOLDS = (50, 200)
DEFAULT_MAX_GAP = 10


class Provenance(str, Enum):
    OBSERVED = "observed"
    INTERPOLATED = "interpolated"
    SUPER = "super"


class BaselineMode(str, Enum):
    MATCHED_WEEK = "matched-week"
    ANNUAL_MEAN = "annual-mean"


@dataclass(slots=True)
class RegionCell:
    region: RegionCode
    cell: TimeCell
    dep: float
    anx: float
    n_users: int
    sum_weights: float
    provenance: Provenance = Provenance.OBSERVED

    def sort_key(self):
        return (*self.region.sort_key(), *self.cell.sort_key())


def aggregate_cell(scores: Sequence[UserScore]) -> RegionCell:
    """Weighted mean of one (region, cell)'s user scores.

    Summation runs in user_id order so the result is bit-stable regardless of
    input order or sharding.
    """
    if not scores:
        raise InsufficientDataError("cannot aggregate an empty cell")
    ordered = sorted(scores, key=lambda s: s.user_id)
    first = ordered[0]
    if any(s.region != first.region or s.cell != first.cell for s in ordered):
        raise ValidationError("aggregate_cell requires a single (region, cell)")
    sw = sdep = sanx = 0.0
    for s in ordered:
        sw += s.weight
        sdep += s.weight * s.dep
        sanx += s.weight * s.anx
    return RegionCell(
        region=first.region,
        cell=first.cell,
        dep=sdep / sw,
        anx=sanx / sw,
        n_users=len(ordered),
        sum_weights=sw,
        provenance=Provenance.OBSERVED,
    )


def apply_user_threshold(
    cells: Iterable[RegionCell], ut: int
) -> tuple[list[RegionCell], list[RegionCell]]:
    """Partition cells into (kept, rejected) by ``n_users >= ut``."""
    if ut < 1:
        raise ValidationError("user threshold must be >= 1")
    kept: list[RegionCell] = []
    rejected: list[RegionCell] = []
    for cell in cells:
        (kept if cell.n_users >= ut else rejected).append(cell)
    return kept, rejected


def bin_super_counties(
    rejected: Iterable[RegionCell],
    ut: int,
    state_of: Callable[[RegionCode], RegionCode] | None = None,
    weight_by: str = "users",
) -> list[RegionCell]:
    """Pool UT-rejected county cells per (state, cell) into super cells.

    Pooling weights are reporting user counts by default (``weight_by="users"``);
    ``"weights"`` switches to summed post-stratification weights for
    sensitivity analysis.  Super cells must pass the same UT; sub-threshold
    pools are dropped (counted in the log).
    """
    if state_of is None:
        state_of = lambda r: RegionCode(RegionLevel.STATE, r.state_prefix())
    if weight_by not in ("users", "weights"):
        raise ValidationError(f"weight_by must be 'users' or 'weights', got {weight_by!r}")
    groups: dict[tuple[RegionCode, TimeCell], list[RegionCell]] = {}
    for cell in rejected:
        groups.setdefault((state_of(cell.region), cell.cell), []).append(cell)

    supers: list[RegionCell] = []
    dropped = 0
    for (state, cell), members in sorted(
        groups.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key())
    ):
        members = sorted(members, key=lambda c: c.region.sort_key())
        n_users = sum(c.n_users for c in members)
        if n_users < ut:
            dropped += 1
            continue
        sw = sdep = sanx = 0.0
        for c in members:
            w = float(c.n_users) if weight_by == "users" else c.sum_weights
            sw += w
            sdep += w * c.dep
            sanx += w * c.anx
        supers.append(
            RegionCell(
                region=state,
                cell=cell,
                dep=sdep / sw,
                anx=sanx / sw,
                n_users=n_users,
                sum_weights=sum(c.sum_weights for c in members),
                provenance=Provenance.SUPER,
            )
        )
    if dropped:
        log.debug("dropped %d sub-threshold super cells", dropped)
    return supers


WeekSeries = dict[TimeCell, RegionCell]


def _series_by_region(cells: Iterable[RegionCell]) -> dict[RegionCode, WeekSeries]:
    series: dict[RegionCode, WeekSeries] = {}
    for cell in cells:
        series.setdefault(cell.region, {})[cell.cell] = cell
    return series


def drop_gap_regions(
    series: Mapping[RegionCode, WeekSeries], max_gap: int = DEFAULT_MAX_GAP
) -> dict[RegionCode, WeekSeries]:
    """Remove regions with >= max_gap consecutive missing weeks.

    The covered span is the global week range of the input map, so a region
    that starts or stops reporting far from the span edges is treated the
    same as one with an interior outage.
    """
    all_weeks = [cell.week_ordinal() for s in series.values() for cell in s]
    if not all_weeks:
        return dict(series)
    span_lo, span_hi = min(all_weeks), max(all_weeks)

    out: dict[RegionCode, WeekSeries] = {}
    for region, cells in series.items():
        observed = {c.week_ordinal() for c in cells}
        gap = 0
        longest = 0
        for week in range(span_lo, span_hi + 1):
            if week in observed:
                gap = 0
            else:
                gap += 1
                longest = max(longest, gap)
        if longest >= max_gap:
            log.debug("dropping %s: %d consecutive missing weeks", region, longest)
            continue
        out[region] = dict(cells)
    return out


def interpolate_missing(cells: WeekSeries) -> WeekSeries:
    """Fill interior missing weeks of one region's series linearly.

    Observed cells are untouched; filled cells carry n_users = 0 and the
    interpolated provenance.  Leading and trailing gaps stay missing.  With
    fewer than two observed weeks this is a no-op (logged).
    """
    if len(cells) < 2:
        log.warning("interpolation needs >= 2 observed weeks; leaving series as is")
        return dict(cells)
    by_ord = {cell.week_ordinal(): rc for cell, rc in cells.items()}
    ordinals = sorted(by_ord)
    region = by_ord[ordinals[0]].region

    out = dict(cells)
    for lo, hi in zip(ordinals, ordinals[1:]):
        if hi - lo == 1:
            continue
        a, b = by_ord[lo], by_ord[hi]
        for week in range(lo + 1, hi):
            frac = (week - lo) / (hi - lo)
            cell = TimeCell.from_week_ordinal(week)
            out[cell] = RegionCell(
                region=region,
                cell=cell,
                dep=a.dep + frac * (b.dep - a.dep),
                anx=a.anx + frac * (b.anx - a.anx),
                n_users=0,
                sum_weights=0.0,
                provenance=Provenance.INTERPOLATED,
            )
    return out


def adjust_baseline(
    current: Mapping[RegionCode, WeekSeries],
    baseline: Mapping[RegionCode, WeekSeries],
    mode: BaselineMode = BaselineMode.MATCHED_WEEK,
) -> dict[RegionCode, WeekSeries]:
    """Subtract a prior-year baseline from a week series, region by region.

    matched-week subtracts the baseline value of the same ISO week index
    (week 53 falls back to 52 when the baseline year lacks week 53);
    annual-mean subtracts the region's mean over all baseline weeks.  Regions
    or weeks without baseline data are dropped from the output.
    """
    mode = BaselineMode(mode)
    out: dict[RegionCode, WeekSeries] = {}
    for region, cells in current.items():
        base = baseline.get(region)
        if not base:
            continue
        by_index = {cell.index: rc for cell, rc in base.items()}
        if mode is BaselineMode.ANNUAL_MEAN:
            dep0 = sum(rc.dep for rc in base.values()) / len(base)
            anx0 = sum(rc.anx for rc in base.values()) / len(base)
        adjusted: WeekSeries = {}
        for cell, rc in cells.items():
            if mode is BaselineMode.MATCHED_WEEK:
                ref = by_index.get(cell.index)
                if ref is None and cell.index == 53:
                    ref = by_index.get(52)
                if ref is None:
                    continue
                dep0, anx0 = ref.dep, ref.anx
            adjusted[cell] = replace(rc, dep=rc.dep - dep0, anx=rc.anx - anx0)
        if adjusted:
            out[region] = adjusted
    if not out:
        log.warning("baseline adjustment produced no output (disjoint regions?)")
    return out


@dataclass
class CountyMapping:
    """County FIPS -> state postal code and census region."""

    state: dict[str, str]
    census_region: dict[str, str]

    def target(self, fips: str, level: RegionLevel) -> RegionCode:
        if level is RegionLevel.NATION:
            return NATION
        if fips not in self.state:
            raise RecordError(f"county {fips} missing from the mapping table")
        if level is RegionLevel.STATE:
            return RegionCode(RegionLevel.STATE, self.state[fips])
        if level is RegionLevel.CENSUS_REGION:
            return RegionCode(RegionLevel.CENSUS_REGION, self.census_region[fips])
        raise ValidationError(f"cannot roll counties up to {level.value}")


def load_county_mapping(path: str | Path) -> CountyMapping:
    """Load a ``fips,state,census_region`` CSV."""
    state: dict[str, str] = {}
    census: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"fips", "state", "census_region"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValidationError(f"{path}: mapping CSV needs columns {sorted(required)}")
        for row in reader:
            fips = row["fips"].strip().zfill(5)
            state[fips] = row["state"].strip()
            census[fips] = row["census_region"].strip()
    return CountyMapping(state, census)


def rollup(
    cells: Iterable[RegionCell],
    target_level: RegionLevel,
    mapping: CountyMapping | None = None,
) -> list[RegionCell]:
    """User-count-weighted mean of county cells per (target region, time cell).

    The mapping table is required for every target except the nation.
    """
    if target_level is not RegionLevel.NATION and mapping is None:
        raise ValidationError(f"rollup to {target_level.value} needs a county mapping")
    groups: dict[tuple[RegionCode, TimeCell], list[RegionCell]] = {}
    missing: list[str] = []
    for cell in cells:
        if cell.region.level is not RegionLevel.COUNTY:
            raise ValidationError("rollup expects county-level cells")
        if target_level is RegionLevel.NATION:
            target = NATION
        else:
            try:
                target = mapping.target(cell.region.code, target_level)
            except RecordError:
                missing.append(cell.region.code)
                continue
        groups.setdefault((target, cell.cell), []).append(cell)
    if missing:
        raise RecordError(
            "counties missing from the mapping table: "
            + ", ".join(sorted(set(missing)))
        )

    out: list[RegionCell] = []
    for (region, cell), members in sorted(
        groups.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key())
    ):
        members = sorted(members, key=lambda c: c.region.sort_key())
        sw = sdep = sanx = 0.0
        for c in members:
            w = float(c.n_users)
            sw += w
            sdep += w * c.dep
            sanx += w * c.anx
        out.append(
            RegionCell(
                region=region,
                cell=cell,
                dep=sdep / sw,
                anx=sanx / sw,
                n_users=sum(c.n_users for c in members),
                sum_weights=sum(c.sum_weights for c in members),
                provenance=Provenance.OBSERVED,
            )
        )
    return out


def series_map(cells: Iterable[RegionCell]) -> dict[RegionCode, WeekSeries]:
    """Public alias for grouping cells into per-region week series."""
    return _series_by_region(cells)
