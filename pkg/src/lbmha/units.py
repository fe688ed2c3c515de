"""Spatial and temporal coordinates shared across the pipeline.

Regions are identified by a resolution level plus a code (5-digit FIPS for
counties, postal code for states, "US" for the nation).  Time cells follow the
ISO-8601 calendar: weeks start on Monday and week 1 contains the year's first
Thursday, so the week-numbering year of a date can differ from its calendar
year.  For every unit other than week, ``iso_year`` holds the plain calendar
year.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError


class RegionLevel(str, Enum):
    COUNTY = "county"
    STATE = "state"
    CENSUS_REGION = "census-region"
    MSA = "msa"
    TOWNSHIP = "township"
    NATION = "nation"


class TimeUnit(str, Enum):
    DAY = "day"
    WEEK = "week"
    MONTH = "month"
    QUARTER = "quarter"
    YEAR = "year"


#: Coarse-to-fine ordering used for report layout.
LEVEL_ORDER = (
    RegionLevel.NATION,
    RegionLevel.CENSUS_REGION,
    RegionLevel.STATE,
    RegionLevel.MSA,
    RegionLevel.COUNTY,
    RegionLevel.TOWNSHIP,
)
UNIT_ORDER = (
    TimeUnit.YEAR,
    TimeUnit.QUARTER,
    TimeUnit.MONTH,
    TimeUnit.WEEK,
    TimeUnit.DAY,
)

_INDEX_RANGE = {
    TimeUnit.DAY: (1, 366),
    TimeUnit.WEEK: (1, 53),
    TimeUnit.MONTH: (1, 12),
    TimeUnit.QUARTER: (1, 4),
    TimeUnit.YEAR: (0, 0),
}

NATION_CODE = "US"


@dataclass(frozen=True, slots=True)
class RegionCode:
    level: RegionLevel
    code: str

    def __post_init__(self) -> None:
        if not self.code:
            raise ValidationError("region code must be non-empty")
        if self.level is RegionLevel.COUNTY and not (
            len(self.code) == 5 and self.code.isdigit()
        ):
            raise ValidationError(f"county codes are 5-digit FIPS, got {self.code!r}")

    def sort_key(self) -> tuple[str, str]:
        return (self.level.value, self.code)

    def state_prefix(self) -> str:
        """First two FIPS digits; usable as a state key when no mapping file is loaded."""
        if self.level is not RegionLevel.COUNTY:
            raise ValidationError("state_prefix is defined for county codes only")
        return self.code[:2]

    def __str__(self) -> str:
        return f"{self.level.value}:{self.code}"


def county(code: str) -> RegionCode:
    return RegionCode(RegionLevel.COUNTY, code)


NATION = RegionCode(RegionLevel.NATION, NATION_CODE)


@dataclass(frozen=True, slots=True)
class TimeCell:
    unit: TimeUnit
    iso_year: int
    index: int

    def __post_init__(self) -> None:
        lo, hi = _INDEX_RANGE[self.unit]
        if not lo <= self.index <= hi:
            raise ValidationError(
                f"{self.unit.value} index {self.index} outside [{lo}, {hi}]"
            )

    @classmethod
    def of(cls, day: dt.date, unit: TimeUnit) -> "TimeCell":
        """Cell containing a calendar date, under the ISO calendar for weeks."""
        if unit is TimeUnit.WEEK:
            iso = day.isocalendar()
            return cls(unit, iso[0], iso[1])
        if unit is TimeUnit.DAY:
            return cls(unit, day.year, day.timetuple().tm_yday)
        if unit is TimeUnit.MONTH:
            return cls(unit, day.year, day.month)
        if unit is TimeUnit.QUARTER:
            return cls(unit, day.year, (day.month - 1) // 3 + 1)
        return cls(unit, day.year, 0)

    def start_date(self) -> dt.date:
        """First calendar date belonging to this cell."""
        if self.unit is TimeUnit.WEEK:
            return dt.date.fromisocalendar(self.iso_year, self.index, 1)
        if self.unit is TimeUnit.DAY:
            return dt.date(self.iso_year, 1, 1) + dt.timedelta(days=self.index - 1)
        if self.unit is TimeUnit.MONTH:
            return dt.date(self.iso_year, self.index, 1)
        if self.unit is TimeUnit.QUARTER:
            return dt.date(self.iso_year, 3 * self.index - 2, 1)
        return dt.date(self.iso_year, 1, 1)

    def week_ordinal(self) -> int:
        """Linear week number; consecutive ISO weeks differ by exactly 1."""
        if self.unit is not TimeUnit.WEEK:
            raise ValidationError("week_ordinal is defined for week cells only")
        return self.start_date().toordinal() // 7

    @classmethod
    def from_week_ordinal(cls, ordinal: int) -> "TimeCell":
        return cls.of(dt.date.fromordinal(ordinal * 7 + 1), TimeUnit.WEEK)

    def next(self) -> "TimeCell":
        """Successor cell of the same unit."""
        if self.unit is TimeUnit.WEEK:
            return TimeCell.from_week_ordinal(self.week_ordinal() + 1)
        if self.unit is TimeUnit.YEAR:
            return TimeCell(self.unit, self.iso_year + 1, 0)
        if self.unit is TimeUnit.DAY:
            nxt = self.start_date() + dt.timedelta(days=1)
            return TimeCell.of(nxt, TimeUnit.DAY)
        lo, hi = _INDEX_RANGE[self.unit]
        if self.index < hi:
            return TimeCell(self.unit, self.iso_year, self.index + 1)
        return TimeCell(self.unit, self.iso_year + 1, lo)

    def sort_key(self) -> tuple[int, int]:
        return (self.iso_year, self.index)

    def __str__(self) -> str:
        return f"{self.iso_year}-{self.unit.value[0].upper()}{self.index:02d}"


def week_cell(iso_year: int, week: int) -> TimeCell:
    return TimeCell(TimeUnit.WEEK, iso_year, week)
