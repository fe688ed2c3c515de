"""Raw message parsing, inclusion filters, and (user, region, time-cell) keying.

Inclusion rules: keep posts that are English (or untagged), are not reposts,
contain no URL, and are not an exact duplicate of an earlier post by the same
user after whitespace normalization.  Retained users must then post at least
``min_posts`` times inside a time cell for that cell to count.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import FormatError, RecordError
from .units import RegionCode, TimeCell, TimeUnit, county

log = logging.getLogger(__name__)

MIN_TIMESTAMP_YEAR = 1970
MAX_TIMESTAMP_YEAR = 2100

_URL_PREFIXES = ("http://", "https://", "www.")
_CSV_FIELDS = ("message_id", "user_id", "timestamp", "text", "county_fips")


@dataclass(slots=True)
class Post:
    message_id: str
    user_id: str
    timestamp: dt.datetime
    text: str
    region: RegionCode
    lang: str | None = None
    is_repost: bool | None = None


@dataclass(slots=True)
class ParseResult:
    posts: list[Post]
    n_malformed: int = 0

    def __iter__(self):
        return iter(self.posts)

    def __len__(self) -> int:
        return len(self.posts)


def _parse_timestamp(value: str) -> dt.datetime:
    ts = dt.datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def _parse_fips(value: str) -> RegionCode:
    code = value.strip()
    # CSV round-trips routinely drop leading zeros from FIPS codes.
    if code.isdigit() and 1 <= len(code) <= 5:
        return county(code.zfill(5))
    raise ValueError(f"bad county FIPS {value!r}")


def _build_post(rec: Mapping[str, object]) -> Post:
    is_repost = rec.get("is_repost")
    if isinstance(is_repost, str):
        is_repost = is_repost.strip().lower() in ("1", "true", "yes")
    lang = rec.get("lang") or None
    return Post(
        message_id=str(rec["message_id"]),
        user_id=str(rec["user_id"]),
        timestamp=_parse_timestamp(str(rec["timestamp"])),
        text=str(rec["text"]),
        region=_parse_fips(str(rec["county_fips"])),
        lang=str(lang) if lang is not None else None,
        is_repost=bool(is_repost) if is_repost is not None else None,
    )


def parse_posts(source, fmt: str = "jsonl") -> ParseResult:
    """Parse a JSONL or CSV byte/text stream into posts, in input order.

    Malformed records are counted and skipped; if more than half of the
    records are malformed the whole stream is rejected with a FormatError.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    text = source.read()
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not valid UTF-8: {exc}") from exc

    posts: list[Post] = []
    malformed = 0
    total = 0
    if fmt == "jsonl":
        for line in text.splitlines():
            if not line.strip():
                continue
            total += 1
            try:
                posts.append(_build_post(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError):
                malformed += 1
    elif fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            return ParseResult([], 0)
        missing = set(_CSV_FIELDS) - set(reader.fieldnames)
        if missing:
            raise FormatError(f"CSV header lacks columns: {sorted(missing)}")
        for row in reader:
            total += 1
            try:
                posts.append(_build_post({k: v for k, v in row.items() if v != ""}))
            except (KeyError, ValueError, TypeError):
                malformed += 1
    else:
        raise FormatError(f"unknown input format {fmt!r}")

    if total and malformed * 2 > total:
        raise FormatError(
            f"{malformed}/{total} records malformed; refusing to continue"
        )
    if malformed:
        log.warning("skipped %d malformed records of %d", malformed, total)
    return ParseResult(posts, malformed)


def _contains_url(text: str) -> bool:
    return any(tok.lower().startswith(_URL_PREFIXES) for tok in text.split())


def _is_repost(post: Post) -> bool:
    if post.is_repost is not None:
        return post.is_repost
    return post.text.lstrip().lower().startswith("rt @")


def filter_posts(posts: Iterable[Post]) -> list[Post]:
    """Apply the inclusion rules, preserving order.

    English-or-untagged, not a repost, no URL, and not a per-user duplicate
    (exact match on whitespace-normalized text, first occurrence wins).
    Idempotent and total.
    """
    seen: dict[str, set[str]] = {}
    kept: list[Post] = []
    for post in posts:
        if post.lang is not None and post.lang.lower() != "en":
            continue
        if _is_repost(post):
            continue
        if _contains_url(post.text):
            continue
        normalized = " ".join(post.text.split())
        texts = seen.setdefault(post.user_id, set())
        if normalized in texts:
            continue
        texts.add(normalized)
        kept.append(post)
    return kept


def assign_cell(post: Post, unit: TimeUnit) -> tuple[str, RegionCode, TimeCell]:
    """Key a filtered post by (user, region, time cell) under the ISO calendar."""
    day = post.timestamp.date()
    if not MIN_TIMESTAMP_YEAR <= day.year <= MAX_TIMESTAMP_YEAR:
        raise RecordError(
            f"timestamp {post.timestamp.isoformat()} outside supported years "
            f"{MIN_TIMESTAMP_YEAR}-{MAX_TIMESTAMP_YEAR}"
        )
    return post.user_id, post.region, TimeCell.of(day, unit)


GroupKey = tuple[str, RegionCode, TimeCell]


def group_posts(
    posts: Iterable[Post], unit: TimeUnit
) -> tuple[dict[GroupKey, list[Post]], int]:
    """Group posts by (user, region, cell); returns (groups, n_range_errors).

    Posts with out-of-range timestamps are skipped and counted rather than
    aborting the whole corpus.
    """
    groups: dict[GroupKey, list[Post]] = {}
    errors = 0
    for post in posts:
        try:
            key = assign_cell(post, unit)
        except RecordError:
            errors += 1
            continue
        groups.setdefault(key, []).append(post)
    if errors:
        log.warning("skipped %d posts with out-of-range timestamps", errors)
    return groups, errors


def apply_upt(
    grouped: Mapping[GroupKey, Sequence[Post]], min_posts: int = 3
) -> dict[GroupKey, list[Post]]:
    """Keep only (user, region, cell) groups with at least ``min_posts`` posts."""
    if min_posts < 1:
        raise ValueError("min_posts must be >= 1")
    return {k: list(v) for k, v in grouped.items() if len(v) >= min_posts}
