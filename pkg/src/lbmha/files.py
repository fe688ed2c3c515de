"""CSV/JSON readers and writers for every external file format.

All floats are serialized with 6 decimal places; rows are emitted in a fixed
sort order and lines end with a bare newline, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__
from .adapt import FilterDecision
from .aggregate import Provenance, RegionCell
from .analysis import EventCalendar, EventStudyResult, FixedEffectsResult
from .errors import ValidationError
from .reliability import ReliabilityReport, UTSweepPoint
from .scoring import UserScore
from .units import RegionCode, RegionLevel, TimeCell, TimeUnit


def fmt(value: float) -> str:
    return f"{value:.6f}"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_user_scores(scores: Iterable[UserScore], path: str | Path) -> None:
    rows = sorted(
        scores, key=lambda s: (s.user_id, *s.region.sort_key(), *s.cell.sort_key())
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(
            ["user_id", "region_level", "region_code", "iso_year", "iso_week",
             "dep", "anx", "weight"]
        )
        for s in rows:
            w.writerow(
                [s.user_id, s.region.level.value, s.region.code,
                 s.cell.iso_year, s.cell.index,
                 fmt(s.dep), fmt(s.anx), fmt(s.weight)]
            )


def read_user_scores(path: str | Path, unit: TimeUnit = TimeUnit.WEEK) -> list[UserScore]:
    scores = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.append(
                UserScore(
                    user_id=row["user_id"],
                    region=RegionCode(RegionLevel(row["region_level"]), row["region_code"]),
                    cell=TimeCell(unit, int(row["iso_year"]), int(row["iso_week"])),
                    dep=float(row["dep"]),
                    anx=float(row["anx"]),
                    weight=float(row["weight"]),
                )
            )
    return scores


def write_region_cells(cells: Iterable[RegionCell], path: str | Path) -> None:
    rows = sorted(cells, key=lambda c: c.sort_key())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(
            ["region_level", "region_code", "iso_year", "iso_week",
             "dep", "anx", "n_users", "provenance"]
        )
        for c in rows:
            w.writerow(
                [c.region.level.value, c.region.code, c.cell.iso_year, c.cell.index,
                 fmt(c.dep), fmt(c.anx), c.n_users, c.provenance.value]
            )


def read_region_cells(path: str | Path, unit: TimeUnit = TimeUnit.WEEK) -> list[RegionCell]:
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells.append(
                RegionCell(
                    region=RegionCode(RegionLevel(row["region_level"]), row["region_code"]),
                    cell=TimeCell(unit, int(row["iso_year"]), int(row["iso_week"])),
                    dep=float(row["dep"]),
                    anx=float(row["anx"]),
                    n_users=int(row["n_users"]),
                    sum_weights=float(row["n_users"]),
                    provenance=Provenance(row["provenance"]),
                )
            )
    return cells


def write_reliability_grid(
    grid: Mapping[tuple, ReliabilityReport], min_users: int, path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["level", "unit", "ut", "mean_R", "ci_low", "ci_high", "n_cells"])
        for (level, unit), rep in grid.items():
            lo = rep.mean_r - 1.96 * rep.std_err
            hi = rep.mean_r + 1.96 * rep.std_err
            w.writerow(
                [level.value, unit.value, min_users,
                 fmt(rep.mean_r), fmt(lo), fmt(hi), rep.n_pairs]
            )


def write_ut_sweep(points: Sequence[UTSweepPoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["level", "unit", "ut", "mean_R", "ci_low", "ci_high", "n_cells"])
        for p in points:
            w.writerow(
                ["county", "week", p.ut, fmt(p.mean_r),
                 fmt(p.ci95[0]), fmt(p.ci95[1]), p.n_cells]
            )


def write_adapt_audit(decisions: Sequence[FilterDecision], source, target, path) -> None:
    """Audit CSV: per-term statistics plus the first filter that fired."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["term", "u_S", "u_T", "L", "f_S", "f_T", "sigma_S", "d", "kept", "reason"])
        for d in decisions:
            s = source.stats(d.term)
            t = target.stats(d.term)
            w.writerow(
                [d.term, fmt(s.usage), fmt(t.usage), fmt(d.log_usage_ratio),
                 f"{s.mean_freq:.8g}", f"{t.mean_freq:.8g}", f"{s.std_freq:.8g}",
                 fmt(d.freq_d), str(d.kept).lower(), d.reason.value]
            )


def write_fixed_effects(results: Mapping[str, FixedEffectsResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["outcome", "beta", "std_err", "t_stat", "p_value", "n_obs", "n_entities"])
        for outcome, r in results.items():
            w.writerow(
                [outcome, fmt(r.beta), fmt(r.std_err), fmt(r.t_stat),
                 f"{r.p_value:.6g}", r.n_obs, r.n_entities]
            )


def write_correlations(table: Mapping[str, tuple[float, float, int]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["variable", "r", "p", "n"])
        for variable, (r, p, n) in table.items():
            w.writerow([variable, fmt(r), f"{p:.6g}", n])


def write_event_study(results: Sequence[EventStudyResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(
            ["outcome", "cohens_d", "ci_low", "ci_high",
             "n_event_weeks", "n_nonevent_weeks", "n_bootstrap"]
        )
        for r in results:
            w.writerow(
                [r.outcome, fmt(r.cohens_d), fmt(r.ci95[0]), fmt(r.ci95[1]),
                 r.n_event_weeks, r.n_nonevent_weeks, r.n_bootstrap]
            )


def read_survey_panel(path: str | Path) -> dict[tuple[str, int, int], tuple[float, int]]:
    """``region_code,iso_year,iso_week,value,n_respondents`` rows keyed by cell."""
    out: dict[tuple[str, int, int], tuple[float, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"region_code", "iso_year", "iso_week", "value", "n_respondents"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValidationError(f"{path}: survey CSV needs columns {sorted(required)}")
        for row in reader:
            key = (row["region_code"], int(row["iso_year"]), int(row["iso_week"]))
            out[key] = (float(row["value"]), int(row["n_respondents"]))
    return out


def read_criteria(path: str | Path) -> dict[str, dict[str, float]]:
    """``county_fips,variable,value`` rows as county -> variable -> value."""
    out: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"county_fips", "variable", "value"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValidationError(f"{path}: criteria CSV needs columns {sorted(required)}")
        for row in reader:
            fips = row["county_fips"].strip().zfill(5)
            out.setdefault(fips, {})[row["variable"]] = float(row["value"])
    return out


def read_events(path: str | Path) -> EventCalendar:
    """``date,label`` rows (YYYY-MM-DD); all dates must share one year."""
    events = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"date", "label"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ValidationError(f"{path}: events CSV needs columns {sorted(required)}")
        for row in reader:
            events.add((dt.date.fromisoformat(row["date"]), row["label"]))
    if not events:
        raise ValidationError(f"{path}: no events")
    years = {day.year for day, _ in events}
    if len(years) > 1:
        raise ValidationError(f"{path}: events span multiple years {sorted(years)}")
    return EventCalendar(frozenset(events), years.pop())


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path, params: Mapping[str, object], inputs: Iterable[str | Path]
) -> Path:
    """Reproducibility record: parameter hash, input checksums, versions.

    Execution-only settings (worker count, output paths) are excluded by the
    caller so the manifest is identical whenever the results are.
    """
    import numpy

    canonical = json.dumps(params, sort_keys=True, default=str)
    manifest = {
        "parameters": json.loads(canonical),
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "inputs": {
            Path(p).name: sha256_file(p) for p in inputs if Path(p).exists()
        },
        "versions": {"lbmha": __version__, "numpy": numpy.__version__},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
