"""Command-line front end.

Subcommands: score, reliability, adapt, analyze {fixed-effects|external|events},
synth.  Parameters come from a flat key=value config file overridden by CLI
flags; every randomized subcommand refuses to run without an explicit seed.
Exit codes: 0 success, 1 internal error, 2 user/config error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
import traceback
from pathlib import Path

from . import adapt as adapt_mod
from . import analysis, files, pipeline, reliability, synth
from .aggregate import (
    BaselineMode,
    CountyMapping,
    RegionCell,
    adjust_baseline,
    load_county_mapping,
    rollup,
    series_map,
)
from .errors import ConfigError, InsufficientDataError, PipelineError
from .ingest import filter_posts, parse_posts
from .parallel import resolve_workers
from .scoring import (
    ANX,
    DEP,
    Lexicon,
    load_lexicon_csv,
    load_weight_table,
    save_lexicon_csv,
)
from .tokenizer import tokenize
from .units import RegionCode, RegionLevel, TimeCell, TimeUnit, week_cell

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# configuration


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value lines; blank lines and '#' comments ignored."""
    values: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


class RunConfig:
    """Merged configuration: CLI flags override config-file values."""

    def __init__(self, args: argparse.Namespace):
        self.file_values: dict[str, str] = {}
        if getattr(args, "config", None):
            self.file_values = load_config_file(args.config)
        self.args = args

    def get(self, key: str, default=None):
        value = getattr(self.args, key.replace("-", "_"), None)
        if value is not None:
            return value
        if key in self.file_values:
            return self.file_values[key]
        return default

    def get_int(self, key: str, default: int | None = None) -> int | None:
        value = self.get(key, default)
        return None if value is None else int(value)

    def get_float(self, key: str, default: float | None = None) -> float | None:
        value = self.get(key, default)
        return None if value is None else float(value)

    def get_bool(self, key: str, default: bool = False) -> bool:
        value = self.get(key, default)
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)

    def path(self, key: str, required: bool = False) -> Path | None:
        value = self.get(key)
        if value is None:
            if required:
                raise ConfigError(f"missing required input: --{key}")
            return None
        path = Path(value)
        if not path.exists():
            raise ConfigError(f"--{key}: no such file: {path}")
        return path

    def out_dir(self) -> Path:
        value = self.get("output")
        if value is None:
            raise ConfigError("missing required --output directory")
        out = Path(value)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def seed(self, required: bool = True) -> int | None:
        value = self.get_int("seed")
        if value is None and required:
            raise ConfigError(
                "this subcommand is randomized and needs an explicit --seed"
            )
        return value

    def workers(self) -> int:
        return resolve_workers(self.get_int("workers"))

    def manifest_params(self, **extra) -> dict:
        """Everything that affects results; never workers or output paths."""
        params = dict(self.file_values)
        params.pop("workers", None)
        params.pop("output", None)
        for key, value in vars(self.args).items():
            if key in ("config", "workers", "output", "func") or value is None:
                continue
            params[key] = value
        params.update(extra)
        return params


def _detect_format(path: Path, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "csv" if path.suffix.lower() == ".csv" else "jsonl"


def _state_resolver(mapping: CountyMapping | None):
    if mapping is None:
        return None  # FIPS-prefix fallback inside bin_super_counties
    return lambda region: mapping.target(region.code, RegionLevel.STATE)


# ---------------------------------------------------------------------------
# subcommands


def cmd_score(cfg: RunConfig) -> int:
    posts_path = cfg.path("posts", required=True)
    lexicon = load_lexicon_csv(cfg.path("lexicon", required=True))
    weights_path = cfg.path("weights")
    mapping_path = cfg.path("mapping")
    out = cfg.out_dir()

    unit = TimeUnit(cfg.get("unit", "week"))
    ut = cfg.get_int("ut", 50)
    min_posts = cfg.get_int("min-posts", 3)
    max_gap = cfg.get_int("max-gap", 10)
    workers = cfg.workers()
    mapping = load_county_mapping(mapping_path) if mapping_path else None

    with open(posts_path, "rb") as fh:
        parsed = parse_posts(fh, _detect_format(posts_path, cfg.get("format")))
    run = pipeline.build_user_scores(
        parsed.posts,
        lexicon,
        unit=unit,
        min_posts=min_posts,
        weight_table=load_weight_table(weights_path) if weights_path else None,
        dense=cfg.get_bool("dense-lexicon"),
        multiply_weights=cfg.get_bool("multiply-weights"),
        workers=workers,
    )
    agg = pipeline.aggregate_user_scores(
        run.user_scores,
        ut=ut,
        unit=unit,
        max_gap=max_gap,
        interpolate=not cfg.get_bool("no-interpolation"),
        state_of=_state_resolver(mapping),
        super_weight_by="weights" if cfg.get_bool("super-weight-by-weights") else "users",
    )

    files.write_user_scores(run.user_scores, out / "user_scores.csv")
    files.write_region_cells(agg.final, out / "region_cells.csv")

    report = pipeline.render_descriptives(
        pipeline.compute_descriptives(run, agg.observed)
    )
    (out / "descriptives.txt").write_text(report, encoding="utf-8")
    sys.stdout.write(report)

    baseline_mode = cfg.get("baseline", "none")
    if baseline_mode != "none":
        baseline_year = cfg.get_int("baseline-year")
        if baseline_year is None:
            raise ConfigError("--baseline needs --baseline-year")
        base = series_map(c for c in agg.final if c.cell.iso_year == baseline_year)
        cur = series_map(c for c in agg.final if c.cell.iso_year != baseline_year)
        adjusted = adjust_baseline(cur, base, BaselineMode(baseline_mode))
        flat = [c for cells in adjusted.values() for c in cells.values()]
        files.write_region_cells(flat, out / "region_cells_adjusted.csv")

    rollup_level = cfg.get("rollup")
    if rollup_level:
        level = RegionLevel(rollup_level)
        county_cells = [c for c in agg.final if c.region.level is RegionLevel.COUNTY]
        rolled = rollup(county_cells, level, mapping)
        files.write_region_cells(rolled, out / f"region_cells_{level.value}.csv")

    inputs = [p for p in (posts_path, cfg.path("lexicon"), weights_path, mapping_path) if p]
    files.write_manifest(out, cfg.manifest_params(command="score"), inputs)
    return 0


def cmd_reliability(cfg: RunConfig) -> int:
    scores_path = cfg.path("user-scores", required=True)
    out = cfg.out_dir()
    seed = cfg.seed(required=True)
    unit = TimeUnit(cfg.get("unit", "week"))
    mapping_path = cfg.path("mapping")
    mapping = load_county_mapping(mapping_path) if mapping_path else None

    levels = [RegionLevel(v) for v in str(cfg.get("levels", "county")).split(",") if v]
    units = [TimeUnit(v) for v in str(cfg.get("units", "week")).split(",") if v]
    ut_values = [int(v) for v in str(cfg.get("ut-values", "50,200")).split(",") if v]
    n_repeats = cfg.get_int("n-repeats", reliability.DEFAULT_N_REPEATS)
    min_users = cfg.get_int("min-users", reliability.MIN_SPLIT_USERS)
    outcome = str(cfg.get("outcome", "dep")).upper()

    scores = files.read_user_scores(scores_path, unit=unit)
    grid = reliability.reliability_grid(
        scores, levels, units,
        min_users=min_users, n_repeats=n_repeats, rng_seed=seed,
        mapping=mapping, outcome=outcome,
    )
    sweep = reliability.ut_sweep(
        scores, ut_values,
        n_repeats=n_repeats, rng_seed=seed, min_users=min_users, outcome=outcome,
    )
    if not grid and all(p.n_cells == 0 for p in sweep):
        raise InsufficientDataError(
            f"no space-time pair reaches {min_users} users; nothing to report"
        )
    files.write_reliability_grid(grid, min_users, out / "reliability_grid.csv")
    files.write_ut_sweep(sweep, out / "ut_sweep.csv")
    files.write_manifest(out, cfg.manifest_params(command="reliability"), [scores_path])
    return 0


def _user_relative_frequencies(posts_path: Path, fmt: str | None) -> list[dict[str, float]]:
    """Per-user term relative frequencies over all of the user's text."""
    with open(posts_path, "rb") as fh:
        parsed = parse_posts(fh, _detect_format(posts_path, fmt))
    counts: dict[str, dict[str, int]] = {}
    totals: dict[str, int] = {}
    for post in filter_posts(parsed.posts):
        per_user = counts.setdefault(post.user_id, {})
        for token in tokenize(post.text).tokens:
            per_user[token] = per_user.get(token, 0) + 1
            totals[post.user_id] = totals.get(post.user_id, 0) + 1
    records = []
    for user_id in sorted(counts):
        total = totals.get(user_id, 0)
        if total:
            records.append({t: c / total for t, c in counts[user_id].items()})
    return records


def cmd_adapt(cfg: RunConfig) -> int:
    source_path = cfg.path("source-posts", required=True)
    target_path = cfg.path("target-posts", required=True)
    lexicon = load_lexicon_csv(cfg.path("lexicon", required=True))
    names = adapt_mod.load_name_list(cfg.get("names") or "")
    out = cfg.out_dir()

    source = adapt_mod.corpus_stats(_user_relative_frequencies(source_path, cfg.get("format")))
    target = adapt_mod.corpus_stats(_user_relative_frequencies(target_path, cfg.get("format")))
    adapted, audit = adapt_mod.adapt_pipeline(
        source, target, lexicon, names,
        usage_bound=cfg.get_float("usage-bound", adapt_mod.DEFAULT_USAGE_BOUND),
        frequency_bound=cfg.get_float("freq-bound", adapt_mod.DEFAULT_FREQUENCY_BOUND),
    )
    save_lexicon_csv(adapted, out / "adapted_lexicon.csv")
    files.write_adapt_audit(audit, source, target, out / "adapt_audit.csv")
    kept = sum(1 for d in audit if d.kept)
    sys.stdout.write(f"adapted lexicon: {kept} of {len(audit)} terms kept\n")
    files.write_manifest(
        out,
        cfg.manifest_params(command="adapt"),
        [source_path, target_path, cfg.path("lexicon"), cfg.path("names")],
    )
    return 0


def _national_weekly_series(cells: list[RegionCell], outcome: str) -> dict[TimeCell, float]:
    nation = [c for c in cells if c.region.level is RegionLevel.NATION]
    if not nation:
        nation = rollup(
            [c for c in cells if c.region.level is RegionLevel.COUNTY],
            RegionLevel.NATION,
        )
    return {c.cell: getattr(c, outcome) for c in sorted(nation, key=lambda c: c.sort_key())}


def _apply_baseline_option(cfg: RunConfig, cells: list[RegionCell]) -> list[RegionCell]:
    mode = cfg.get("baseline", "none")
    if mode == "none":
        return cells
    baseline_year = cfg.get_int("baseline-year")
    if baseline_year is None:
        raise ConfigError("--baseline needs --baseline-year")
    base = series_map(c for c in cells if c.cell.iso_year == baseline_year)
    cur = series_map(c for c in cells if c.cell.iso_year != baseline_year)
    adjusted = adjust_baseline(cur, base, BaselineMode(mode))
    return [c for series in adjusted.values() for c in series.values()]


def cmd_analyze(cfg: RunConfig) -> int:
    sub = cfg.get("analysis")
    out = cfg.out_dir()

    if sub == "fixed-effects":
        panel_path = cfg.path("panel")
        results: dict[str, analysis.FixedEffectsResult] = {}
        if panel_path:
            panel = _read_panel_csv(panel_path)
            results["x"] = analysis.within_fixed_effects(
                panel, cluster_robust=cfg.get_bool("cluster-robust")
            )
            inputs = [panel_path]
        else:
            cells_path = cfg.path("region-cells", required=True)
            survey_path = cfg.path("survey", required=True)
            cells = _apply_baseline_option(
                cfg, files.read_region_cells(cells_path)
            )
            survey = files.read_survey_panel(survey_path)
            for outcome in (cfg.get("outcome"),) if cfg.get("outcome") else ("dep", "anx"):
                panel = []
                for cell in cells:
                    key = (cell.region.code, cell.cell.iso_year, cell.cell.index)
                    if key in survey:
                        panel.append(
                            analysis.PanelObservation(
                                cell.region, cell.cell,
                                x=getattr(cell, outcome), y=survey[key][0],
                            )
                        )
                if not panel:
                    raise InsufficientDataError(
                        f"no overlap between region cells and the survey panel ({outcome})"
                    )
                results[outcome] = analysis.within_fixed_effects(
                    panel, cluster_robust=cfg.get_bool("cluster-robust")
                )
            inputs = [cells_path, survey_path]
        files.write_fixed_effects(results, out / "fixed_effects.csv")
        lines = ["Within fixed-effects estimates"]
        for outcome, r in results.items():
            lines.append(
                f"  {outcome}: beta={r.beta:.6f} se={r.std_err:.6f} "
                f"t={r.t_stat:.3f} p={r.p_value:.3g} "
                f"(n={r.n_obs}, entities={r.n_entities})"
            )
        report = "\n".join(lines) + "\n"
        (out / "fixed_effects.txt").write_text(report, encoding="utf-8")
        sys.stdout.write(report)
        files.write_manifest(out, cfg.manifest_params(command="analyze"), inputs)
        return 0

    if sub == "external":
        cells_path = cfg.path("region-cells", required=True)
        criteria_path = cfg.path("criteria", required=True)
        outcome = cfg.get("outcome", "dep")
        cells = files.read_region_cells(cells_path)
        county_cells = [c for c in cells if c.region.level is RegionLevel.COUNTY]
        sums: dict[str, tuple[float, int]] = {}
        for c in county_cells:
            total, n = sums.get(c.region.code, (0.0, 0))
            sums[c.region.code] = (total + getattr(c, outcome), n + 1)
        scores = {fips: total / n for fips, (total, n) in sums.items()}
        table = analysis.external_correlations(scores, files.read_criteria(criteria_path))
        files.write_correlations(table, out / "external_correlations.csv")
        lines = [f"External criteria correlations ({outcome})"]
        for variable, (r, p, n) in table.items():
            lines.append(f"  {variable}: r={r:.6f} p={p:.3g} n={n}")
        report = "\n".join(lines) + "\n"
        (out / "external_correlations.txt").write_text(report, encoding="utf-8")
        sys.stdout.write(report)
        files.write_manifest(
            out, cfg.manifest_params(command="analyze"), [cells_path, criteria_path]
        )
        return 0

    if sub == "events":
        cells_path = cfg.path("region-cells", required=True)
        events_path = cfg.path("events", required=True)
        seed = cfg.seed(required=True)
        n_iter = cfg.get_int("bootstrap-iter", analysis.DEFAULT_BOOTSTRAP_ITERATIONS)
        cells = _apply_baseline_option(cfg, files.read_region_cells(cells_path))
        calendar = files.read_events(events_path)
        event_weeks = analysis.mark_event_weeks(calendar)
        results = []
        for outcome in ("dep", "anx"):
            series = _national_weekly_series(cells, outcome)
            results.append(
                analysis.event_study(
                    series, event_weeks, outcome, n_iter=n_iter, rng_seed=seed
                )
            )
        files.write_event_study(results, out / "event_study.csv")
        lines = ["Event-week study (z-scored weekly percent changes)"]
        for r in results:
            lines.append(
                f"  {r.outcome}: d={r.cohens_d:.6f} "
                f"ci95=({r.ci95[0]:.6f}, {r.ci95[1]:.6f}) "
                f"events={r.n_event_weeks} non-events={r.n_nonevent_weeks}"
            )
        report = "\n".join(lines) + "\n"
        (out / "event_study.txt").write_text(report, encoding="utf-8")
        sys.stdout.write(report)
        files.write_manifest(
            out, cfg.manifest_params(command="analyze"), [cells_path, events_path]
        )
        return 0

    raise ConfigError(f"unknown analysis {sub!r}")


def _read_panel_csv(path: Path) -> list[analysis.PanelObservation]:
    import csv

    panel = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"region_code", "iso_year", "iso_week", "x", "y"}
        if reader.fieldnames is None or required - set(reader.fieldnames):
            raise ConfigError(f"{path}: panel CSV needs columns {sorted(required)}")
        for row in reader:
            panel.append(
                analysis.PanelObservation(
                    region=RegionCode(RegionLevel.COUNTY, row["region_code"].zfill(5)),
                    cell=week_cell(int(row["iso_year"]), int(row["iso_week"])),
                    x=float(row["x"]),
                    y=float(row["y"]),
                )
            )
    return panel


def _write_panel_csv(panel, path: Path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_code", "iso_year", "iso_week", "x", "y"])
        for obs in panel:
            w.writerow(
                [obs.region.code, obs.cell.iso_year, obs.cell.index,
                 repr(obs.x), repr(obs.y)]
            )


def cmd_synth(cfg: RunConfig) -> int:
    out = cfg.out_dir()
    seed = cfg.seed(required=True)
    kind = cfg.get("kind", "corpus")
    if kind == "corpus":
        users = cfg.get_int("users-per-county", 60)
        config = synth.SynthConfig(
            seed=seed,
            n_counties=cfg.get_int("n-counties", 20),
            users_per_county=(users, users),
            weeks=cfg.get_int("weeks", 10),
            vocab_size=cfg.get_int("vocab-size", 100),
            noise_sigma=cfg.get_float("noise", 0.0),
        )
        posts_path, truth_path = synth.generate_corpus(config, out)
        save_lexicon_csv(config.lexicon, out / "planted_lexicon.csv")
        sys.stdout.write(f"wrote {posts_path.name}, {truth_path.name}, planted_lexicon.csv\n")
    elif kind == "panel":
        panel = synth.generate_panel(
            n_entities=cfg.get_int("entities", 200),
            n_periods=cfg.get_int("periods", 20),
            beta=cfg.get_float("beta", 0.7),
            entity_effect_scale=cfg.get_float("effect-scale", 1.0),
            confound=cfg.get_bool("confound"),
            noise=cfg.get_float("noise", 0.1),
            seed=seed,
        )
        _write_panel_csv(panel, out / "panel.csv")
        sys.stdout.write("wrote panel.csv\n")
    else:
        raise ConfigError(f"unknown synth kind {kind!r}")
    files.write_manifest(out, cfg.manifest_params(command="synth"), [])
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--seed", type=int, help="seed for randomized procedures")
    parser.add_argument("--workers", type=int, help="worker processes (env LBMHA_WORKERS)")
    parser.add_argument("--output", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbmha",
        description="Lexicon-scored regional mental-health time series and statistics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="posts -> user scores -> gated region cells")
    _add_common(p)
    p.add_argument("--posts")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--lexicon")
    p.add_argument("--weights")
    p.add_argument("--mapping")
    p.add_argument("--unit", choices=[u.value for u in TimeUnit])
    p.add_argument("--ut", type=int, help="minimum unique users per region cell")
    p.add_argument("--min-posts", type=int)
    p.add_argument("--max-gap", type=int)
    p.add_argument("--dense-lexicon", action="store_const", const=True)
    p.add_argument("--multiply-weights", action="store_const", const=True)
    p.add_argument("--super-weight-by-weights", action="store_const", const=True)
    p.add_argument("--no-interpolation", action="store_const", const=True)
    p.add_argument("--baseline", choices=["none", "matched-week", "annual-mean"])
    p.add_argument("--baseline-year", type=int)
    p.add_argument("--rollup", choices=["state", "census-region", "nation"])
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("reliability", help="split-half reliability grid and UT sweep")
    _add_common(p)
    p.add_argument("--user-scores")
    p.add_argument("--unit", choices=[u.value for u in TimeUnit])
    p.add_argument("--levels")
    p.add_argument("--units")
    p.add_argument("--ut-values")
    p.add_argument("--n-repeats", type=int)
    p.add_argument("--min-users", type=int)
    p.add_argument("--outcome", choices=["dep", "anx"])
    p.add_argument("--mapping")
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("adapt", help="filter a lexicon for a new target corpus")
    _add_common(p)
    p.add_argument("--source-posts")
    p.add_argument("--target-posts")
    p.add_argument("--format", choices=["jsonl", "csv"])
    p.add_argument("--lexicon")
    p.add_argument("--names")
    p.add_argument("--usage-bound", type=float)
    p.add_argument("--freq-bound", type=float)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("analyze", help="validity statistics")
    p.add_argument("analysis", choices=["fixed-effects", "external", "events"])
    _add_common(p)
    p.add_argument("--region-cells")
    p.add_argument("--survey")
    p.add_argument("--panel", help="direct panel CSV (region_code,iso_year,iso_week,x,y)")
    p.add_argument("--criteria")
    p.add_argument("--events")
    p.add_argument("--outcome", choices=["dep", "anx"])
    p.add_argument("--cluster-robust", action="store_const", const=True)
    p.add_argument("--baseline", choices=["none", "matched-week", "annual-mean"])
    p.add_argument("--baseline-year", type=int)
    p.add_argument("--bootstrap-iter", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="synthetic fixtures with known ground truth")
    _add_common(p)
    p.add_argument("--kind", choices=["corpus", "panel"])
    p.add_argument("--n-counties", type=int)
    p.add_argument("--users-per-county", type=int)
    p.add_argument("--weeks", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--entities", type=int)
    p.add_argument("--periods", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--effect-scale", type=float)
    p.add_argument("--confound", action="store_const", const=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(args)
        return args.func(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
