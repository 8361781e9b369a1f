"""Campaign runner: profile every (row, pattern, tAggOn, temperature) and analyze."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .device import Conditions, DataPattern, RowState, Temperature, load_model_file
from .errors import AnalysisError, ConfigError, IntegrityError, SeedCollision
from .profiler import MeasurementSeries, profile_row
from .sampling import (FIND_MIN, NORMALIZED_MIN, DEFAULT_MARGINS, DEFAULT_N_GRID, boxplot_data, cv_scurve,
                       margin_table, sampling_rows, write_sampling_csv)
from . import stats
from .timing import DEFAULT_TIMING

log = logging.getLogger(__name__)

TAGGON_NS = {"tRAS": DEFAULT_TIMING.t_ras, "tREFI": DEFAULT_TIMING.t_refi, "9tREFI": 9 * DEFAULT_TIMING.t_refi}
ALL_ANALYSES = ("stats", "runlength", "acf", "chisquare", "sampling", "scurve", "margins")
MANIFEST_NAME = "manifest.json"


def taggon_ns(value) -> float:
    if isinstance(value, str):
        for name, ns in TAGGON_NS.items():
            if value.lower() == name.lower():
                return ns
        return float(value)
    return float(value)


def taggon_label(value) -> str:
    if isinstance(value, str) and value.lower() in {k.lower() for k in TAGGON_NS}:
        return next(k for k in TAGGON_NS if k.lower() == value.lower())
    return f"{float(value):g}ns"


@dataclass
class CampaignConfig:
    model_file: Path
    out: Path
    iterations: int = 1000
    rows: list[int] | None = None
    patterns: list[str] = field(default_factory=lambda: ["Checkered0"])
    t_aggon: list = field(default_factory=lambda: ["tRAS"])
    temperatures: list[str] = field(default_factory=lambda: ["C50"])
    seed: int = 0
    guess_n: int = 10
    analyses: list[str] = field(default_factory=lambda: list(ALL_ANALYSES))
    mc_iterations: int = 0
    acf_max_lag: int = 50
    n_values: list[int] = field(default_factory=lambda: list(DEFAULT_N_GRID))
    margins: list[float] = field(default_factory=lambda: list(DEFAULT_MARGINS))

    def __post_init__(self):
        self.model_file = Path(self.model_file)
        self.out = Path(self.out)
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if not (self.patterns and self.t_aggon and self.temperatures):
            raise ConfigError("parameter grid must be nonempty")
        try:
            self.patterns = [DataPattern(p).value for p in self.patterns]
            self.temperatures = [Temperature(t).value for t in self.temperatures]
            for t in self.t_aggon:
                Conditions(t_aggon=taggon_ns(t))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        unknown = set(self.analyses) - set(ALL_ANALYSES)
        if unknown:
            raise ConfigError(f"unknown analyses {sorted(unknown)}")

    @classmethod
    def load(cls, path, **overrides) -> "CampaignConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yaml", ".yml"):
            import yaml
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
        doc.update({k: v for k, v in overrides.items() if v is not None})
        if "model_file" in doc and not Path(doc["model_file"]).is_absolute():
            doc["model_file"] = path.parent / doc["model_file"]
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        return {"model_file": str(self.model_file), "iterations": self.iterations, "rows": self.rows,
                "patterns": self.patterns, "t_aggon": [taggon_label(t) for t in self.t_aggon],
                "temperatures": self.temperatures, "seed": self.seed, "guess_n": self.guess_n}


def derive_seed(master: int, row: int, pattern: str, t_aggon: str, temperature: str) -> int:
    """Stable 63-bit seed for one campaign cell, independent of run order."""
    key = f"{master}|{row}|{pattern}|{t_aggon}|{temperature}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class _Job:
    row: int
    pattern: str
    t_aggon: str
    temperature: str
    seed: int
    path: Path


def _run_job(args) -> dict:
    job, model, iterations, guess_n = args
    cond = Conditions(job.pattern, taggon_ns(job.t_aggon), job.temperature)
    state = RowState.seeded(job.row, model, job.seed)
    series = profile_row(state, iterations, cond, guess_n)
    series.write(job.path)
    return {
        "file": job.path.name,
        "sha256": sha256_file(job.path),
        "meta_sha256": sha256_file(job.path.with_suffix(".json")),
        "row": job.row, "pattern": job.pattern, "t_aggon": job.t_aggon,
        "temperature": job.temperature, "seed": job.seed,
    }


def plan_jobs(cfg: CampaignConfig, rows: Sequence[int]) -> list[_Job]:
    series_dir = cfg.out / "series"
    jobs, seen = [], {}
    for row, pat, tag, temp in itertools.product(rows, cfg.patterns, cfg.t_aggon, cfg.temperatures):
        label = taggon_label(tag)
        seed = derive_seed(cfg.seed, row, pat, label, temp)
        cell = (row, pat, label, temp)
        if seed in seen:
            raise SeedCollision(f"seed collision between {seen[seed]} and {cell}")
        seen[seed] = cell
        jobs.append(_Job(row, pat, label, temp, seed, series_dir / f"row{row}_{pat}_{label}_{temp}.csv"))
    return jobs


def run_campaign(cfg: CampaignConfig, jobs: int = 1) -> Path:
    """Profile every grid cell and write series files plus ``manifest.json``.

    Output is byte-identical for a fixed master seed, whatever ``jobs`` is.
    """
    models = load_model_file(cfg.model_file)
    rows = sorted(models) if cfg.rows is None else list(cfg.rows)
    missing = [r for r in rows if r not in models]
    if missing:
        raise ConfigError(f"rows {missing} not in model file")
    plan = plan_jobs(cfg, rows)
    try:
        (cfg.out / "series").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {cfg.out} not writable: {exc}") from exc
    work = [(j, models[j.row], cfg.iterations, cfg.guess_n) for j in plan]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_run_job, work))
    else:
        entries = [_run_job(w) for w in work]
    manifest = {"version": 1, "config": cfg.to_dict(), "series": entries}
    path = cfg.out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d series to %s", len(entries), cfg.out)
    return path


def load_manifest(path) -> tuple[dict, list[MeasurementSeries]]:
    """Read a manifest and its series, refusing any file whose hash changed."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    text = path.read_text()  # a missing manifest is an I/O error, not tampering
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"corrupt manifest {path}: {exc}") from exc
    base = path.parent / "series"
    out = []
    for entry in manifest.get("series", []):
        f = base / entry["file"]
        if not f.exists():
            raise IntegrityError(f"missing series file {f}")
        if sha256_file(f) != entry["sha256"]:
            raise IntegrityError(f"hash mismatch for {f}")
        side = f.with_suffix(".json")
        if "meta_sha256" in entry and (not side.exists() or sha256_file(side) != entry["meta_sha256"]):
            raise IntegrityError(f"hash mismatch for {side}")
        out.append(MeasurementSeries.read(f))
    return manifest, out


def _name(s: MeasurementSeries) -> str:
    c = s.conditions
    return f"row{s.row_address}_{c.pattern.value}_{taggon_label_from_ns(c.t_aggon)}_{c.temperature.value}"


def taggon_label_from_ns(ns: float) -> str:
    for name, v in TAGGON_NS.items():
        if abs(v - ns) < 1e-9:
            return name
    return f"{ns:g}ns"


def analyze(manifest_path, which: Iterable[str] = ALL_ANALYSES, out_dir=None, mc_iterations: int = 0,
            seed: int = 0, acf_max_lag: int = 50, n_values=DEFAULT_N_GRID, margins=DEFAULT_MARGINS) -> dict[str, list[Path]]:
    """Emit CSV/plot-data files for the selected analyses; returns produced paths by analysis."""
    wanted = set(which)
    unknown = wanted - set(ALL_ANALYSES)
    if unknown:
        raise ConfigError(f"unknown analyses {sorted(unknown)}")
    which = [w for w in ALL_ANALYSES if w in wanted]
    if not which:
        return {}
    manifest_path = Path(manifest_path)
    _, series = load_manifest(manifest_path)
    root = manifest_path if manifest_path.is_dir() else manifest_path.parent
    out = Path(out_dir) if out_dir else root / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    report: dict[str, list[Path]] = {}
    usable = [s for s in series if s.numeric()]

    if "stats" in which:
        hdir = out / "histograms"
        hdir.mkdir(exist_ok=True)
        rows = []
        paths = [out / "stats.csv"]
        for s in usable:
            st = stats.summarize(s)
            rows.append((_name(s), st))
            p = hdir / f"{_name(s)}.csv"
            stats.write_histogram_csv(p, st)
            paths.append(p)
        stats.write_stats_csv(out / "stats.csv", rows)
        report["stats"] = paths

    if "runlength" in which:
        p = out / "runlengths.csv"
        with open(p, "w") as fh:
            fh.write("series,run_length,count\n")
            for s in usable:
                for length, count in stats.run_lengths(s).items():
                    fh.write(f"{_name(s)},{length},{count}\n")
        report["runlength"] = [p]

    if "acf" in which:
        p = out / "acf.csv"
        with open(p, "w") as fh:
            fh.write("series,lag,acf\n")
            for s in usable:
                lag = min(acf_max_lag, len(s.numeric()) - 1)
                try:
                    r = stats.acf(s, lag)
                except AnalysisError:
                    continue
                for k, v in enumerate(r):
                    fh.write(f"{_name(s)},{k},{float(v)!r}\n")
        report["acf"] = [p]

    if "chisquare" in which:
        p = out / "chisquare.csv"
        with open(p, "w") as fh:
            fh.write("series,statistic,p_value,reject,bins,dof,note\n")
            for s in usable:
                try:
                    r = stats.chi_square_normal_fit(s)
                    fh.write(f"{_name(s)},{r.statistic!r},{r.p_value!r},{r.reject},{r.bins},{r.dof},\n")
                except AnalysisError as exc:
                    fh.write(f"{_name(s)},,,,,,{str(exc).replace(',', ';')}\n")
        report["chisquare"] = [p]

    if "sampling" in which:
        recs = []
        for s in usable:
            recs += sampling_rows(s, _name(s), n_values, (FIND_MIN, NORMALIZED_MIN), mc_iterations, seed)
        p = out / "sampling.csv"
        write_sampling_csv(p, recs)
        pb = out / "sampling_boxplot.csv"
        _write_dicts(pb, boxplot_data(recs))
        report["sampling"] = [p, pb]

    if "scurve" in which:
        p = out / "cv_scurve.csv"
        curve = cv_scurve(usable) if usable else []
        with open(p, "w") as fh:
            fh.write("rank,row,max_cv\n")
            for i, (row, cv) in enumerate(curve):
                fh.write(f"{i},{row},{cv!r}\n")
        report["scurve"] = [p]

    if "margins" in which:
        p = out / "margins.csv"
        _write_dicts(p, margin_table(usable, n_values, margins) if usable else [],
                     ["margin", "N", "mean", "min", "series"])
        report["margins"] = [p]
    return report


def _write_dicts(path, recs: list[dict], columns: Sequence[str] | None = None):
    cols = list(columns or (recs[0].keys() if recs else []))
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in recs:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")
