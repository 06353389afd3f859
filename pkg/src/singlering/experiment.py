"""Declarative experiment configs, the parallel trial runner and output files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from dataclasses import field as dc_field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .conjecture import (
    N_SE, conjecture_report, single_ring_trial, sphere_pushforward_stats,
)
from .ensembles import LawError, SpectralLaw, parse_law, quantile_matrix, rotate_ensemble
from .linalg import NumericalError
from .records import COLUMNS, TrialRecord, format_value
from .sampling import Group, SeedSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("single-ring", "conjecture", "concentration", "sweep")
FORMATS = ("csv", "json")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"field '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class Checks:
    """Statistical pass/fail thresholds; ``None`` disables a check."""

    n_se: float = N_SE
    rho_tol: float | None = None
    rho_fraction: float = 0.9
    coverage_min: float | None = None
    coverage_fraction: float = 0.95
    monotone_rho: bool = False
    floor: bool = True
    unit: str = "auto"
    mean_within_se: bool = True
    slope_range: tuple | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    law: str = "two-atom:1,2"
    dims: tuple = (64,)
    k: int = 1
    group: str = "SU"
    trials: int = 1
    samples: int = 1000
    delta: float = 0.1
    output: str = "results"
    format: str = "csv"
    rotation: str | None = None
    construction: str = "quantile"
    field: str = "real"
    diag: tuple | None = None
    lp_tol: float = 1e-4
    record_timing: bool = False
    threads: int | None = None
    experiment: str | None = None
    checks: Checks = dc_field(default_factory=Checks)

    @property
    def trial_kind(self) -> str:
        return self.experiment if self.kind == "sweep" else self.kind

    @property
    def spectral_law(self) -> SpectralLaw:
        return parse_law(self.law)

    def echo(self) -> dict:
        out = asdict(self)
        out["dims"] = list(self.dims)
        return out


_TOP_KEYS = {f for f in ExperimentConfig.__dataclass_fields__ if f not in ("checks", "experiment")}
_TOP_KEYS |= {"master_seed"}
_CHECK_KEYS = set(Checks.__dataclass_fields__)
_SWEEP_KEYS = {"experiment"}


def _line_of(text: str, key: str):
    if not text:
        return None
    pat = re.compile(rf"^[ \t]*{re.escape(key)}[ \t]*=", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _validate(cfg: ExperimentConfig, text: str = "") -> ExperimentConfig:
    def fail(msg, key):
        raise ConfigError(msg, key, _line_of(text, key))

    if cfg.kind not in KINDS:
        fail(f"unknown experiment kind {cfg.kind!r}; expected one of {', '.join(KINDS)}", "kind")
    if cfg.kind == "sweep" and cfg.experiment not in ("single-ring", "concentration", "conjecture"):
        fail("sweep needs [sweep] experiment = single-ring | concentration | conjecture", "experiment")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
        fail("seed must be an integer", "seed")
    if not cfg.dims:
        fail("dims must be a nonempty list", "dims")
    if any(isinstance(d, bool) or not isinstance(d, int) or d < 2 for d in cfg.dims):
        fail("every entry of dims must be an integer >= 2", "dims")
    if cfg.trials < 1:
        fail("trials must be >= 1", "trials")
    if cfg.samples < 2:
        fail("samples must be >= 2", "samples")
    if cfg.k < 1:
        fail("k must be >= 1", "k")
    if cfg.k > min(cfg.dims):
        fail(f"k exceeds d (k={cfg.k}, d={min(cfg.dims)})", "k")
    if cfg.delta < 0:
        fail("delta must be nonnegative", "delta")
    if cfg.format not in FORMATS:
        fail(f"format must be csv or json, got {cfg.format!r}", "format")
    if cfg.field not in ("real", "complex"):
        fail("field must be real or complex", "field")
    if cfg.construction not in ("quantile", "iid"):
        fail("construction must be quantile or iid", "construction")
    if cfg.lp_tol <= 0:
        fail("lp_tol must be positive", "lp_tol")
    if cfg.threads is not None and cfg.threads < 1:
        fail("threads must be >= 1", "threads")
    for key in ("group", "rotation"):
        val = getattr(cfg, key)
        if val is not None:
            try:
                Group.parse(val)
            except ValueError as exc:
                fail(str(exc), key)
    try:
        parse_law(cfg.law)
    except LawError as exc:
        fail(str(exc), "law")
    if cfg.diag is not None:
        if any(x <= 0 for x in cfg.diag):
            fail("diag entries must be positive", "diag")
        if any(d != len(cfg.diag) for d in cfg.dims):
            fail("diag length must equal every entry of dims", "diag")
    if cfg.checks.unit not in ("auto", "always", "never"):
        fail("checks.unit must be auto, always or never", "unit")
    return cfg


def parse_config(text: str, overrides: dict | None = None, default_kind: str | None = None) -> ExperimentConfig:
    """Parse a TOML experiment config. Unknown keys are errors.

    ``overrides`` (e.g. from command-line flags) replace top-level values
    before validation; ``default_kind`` fills in a missing ``kind``.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = dict(raw)
    checks_raw = raw.pop("checks", {}) or {}
    sweep_raw = raw.pop("sweep", {}) or {}
    for table, allowed, name in ((raw, _TOP_KEYS, None), (checks_raw, _CHECK_KEYS, "checks"),
                                 (sweep_raw, _SWEEP_KEYS, "sweep")):
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table", name)
        for key in table:
            if key not in allowed:
                where = f"{name}.{key}" if name else key
                raise ConfigError(f"unknown key {where!r}", where, _line_of(text, key))
    if "master_seed" in raw:
        raw["seed"] = raw.pop("master_seed")
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val
    if "seed" not in raw:
        raise ConfigError("missing seed: configs must set a master seed", "seed")
    if "kind" not in raw:
        if default_kind is None:
            raise ConfigError("missing experiment kind", "kind")
        raw["kind"] = default_kind
    for key in ("dims", "diag"):
        if key in raw and raw[key] is not None:
            if not isinstance(raw[key], (list, tuple)):
                raise ConfigError(f"{key} must be a list", key, _line_of(text, key))
            raw[key] = tuple(raw[key])
    if "slope_range" in checks_raw:
        checks_raw["slope_range"] = tuple(checks_raw["slope_range"])
    if sweep_raw:
        raw["experiment"] = sweep_raw.get("experiment")
    try:
        checks = Checks(**checks_raw)
        cfg = ExperimentConfig(checks=checks, **raw)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from None
    return _validate(cfg, text)


def config_from_options(kind: str, seed, **options) -> ExperimentConfig:
    """Build a config without a file (command-line use)."""
    opts = {k: v for k, v in options.items() if v is not None}
    if seed is None:
        raise ConfigError("missing seed: pass --seed or a config file", "seed")
    if "dims" in opts:
        opts["dims"] = tuple(opts["dims"])
    return _validate(ExperimentConfig(kind=kind, seed=seed, **opts))


# ---------------------------------------------------------------- running

@dataclass
class RunManifest:
    config: dict
    tool_version: str
    seeds: list
    started: str
    finished: str = ""
    summaries: list = dc_field(default_factory=list)
    checks: dict = dc_field(default_factory=dict)
    failures: list = dc_field(default_factory=list)
    exit_code: int = EXIT_OK
    files: list = dc_field(default_factory=list)
    timings_ms: list = dc_field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


@dataclass(frozen=True)
class _Task:
    d: int
    trial_index: int


def _tasks(cfg: ExperimentConfig) -> list[_Task]:
    # trial_index is unique across the whole run so no two trials share a stream
    return [_Task(d, i * cfg.trials + t) for i, d in enumerate(cfg.dims) for t in range(cfg.trials)]


def _matrix_for(cfg: ExperimentConfig, d: int, seed: SeedSpec):
    if cfg.diag is not None:
        a = np.diag(np.asarray(cfg.diag, dtype=float))
    else:
        a = quantile_matrix(cfg.spectral_law, d, cfg.construction, seed)
    return rotate_ensemble(a, cfg.rotation, seed)


def _law_label(cfg):
    if cfg.diag is not None:
        return "diag:" + ",".join(format_value(float(x)) for x in cfg.diag)
    return cfg.spectral_law.literal()


def run_trial(cfg: ExperimentConfig, task: _Task) -> TrialRecord:
    kind = cfg.trial_kind
    seed = SeedSpec(cfg.seed, task.trial_index)
    d = task.d
    t0 = time.perf_counter()
    if kind == "single-ring":
        rec = single_ring_trial(cfg.spectral_law, d, cfg.group, seed, cfg.delta, cfg.rotation,
                                cfg.construction, cfg.lp_tol, experiment_id=cfg.kind)
        rec.k = 1
    elif kind == "conjecture":
        a = _matrix_for(cfg, d, seed)
        rep = conjecture_report(a, cfg.group, cfg.k, cfg.samples, seed, cfg.checks.n_se)
        rec = TrialRecord(
            experiment_id=cfg.kind, d=d, k=cfg.k, group=rep.group, law=_law_label(cfg),
            master_seed=cfg.seed, trial_index=task.trial_index,
            lhs_mean=rep.lhs.mean, lhs_se=rep.lhs.se, rhs_mean=rep.rhs.mean, rhs_se=rep.rhs.se,
            c_hat=rep.c_hat, floor_c=rep.floor_c, extras={"report": rep},
        )
    elif kind == "concentration":
        a = _matrix_for(cfg, d, seed)
        st = sphere_pushforward_stats(a, cfg.samples, seed, field=cfg.field)
        rec = TrialRecord(
            experiment_id=cfg.kind, d=d, k=1, group=f"sphere-{cfg.field}", law=_law_label(cfg),
            master_seed=cfg.seed, trial_index=task.trial_index,
            rhs_mean=st.log_norm.mean, rhs_se=st.log_norm.se, extras={"concentration": st},
        )
    else:
        raise ValueError(f"unknown trial kind {kind!r}")
    elapsed = (time.perf_counter() - t0) * 1e3
    rec.extras["wall_time_ms"] = elapsed
    rec.wall_time_ms = elapsed if cfg.record_timing else None
    return rec


def _safe_trial(cfg, task):
    try:
        return run_trial(cfg, task)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return TrialRecord(experiment_id=cfg.kind, d=task.d, group=str(cfg.group), law=cfg.law,
                           master_seed=cfg.seed, trial_index=task.trial_index, error=str(exc))


def run_trials(cfg: ExperimentConfig, threads: int | None = None) -> list[TrialRecord]:
    """Run every (d, trial) task; results come back in task order."""
    tasks = _tasks(cfg)
    threads = threads or os.cpu_count() or 1
    if threads == 1:
        return [_safe_trial(cfg, t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: _safe_trial(cfg, t), tasks))


def _log_slope(xs, ys) -> float:
    x, y = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(x, y, 1)[0])


def summarize(cfg: ExperimentConfig, records: list[TrialRecord]) -> tuple[list, dict]:
    """Per-dimension summaries and the outcome of every configured check."""
    ok = [r for r in records if r.error is None]
    kind = cfg.trial_kind
    ch = cfg.checks
    summaries, checks = [], {}
    per_d = {d: [r for r in ok if r.d == d] for d in cfg.dims}

    if kind == "single-ring":
        medians = {}
        for d, rs in per_d.items():
            if not rs:
                continue
            gap = np.array([abs(r.rho - r.r_plus_target) for r in rs])
            cov = np.array([r.annulus_coverage for r in rs])
            medians[d] = float(np.median(gap))
            s = {"d": d, "trials": len(rs), "rho_mean": float(np.mean([r.rho for r in rs])),
                 "rho_gap_median": medians[d], "rho_gap_q25": float(np.quantile(gap, 0.25)),
                 "rho_gap_q75": float(np.quantile(gap, 0.75)), "coverage_mean": float(cov.mean()),
                 "lp_mean": float(np.mean([r.lp_distance for r in rs]))}
            if ch.rho_tol is not None:
                frac = float(np.mean(gap <= ch.rho_tol))
                s["rho_within_tol_fraction"] = frac
                checks[f"rho_d{d}"] = frac >= ch.rho_fraction
            if ch.coverage_min is not None:
                frac = float(np.mean(cov >= ch.coverage_min))
                s["coverage_fraction"] = frac
                checks[f"coverage_d{d}"] = frac >= ch.coverage_fraction
            summaries.append(s)
        if len(medians) >= 2:
            ds = sorted(medians)
            slope = _log_slope(ds, [max(medians[d], 1e-300) for d in ds])
            summaries.append({"slope_log_rho_gap_vs_log_d": slope})
            if ch.monotone_rho:
                checks["rho_gap_decreasing"] = all(medians[a] > medians[b] for a, b in zip(ds, ds[1:]))

    elif kind == "conjecture":
        for d, rs in per_d.items():
            if not rs:
                continue
            reps = [r.extras["report"] for r in rs]
            summaries.append({
                "d": d, "k": cfg.k, "trials": len(rs),
                "lhs_mean": float(np.mean([p.lhs.mean for p in reps])),
                "rhs_mean": float(np.mean([p.rhs.mean for p in reps])),
                "c_hat_mean": float(np.nanmean([p.c_hat for p in reps])) if any(p.c_hat_defined for p in reps) else math.nan,
                "floor_c": reps[0].floor_c,
                "floor_pass": all(p.floor_pass for p in reps),
                "unit_pass": all(p.unit_pass for p in reps),
            })
            if ch.floor:
                checks[f"floor_d{d}"] = all(p.floor_pass for p in reps)
            unit_applies = ch.unit == "always" or (
                ch.unit == "auto" and Group.parse(cfg.group).is_complex and cfg.k == 1 and d >= 64)
            if unit_applies:
                checks[f"unit_d{d}"] = all(p.unit_pass for p in reps)

    elif kind == "concentration":
        variances = {}
        for d, rs in per_d.items():
            if not rs:
                continue
            sts = [r.extras["concentration"] for r in rs]
            variances[d] = float(np.mean([s.norm_variance for s in sts]))
            within = [abs(s.sq_mean - s.sq_expected) <= ch.n_se * s.sq_se for s in sts]
            summaries.append({
                "d": d, "trials": len(rs),
                "sq_mean": float(np.mean([s.sq_mean for s in sts])),
                "sq_expected": sts[0].sq_expected,
                "norm_mean": float(np.mean([s.norm_mean for s in sts])),
                "norm_variance": variances[d],
                "log_norm_mean": float(np.mean([s.log_norm.mean for s in sts])),
                "c_fit_min": float(np.min([s.c_fit for s in sts])),
                "sq_mean_within_se": all(within),
            })
            if ch.mean_within_se:
                checks[f"sq_mean_d{d}"] = all(within)
        if len(variances) >= 2:
            ds = sorted(variances)
            slope = _log_slope(ds, [variances[d] for d in ds])
            summaries.append({"slope_log_var_vs_log_d": slope})
            if ch.slope_range is not None:
                lo, hi = ch.slope_range
                checks["variance_slope"] = lo <= slope <= hi
    return summaries, checks


def write_records(records: list[TrialRecord], path: Path, fmt: str = "csv") -> None:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow(r.row())
        path.write_text(buf.getvalue(), encoding="utf-8")
    else:
        rows = [r.as_dict() for r in records]
        path.write_text(json.dumps(rows, indent=1, default=_json_default) + "\n", encoding="utf-8")


def _circle(radius: float, n: int = 361) -> np.ndarray:
    th = np.linspace(0.0, 2 * np.pi, n)
    return np.column_stack([radius * np.cos(th), radius * np.sin(th), np.full(n, radius)])


def _write_table(path: Path, header: str, rows) -> None:
    rows = list(rows)
    with open(path, "w", encoding="utf-8") as fh:
        if not rows:
            return
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(" ".join(format_value(v) for v in row) + "\n")


PLOT_KINDS = ("cloud", "tail", "convergence")


def emit_plotdata(records: list[TrialRecord], kind: str, out_dir) -> list[Path]:
    """Write whitespace-delimited data files for one plot kind.

    ``cloud``: eigenvalues (d, trial, re, im) plus the R+ and R- circles.
    ``tail``: (d, eps, empirical tail, Levy reference) per concentration trial.
    ``convergence``: (d, q25, median, q75) of ``|rho - R+|``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok = [r for r in records if r.error is None]
    if kind == "cloud":
        clouds = [r for r in ok if "eigenvalues" in r.extras]
        cloud_rows = ((r.d, r.trial_index, z.real, z.imag) for r in clouds for z in r.extras["eigenvalues"])
        rplus = {r.r_plus_target for r in clouds}
        rminus = {r.r_minus_target for r in clouds}
        paths = [out / "cloud.dat", out / "circle_rplus.dat", out / "circle_rminus.dat"]
        _write_table(paths[0], "d trial re im", cloud_rows)
        _write_table(paths[1], "x y r", (row for rad in sorted(rplus) for row in _circle(rad)))
        _write_table(paths[2], "x y r", (row for rad in sorted(rminus) for row in _circle(rad)))
        return paths
    if kind == "tail":
        stats = [(r.d, r.extras["concentration"]) for r in ok if "concentration" in r.extras]
        rows = ((d, e, t, ref) for d, s in stats for e, t, ref in zip(s.eps, s.tail, s.reference))
        path = out / "tail.dat"
        _write_table(path, "d eps empirical levy_reference", rows)
        return [path]
    if kind == "convergence":
        gaps = {}
        for r in ok:
            if r.rho is not None:
                gaps.setdefault(r.d, []).append(abs(r.rho - r.r_plus_target))
        rows = ((d, *np.quantile(gaps[d], [0.25, 0.5, 0.75])) for d in sorted(gaps))
        path = out / "convergence.dat"
        _write_table(path, "d q25 median q75", rows)
        return [path]
    raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(cfg: ExperimentConfig, threads: int | None = None, out_dir=None) -> RunManifest:
    """Run all trials, write records/manifest/plot data under the output dir.

    ``manifest.exit_code`` is 0 when every configured check passes, 1 when a
    statistical check fails and 3 when any trial hit a numerical failure.
    """
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        config=cfg.echo(), tool_version=__version__, started=_now(),
        seeds=[{"d": t.d, "master_seed": cfg.seed, "trial_index": t.trial_index} for t in _tasks(cfg)],
    )
    records = run_trials(cfg, threads or cfg.threads)
    summaries, checks = summarize(cfg, records)
    manifest.summaries = summaries
    manifest.checks = checks
    manifest.failures = [{"d": r.d, "master_seed": r.master_seed, "trial_index": r.trial_index, "error": r.error}
                         for r in records if r.error is not None]
    manifest.timings_ms = [r.extras.get("wall_time_ms") for r in records]

    rec_path = out / f"records.{cfg.format}"
    write_records(records, rec_path, cfg.format)
    files = [rec_path]
    plot_dir = out / "plotdata"
    kind = cfg.trial_kind
    if kind == "single-ring":
        files += emit_plotdata(records, "cloud", plot_dir) + emit_plotdata(records, "convergence", plot_dir)
    elif kind == "concentration":
        files += emit_plotdata(records, "tail", plot_dir)
    manifest.files = [str(p.relative_to(out)) for p in files]

    if manifest.failures:
        manifest.exit_code = EXIT_NUMERICAL
    elif not all(checks.values()):
        manifest.exit_code = EXIT_CHECK_FAILED
    manifest.finished = _now()
    (out / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    if "dims" in kw:
        kw["dims"] = tuple(kw["dims"])
    return _validate(replace(cfg, **kw))
