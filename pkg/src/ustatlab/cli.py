"""Command-line surface: simulate, analyze, mdev-verify.

simulate   runs an FDR experiment from a TOML config and writes
           curves.csv plus a JSON manifest.
analyze    applies one calibration x B-H pipeline to user CSV data
           (rows = observations, columns = features) and writes
           results.csv and summary.json.
mdev-verify estimates tail-probability ratios against the normal tail
           and writes tail_ratio.csv.

Exit codes: 2 for invalid configuration or input (with a line-anchored
diagnostic where a file is involved), 3 when runtime degeneracy caps
are exceeded.  All primary CSV outputs are byte-identical given the
same seed, whatever --workers says; floats are serialized with 17
significant digits so reruns round-trip exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import __version__
from . import calibration as cal
from .errors import DegenerateSampleError, ExcessiveDegeneracyError
from .multiple_testing import bh_procedure
from .rng import derive_key
from .simharness import (ExperimentConfig, run_fdr_experiment_full,
                         run_tail_ratio_experiment)
from .ustat import TwoSampleData, mann_whitney_fast
from .tstat import two_sample_t

__all__ = [
    "RunManifest",
    "AnalysisConfig",
    "ConfigError",
    "cmd_simulate",
    "cmd_analyze",
    "cmd_mdev_verify",
    "main",
]


class ConfigError(Exception):
    """Invalid configuration or input; the message is the diagnostic."""


# ===================== serialization helpers =====================

def _fmt(v) -> str:
    """One CSV cell: 17 significant digits for floats, plain ints, true/false."""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: Dict
    seed: int
    tool_version: str
    outputs: List[str]
    info: Dict = field(default_factory=dict)


def _write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(dataclasses.asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ===================== TOML config loading =====================

def _key_line(raw: str, key: str) -> int:
    """Best-effort line anchor: first line assigning ``key``."""
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(raw.splitlines(), start=1):
        if pat.match(line):
            return i
    return 1


def _anchor_for_message(raw: str, message: str, keys: Sequence[str]) -> int:
    for key in keys:
        if re.search(rf"\b{re.escape(key)}\b", message):
            return _key_line(raw, key)
    return 1


_EXPERIMENT_KEYS = [f.name for f in dataclasses.fields(ExperimentConfig)]


def load_experiment_config(path: Path, desk_scale: bool = False,
                           seed_override: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a simulate config; ConfigError carries file:line."""
    raw = path.read_text()
    try:
        doc = tomllib.loads(raw)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}:1: malformed TOML: {err}") from err
    table = doc.get("experiment", doc)
    if not isinstance(table, dict):
        raise ConfigError(f"{path}:1: [experiment] must be a table")
    unknown = [k for k in table if k not in _EXPERIMENT_KEYS]
    if unknown:
        line = _key_line(raw, unknown[0])
        raise ConfigError(f"{path}:{line}: unknown config key {unknown[0]!r}")
    params = dict(table)
    if desk_scale:
        params["m"] = 500
        params["n_reps"] = 50
        params["B"] = 200
    if seed_override is not None:
        params["master_seed"] = seed_override
    try:
        return ExperimentConfig(**params)
    except (TypeError, ValueError) as err:
        line = _anchor_for_message(raw, str(err), _EXPERIMENT_KEYS)
        raise ConfigError(f"{path}:{line}: {err}") from err


# ===================== simulate =====================

def cmd_simulate(config_file, out_dir, desk_scale: bool = False,
                 seed: Optional[int] = None, workers: int = 1) -> RunManifest:
    """Run an FDR experiment and write curves.csv plus manifest.json."""
    config_file = Path(config_file)
    out_dir = Path(out_dir)
    config = load_experiment_config(config_file, desk_scale, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    points, info = run_fdr_experiment_full(config, workers=workers)
    wall = time.monotonic() - t0
    curves = out_dir / "curves.csv"
    _write_csv(curves,
               ["method", "alpha", "empirical_fdr",
                "correct_rejection_proportion", "fdr_se", "crp_se",
                "m1", "no_alternatives"],
               [(p.method, p.alpha, p.empirical_fdr,
                 p.correct_rejection_proportion, p.mc_se, p.crp_se,
                 p.m1, p.no_alternatives) for p in points])
    manifest = RunManifest(
        command="simulate",
        config=dataclasses.asdict(config),
        seed=config.master_seed,
        tool_version=__version__,
        outputs=[str(curves)],
        info={"wall_time_s": wall, "workers": workers, **info})
    _write_manifest(out_dir, manifest)
    return manifest


# ===================== analyze =====================

@dataclass(frozen=True)
class AnalysisConfig:
    """One calibration x B-H pass over user-supplied two-group data."""

    file_x: str
    file_y: str
    test: str               # "t" | "mann_whitney"
    method: str             # "normal" | "bootstrap" | "reg_bootstrap"
    alpha: float
    B: int = 200
    seed: int = 0
    reg_constant: Optional[float] = None

    def __post_init__(self):
        if self.test not in ("t", "mann_whitney"):
            raise ValueError(f"test must be 't' or 'mann_whitney', got {self.test!r}")
        if self.method not in ("normal", "bootstrap", "reg_bootstrap"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.test == "mann_whitney" and self.method == "reg_bootstrap":
            raise ValueError("reg_bootstrap applies to the t statistic only")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.B < 1:
            raise ValueError("B must be at least 1")


_ANALYSIS_KEYS = [f.name for f in dataclasses.fields(AnalysisConfig)]


def load_analysis_config(path: Path,
                         seed_override: Optional[int] = None) -> AnalysisConfig:
    raw = path.read_text()
    try:
        doc = tomllib.loads(raw)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}:1: malformed TOML: {err}") from err
    table = doc.get("analysis", doc)
    if not isinstance(table, dict):
        raise ConfigError(f"{path}:1: [analysis] must be a table")
    unknown = [k for k in table if k not in _ANALYSIS_KEYS]
    if unknown:
        line = _key_line(raw, unknown[0])
        raise ConfigError(f"{path}:{line}: unknown config key {unknown[0]!r}")
    params = dict(table)
    if seed_override is not None:
        params["seed"] = seed_override
    try:
        return AnalysisConfig(**params)
    except (TypeError, ValueError) as err:
        line = _anchor_for_message(raw, str(err), _ANALYSIS_KEYS)
        raise ConfigError(f"{path}:{line}: {err}") from err


def _read_matrix(path: Path) -> Tuple[List[str], np.ndarray]:
    """CSV -> (header, (n_obs, m) matrix); rows are observations.

    Row numbers in diagnostics are 1-based physical file rows (the
    header is row 1).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        rows: List[List[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}: row {lineno}: expected {len(header)} cells, "
                    f"got {len(row)}")
            vals = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    raise ConfigError(
                        f"{path}: row {lineno}: missing value in column {col!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise ConfigError(
                        f"{path}: row {lineno}: non-numeric value {cell!r} "
                        f"in column {col!r}") from None
                if not math.isfinite(v):
                    raise ConfigError(
                        f"{path}: row {lineno}: non-finite value in column {col!r}")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two observation rows")
    return header, np.asarray(rows, dtype=float)


def cmd_analyze(analysis_config: AnalysisConfig, out_dir=".") -> RunManifest:
    """Run one calibration x B-H pass; writes results.csv and summary.json."""
    out_dir = Path(out_dir)
    hx, X = _read_matrix(Path(analysis_config.file_x))
    hy, Y = _read_matrix(Path(analysis_config.file_y))
    if hx != hy:
        for i, (a, b) in enumerate(zip(hx, hy)):
            if a != b:
                raise ConfigError(
                    f"header mismatch at column {i + 1}: {a!r} vs {b!r}")
        raise ConfigError(
            f"column counts differ: {len(hx)} features in "
            f"{analysis_config.file_x}, {len(hy)} in {analysis_config.file_y}")
    m = len(hx)

    # Per-feature statistics; degenerate features are flagged, handed
    # p = 1, and kept out of any bootstrap pool.
    stats = np.full(m, np.nan)
    flagged: List[int] = []
    for k in range(m):
        try:
            if analysis_config.test == "t":
                stats[k] = two_sample_t(X[:, k], Y[:, k])
            else:
                stats[k] = mann_whitney_fast(
                    TwoSampleData(x=X[:, k], y=Y[:, k])).statistic
        except DegenerateSampleError:
            flagged.append(k)
    valid = np.array([k for k in range(m) if k not in set(flagged)], dtype=int)
    sided = "two_sided" if analysis_config.test == "t" else "one_sided"

    pvals = np.ones(m)
    info: Dict = {"flagged_features": [hx[k] for k in flagged]}
    if valid.size:
        vstats = stats[valid]
        if analysis_config.method == "normal":
            pset = cal.normal_pvalues(vstats, sided)
        else:
            data = [TwoSampleData(x=X[:, k], y=Y[:, k]) for k in valid]
            if analysis_config.method == "bootstrap":
                if analysis_config.test == "t":
                    null = cal.bootstrap_null_t(data, analysis_config.B,
                                                analysis_config.seed)
                else:
                    null = cal.bootstrap_null_mw(data, analysis_config.B,
                                                 analysis_config.seed)
                pset = cal.bootstrap_pvalues(null, vstats, sided)
            else:
                const = analysis_config.reg_constant
                if const is None:
                    const = cal.choose_truncation_constant(
                        data, (0.5, 1.0, 2.0, 4.0, 8.0), B_cv=100,
                        seed=derive_key(analysis_config.seed, "cv0"))
                plan = cal.make_truncation_plan(data, max(len(data), 2), const)
                pset = cal.regularized_bootstrap_pvalues(
                    data, plan, analysis_config.B, analysis_config.seed, sided)
                info["reg_constant"] = const
        pvals[valid] = pset.values
        info.update({k: v for k, v in pset.meta.items()})

    outcome = bh_procedure(pvals, analysis_config.alpha)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = out_dir / "results.csv"
    _write_csv(results,
               ["feature", "statistic", "p_value", "rejected"],
               [(hx[k], stats[k], pvals[k], k in outcome.rejected)
                for k in range(m)])
    summary_path = out_dir / "summary.json"
    summary = {
        "k_hat": outcome.k_hat,
        "n_rejected": len(outcome.rejected),
        "threshold": outcome.threshold,
        "rejected_features": sorted(hx[k] for k in outcome.rejected),
        "test": analysis_config.test,
        "method": analysis_config.method,
        "sided": sided,
        "alpha": analysis_config.alpha,
        "B": analysis_config.B if analysis_config.method != "normal" else 0,
        "m": m,
        **info,
    }
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = RunManifest(
        command="analyze",
        config=dataclasses.asdict(analysis_config),
        seed=analysis_config.seed,
        tool_version=__version__,
        outputs=[str(results), str(summary_path)],
        info=info)
    _write_manifest(out_dir, manifest)
    return manifest


# ===================== mdev-verify =====================

def cmd_mdev_verify(args: Dict, out_dir=".") -> RunManifest:
    """Tail-ratio experiment; writes tail_ratio.csv.

    ``args`` carries: stat ("mw" | "t"), dist (registry name, both
    groups), n1, n2, reps, xs (list of floats), seed, workers.
    """
    out_dir = Path(out_dir)
    stat_alias = {"mw": "mann_whitney", "t": "two_sample_t"}
    stat = stat_alias.get(args["stat"], args["stat"])
    if stat not in stat_alias.values():
        raise ConfigError(f"unknown statistic {args['stat']!r} (use mw or t)")
    xs = [float(v) for v in args["xs"]]
    if any(v < 0 for v in xs):
        raise ConfigError("xs must be nonnegative (one-sided upper tail)")
    try:
        curve = run_tail_ratio_experiment(
            stat, (args["dist"], args["dist"]), int(args["n1"]),
            int(args["n2"]), int(args["reps"]), xs, int(args["seed"]),
            workers=int(args.get("workers", 1)))
    except ValueError as err:
        raise ConfigError(str(err)) from err
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "tail_ratio.csv"
    corrected = (curve.corrected_ratios if curve.corrected_ratios is not None
                 else [math.nan] * len(xs))
    _write_csv(path,
               ["x", "ratio", "corrected_ratio", "ci_halfwidth", "n_exceed"],
               [(curve.xs[i], curve.ratios[i], corrected[i],
                 curve.mc_ci_halfwidth[i], curve.n_exceed[i])
                for i in range(len(xs))])
    manifest = RunManifest(
        command="mdev-verify",
        config={k: (list(v) if isinstance(v, (list, tuple)) else v)
                for k, v in args.items()},
        seed=int(args["seed"]),
        tool_version=__version__,
        outputs=[str(path)],
        info={"unreliable_points": [float(curve.xs[i])
                                    for i in range(len(xs))
                                    if bool(curve.unreliable[i])],
              "n_reps_valid": curve.n_reps})
    _write_manifest(out_dir, manifest)
    return manifest


# ===================== click wiring =====================

def _workers_option(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("USTAT_WORKERS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"USTAT_WORKERS must be an integer, got {env!r}")
    return 1


@click.group()
@click.version_option(version=__version__)
def main():
    """Studentized U-statistic simulation and calibration toolkit."""


@main.command("simulate")
@click.option("--config", "config_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override master_seed.")
@click.option("--workers", type=int, default=None,
              help="Process count (USTAT_WORKERS fallback; output-invariant).")
@click.option("--desk-scale", is_flag=True,
              help="Shrink to m=500, n_reps=50, B=200 for quick runs.")
def _simulate_cmd(config_file, out_dir, seed, workers, desk_scale):
    """Run a seeded FDR experiment from a TOML config."""
    try:
        w = _workers_option(workers)
        manifest = cmd_simulate(config_file, out_dir, desk_scale=desk_scale,
                                seed=seed, workers=w)
    except ConfigError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except ExcessiveDegeneracyError as err:
        click.echo(f"error: degeneracy cap exceeded: {err}", err=True)
        sys.exit(3)
    click.echo(f"wrote {manifest.outputs[0]}")


@main.command("analyze")
@click.option("--config", "config_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def _analyze_cmd(config_file, out_dir, seed):
    """Calibrate and B-H test user-supplied two-group CSV data."""
    try:
        config = load_analysis_config(Path(config_file), seed_override=seed)
        manifest = cmd_analyze(config, out_dir)
    except ConfigError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except ExcessiveDegeneracyError as err:
        click.echo(f"error: degeneracy cap exceeded: {err}", err=True)
        sys.exit(3)
    click.echo(f"wrote {manifest.outputs[0]}")


@main.command("mdev-verify")
@click.option("--stat", type=click.Choice(["mw", "t"]), required=True)
@click.option("--dist", default="uniform",
              help="Error distribution for both groups "
                   "(uniform, normal, exp1, exp2, t3, t4, beta10).")
@click.option("--n", "n_both", type=int, default=None,
              help="Shorthand for --n1 N --n2 N.")
@click.option("--n1", type=int, default=100)
@click.option("--n2", type=int, default=100)
@click.option("--reps", type=int, default=200_000)
@click.option("--xs", default="0,1,2,2.5",
              help="Comma-separated list of nonnegative thresholds.")
@click.option("--seed", type=int, default=0)
@click.option("--workers", type=int, default=None)
@click.option("--out", "out_dir", default=".", type=click.Path(file_okay=False))
def _mdev_cmd(stat, dist, n_both, n1, n2, reps, xs, seed, workers, out_dir):
    """Check tail ratios of a Studentized statistic against the normal tail."""
    try:
        if n_both is not None:
            n1 = n2 = n_both
        try:
            xs_list = [float(v) for v in xs.split(",") if v.strip() != ""]
        except ValueError:
            raise ConfigError(f"could not parse --xs {xs!r}") from None
        if not xs_list:
            raise ConfigError("need at least one x threshold")
        args = {"stat": stat, "dist": dist, "n1": n1, "n2": n2, "reps": reps,
                "xs": xs_list, "seed": seed,
                "workers": _workers_option(workers)}
        manifest = cmd_mdev_verify(args, out_dir)
    except ConfigError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except ExcessiveDegeneracyError as err:
        click.echo(f"error: degeneracy cap exceeded: {err}", err=True)
        sys.exit(3)
    click.echo(f"wrote {manifest.outputs[0]}")


if __name__ == "__main__":  # pragma: no cover
    main()
