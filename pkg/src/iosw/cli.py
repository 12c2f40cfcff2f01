"""
Command-line entry point.

    iosw simulate --table T.csv --shock S2:10% --params mixed --out runs/mixed
    iosw fit --y1 A.csv --y2 B.csv --runs 100 --keep 25 --seed 0 --out fits/
    iosw analyze --dir fits/
    iosw convert --from world-long --to canonical --input wiot.csv --country AUT --year 2005
    iosw validate --table T.csv

Every option can also be given in a flat ``key = value`` file passed with
``--config``; command-line flags win over the file, and ``IOSW_WORKERS``
wins over both for the worker count.

Exit codes: 0 success, 1 bad input or validation failure, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analytics import (
    PanelCube,
    aggregate_ensemble,
    correlation_matrix,
    stratify,
    tidy_frame,
)
from .calibration import (
    EnsembleFile,
    OptimizerOptions,
    RunFailure,
    build_initial_state,
    make_problem,
    read_ensemble_csv,
    run_restarts,
    select_best,
    write_ensemble_csv,
)
from .dynamics import (
    PRESETS,
    BehavioralParams,
    IntegratorOptions,
    apply_shock,
    integrate,
    write_trajectory_csv,
)
from .errors import EnsembleError, IOSWError
from .ingest import parse_canonical_csv, parse_world_long, read_table, write_table
from .iotable import (
    SOURCE_TOL,
    national_from_world,
    rebuild_table,
    technical_coefficients,
    validate_balance,
)

logger = logging.getLogger("iosw")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
WORKERS_ENV = "IOSW_WORKERS"


@dataclass
class RunConfig:
    """Resolved settings for one invocation; ``None`` means command default."""

    command: str = ""
    table: str | None = None
    shock: str | None = None
    params: str = "mixed"
    warmup: float = 0.0
    out: str | None = None
    y1: str | None = None
    y2: str | None = None
    runs: int = 100
    keep: int = 25
    seed: int = 0
    dir: str | None = None
    source_format: str = "world-long"
    target_format: str = "canonical"
    input: str | None = None
    country: str | None = None
    year: int = 0
    tol: float = SOURCE_TOL
    h: float | None = None
    t_max: float | None = None
    eps: float = 1e-8
    step_size: float = 0.05
    max_iter: int = 500
    sample_every: int = 100
    workers: int = 1

    def __post_init__(self):
        for name in ("h", "t_max", "eps", "tol", "step_size"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.runs < 1 or not 1 <= self.keep <= self.runs:
            raise ValueError(f"need 1 <= keep <= runs, got keep={self.keep}, runs={self.runs}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")

    def integrator(self, h: float, t_max: float, record: bool = True) -> IntegratorOptions:
        return IntegratorOptions(
            h=self.h if self.h is not None else h,
            t_max=self.t_max if self.t_max is not None else t_max,
            eps=self.eps,
            sample_every=self.sample_every,
            record=record,
        )


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "float | None": float, "str": str, "str | None": str}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES or key == "command":
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _CASTS[_TYPES[key]](value)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iosw", description="Dynamic input-output shock simulator.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--config", help="flat key = value settings file")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    # defaults stay None so that config-file values can be told apart from flags
    def integ(p):
        p.add_argument("--h", type=float, help="step size")
        p.add_argument("--t-max", dest="t_max", type=float, help="integration horizon")
        p.add_argument("--eps", type=float, help="convergence threshold on |g|")

    p = sub.add_parser("simulate", help="propagate a final-demand shock through one table")
    p.add_argument("--table", help="canonical table CSV")
    p.add_argument("--shock", help="'S2:10%%,S3:-1' or a full vector '0,2,0'")
    p.add_argument("--params", help=f"preset ({', '.join(PRESETS)}) or CSV sector,delta_q,delta_p")
    p.add_argument("--warmup", type=float, help="pre-shock time prepended to the trajectory")
    p.add_argument("--sample-every", dest="sample_every", type=int)
    p.add_argument("--out", help="output directory")
    integ(p)

    p = sub.add_parser("fit", help="estimate an ensemble of parameters from a year pair")
    p.add_argument("--y1", help="base-year table")
    p.add_argument("--y2", help="target-year table")
    p.add_argument("--runs", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--step-size", dest="step_size", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--tol", type=float, help="relative balance tolerance for reading tables")
    p.add_argument("--out", help="output directory")
    integ(p)

    p = sub.add_parser("analyze", help="panel matrices and correlations from ensemble files")
    p.add_argument("--dir", help="directory of ensemble CSVs")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (default: <dir>/analysis)")

    p = sub.add_parser("convert", help="world long format to canonical national tables")
    p.add_argument("--from", dest="source_format", choices=["world-long"])
    p.add_argument("--to", dest="target_format", choices=["canonical"])
    p.add_argument("--input")
    p.add_argument("--country", help="extract one country (default: all)")
    p.add_argument("--year", type=int)
    p.add_argument("--out", help="output file for one country, else directory")

    p = sub.add_parser("validate", help="check a canonical table file")
    p.add_argument("--table")
    p.add_argument("--tol", type=float, help="relative balance tolerance")
    return ap


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    settings = read_config_file(ns.config) if ns.config else {}
    for key, value in vars(ns).items():
        if key in _TYPES and value is not None:
            settings[key] = value
    env = os.environ.get(WORKERS_ENV)
    if env:
        settings["workers"] = int(env)
    return RunConfig(**settings)


def _require(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ValueError(f"{cfg.command}: missing --{', --'.join(m.replace('_', '-') for m in missing)}")


def parse_shock(spec: str, labels, f) -> np.ndarray:
    """Shock vector from ``'S2:10%,S3:-1'`` (percent of f or absolute) or a plain vector."""
    parts = [s.strip() for s in spec.split(",") if s.strip()]
    g = np.zeros(len(labels))
    if parts and all(":" not in s for s in parts):
        if len(parts) != len(labels):
            raise ValueError(f"shock vector has {len(parts)} entries for {len(labels)} sectors")
        for k, s in enumerate(parts):
            g[k] = _amount(s, f[k])
        return g
    for item in parts:
        label, _, amount = item.partition(":")
        label = label.strip()
        if label not in labels:
            raise ValueError(f"shock names unknown sector {label!r}")
        k = labels.index(label)
        g[k] += _amount(amount.strip(), f[k])
    return g


def _amount(text: str, f_k: float) -> float:
    if text.endswith("%"):
        return float(text[:-1]) / 100.0 * f_k
    return float(text)


def load_params(spec: str, labels) -> BehavioralParams:
    n = len(labels)
    if spec in PRESETS:
        return BehavioralParams.uniform(n, *PRESETS[spec])
    path = Path(spec)
    if not path.exists():
        raise ValueError(f"params must be one of {sorted(PRESETS)} or an existing file, got {spec!r}")
    df = pd.read_csv(path, comment="#")
    if list(df.columns) != ["sector", "delta_q", "delta_p"]:
        raise ValueError(f"{path}: columns must be sector,delta_q,delta_p")
    df = df.set_index(df["sector"].astype(str))
    missing = [s for s in labels if s not in df.index]
    if missing:
        raise ValueError(f"{path}: no parameters for sectors {', '.join(missing)}")
    df = df.loc[list(labels)]
    return BehavioralParams(df["delta_q"].to_numpy(float), df["delta_p"].to_numpy(float))


def cmd_simulate(cfg: RunConfig) -> int:
    _require(cfg, "table", "shock", "out")
    table = read_table(cfg.table)
    initial, ops = build_initial_state(table)
    g0 = parse_shock(cfg.shock, list(table.sector_labels), table.f)
    params = load_params(cfg.params, table.sector_labels)
    result = integrate(apply_shock(initial, g0), params, ops, cfg.integrator(1e-2, 1e4))

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    warm_samples = int(round(cfg.warmup / result.trajectory.t[1])) if len(result.trajectory) > 1 else 2
    write_trajectory_csv(
        out / "trajectory.csv", result.trajectory, table.sector_labels,
        warmup=cfg.warmup, warmup_samples=warm_samples,
    )
    fin = result.final
    # unconverged runs keep a larger gap; tolerate at most what is left of it
    slack = max(cfg.eps * max(1.0, np.abs(g0).max()), np.abs(fin.g).max())
    final_table = rebuild_table(
        ops.A, fin.q, ops.P @ fin.v, table.sector_labels, table.country, table.year, slack=slack
    )
    write_table(out / "table.csv", final_table)
    logger.info("simulate: %d steps, t=%.6g, converged=%s", result.steps, fin.t, result.converged)
    if not result.converged:
        print(f"iosw: no convergence within t_max; max |g| = {np.abs(fin.g).max():.3e}",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    _require(cfg, "y1", "y2", "out")
    problem = make_problem(read_table(cfg.y1, cfg.tol), read_table(cfg.y2, cfg.tol))
    t1, t2 = problem.table_y1, problem.table_y2
    opts = OptimizerOptions(
        step_size=cfg.step_size,
        max_iter=cfg.max_iter,
        integrator=cfg.integrator(0.1, 1e4, record=False),
    )
    outcomes = run_restarts(problem, cfg.runs, cfg.seed, opts, cfg.workers)
    failures = [o for o in outcomes if isinstance(o, RunFailure)]
    try:
        kept = select_best(outcomes, cfg.keep)
    except EnsembleError as exc:
        for line in exc.diagnostics:
            print(f"iosw:   {line}", file=sys.stderr)
        print(f"iosw: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED

    warnings = []
    if failures:
        warnings.append(f"partial ensemble: {len(failures)} of {cfg.runs} runs aborted")
    if all(r.residual == 0.0 for r in kept):
        warnings.append("flat objective")
    if not kept[0].converged:
        warnings.append("best run did not converge within t_max")
    for w in warnings:
        logger.warning(w)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{t1.country}_{t1.year}_{t2.year}"
    write_ensemble_csv(out / f"ensemble_{stem}.csv", kept, t1.sector_labels, t1.country, t1.year, t2.year)
    summary = aggregate_ensemble(kept, t1.sector_labels)
    doc = {
        "country": t1.country,
        "y1": t1.year,
        "y2": t2.year,
        "n_runs": len(outcomes),
        "n_keep": len(kept),
        "n_aborted": len(failures),
        "seed": cfg.seed,
        "best_residual": summary.best_residual,
        "median_residual": summary.median_residual,
        "median_delta_q_tilde": dict(zip(t1.sector_labels, map(float, summary.median))),
        "iqr_delta_q_tilde": {
            s: [float(lo), float(hi)] for s, lo, hi in zip(t1.sector_labels, summary.q25, summary.q75)
        },
        "warnings": warnings,
    }
    (out / f"summary_{stem}.json").write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_NONCONVERGED if not kept[0].converged else EXIT_OK


MATRICES = {
    "sector_year": ("sector", "year"),
    "country_year": ("country", "year"),
    "sector_country": ("sector", "country"),
}


def _is_ensemble(path: Path) -> bool:
    with path.open() as fh:
        return fh.readline().startswith("# country=")


def cmd_analyze(cfg: RunConfig) -> int:
    _require(cfg, "dir")
    src = Path(cfg.dir)
    if not src.is_dir():
        raise ValueError(f"{src} is not a directory")
    paths = sorted(p for p in src.glob("*.csv") if _is_ensemble(p))
    if not paths:
        raise ValueError(f"no ensemble files in {src}")
    if cfg.workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            ensembles: list[EnsembleFile] = list(pool.map(read_ensemble_csv, paths))
    else:
        ensembles = [read_ensemble_csv(p) for p in paths]

    cube = PanelCube()
    for ens in ensembles:
        # a year pair is filed under its base year
        cube.add_summary(ens.country, ens.y1, aggregate_ensemble(ens.results, ens.labels))

    out = Path(cfg.out) if cfg.out else src / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    tidy_frame(cube).to_csv(out / "tidy.csv", index=False)
    mats = {name: stratify(cube, r, c, reduce="mean") for name, (r, c) in MATRICES.items()}
    for name, m in mats.items():
        m.to_csv(out / f"{name}.csv")
    sc = mats["sector_country"]
    correlation_matrix(sc, along="rows").to_csv(out / "corr_sectors.csv")
    correlation_matrix(sc, along="cols").to_csv(out / "corr_countries.csv")
    logger.info("analyze: %d ensembles, %d cells -> %s", len(ensembles), len(cube), out)
    return EXIT_OK


def cmd_convert(cfg: RunConfig) -> int:
    _require(cfg, "input", "out")
    world = parse_world_long(Path(cfg.input).read_bytes())
    if cfg.country:
        write_table(cfg.out, national_from_world(world, cfg.country, cfg.year))
        return EXIT_OK
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for c in world.countries:
        write_table(out / f"{c}_{cfg.year}.csv", national_from_world(world, c, cfg.year))
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    _require(cfg, "table")
    table = parse_canonical_csv(Path(cfg.table).read_bytes(), rel_tol=cfg.tol)
    technical_coefficients(table)
    print(f"{cfg.table}: {table.country} {table.year}, {table.n} sectors; "
          f"{validate_balance(table, cfg.tol).describe()}; productive")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "analyze": cmd_analyze,
    "convert": cmd_convert,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(ns.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(ns)
        return COMMANDS[cfg.command](cfg)
    except (IOSWError, ValueError, OSError) as exc:
        print(f"iosw: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
