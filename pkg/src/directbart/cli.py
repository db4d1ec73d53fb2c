"""Command-line front end: fit, bandwidth, and simulate subcommands.

Runs are configured by an INI-style file with one section per subcommand and
flat key=value entries; all tabular output is CSV. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dgp
from .bandwidth import ScoreReport, candidate_grid, select_bandwidth
from .data import ColumnSpec, Schema, load_dataset
from .errors import ConfigurationError, DataError, NumericError
from .evaluate import ExperimentConfig, lp_fit, run_experiment
from .gibbs import SamplerConfig, run_chain, summarize


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(path: Path, params: dict) -> None:
    lines = [f"{key}={_fmt(params[key])}" for key in sorted(params)]
    path.write_text("\n".join(["version=" + __version__] + lines) + "\n")


def _parse_covariates(text: str) -> tuple[ColumnSpec, ...]:
    specs = []
    text = text.strip()
    if not text:
        return ()
    for item in text.split(","):
        item = item.strip()
        if ":" not in item:
            raise ConfigurationError(
                f"covariate '{item}' must be name:continuous or name:categorical(l1|l2|...)"
            )
        name, kind = item.split(":", 1)
        name, kind = name.strip(), kind.strip()
        if kind == "continuous":
            specs.append(ColumnSpec(name=name))
        elif kind.startswith("categorical(") and kind.endswith(")"):
            levels = tuple(s.strip() for s in kind[len("categorical("):-1].split("|"))
            specs.append(ColumnSpec(name=name, kind="categorical", levels=levels))
        else:
            raise ConfigurationError(f"unknown covariate kind in '{item}'")
    return tuple(specs)


def _section(config_path: str, name: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(config_path)
    if not read:
        raise ConfigurationError(f"config file '{config_path}' not found or unreadable")
    if name not in parser:
        raise ConfigurationError(f"config file has no [{name}] section")
    return dict(parser[name])


def _need(section: dict, key: str) -> str:
    if key not in section:
        raise ConfigurationError(f"missing required config key '{key}'")
    return section[key]


def _get(section: dict, key: str, cast, default):
    if key not in section:
        return default
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ConfigurationError(f"bad value for '{key}': {section[key]!r}") from exc


def _load_fit_inputs(section: dict, seed_override):
    schema = Schema(
        outcome=_need(section, "outcome"),
        running=_need(section, "running"),
        cutoff=float(_need(section, "cutoff")),
        covariates=_parse_covariates(section.get("covariates", "")),
    )
    data_path = _need(section, "data")
    if not Path(data_path).exists():
        raise DataError(f"data file '{data_path}' does not exist")
    ds = load_dataset(data_path, schema)
    seed = seed_override if seed_override is not None else _get(section, "seed", int, 0)
    params = {
        "data": data_path,
        "outcome": schema.outcome,
        "running": schema.running,
        "cutoff": schema.cutoff,
        "covariates": section.get("covariates", ""),
        "q": _get(section, "q", int, 1),
        "m": _get(section, "m", int, 20),
        "grid_size": _get(section, "grid_size", int, 6),
        "n_iter": _get(section, "n_iter", int, 5000),
        "n_burn": _get(section, "n_burn", int, 500),
        "select_iter": _get(section, "select_iter", int, 1000),
        "select_burn": _get(section, "select_burn", int, 500),
        "seed": seed,
        "level": _get(section, "level", float, 0.95),
    }
    return ds, params


def _score_rows(report: ScoreReport):
    return [
        (c, s, int(f))
        for c, s, f in zip(report.candidates, report.scores, report.feasible)
    ]


def _select(ds, params) -> tuple[ScoreReport, SamplerConfig]:
    lp = lp_fit(ds, params["q"])
    config = SamplerConfig(
        q=params["q"], m=params["m"], n_iter=params["n_iter"],
        n_burn=params["n_burn"], h=lp.h_lp, seed=params["seed"],
    )
    grid = candidate_grid(lp.h_lp, params["grid_size"])
    report = select_bandwidth(ds, config, grid, n_iter=params["select_iter"],
                              n_burn=params["select_burn"])
    return report, replace(config, h=report.selected)


def cmd_fit(args) -> int:
    section = _section(args.config, "fit")
    ds, params = _load_fit_inputs(section, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, config = _select(ds, params)
    draws = run_chain(config, ds, targets=ds.z)
    summ = summarize(draws, params["level"])
    _write_csv(
        out / "cate_summary.csv",
        ["id", "tau_mean", "lower", "upper"],
        [(i, summ.mean[i], summ.lower[i], summ.upper[i]) for i in range(ds.n)],
    )
    _write_csv(out / "score_report.csv", ["candidate", "score", "feasible"],
               _score_rows(report))
    _write_manifest(out / "manifest.txt", params)
    return 0


def cmd_bandwidth(args) -> int:
    section = _section(args.config, "bandwidth")
    ds, params = _load_fit_inputs(section, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report, _ = _select(ds, params)
    _write_csv(out / "score_report.csv", ["candidate", "score", "feasible"],
               _score_rows(report))
    return 0


def cmd_simulate(args) -> int:
    section = _section(args.config, "simulate")
    scenario = _get(section, "scenario", int, 1)
    sigma2 = _get(section, "sigma2", float, 0.25 if scenario == 1 else 0.5)
    seed = args.seed if args.seed is not None else _get(section, "seed", int, 0)
    try:
        if scenario == 1:
            spec = dgp.Scenario1Spec(
                n=_get(section, "n", int, 1200),
                case=section.get("case", "small"),
                sigma2=sigma2,
            )
        elif scenario == 2:
            spec = dgp.Scenario2Spec(
                n=_get(section, "n", int, 600),
                rho=_get(section, "rho", float, 0.0),
                sigma2=sigma2,
            )
        else:
            raise ConfigurationError(f"unknown scenario '{scenario}' (expected 1 or 2)")
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    methods = tuple(
        s.strip() for s in section.get("methods", "direct-bart,lp").split(",") if s.strip()
    )
    econf = ExperimentConfig(
        q=_get(section, "q", int, 2 if scenario == 1 else 1),
        m=_get(section, "m", int, 20),
        n_iter=_get(section, "n_iter", int, 5000),
        n_burn=_get(section, "n_burn", int, 500),
        grid_size=_get(section, "grid_size", int, 6),
        select_iter=_get(section, "select_iter", int, 1000),
        select_burn=_get(section, "select_burn", int, 500),
    )
    R = _get(section, "replications", int, 1)
    table = run_experiment(spec, methods=methods, R=R, base_seed=seed,
                           econf=econf, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "metrics.csv",
        ["method", "scenario_case", "sigma2", "sample", "rmse_mean",
         "coverage_mean", "n_replications"],
        [(r.method, r.scenario_case, r.sigma2, r.sample, r.rmse_mean,
          r.coverage_mean, r.n_replications) for r in table.rows],
    )
    _write_csv(
        out / "details.csv",
        ["replication", "method", "sample", "rmse", "coverage"],
        [(d["replication"], d["method"], d["sample"], d["rmse"], d["coverage"])
         for d in sorted(table.details,
                         key=lambda d: (d["replication"], d["method"], d["sample"]))],
    )
    if table.failures:
        _write_csv(out / "failures.csv", ["replication", "error"], table.failures)
        print(f"{len(table.failures)} replication(s) failed; see failures.csv",
              file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="directbart",
        description="Treatment effect estimation at a sharp cutoff with a "
                    "sum-of-trees prior on the effect function",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("fit", cmd_fit), ("bandwidth", cmd_bandwidth),
                     ("simulate", cmd_simulate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=1, help="worker cap")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
