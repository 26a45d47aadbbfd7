"""Command-line front end.

    statdistort generate --config run.toml --out data/
    statdistort audit    --config run.toml --out report/
    statdistort run      --config run.toml --seed 7 --out results/
    statdistort emd a.csv b.csv --bins 8

Config files are TOML::

    [data]                  # either a dataset file ...
    path = "dirty.csv"

    [synth]                 # ... or a synthetic spec (SynthSpec fields)
    seed = 20120827

    [experiment]            # ExperimentConfig fields
    replications = 50
    log_attrs = []          # attribute indices to log-transform

    [[rules]]               # omitted: the three default rules
    kind = "lower-bound"
    attr = 0
    lo = 0.0

    [output]
    dir = "out"
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core import DataFormatError, Dataset, Transform, load_dataset, save_dataset
from .distortion import DEFAULT_BINS, statistical_distortion
from .experiment import (
    ExperimentConfig,
    extract_ideal,
    run_experiment,
    summarize,
    write_failures_csv,
    write_results_csv,
    write_scatter_csv,
    write_summary_csv,
)
from .glitch import (
    GLITCH_TYPES,
    ConstraintRule,
    counts_by_time,
    default_rules,
    fit_outlier_limits,
    glitch_bits,
    glitch_percentages,
)
from .synth import REFERENCE_SPEC, SynthSpec, generate

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("statdistort")

DEFAULT_OUT = "out"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data_path: Path | None = None
    synth: SynthSpec | None = None
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    out_dir: Path = Path(DEFAULT_OUT)
    log_attrs: tuple = ()


def _rule_from_table(t: dict) -> ConstraintRule:
    known = {"kind", "attr", "lo", "hi", "other"}
    extra = set(t) - known
    if extra:
        raise ConfigError(f"unknown rule keys: {sorted(extra)}")
    try:
        return ConstraintRule(t["kind"], int(t["attr"]), t.get("lo"), t.get("hi"), t.get("other"))
    except KeyError as exc:
        raise ConfigError(f"rule is missing {exc.args[0]!r}") from None


def _experiment_from_table(t: dict, rules) -> ExperimentConfig:
    t = dict(t)
    t.pop("log_attrs", None)
    allowed = {f.name for f in fields(ExperimentConfig)} - {"rules", "transform"}
    extra = set(t) - allowed
    if extra:
        raise ConfigError(f"unknown experiment keys: {sorted(extra)}")
    return ExperimentConfig(**t, rules=rules)


def parse_config(path=None) -> RunConfig:
    """Read a TOML run config; ``None`` gives the reference synthetic setup."""
    if path is None:
        return RunConfig(synth=REFERENCE_SPEC)
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    extra = set(raw) - {"data", "synth", "experiment", "rules", "output"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    if "data" in raw and "synth" in raw:
        raise ConfigError("give either [data] or [synth], not both")

    cfg = RunConfig()
    if "data" in raw:
        if "path" not in raw["data"]:
            raise ConfigError("[data] needs a path")
        data_path = (path.parent / raw["data"]["path"]).resolve()
        if not data_path.is_file():
            raise ConfigError(f"dataset not found: {data_path}")
        cfg.data_path = data_path
    else:
        try:
            cfg.synth = SynthSpec.from_dict(raw.get("synth", {"seed": REFERENCE_SPEC.seed}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[synth]: {exc}") from None

    rules = [_rule_from_table(t) for t in raw["rules"]] if "rules" in raw else default_rules()
    try:
        cfg.experiment = _experiment_from_table(raw.get("experiment", {}), rules)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[experiment]: {exc}") from None
    cfg.log_attrs = tuple(int(a) for a in raw.get("experiment", {}).get("log_attrs", []))
    if "dir" in raw.get("output", {}):
        cfg.out_dir = (path.parent / raw["output"]["dir"]).resolve()
    return cfg


def _load_input(cfg: RunConfig) -> Dataset:
    if cfg.data_path is not None:
        return load_dataset(cfg.data_path)
    return generate(cfg.synth)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ----------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = parse_config(args.config)
    spec = cfg.synth if cfg.synth is not None else REFERENCE_SPEC
    if args.seed is not None:
        spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    ds = generate(spec)
    path = _out_dir(args, cfg) / "dataset.csv"
    save_dataset(ds, path)
    print(path)
    return 0


def cmd_audit(args) -> int:
    cfg = parse_config(args.config)
    ds = _load_input(cfg)
    rules = cfg.experiment.rules
    ideal = extract_ideal(ds, rules, cfg.experiment.ideal_threshold)
    limits = fit_outlier_limits(ideal)
    bits = glitch_bits(ds, rules, limits)
    pct = glitch_percentages(ds, rules, limits, bits=bits)
    out = _out_dir(args, cfg)

    with (out / "glitch_percentages.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["glitch_type", "percent"])
        for name, p in zip(GLITCH_TYPES, pct):
            w.writerow([name, repr(float(p))])
    ts, counts = counts_by_time(ds, bits)
    with (out / "glitch_by_time.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *GLITCH_TYPES])
        for t, row in zip(ts, counts):
            w.writerow([int(t), *(int(c) for c in row)])

    print(f"ideal series: {ideal.n_series} of {ds.n_series}")
    for name, p in zip(GLITCH_TYPES, pct):
        print(f"{name:>12}: {p:.4f}%")
    return 0


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    exp = cfg.experiment
    if args.seed is not None:
        exp.master_seed = args.seed
    if args.bins is not None:
        exp.bins = args.bins
    ds = _load_input(cfg)
    if cfg.log_attrs:
        exp.transform = Transform.log_on(ds.v, cfg.log_attrs)
    results = run_experiment(ds, exp)
    out = _out_dir(args, cfg)

    write_results_csv(results, out / "results.csv")
    n_failed = write_failures_csv(results, out / "failures.csv")
    write_summary_csv(summarize(results), out / "summary.csv")
    # strategy comparison at full cleaning, and the cost sweep
    write_scatter_csv([r for r in results if r.fraction == 100.0], out / "scatter_full.csv")
    write_scatter_csv(results, out / "scatter_sweep.csv")

    print(f"{len(results) - n_failed} results, {n_failed} failures -> {out}")
    if results and n_failed == len(results):
        log.error("every replication failed; see %s", out / "failures.csv")
        return 1
    return 0


def cmd_emd(args) -> int:
    a = load_dataset(args.file_a)
    b = load_dataset(args.file_b)
    if a.v != b.v:
        raise ConfigError(f"attribute counts differ: {a.v} vs {b.v}")
    bins = args.bins if args.bins is not None else DEFAULT_BINS
    mode = "joint"
    if args.config is not None:
        mode = parse_config(args.config).experiment.distortion_mode
    print(f"{statistical_distortion(a, b, bins=bins, mode=mode):.17g}")
    return 0


def _u64(text: str) -> int:
    n = int(text)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="statdistort", description="Evaluate data-cleaning strategies by glitch improvement and statistical distortion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run config")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--bins", type=_positive, help="histogram bins per dimension")

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("audit", parents=[common], help="glitch percentages and per-time counts")
    p.set_defaults(func=cmd_audit)
    p = sub.add_parser("run", parents=[common], help="run the replication experiment")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("emd", parents=[common], help="statistical distortion between two dataset files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.set_defaults(func=cmd_emd)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, OSError, ValueError) as exc:
        print(f"statdistort: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
