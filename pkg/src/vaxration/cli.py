"""Command-line entry point: ``vaxration {generate,run,plot,census,fair-share}``.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .allocation import AllocationError, parse_grid
from .pipeline import (
    InvariantError, RunConfig, StageError, fair_share_rows, generate_bundle, run_pipeline, write_bundle,
)
from .plot import PlotError, plot_bundle
from .population import PopulationError
from .synthetic import ConfigError, SyntheticConfig, calibrated_config
from .tiers import ClassificationError, rank_label, tier_census, write_census

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


def _run_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig(synthetic=calibrated_config(0).to_dict())
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "policy", None):
        d["policies"] = list(args.policy)
    if getattr(args, "supply_grid", None):
        d["supply_grid"] = args.supply_grid
    return RunConfig.from_dict(d, cfg.base_dir)


def cmd_generate(args) -> int:
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if "synthetic" in raw:  # a run config
            raw = dict(raw["synthetic"] or {}, seed=raw.get("seed", 0))
        cfg = SyntheticConfig.from_dict(raw)
    else:
        cfg = calibrated_config(0)
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.size is not None:
        d["population_size"] = args.size
    cfg = SyntheticConfig.from_dict(d)
    manifest = generate_bundle(cfg, args.out)
    print(f"wrote persons.csv, households.csv to {args.out} (config {manifest['config_hash'][:12]})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _run_config(args)
    result = run_pipeline(cfg)
    manifest = write_bundle(result, args.out)
    print(f"wrote {len(manifest['files'])} files to {args.out} (config {manifest['config_hash'][:12]})")
    return EXIT_OK


def cmd_plot(args) -> int:
    paths = plot_bundle(args.bundle, args.out)
    print(f"wrote {len(paths)} charts")
    return EXIT_OK


def cmd_census(args) -> int:
    cfg = _run_config(args)
    cfg.policies = ["r=0"]
    cfg.supply_grid = "0"
    result = run_pipeline(cfg)
    rows = tier_census(result.labels.population, result.labels.assignments.highest_rank, result.high_adi)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_census(rows, out / "tier_census.csv")
    print(f"{'tier':>5} {'mass':>14} {'B+I':>7} {'highADI':>8} {'age':>6} {'female':>7}")
    for i, r in enumerate(rows):
        print(f"{rank_label(i):>5} {r.weighted_mass:14.1f} {r.share_black_indigenous:7.3f} "
              f"{r.share_high_adi:8.3f} {r.mean_age:6.1f} {r.share_female:7.3f}")
    return EXIT_OK


def cmd_fair_share(args) -> int:
    from .metrics import write_fair_share

    cfg = _run_config(args)
    cfg.supply_grid = "0"
    result = run_pipeline(cfg)
    supplies = args.supply or cfg.fair_share_supplies
    rows = fair_share_rows(result, supplies)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fair_share(rows, out / "fair_share.csv")
    print(f"wrote {len(rows)} fair-share rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vaxration", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=False):
        sp.add_argument("--config", help="run config (JSON)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="out", help="output directory")
        if grid:
            sp.add_argument("--policy", action="append",
                            help="reserve policy, e.g. r=0.2,eligibility=high_adi (repeatable)")
            sp.add_argument("--supply-grid", help="default | points:N | step:X | a,b,c")

    g = sub.add_parser("generate", help="write a synthetic population")
    common(g)
    g.add_argument("--size", type=int, help="weighted population size")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="full pipeline to an output bundle")
    common(r, grid=True)
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plot", help="SVG charts from a bundle")
    pl.add_argument("bundle")
    pl.add_argument("--out", help="chart directory (default BUNDLE/plots)")
    pl.set_defaults(func=cmd_plot)

    c = sub.add_parser("census", help="tier census only")
    common(c)
    c.set_defaults(func=cmd_census)

    f = sub.add_parser("fair-share", help="state fair-share indices")
    common(f, grid=True)
    f.add_argument("--supply", type=float, action="append", help="unscaled supply (repeatable)")
    f.set_defaults(func=cmd_fair_share)
    return p


def _classify(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _classify(exc.cause)
    if isinstance(exc, (InvariantError, ClassificationError, AssertionError)):
        return EXIT_INTERNAL
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ConfigError, PopulationError, AllocationError, PlotError, ValueError, KeyError)):
        return EXIT_VALIDATION
    return EXIT_INTERNAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        print(f"vaxration: error: {exc}", file=sys.stderr)
        return _classify(exc)


if __name__ == "__main__":
    sys.exit(main())
