"""
hhsev command line. Global flags --verbose and --quiet go before the subcommand.

    hhsev final-size --model {mt|ids} --config PATH [--out DIR]
    hhsev simulate   --model {mt|ids} --config PATH [--replicates N] [--cutoff F] [--seed U64] [--jobs N] [--out DIR]
    hhsev fit        --model {mt|ids} --target CSV --config PATH [--runs N] [--seed U64] [--jobs N] [--out DIR]
    hhsev experiment --config PATH [--seed U64] [--jobs N] [--out DIR]

Every run writes into ``<out>/<subcommand>-<slug>/`` and finishes with manifest.json.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from pydantic import ValidationError

from hhsev import __version__
from hhsev.config.schema import (
    RunConfig,
    experiment_spec,
    fit_config,
    format_validation_error,
    load_run_config,
    sim_config,
)
from hhsev.config.settings import settings
from hhsev.core.distributions import FinalSizeDistribution
from hhsev.core.errors import ConfigError, NumericalError
from hhsev.core.params import ModelKind
from hhsev.core.utils import slugify
from hhsev.experiments.runner import ExperimentRunner, OutputWriter, RunManifest
from hhsev.fitting.diagnostics import pseudo_diagnostics
from hhsev.fitting.kl import TargetData, kl_per_size_breakdown
from hhsev.fitting.optimizer import model_distribution, multi_run
from hhsev.models.ids import attack_fraction, integrate_ids
from hhsev.models.mt import generate_mt_distribution, mt_final_size_distribution
from hhsev.simulation.simulator import run_batch
from hhsev.simulation.summary import histogram_bins, normal_moments, normality_screen

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _writer(args, config: RunConfig, label: str) -> OutputWriter:
    out_root = Path(args.out or settings.HHSEV_OUT_DIR)
    out_dir = out_root / f"{args.command}-{slugify(label) or 'run'}"
    seed = args.seed if getattr(args, "seed", None) is not None else config.seed
    manifest = RunManifest(subcommand=args.command, config=config.snapshot(), seed=seed)
    return OutputWriter(out_dir, manifest)


def _banner(title: str) -> None:
    logger.info(f"{'='*60}")
    logger.info(title)
    logger.info(f"{'='*60}")


def _jobs(args) -> int:
    jobs = args.jobs if getattr(args, "jobs", None) is not None else settings.HHSEV_JOBS
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    return jobs


# ============================================================================
# Subcommands
# ============================================================================

def cmd_final_size(args) -> int:
    config = load_run_config(args.config)
    model = ModelKind(args.model)
    dist = config.require("population").dist
    writer = _writer(args, config, f"{model.value} {Path(args.config).stem}")

    extra = {}
    if model is ModelKind.MT:
        mt = config.require("mt")
        if mt.global_rates is not None:
            distribution, balance = generate_mt_distribution(mt.params(), mt.global_model(), dist)
            extra["balance"] = balance.to_dict()
        else:
            distribution = mt_final_size_distribution(mt.params(), dist)
    else:
        solution = integrate_ids(config.require("ids").params(), dist, f_S=config.fitting.f_S, delta=config.fitting.delta)
        distribution = solution.distribution
        extra["integration"] = solution.diagnostics
    extra["attack_fraction"] = attack_fraction(distribution, dist)

    aggregates = distribution.aggregates()
    writer.csv(distribution.to_frame(), "final_size.csv")
    writer.csv(aggregates, "aggregates.csv")
    writer.json(extra, "diagnostics.json")
    writer.finish()

    _banner(f"{model.label} final sizes ({writer.out_dir})")
    logger.info(f"\n{aggregates.to_string(index=False)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_run_config(args.config)
    model = ModelKind(args.model)
    seed = args.seed if args.seed is not None else config.seed
    sim = sim_config(config, model, seed=seed, cutoff=args.cutoff)
    replicates = args.replicates or config.simulation.replicates
    writer = _writer(args, config, f"{model.value} {Path(args.config).stem}")

    _banner(f"🚀 {replicates} {model.label} replicates, m = {sim.population.m}, seed {seed}")
    batch = run_batch(sim, replicates, jobs=_jobs(args))

    writer.csv(pd.DataFrame([o.to_row() for o in batch.outcomes]), "outcomes.csv")
    summary = {"replicates": replicates, "n_major": batch.n_major, "cutoff": sim.cutoff}
    if batch.n_major:
        writer.csv(batch.empirical.to_frame(), "empirical.csv")
        writer.csv(batch.empirical.aggregates(), "aggregates.csv")
        writer.csv(histogram_bins(batch.outcomes), "histogram.csv")
        major = [o for o in batch.outcomes if o.major]
        summary["moments"] = normal_moments(batch.outcomes)
        if len(major) > 2:
            summary["normality"] = {
                "mild_total": normality_screen([o.mild_total for o in major]),
                "severe_total": normality_screen([o.severe_total for o in major]),
            }
    else:
        logger.warning(f"No major outbreaks at cutoff {sim.cutoff}; only outcomes.csv written")
    writer.json(summary, "summary.json")
    writer.finish()

    logger.info(f"Major outbreaks: {batch.n_major}/{replicates}")
    if "moments" in summary:
        logger.info(json.dumps(summary["moments"], indent=2))
    return EXIT_OK


def cmd_fit(args) -> int:
    config = load_run_config(args.config)
    model = ModelKind(args.model)
    dist = config.require("population").dist
    dist.require_fittable()
    q = FinalSizeDistribution.from_csv(args.target)
    m = config.fitting.m or config.population.m
    target = TargetData(q, dist, m=m)
    seed = args.seed if args.seed is not None else config.seed
    fitting = fit_config(config, seed=seed)
    runs = args.runs or config.fitting.runs
    writer = _writer(args, config, f"{model.value} {Path(args.target).stem}")

    _banner(f"🚀 {runs} {model.label} fits to {args.target}, seed {seed}")
    result = multi_run(model, target, runs, fitting, jobs=_jobs(args))
    best = result.best

    writer.csv(result.frame(), "fits.csv")
    summary_frame = result.summary().reset_index().rename(columns={"index": "quantity"})
    writer.csv(summary_frame, "fit_summary.csv")
    p = model_distribution(model, best.theta_hat.to_vector(), target, fitting)
    breakdown = kl_per_size_breakdown(target, p)
    writer.csv(pd.DataFrame({"n": range(1, len(breakdown) + 1), "kl": breakdown}), "kl_breakdown.csv")
    if fitting.keep_trace:
        traces = pd.DataFrame(
            [{"run_index": r.run_index, "evaluation": i + 1, "best_f": f}
             for r in result.results for i, f in enumerate(r.trace or [])]
        )
        writer.csv(traces, "traces.csv")

    summary = {"best_run": best.run_index, "best_f": best.f_theta_hat, "theta_hat": best.theta_hat.to_dict()}
    summary.update({"derived": best.derived} if best.derived else {})
    if m is not None:
        summary["pseudolikelihood"] = pseudo_diagnostics(target, p, n_params=len(best.theta_hat.to_vector())).to_dict()
    writer.json(summary, "summary.json")
    writer.finish()

    logger.info(f"Best f = {best.f_theta_hat:.3e} (run {best.run_index})")
    logger.info(json.dumps(best.theta_hat.to_dict(), indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = load_run_config(args.config)
    seed = args.seed if args.seed is not None else config.seed
    spec = experiment_spec(config, seed=seed)
    writer = _writer(args, config, f"{spec.kind} {Path(args.config).stem}")
    ExperimentRunner(spec, fit_config(config, seed=seed), writer, jobs=_jobs(args)).run()
    writer.finish()
    return EXIT_OK


# ============================================================================
# Entry point
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hhsev", description="Household epidemic final sizes and model discrimination")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Enable DEBUG logging")
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model: bool = True, seeded: bool = True):
        if model:
            p.add_argument("--model", choices=[m.value for m in ModelKind], required=True)
        p.add_argument("--config", type=str, required=True, help="Run config YAML")
        p.add_argument("--out", type=str, help="Output root (default $HHSEV_OUT_DIR)")
        if seeded:
            p.add_argument("--seed", type=int, help="Master seed (overrides the config)")
            p.add_argument("--jobs", type=int, help="Worker processes (default $HHSEV_JOBS)")

    p = sub.add_parser("final-size", help="Asymptotic final-size distribution")
    common(p, seeded=False)
    p.set_defaults(func=cmd_final_size)

    p = sub.add_parser("simulate", help="Replicated finite-population simulation")
    common(p)
    p.add_argument("--replicates", type=int, help="Number of replicates")
    p.add_argument("--cutoff", type=float, help="Major-outbreak cutoff on the attack fraction")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="Multi-start KL fit to a final-size CSV")
    common(p)
    p.add_argument("--target", type=str, required=True, help="Final-size CSV (n, r_M, r_S, probability)")
    p.add_argument("--runs", type=int, help="Independent optimizer runs")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="Model discrimination experiment")
    common(p, model=False)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    logging.getLogger("hhsev").setLevel(level)
    try:
        return args.func(args)
    except ValidationError as e:
        logger.error(format_validation_error(e))
        return EXIT_USAGE
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
