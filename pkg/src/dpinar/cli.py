"""Command-line interface: ``dpinar {elicit,fit,forecast,evaluate,simulate}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from . import config as cfgmod
from . import io as dio
from .config import RunConfig
from .core import CountSeries, DomainError, PriorConfig, simulate
from .elicitation import ConvergenceError, ElicitationTargets, elicit_priors
from .evaluation import compare_batch, default_holdout, evaluate, make_plan
from .forecast import predictive_pmf
from .gibbs import MODELS, fit, posterior_summary

log = logging.getLogger("dpinar")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def _effective_config(args) -> RunConfig:
    """Config file (or defaults) with command-line flags layered on top."""
    config = cfgmod.load(args.config) if getattr(args, "config", None) else RunConfig()
    seed = config.seed if args.seed is None else args.seed
    sampler = config.sampler
    changes = {}
    for flag, key in (("iterations", "n_iterations"), ("burn_in", "burn_in"),
                      ("thin", "thinning")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    sampler = dataclasses.replace(sampler, seed=seed, **changes)
    paths = config.paths
    if getattr(args, "input", None):
        paths = dataclasses.replace(paths, input=str(args.input))
    if getattr(args, "format", None):
        paths = dataclasses.replace(paths, format=args.format)
    if getattr(args, "series", None):
        paths = dataclasses.replace(paths, series=args.series)
    model = getattr(args, "model", None) or config.model
    config = config.replace(seed=seed, sampler=sampler, paths=paths, model=model)
    horizon = getattr(args, "horizon", None)
    if args.command == "forecast" and horizon is not None:
        config = config.replace(forecast=dataclasses.replace(config.forecast, horizon=horizon))
    if args.command == "evaluate":
        ev = config.eval
        if horizon is not None:
            ev = dataclasses.replace(ev, horizon=horizon)
        if args.holdout is not None:
            ev = dataclasses.replace(ev, holdout=args.holdout)
        if args.jobs is not None:
            ev = dataclasses.replace(ev, jobs=args.jobs)
        config = config.replace(eval=ev)
    if args.command == "simulate":
        sim = config.simulate
        for name in ("length", "alpha", "block", "y1"):
            value = getattr(args, name, None)
            if value is not None:
                sim = dataclasses.replace(sim, **{name: value})
        if args.rates is not None:
            sim = dataclasses.replace(sim, rates=tuple(float(v) for v in args.rates.split(",")))
        config = config.replace(simulate=sim)
    return config


def _check_paths(config: RunConfig, required_input: bool = True) -> None:
    if required_input:
        if not config.paths.input:
            raise DomainError("no input series given (use --input or paths.input)")
        if not Path(config.paths.input).is_file():
            raise DomainError(f"input file {config.paths.input!r} does not exist")


def _load_series(config: RunConfig) -> Dict[str, CountSeries]:
    data = dio.ingest(config.paths.input, config.paths.format)
    if isinstance(data, CountSeries):
        data = {Path(config.paths.input).stem: data}
    if config.paths.series is not None:
        if config.paths.series not in data:
            raise DomainError(f"series {config.paths.series!r} not found in input")
        data = {config.paths.series: data[config.paths.series]}
    return data


def _one_series(config: RunConfig):
    data = _load_series(config)
    if len(data) > 1:
        raise DomainError("input holds several series; choose one with --series")
    return next(iter(data.items()))


def _targets(config: RunConfig, counts) -> ElicitationTargets:
    counts = np.asarray(counts)
    el = config.elicitation
    k_max = el.k_max if el.k_max is not None else counts.size - 1
    lam = el.lambda_max if el.lambda_max is not None else float(max(counts.max(), 1))
    return ElicitationTargets(el.k_min, min(k_max, counts.size - 1), lam, counts.size)


def _priors_for(config: RunConfig, counts) -> PriorConfig:
    if config.priors is not None:
        return config.priors
    log.info("no priors in config; eliciting from %d epochs", len(counts))
    return elicit_priors(_targets(config, counts), seed=config.seed)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_elicit(args, config: RunConfig) -> int:
    _check_paths(config)
    sid, series = _one_series(config)
    targets = _targets(config, series.counts)
    t0 = time.perf_counter()
    priors = elicit_priors(targets, seed=config.seed)
    log.info("elicited in %.1f s", time.perf_counter() - t0)
    out = Path(args.out) if args.out else Path(args.config or "dpinar.cfg")
    cfgmod.save(config.replace(priors=priors), out)
    print(f"a_tau={priors.a_tau!r} b_tau={priors.b_tau!r} "
          f"a_g0={priors.a_g0!r} b_g0={priors.b_g0!r}")
    print(f"wrote {out}")
    return 0


def cmd_fit(args, config: RunConfig) -> int:
    _check_paths(config)
    sid, series = _one_series(config)
    priors = _priors_for(config, series.counts)
    config = config.replace(priors=priors)
    digest = config.digest()
    draws = fit(series, priors, config.sampler, config.model)
    out = _out_dir(args)
    dio.write_draws(out / f"draws_{config.model}.csv", draws, digest, config.seed)
    summary = posterior_summary(draws)
    dio.write_summary(out / f"summary_{config.model}.csv", summary, digest, config.seed)
    print(f"{sid}: model={config.model} N={summary['N']} alpha_mean={summary['alpha_mean']:.4f} "
          f"tau_mean={summary['tau_mean']:.4f} k_mode={summary['k_mode']}")
    return 0


def cmd_forecast(args, config: RunConfig) -> int:
    _check_paths(config)
    sid, series = _one_series(config)
    priors = _priors_for(config, series.counts)
    config = config.replace(priors=priors)
    digest = config.digest()
    h = config.forecast.horizon
    if args.draws:
        draws = dio.read_draws(args.draws)
    else:
        draws = fit(series, priors, config.sampler, config.model)
    # forecast randomness is separate from the sampler's stream
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(h,)))
    dist = predictive_pmf(draws, series, h, priors, rng, config.forecast.tau_mode)
    out = _out_dir(args)
    dio.write_forecast(out / f"forecast_{draws.model}_h{h}.csv", dist, digest, config.seed, sid)
    print(f"{sid}: h={h} point_forecast={dist.point_forecast} tail_mass={dist.tail_mass:.3g}")
    return 0


def cmd_evaluate(args, config: RunConfig) -> int:
    _check_paths(config)
    data = _load_series(config)
    h = config.eval.horizon
    holdout = config.eval.holdout if config.eval.holdout is not None else default_holdout(h)
    models = list(MODELS) if config.model == "both" else [config.model]
    out = _out_dir(args)
    reports = {m: [] for m in models}
    resolved = config
    for sid, series in data.items():
        plan = make_plan(series.T, holdout, h)
        # priors come from the first training window only, so no holdout data leaks in
        first_train = series.counts[:plan.train_end(plan.holdout_start)]
        priors = _priors_for(config, first_train)
        if config.priors is None and len(data) == 1:
            resolved = config.replace(priors=priors)
        for m in models:
            reports[m].append(evaluate(series, plan, m, priors, config.sampler,
                                       master_seed=config.seed, series_id=sid,
                                       n_jobs=config.eval.jobs,
                                       tau_mode=config.forecast.tau_mode))
            print(f"{sid}: {m} h={h} MAD={reports[m][-1].mad:.4f}")
    digest = resolved.digest()
    for m in models:
        dio.write_report(out / f"report_{m}_h{h}.csv", reports[m], digest, config.seed)
    paths = {m: out / f"report_{m}_h{h}.csv" for m in MODELS}
    if all(p.exists() for p in paths.values()):
        dp = {r.series_id: r for r in dio.read_report(paths["dp"])}
        base = {r.series_id: r for r in dio.read_report(paths["inar1"])}
        pairs = [(dp[s], base[s]) for s in dp if s in base]
        if pairs:
            rows, frac = compare_batch(pairs)
            dio.write_comparison(out / f"comparison_h{h}.csv", rows, frac, digest, config.seed)
            print(f"dp wins {frac:.2%} of {len(rows)} series")
    return 0


def rate_schedule(length: int, rates, block: int) -> np.ndarray:
    """Rates for epochs 2..length.

    ``block > 0`` cycles through ``rates`` every ``block`` epochs; ``block == 0``
    splits the series into ``len(rates)`` equal consecutive regimes.
    """
    rates = np.asarray(rates, float)
    t = np.arange(length - 1)
    if block > 0:
        idx = (t // block) % rates.size
    else:
        idx = np.minimum(t * rates.size // max(length - 1, 1), rates.size - 1)
    return rates[idx]


def cmd_simulate(args, config: RunConfig) -> int:
    sim = config.simulate
    schedule = rate_schedule(sim.length, sim.rates, sim.block)
    series = simulate(sim.length, sim.alpha, schedule, config.seed, sim.y1)
    out = Path(args.out) if args.out else Path("simulated.csv")
    dio.write_series(out, series, config.digest(), config.seed)
    print(f"wrote {sim.length} counts to {out}")
    return 0


COMMANDS = {"elicit": cmd_elicit, "fit": cmd_fit, "forecast": cmd_forecast,
            "evaluate": cmd_evaluate, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpinar", description="Dirichlet-process INAR(1) models for count time series.")
    parser.add_argument("--version", action="version", version=f"dpinar {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output file or directory")
        if data:
            p.add_argument("--input", help="count series file")
            p.add_argument("--format", choices=("auto", "single", "long"))
            p.add_argument("--series", help="series id within a long-format file")

    def sampler(p):
        p.add_argument("--iterations", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--thin", type=int)

    p = sub.add_parser("elicit", help="elicit hyperparameters and write them to a config")
    common(p)
    p = sub.add_parser("fit", help="run the Gibbs sampler and write posterior draws")
    common(p)
    sampler(p)
    p.add_argument("--model", choices=MODELS)
    p = sub.add_parser("forecast", help="h-step posterior predictive pmf")
    common(p)
    sampler(p)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--horizon", type=int)
    p.add_argument("--draws", help="reuse a draws file instead of refitting")
    p = sub.add_parser("evaluate", help="rolling-origin evaluation of point forecasts")
    common(p)
    sampler(p)
    p.add_argument("--model", choices=MODELS + ("both",))
    p.add_argument("--horizon", type=int)
    p.add_argument("--holdout", type=int)
    p.add_argument("--jobs", type=int)
    p = sub.add_parser("simulate", help="simulate a series from a rate schedule")
    common(p, data=False)
    p.add_argument("--length", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--rates", help="comma-separated innovation rates")
    p.add_argument("--block", type=int, help="epochs per rate block (0: equal split)")
    p.add_argument("--y1", type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = _effective_config(args)
        return COMMANDS[args.command](args, config)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
